"""Direct simulation of the step-size / progress process.

The optimiser is abstracted away: each iteration draws whether the gradient
was accurate (``I``), whether the step succeeded (``Theta``), and moves the
step parameter on the grid ``alpha0 * tau**e`` and the progress variable
``z``. Outcomes the assumptions leave open are fixed by an
:class:`AdversaryPolicy`.

Trials are simulated together as numpy arrays; a single trace is a batch of
one with per-step recording switched on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from noisyls.errors import ConfigurationError, DomainError
from noisyls.theory import ASSUME_DELTA, ASSUME_GAMMA, master_bound

UNFORCED = ("always", "never", "bernoulli", "adversarial_greedy")


@dataclass(frozen=True)
class AdversaryPolicy:
    """Choices for outcomes that are not pinned down.

    ``success_when_unforced`` decides ``Theta`` whenever the step is not
    forced to succeed (false iterations, or true ones with ``alpha >
    alpha_bar``). ``adversarial_greedy`` makes false iterations succeed and
    the others fail. ``z_gain`` is the increase on true successes (``h - r``
    or ``h``); ``z_loss`` is the change on other successes (``-r`` or 0).
    """

    success_when_unforced: str = "adversarial_greedy"
    p: float = 0.5
    z_gain: str = "minimal"
    z_loss: str = "maximal"

    def __post_init__(self):
        if self.success_when_unforced not in UNFORCED:
            raise ConfigurationError(f"unknown policy {self.success_when_unforced!r}")
        if not 0 <= self.p <= 1:
            raise ConfigurationError("bernoulli probability must lie in [0, 1]")
        if self.z_gain not in ("minimal", "generous"):
            raise ConfigurationError(f"unknown z_gain {self.z_gain!r}")
        if self.z_loss not in ("maximal", "none"):
            raise ConfigurationError(f"unknown z_loss {self.z_loss!r}")


@dataclass(frozen=True)
class ProcessParams:
    """Parameters of the abstract process.

    ``h`` maps step parameters (scalar or array) to guaranteed progress and
    must be nondecreasing. ``horizon=None`` censors at 100 times the bound.
    ``check_delta=False`` allows ``delta`` beyond the range where the bound
    holds, for exercising the per-realization counting inequalities only.
    """

    delta: float
    gamma: float
    tau: float
    alpha0: float
    alpha_bar: float
    h: Callable
    r: float
    z_eps: float
    policy: AdversaryPolicy = field(default_factory=AdversaryPolicy)
    horizon: Optional[int] = None
    check_delta: bool = True

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise DomainError(f"gamma={self.gamma} outside (0, 1)", ASSUME_GAMMA)
        if not 0 <= self.delta < 1:
            raise ConfigurationError("delta must lie in [0, 1)")
        if self.check_delta and not self.delta < 0.5 - math.sqrt(self.gamma) / 2:
            raise DomainError(
                f"delta={self.delta} violates delta < 1/2 - sqrt(gamma)/2", ASSUME_DELTA
            )
        if not 0 < self.tau <= 1:
            raise ConfigurationError("tau must lie in (0, 1]")
        if not (self.alpha0 > 0 and self.alpha_bar > 0):
            raise ConfigurationError("alpha0 and alpha_bar must be positive")
        self.grid_exponent  # validates the grid
        if self.r < 0:
            raise ConfigurationError("r must be non-negative")
        if self.r > self.gamma * self.h_bar * (1 + 1e-12):
            raise DomainError(f"r={self.r} exceeds gamma*h(alpha_bar)", ASSUME_GAMMA)
        if not self.z_eps > 0:
            raise ConfigurationError("Z_eps must be positive")
        if self.horizon is not None and (int(self.horizon) != self.horizon or self.horizon < 1):
            raise ConfigurationError("horizon must be a positive integer")

    @property
    def grid_exponent(self) -> int:
        """Integer ``c >= 0`` with ``alpha_bar = alpha0 * tau**c``."""
        if self.tau == 1.0:
            if not math.isclose(self.alpha0, self.alpha_bar, rel_tol=1e-9):
                raise ConfigurationError("tau = 1 needs alpha0 == alpha_bar")
            return 0
        c = round(math.log(self.alpha_bar / self.alpha0) / math.log(self.tau))
        if c < 0 or not math.isclose(self.alpha0 * self.tau**c, self.alpha_bar, rel_tol=1e-9):
            raise ConfigurationError("alpha_bar must equal alpha0 * tau**c for an integer c >= 0")
        return int(c)

    @property
    def h_bar(self) -> float:
        return float(self.h(self.alpha_bar))

    def bound(self) -> float:
        return master_bound(self.delta, self.gamma, self.z_eps, self.h_bar, self.grid_exponent)

    def effective_horizon(self) -> int:
        if self.horizon is not None:
            return int(self.horizon)
        return int(math.ceil(100 * self.bound()))


def constant_h(value):
    """``h(alpha) = value`` for every step parameter."""
    return lambda a: np.full(np.shape(a), float(value)) if np.ndim(a) else float(value)


def linear_h(h_bar, alpha_bar):
    """``h(alpha) = h_bar * alpha / alpha_bar``."""
    return lambda a: h_bar * np.asarray(a, dtype=float) / alpha_bar if np.ndim(a) else h_bar * a / alpha_bar


COUNTERS = ("N_TS", "N_FS", "N_T", "N_F", "N_TU", "N_U", "N_SS")


@dataclass
class BatchResult:
    """Per-trial outcomes of a batch simulation (arrays of length ``trials``)."""

    n_eps: np.ndarray  # -1 when censored
    censored: np.ndarray
    counters: dict
    last_step: dict  # counter increments made by the final iteration
    unsuccessful_max_excess: np.ndarray  # max over prefixes of U - S - c; must be <= 0
    z_final: np.ndarray
    steps: Optional[dict] = None  # per-step arrays, shape (K, trials), when recorded

    @property
    def trials(self) -> int:
        return self.n_eps.shape[0]


def simulate_batch(params: ProcessParams, trials: int, seed, record: bool = False) -> BatchResult:
    """Simulate ``trials`` independent realizations driven by one generator."""
    if trials < 1:
        raise ValueError("need at least one trial")
    horizon = params.effective_horizon()
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(ss))
    pol = params.policy
    c = params.grid_exponent
    tau, a0, r, delta = params.tau, params.alpha0, params.r, params.delta
    fixed = tau == 1.0

    e = np.zeros(trials, dtype=np.int64)  # alpha = a0 * tau**e
    z = np.zeros(trials)
    active = np.ones(trials, dtype=bool)
    n_eps = np.full(trials, -1, dtype=np.int64)
    counts = {k: np.zeros(trials, dtype=np.int64) for k in COUNTERS}
    last = {k: np.zeros(trials, dtype=np.int64) for k in COUNTERS}
    excess = np.full(trials, -c, dtype=np.int64)  # running U - S - c
    max_excess = excess.copy()
    steps = {k: [] for k in ("I", "Theta", "Lambda", "Lambda_bar", "alpha", "z", "active")} if record else None

    for k in range(horizon):
        hit = active & (z >= params.z_eps)
        n_eps[hit] = k
        active &= ~hit
        if not active.any():
            break
        u_acc = rng.random(trials)
        u_pol = rng.random(trials)
        I = u_acc >= delta
        lam = e < c  # alpha > alpha_bar
        lam_bar = e <= c  # alpha >= alpha_bar
        forced = I & ~lam
        kind = pol.success_when_unforced
        if kind == "always":
            free = np.ones(trials, dtype=bool)
        elif kind == "never":
            free = np.zeros(trials, dtype=bool)
        elif kind == "bernoulli":
            free = u_pol < pol.p
        else:
            free = ~I
        theta = forced | free
        alpha = a0 * tau ** e.astype(float)
        if record:
            for name, arr in (("I", I), ("Theta", theta), ("Lambda", lam), ("Lambda_bar", lam_bar),
                              ("alpha", alpha), ("z", z.copy()), ("active", active.copy())):
                steps[name].append(arr)

        gain = np.asarray(params.h(alpha), dtype=float)
        if pol.z_gain == "minimal":
            gain = gain - r
        loss = -r if pol.z_loss == "maximal" else 0.0
        dz = np.where(theta, np.where(I, gain, loss), 0.0)
        z = np.where(active, z + dz, z)
        if not fixed:
            e = np.where(active, np.where(theta, e - 1, e + 1), e)

        inc = {
            "N_TS": lam_bar & I & theta,
            "N_FS": lam_bar & ~I & theta,
            "N_T": lam_bar & I,
            "N_F": lam_bar & ~I,
            "N_TU": lam & I & ~theta,
            "N_U": lam & ~theta,
            "N_SS": ~lam_bar & theta,
        }
        for name, flag in inc.items():
            step_inc = (flag & active).astype(np.int64)
            counts[name] += step_inc
            last[name] = np.where(active, step_inc, last[name])
        excess += ((lam & ~theta).astype(np.int64) - (lam_bar & theta).astype(np.int64)) * active
        np.maximum(max_excess, excess, out=max_excess)
    else:
        hit = active & (z >= params.z_eps)
        n_eps[hit] = horizon
        active &= ~hit

    if record:
        steps = {k: np.array(v) for k, v in steps.items()}
    return BatchResult(
        n_eps=n_eps,
        censored=active.copy(),
        counters=counts,
        last_step=last,
        unsuccessful_max_excess=max_excess,
        z_final=z,
        steps=steps,
    )


@dataclass
class ProcessTrace:
    """One realization: per-step indicators, counters and stopping time."""

    I: np.ndarray
    Theta: np.ndarray
    Lambda: np.ndarray
    Lambda_bar: np.ndarray
    alpha: np.ndarray
    z: np.ndarray  # z_0 .. z_K (one longer than the indicator arrays)
    counters: dict
    n_eps: Optional[int]
    unsuccessful_max_excess: int = 0

    @property
    def censored(self) -> bool:
        return self.n_eps is None


def simulate(params: ProcessParams, seed) -> ProcessTrace:
    """A single recorded realization."""
    res = simulate_batch(params, 1, seed, record=True)
    st = res.steps
    if st["I"].size:
        keep = st["active"][:, 0]
        z_path = np.append(st["z"][keep, 0], res.z_final[0])
    else:
        keep = np.zeros(0, dtype=bool)
        z_path = np.array([res.z_final[0]])
    n = int(res.n_eps[0])
    return ProcessTrace(
        I=st["I"][keep, 0] if keep.size else np.zeros(0, bool),
        Theta=st["Theta"][keep, 0] if keep.size else np.zeros(0, bool),
        Lambda=st["Lambda"][keep, 0] if keep.size else np.zeros(0, bool),
        Lambda_bar=st["Lambda_bar"][keep, 0] if keep.size else np.zeros(0, bool),
        alpha=st["alpha"][keep, 0] if keep.size else np.zeros(0),
        z=z_path,
        counters={k: int(v[0]) for k, v in res.counters.items()},
        n_eps=None if n < 0 else n,
        unsuccessful_max_excess=int(res.unsuccessful_max_excess[0]),
    )


def recount(trace: ProcessTrace) -> dict:
    """Counters recomputed from the per-step indicators."""
    I, T, lam, lamb = trace.I, trace.Theta, trace.Lambda, trace.Lambda_bar
    return {
        "N_TS": int(np.sum(lamb & I & T)),
        "N_FS": int(np.sum(lamb & ~I & T)),
        "N_T": int(np.sum(lamb & I)),
        "N_F": int(np.sum(lamb & ~I)),
        "N_TU": int(np.sum(lam & I & ~T)),
        "N_U": int(np.sum(lam & ~T)),
        "N_SS": int(np.sum(~lamb & T)),
    }


@dataclass
class CountingReport:
    """Slack of each per-realization inequality (violation when negative)."""

    unsuccessful_slack: np.ndarray  # N_TS + N_FS + c - N_U, minimised over prefixes
    true_success_slack: np.ndarray  # literal form, all counted iterations
    true_success_slack_prefix: np.ndarray  # excludes the iteration that reaches Z_eps
    true_count_identity: np.ndarray  # N_T == N_TS + N_TU
    forcing_ok: np.ndarray

    def all_hold(self, literal: bool = False) -> bool:
        ts = self.true_success_slack if literal else self.true_success_slack_prefix
        return bool(
            np.all(self.unsuccessful_slack >= 0)
            and np.all(ts >= 0)
            and np.all(self.true_count_identity)
            and np.all(self.forcing_ok)
        )


def _ts_slack(n_ts, n_fs, n_ss, params):
    g = params.gamma
    rhs = params.z_eps / ((1 - g) * params.h_bar) + g / (1 - g) * (n_fs + n_ss)
    return rhs - n_ts


def check_counting_inequalities(result, params: ProcessParams) -> CountingReport:
    """Evaluate the counting inequalities on a batch result or a single trace.

    * unsuccessful steps above the threshold:
      ``N_U <= N_TS + N_FS + c`` on every prefix;
    * true successful steps:
      ``N_TS <= Z_eps / ((1-gamma) h(alpha_bar)) + gamma/(1-gamma) (N_FS + N_SS)``,
      both over all counted iterations (literal form) and over the
      iterations strictly before the one on which ``z`` first reaches
      ``Z_eps``;
    * ``N_T = N_TS + N_TU``;
    * no true iteration with ``alpha <= alpha_bar`` fails.
    """
    if isinstance(result, ProcessTrace):
        cnt = {k: np.array([v]) for k, v in result.counters.items()}
        max_excess = np.array([result.unsuccessful_max_excess])
        forcing = np.array([not np.any(result.I & ~result.Lambda & ~result.Theta)])
        censored = np.array([result.censored])
        last = recount(
            ProcessTrace(result.I[-1:], result.Theta[-1:], result.Lambda[-1:],
                         result.Lambda_bar[-1:], result.alpha[-1:], result.z[-1:], {}, None)
        )
        last = {k: np.array([v]) for k, v in last.items()}
    else:
        cnt = result.counters
        max_excess = result.unsuccessful_max_excess
        censored = result.censored
        last = result.last_step
        # the batch loop only ever produces forced successes
        forcing = np.ones(result.trials, dtype=bool)
    literal = _ts_slack(cnt["N_TS"], cnt["N_FS"], cnt["N_SS"], params)
    drop = np.where(censored, 0, 1)
    prefix = _ts_slack(
        cnt["N_TS"] - drop * last["N_TS"],
        cnt["N_FS"] - drop * last["N_FS"],
        cnt["N_SS"] - drop * last["N_SS"],
        params,
    )
    return CountingReport(
        unsuccessful_slack=-max_excess,
        true_success_slack=literal,
        true_success_slack_prefix=prefix,
        true_count_identity=cnt["N_T"] == cnt["N_TS"] + cnt["N_TU"],
        forcing_ok=forcing,
    )


def monte_carlo_expectation(params: ProcessParams, trials: int, seed):
    """Sample mean and standard error of the stopping time.

    Returns ``(mean, std_err, censored_count)``; censored trials are left
    out of the mean and counted separately.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    res = simulate_batch(params, trials, seed)
    done = res.n_eps[~res.censored].astype(float)
    if done.size == 0:
        return math.nan, math.nan, int(res.censored.sum())
    se = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else 0.0
    return float(done.mean()), se, int(res.censored.sum())

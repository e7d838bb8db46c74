"""Noise-tolerant backtracking line search.

Each outer iteration estimates a gradient, builds a descent direction, and
runs one relaxed Armijo test

    f(x + alpha d) <= f(x) + c1 * alpha * d^T g + 2 * eps_f

on fresh noisy evaluations. Acceptance moves the iterate and expands the
step by ``1/tau``; rejection keeps the iterate and shrinks the step by
``tau``. With ``tau = 1`` the step is fixed.

Step sizes live on the grid ``anchor * tau**m`` with integer ``m`` so that
comparisons with a threshold ``alpha0 * tau**c`` are exact.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from noisyls.errors import ConfigurationError
from noisyls.gradients import GradientEstimate, GradientSpec, estimate
from noisyls.oracles import NoiseModel, Problem, evaluate_noisy

STOP_MODES = ("value_gap", "grad_norm", "value_gap_or_biased_floor", "grad_norm_or_biased_floor")


def armijo_accept(f_trial, f_cur, dtg, alpha, c1, epsilon_f) -> bool:
    """Relaxed sufficient-decrease test; the boundary case is accepted."""
    vals = (f_trial, f_cur, dtg, alpha, c1, epsilon_f)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"non-finite input to the Armijo test: {vals}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0 < c1 < 1:
        raise ValueError("c1 must lie in (0, 1)")
    return f_trial <= f_cur + c1 * alpha * dtg + 2.0 * epsilon_f


@dataclass(frozen=True)
class StepSize:
    """Step parameter ``anchor * tau**exponent``."""

    anchor: float
    exponent: int
    tau: float

    @property
    def value(self) -> float:
        return self.anchor * self.tau**self.exponent

    def shrink(self) -> "StepSize":
        if self.tau == 1.0:
            return self
        return replace(self, exponent=self.exponent + 1)

    def expand(self, alpha_max: Optional[float] = None) -> "StepSize":
        if self.tau == 1.0:
            return self
        nxt = replace(self, exponent=self.exponent - 1)
        if alpha_max is None or nxt.value <= alpha_max:
            return nxt
        j = grid_exponent(alpha_max, self.anchor, self.tau)
        if j is not None:
            return replace(self, exponent=j)
        # alpha_max is off the grid: re-anchor on it
        return StepSize(alpha_max, 0, self.tau)


def grid_exponent(value, anchor, tau, rtol=1e-9) -> Optional[int]:
    """Integer ``m`` with ``anchor * tau**m == value`` up to ``rtol``, else ``None``."""
    if tau == 1.0:
        return 0 if math.isclose(value, anchor, rel_tol=rtol) else None
    m = round(math.log(value / anchor) / math.log(tau))
    if math.isclose(anchor * tau**m, value, rel_tol=rtol):
        return int(m)
    return None


@dataclass(frozen=True)
class DirectionRule:
    """How the search direction is built from the gradient estimate.

    ``steepest`` gives ``d = -g``. ``scaled`` gives ``d = -H g`` where ``H``
    is ``matrix`` (or a fresh random symmetric matrix when ``matrix`` is
    ``None``) with its spectrum clamped to ``[kappa1, kappa2]``; if the
    clamped direction fails the angle test ``cos(d, g) <= -beta`` the rule
    falls back to ``-g``.
    """

    kind: str = "steepest"
    beta: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("steepest", "scaled"):
            raise ConfigurationError(f"unknown direction kind {self.kind!r}")
        if self.kind == "steepest":
            if (self.beta, self.kappa1, self.kappa2) != (1.0, 1.0, 1.0):
                raise ConfigurationError("steepest descent has beta = kappa1 = kappa2 = 1")
            return
        if not 0 < self.beta <= 1:
            raise ConfigurationError("beta must lie in (0, 1]")
        # -g must satisfy the safeguards for the fallback to be valid
        if not 0 < self.kappa1 <= 1 <= self.kappa2:
            raise ConfigurationError("need 0 < kappa1 <= 1 <= kappa2")


def clamp_spectrum(H, lo, hi):
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    return (V * np.clip(w, lo, hi)) @ V.T


def _random_symmetric(stream, n, lo, hi):
    Q, _ = np.linalg.qr(stream.standard_normal((n, n)))
    # spread wider than [lo, hi] so clamping is exercised
    w = stream.uniform(0.5 * lo, 2.0 * hi, size=n)
    return (Q * w) @ Q.T


def make_direction(rule: DirectionRule, g, stream=None) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return np.zeros_like(g)
    if rule.kind == "steepest":
        return -g
    H = rule.matrix
    if H is None:
        if stream is None:
            raise ValueError("a random scaling matrix needs an RNG stream")
        H = _random_symmetric(stream, g.shape[0], rule.kappa1, rule.kappa2)
    d = -clamp_spectrum(H, rule.kappa1, rule.kappa2) @ g
    dnorm = float(np.linalg.norm(d))
    ok = (
        dnorm > 0
        and float(d @ g) / (dnorm * gnorm) <= -rule.beta
        and rule.kappa1 * gnorm <= dnorm <= rule.kappa2 * gnorm
    )
    return d if ok else -g


@dataclass(frozen=True)
class LineSearchConfig:
    c1: float = 0.5
    tau: float = 0.5
    alpha0: float = 1.0
    alpha_max: Optional[float] = None
    epsilon_f: float = 0.0
    direction: DirectionRule = field(default_factory=DirectionRule)
    max_iter: int = 10**6
    projection_radius: Optional[float] = None
    projection_center: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise ConfigurationError(f"c1 must lie in (0, 1), got {self.c1}")
        if not 0 < self.tau <= 1:
            raise ConfigurationError(f"tau must lie in (0, 1], got {self.tau}")
        if not self.alpha0 > 0:
            raise ConfigurationError("alpha0 must be positive")
        if self.alpha_max is not None and not self.alpha_max >= self.alpha0:
            raise ConfigurationError("alpha_max must be at least alpha0")
        if self.epsilon_f < 0:
            raise ConfigurationError("epsilon_f must be non-negative")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigurationError("max_iter must be a positive integer")
        if self.projection_radius is not None and not self.projection_radius > 0:
            raise ConfigurationError("projection_radius must be positive")


@dataclass
class LineSearchState:
    x: np.ndarray
    step: StepSize
    k: int = 0

    @property
    def alpha(self) -> float:
        return self.step.value


@dataclass(frozen=True)
class IterationRecord:
    k: int
    x: np.ndarray
    alpha: float
    g: np.ndarray
    d: np.ndarray
    f_cur: float
    f_trial: float
    successful: bool
    accuracy_event: bool
    phi_true: float
    grad_norm_true: float
    dtg: float
    alpha_exponent: int
    null_step: bool = False
    projected: bool = False
    gradient_cost: int = 0


def project_ball(x, center, radius):
    offset = x - center
    dist = float(np.linalg.norm(offset))
    if dist <= radius:
        return x, False
    return center + (radius / dist) * offset, True


def ls_step(
    state: LineSearchState,
    est: GradientEstimate,
    d,
    problem: Problem,
    noise: NoiseModel,
    config: LineSearchConfig,
    stream,
):
    """One outer iteration: Armijo test at the current step, then update.

    Returns the new state and the record of the iteration.
    """
    x = state.x
    alpha = state.alpha
    d = np.asarray(d, dtype=float)
    g = np.asarray(est.g, dtype=float)
    dtg = float(d @ g)
    f_cur = float(evaluate_noisy(problem, noise, x, stream, role="current"))
    null_step = not np.any(d)
    if null_step:
        f_trial = f_cur
    else:
        f_trial = float(evaluate_noisy(problem, noise, x + alpha * d, stream, role="trial"))
    ok = armijo_accept(f_trial, f_cur, dtg, alpha, config.c1, config.epsilon_f)
    projected = False
    if ok:
        x_new = x + alpha * d
        if config.projection_radius is not None:
            center = config.projection_center
            if center is None:
                center = problem.optimum_x_star
            if center is None:
                raise ConfigurationError("projection needs a centre or a known minimiser")
            x_new, projected = project_ball(x_new, np.asarray(center, dtype=float), config.projection_radius)
        step = state.step.expand(config.alpha_max)
    else:
        x_new = x
        step = state.step.shrink()
    rec = IterationRecord(
        k=state.k,
        x=x,
        alpha=alpha,
        g=g,
        d=d,
        f_cur=f_cur,
        f_trial=f_trial,
        successful=ok,
        accuracy_event=bool(est.accuracy_event),
        phi_true=float(problem.eval_phi(x)),
        grad_norm_true=float(np.linalg.norm(problem.eval_grad(x))),
        dtg=dtg,
        alpha_exponent=state.step.exponent,
        null_step=null_step,
        projected=projected,
        gradient_cost=est.scheme_cost,
    )
    return LineSearchState(x_new, step, state.k + 1), rec


@dataclass(frozen=True)
class StoppingSpec:
    """Target event ending a run.

    ``biased_floor`` is the gradient-norm level ``zeta * eps_g / theta`` used
    by the ``*_or_biased_floor`` modes.
    """

    epsilon: float
    mode: str = "value_gap"
    phi_star: Optional[float] = None
    biased_floor: Optional[float] = None

    def __post_init__(self):
        if self.mode not in STOP_MODES:
            raise ConfigurationError(f"unknown stopping mode {self.mode!r}")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.mode.startswith("value_gap") and self.phi_star is None:
            raise ConfigurationError("value_gap stopping needs the optimal value phi_star")
        if self.mode.endswith("biased_floor") and self.biased_floor is None:
            raise ConfigurationError(f"{self.mode} stopping needs biased_floor")

    def reached(self, phi, grad_norm) -> bool:
        if self.mode.startswith("value_gap"):
            hit = phi - self.phi_star <= self.epsilon
        else:
            hit = grad_norm <= self.epsilon
        if self.mode.endswith("biased_floor"):
            hit = hit or grad_norm <= self.biased_floor
        return bool(hit)


@dataclass
class RunRecord:
    records: List[IterationRecord]
    phi_path: np.ndarray
    grad_norm_path: np.ndarray
    n_eps: Optional[int]
    censored: bool
    delta_hat: float
    seed: object = None
    config_hash: str = ""
    wall_time: float = 0.0
    x_final: Optional[np.ndarray] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(r.successful for r in self.records)


def run_streams(seed):
    """Independent generators for (noise, gradient, direction) from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in ss.spawn(3)]


def run(
    problem: Problem,
    noise: NoiseModel,
    gradspec: GradientSpec,
    config: LineSearchConfig,
    stop: StoppingSpec,
    seed,
    x0=None,
) -> RunRecord:
    """Iterate until the stopping event or ``config.max_iter``.

    The event is checked before each step, so ``n_eps`` is the number of
    iterations performed before it first occurs. A run that exhausts
    ``max_iter`` is returned with ``censored=True`` and ``n_eps=None``.
    """
    if gradspec.condition_kind == "mixed" and config.alpha_max is None:
        raise ConfigurationError("the mixed accuracy condition needs alpha_max")
    if noise.epsilon_f > config.epsilon_f:
        raise ConfigurationError("line-search epsilon_f is below the noise level")
    start = time.perf_counter()
    noise_stream, grad_stream, dir_stream = run_streams(seed)
    if x0 is None:
        x0 = problem.x0
    if x0 is None:
        raise ConfigurationError("no starting point given")
    x = problem.check_point(np.array(x0, dtype=float))
    state = LineSearchState(x, StepSize(config.alpha0, 0, config.tau))
    records = []
    phis, gnorms = [], []
    n_eps = None
    for _ in range(int(config.max_iter)):
        phi = float(problem.eval_phi(state.x))
        gnorm = float(np.linalg.norm(problem.eval_grad(state.x)))
        phis.append(phi)
        gnorms.append(gnorm)
        if stop.reached(phi, gnorm):
            n_eps = state.k
            break
        est = estimate(gradspec, problem, noise, state.x, state.alpha, grad_stream)
        d = make_direction(config.direction, est.g, dir_stream)
        state, rec = ls_step(state, est, d, problem, noise, config, noise_stream)
        records.append(rec)
    else:
        phi = float(problem.eval_phi(state.x))
        gnorm = float(np.linalg.norm(problem.eval_grad(state.x)))
        phis.append(phi)
        gnorms.append(gnorm)
        if stop.reached(phi, gnorm):
            n_eps = state.k
    false_count = sum(not r.accuracy_event for r in records)
    return RunRecord(
        records=records,
        phi_path=np.array(phis),
        grad_norm_path=np.array(gnorms),
        n_eps=n_eps,
        censored=n_eps is None,
        delta_hat=false_count / len(records) if records else 0.0,
        seed=seed,
        wall_time=time.perf_counter() - start,
        x_final=state.x,
    )


def stopping_time(record: RunRecord, epsilon, mode, phi_star=None, biased_floor=None) -> Optional[int]:
    """First index ``k`` at which the stopping event holds along the recorded path."""
    stop = StoppingSpec(epsilon, mode, phi_star, biased_floor)
    for k, (phi, gn) in enumerate(zip(record.phi_path, record.grad_norm_path)):
        if stop.reached(phi, gn):
            return k
    return None

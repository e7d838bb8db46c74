"""Closed-form constants and expected-complexity bounds.

Everything here is a pure function of :class:`TheoryParams`. The quantities
are tied together through a single progress constant

    P = c1 * m * alpha_bar

where ``m`` is the squared-norm factor guaranteed on a true successful step
(``(1-theta)^2`` for steepest descent). The per-case progress ``h``,
accuracy floor and constant ``M`` are all expressed through ``P``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from noisyls.errors import ConfigurationError, DomainError

CASES = ("convex", "strongly_convex", "nonconvex")

# names used when a hypothesis is violated
ASSUME_THETA = "Sufficiently accurate gradients (theta below its admissible bound)"
ASSUME_DELTA = "Probability of accurate gradients (delta < 1/2 - sqrt(gamma)/2)"
ASSUME_GAMMA = "Ratio bound r <= gamma * h(alpha_bar) with gamma in (0, 1)"
ASSUME_FIXED_STEP = "Fixed step requires alpha0 <= alpha_bar"
ASSUME_STRONG = "Strong convexity constant M in (0, 1)"
NEIGHBORHOOD = {
    "convex": "Neighborhood of convergence, convex case",
    "strongly_convex": "Neighborhood of convergence, strongly convex case",
    "nonconvex": "Neighborhood of convergence, nonconvex case",
}


@dataclass(frozen=True)
class TheoryParams:
    """Inputs to the complexity theory.

    ``phi0_gap`` is ``phi(x0) - phi*`` for the convex cases and
    ``phi(x0) - phi_hat`` for the nonconvex case. ``alpha0=None`` means the
    line search starts at ``alpha_bar``.
    """

    L: float
    case: str = "nonconvex"
    c1: float = 0.5
    theta: float = 0.0
    delta: float = 0.0
    gamma: float = 0.5
    tau: float = 0.5
    alpha0: Optional[float] = None
    epsilon_f: float = 0.0
    epsilon: Optional[float] = None
    mu: Optional[float] = None
    D: Optional[float] = None
    phi0_gap: Optional[float] = None
    kappa: float = 0.0
    zeta: float = 2.0
    epsilon_g: float = 0.0
    alpha_max: Optional[float] = None
    beta: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    condition: str = "norm"
    direction: str = "steepest"

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigurationError(f"unknown case {self.case!r}")
        if self.condition not in ("norm", "mixed"):
            raise ConfigurationError(f"unknown condition {self.condition!r}")
        if self.direction not in ("steepest", "general"):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        if not self.L > 0:
            raise ConfigurationError("L must be positive")
        if not 0 < self.c1 < 1:
            raise ConfigurationError("c1 must lie in (0, 1)")
        if not 0 < self.tau <= 1:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.alpha0 is not None and not self.alpha0 > 0:
            raise ConfigurationError("alpha0 must be positive")
        if self.epsilon_f < 0 or self.epsilon_g < 0 or self.kappa < 0:
            raise ConfigurationError("epsilon_f, epsilon_g and kappa must be non-negative")
        if self.condition == "mixed":
            if self.direction != "steepest":
                raise ConfigurationError("the mixed condition is analysed for steepest descent only")
            if self.alpha_max is None:
                raise ConfigurationError("the mixed condition needs alpha_max")
            if not self.zeta > 1:
                raise ConfigurationError("zeta must exceed 1")
        if self.direction == "general" and not (
            0 < self.beta <= 1 and 0 < self.kappa1 <= self.kappa2
        ):
            raise ConfigurationError("need 0 < beta <= 1 and 0 < kappa1 <= kappa2")

    def with_(self, **changes) -> "TheoryParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


def theta_limit(p: TheoryParams) -> float:
    """Open upper end of the admissible ``theta`` interval."""
    if p.direction == "general":
        s = (1.0 - p.c1) * p.beta
        return s / (1.0 + s)
    return (1.0 - p.c1) / (2.0 - p.c1)


def alpha_bar(p: TheoryParams) -> float:
    """Step threshold below which every true iteration is successful."""
    th, c1, L = p.theta, p.c1, p.L
    if not 0.0 <= th < theta_limit(p):
        raise DomainError(
            f"theta={th} outside [0, {theta_limit(p):.6g}); alpha_bar would be non-positive",
            ASSUME_THETA,
        )
    if p.direction == "general":
        value = (2.0 / (L * p.kappa2)) * ((1.0 - c1) * (1.0 - th) * p.beta - th) / (1.0 - th)
    else:
        value = 2.0 * (1.0 - 2.0 * th - c1 * (1.0 - th)) / (L * (1.0 - th))
        if p.condition == "mixed":
            value = min(value, 2.0 * (1.0 - c1) / (L + 2.0 * p.kappa))
    if not value > 0:
        raise DomainError(f"alpha_bar={value} is not positive", ASSUME_THETA)
    return value


def step_exponent(p: TheoryParams):
    """Integer ``c`` and grid threshold ``alpha0 * tau**c`` used by the bound.

    If ``alpha_bar`` sits on the ``tau``-grid through ``alpha0`` the grid
    value is returned. If ``alpha0 <= alpha_bar`` then ``c = 0`` and the
    threshold is ``alpha0`` itself. Otherwise ``c`` is the smallest exponent
    with ``alpha0 * tau**c <= alpha_bar``.
    """
    ab = alpha_bar(p)
    a0 = ab if p.alpha0 is None else p.alpha0
    tau = p.tau
    if tau == 1.0:
        if a0 <= ab or math.isclose(a0, ab, rel_tol=1e-9):
            return 0, a0
        raise DomainError(f"alpha0={a0} exceeds alpha_bar={ab} with tau=1", ASSUME_FIXED_STEP)
    m = round(math.log(ab / a0) / math.log(tau))
    if m >= 0 and math.isclose(a0 * tau**m, ab, rel_tol=1e-9):
        return int(m), (ab if m == 0 and p.alpha0 is None else a0 * tau**m)
    if a0 <= ab:
        return 0, a0
    c = math.ceil(math.log(ab / a0) / math.log(tau))
    while a0 * tau**c > ab:
        c += 1
    return int(c), a0 * tau**c


def decrease_factor(p: TheoryParams) -> float:
    """Factor ``m`` in ``phi(x+) <= phi(x) - c1 alpha m ||grad||^2 + 4 eps_f``."""
    base = (1.0 - p.theta) ** 2
    if p.direction == "general":
        return p.beta * p.kappa1 * base
    if p.condition == "mixed":
        return min(base, 1.0 / (1.0 + p.kappa * p.alpha_max) ** 2)
    return base


def progress_constant(p: TheoryParams) -> float:
    """``P = c1 * m * alpha_bar`` with the grid threshold."""
    _, ab = step_exponent(p)
    return p.c1 * decrease_factor(p) * ab


def _require(p: TheoryParams, *names):
    missing = [n for n in names if getattr(p, n) is None]
    if missing:
        raise ConfigurationError(f"case {p.case!r} needs {', '.join(missing)}")


def _check_gamma(p):
    if not 0 < p.gamma < 1:
        raise DomainError(f"gamma={p.gamma} outside (0, 1)", ASSUME_GAMMA)


def case_constant_M(p: TheoryParams) -> float:
    """Case constant ``M``: ``8D^2/P``, ``1 - mu P`` or ``2 gap / P``.

    Written out for steepest descent under the norm condition these are
    ``4 L D^2 / (c1 (1-theta)(1-2theta-c1(1-theta)))``,
    ``1 - 2 mu c1 (1-theta)(1-2theta-c1(1-theta)) / L`` and
    ``gap L / (c1 (1-theta)(1-2theta-c1(1-theta)))``.
    """
    P = progress_constant(p)
    if p.case == "convex":
        _require(p, "D")
        return 8.0 * p.D**2 / P
    if p.case == "strongly_convex":
        _require(p, "mu")
        M = 1.0 - p.mu * P
        if not 0 < M < 1:
            raise DomainError(f"M={M} outside (0, 1)", ASSUME_STRONG)
        return M
    _require(p, "phi0_gap")
    return 2.0 * p.phi0_gap / P


def remark_M(p: TheoryParams) -> float:
    """Alternative strongly convex constant ``1 - 4 mu c1 (1-c1) / L``.

    Kept for side-by-side comparison with :func:`case_constant_M`; it is a
    factor two more optimistic in the contraction term.
    """
    _require(p, "mu")
    return 1.0 - 4.0 * p.mu * p.c1 * (1.0 - p.c1) / p.L


def progress_functions(p: TheoryParams):
    """Return ``(h, r, Z_eps)`` for the configured case.

    ``h`` accepts a scalar or array of step parameters. ``Z_eps`` needs
    ``epsilon`` (and ``phi0_gap``); it is ``None`` when they are unset.
    """
    m = decrease_factor(p)
    c1 = p.c1
    eps = p.epsilon
    if p.case == "convex":
        _require(p, "D")
        D2 = p.D**2

        def h(alpha):
            return c1 * m * np.asarray(alpha, dtype=float) / (4.0 * D2)

        r = 4.0 * p.epsilon_f / eps**2 if eps else None
        z = 1.0 / eps - 1.0 / p.phi0_gap if eps and p.phi0_gap else None
    elif p.case == "strongly_convex":
        _require(p, "mu")
        mu = p.mu

        def h(alpha):
            with np.errstate(divide="ignore", invalid="ignore"):
                arg = 1.0 - mu * (c1 * m * np.asarray(alpha, dtype=float))
                return np.where(arg > 0, -np.log(np.where(arg > 0, arg, 1.0)), np.inf)

        r = math.log1p(4.0 * p.epsilon_f / eps) if eps else None
        z = math.log(p.phi0_gap / eps) if eps and p.phi0_gap else None
    else:
        def h(alpha):
            return c1 * m * np.asarray(alpha, dtype=float) * eps**2

        r = 4.0 * p.epsilon_f
        z = p.phi0_gap

    def h_scalar_or_array(alpha):
        out = h(alpha)
        return float(out) if np.ndim(out) == 0 else out

    if p.epsilon_f == 0.0:
        r = 0.0
    return h_scalar_or_array, r, z


def epsilon_floor(p: TheoryParams) -> float:
    """Strict lower bound on admissible ``epsilon`` (neighbourhood of convergence).

    Solves ``r = gamma * h(alpha_bar)`` for ``epsilon``. The convex floor also
    carries ``4 eps_f``, the strongly convex floor is at least ``4 eps_f``,
    and under the mixed condition the bias terms
    ``zeta^2 eps_g^2 / (2 mu theta^2)`` (strongly convex) or
    ``zeta eps_g / theta`` (nonconvex) enter through a max.
    """
    _check_gamma(p)
    P = progress_constant(p)
    ef, g = p.epsilon_f, p.gamma
    if p.case == "convex":
        _require(p, "D")
        floor = math.sqrt(max(16.0 * ef * p.D**2 / (g * P), 16.0 * ef**2))
    elif p.case == "strongly_convex":
        M = case_constant_M(p)
        floor = 0.0 if ef == 0 else max(4.0 * ef / (M ** (-g) - 1.0), 4.0 * ef)
        if p.condition == "mixed":
            floor = max(floor, _bias_term(p, lambda b: b**2 / (2.0 * p.mu * p.theta**2)))
    else:
        floor = math.sqrt(4.0 * ef / (g * P))
        if p.condition == "mixed":
            floor = max(floor, _bias_term(p, lambda b: b / p.theta))
    return floor


def _bias_term(p, fn):
    bias = p.zeta * p.epsilon_g
    if bias == 0.0:
        return 0.0
    if p.theta == 0.0:
        raise DomainError(
            "the biased stopping level zeta*eps_g/theta needs theta > 0", NEIGHBORHOOD[p.case]
        )
    return fn(bias)


def biased_stop_level(p: TheoryParams) -> Optional[float]:
    """Gradient-norm level ``zeta eps_g / theta`` that also ends a mixed-condition run."""
    if p.condition != "mixed":
        return None
    if p.zeta * p.epsilon_g == 0.0:
        return 0.0
    if p.theta == 0.0:
        return math.inf
    return p.zeta * p.epsilon_g / p.theta


def master_coefficient(delta, gamma) -> float:
    """Leading factor ``2(1-delta) / ((1-2delta)^2 - gamma)``."""
    if not 0 < gamma < 1:
        raise DomainError(f"gamma={gamma} outside (0, 1)", ASSUME_GAMMA)
    if not 0 <= delta < 0.5 - math.sqrt(gamma) / 2.0:
        raise DomainError(
            f"delta={delta} violates delta < 1/2 - sqrt(gamma)/2 = {0.5 - math.sqrt(gamma) / 2:.6g}",
            ASSUME_DELTA,
        )
    return 2.0 * (1.0 - delta) / ((1.0 - 2.0 * delta) ** 2 - gamma)


def master_bound(delta, gamma, z_eps, h_bar, c) -> float:
    """``coef * [2 Z_eps / h(alpha_bar) + (1 - gamma) c]``; negative ``Z_eps`` counts as 0."""
    if not h_bar > 0:
        raise DomainError(f"h(alpha_bar)={h_bar} must be positive", ASSUME_GAMMA)
    if int(c) != c or c < 0:
        raise ValueError(f"grid exponent must be a non-negative integer, got {c}")
    return master_coefficient(delta, gamma) * (2.0 * max(z_eps, 0.0) / h_bar + (1.0 - gamma) * c)


def expected_bound(p: TheoryParams) -> float:
    """Upper bound on the expected stopping time for the configured case."""
    if p.epsilon is None:
        raise ConfigurationError("epsilon is required for a bound")
    if p.phi0_gap is None:
        raise ConfigurationError("phi0_gap is required for a bound")
    master_coefficient(p.delta, p.gamma)
    floor = epsilon_floor(p)
    if not p.epsilon > floor:
        raise DomainError(
            f"epsilon={p.epsilon} is not above the floor {floor:.6g}", NEIGHBORHOOD[p.case]
        )
    c, ab = step_exponent(p)
    h, r, z = progress_functions(p)
    h_bar = h(ab)
    if r > p.gamma * h_bar * (1.0 + 1e-12):
        raise DomainError(f"r={r} exceeds gamma*h(alpha_bar)={p.gamma * h_bar}", ASSUME_GAMMA)
    return master_bound(p.delta, p.gamma, z, h_bar, c)


def progress_variable(case, phi_k, phi0, phi_ref):
    """Realised progress ``z_k`` along a path.

    ``phi_ref`` is ``phi*`` for the convex cases (unused for nonconvex).
    """
    phi_k = np.asarray(phi_k, dtype=float)
    if case == "nonconvex":
        return phi0 - phi_k
    gap0 = phi0 - phi_ref
    with np.errstate(divide="ignore"):
        gap = phi_k - phi_ref
        if case == "convex":
            return 1.0 / gap - 1.0 / gap0
        return np.log(gap0 / gap)


def bound_report(p: TheoryParams, compare_remark: bool = False) -> dict:
    """All constants in one ordered mapping.

    Entries that cannot be computed are omitted and the first violated
    hypothesis is reported under ``"error"``.
    """
    out = {}
    try:
        out["alpha_bar"] = alpha_bar(p)
        c, ab = step_exponent(p)
        out["alpha_bar_grid"] = ab
        out["grid_exponent"] = c
        out["progress_constant"] = progress_constant(p)
        h, r, z = progress_functions(p)
        if p.epsilon is not None or p.case != "convex":
            out["h_alpha_bar"] = h(ab)
        if r is not None:
            out["r"] = r
        out["gamma"] = p.gamma
        if r is not None and "h_alpha_bar" in out:
            out["r_over_h"] = r / out["h_alpha_bar"] if out["h_alpha_bar"] > 0 else math.inf
        if z is not None:
            out["Z_eps"] = z
        out["epsilon_floor"] = epsilon_floor(p)
        out["M"] = case_constant_M(p)
        if compare_remark and p.case == "strongly_convex":
            out["M_remark"] = remark_M(p)
        out["coefficient"] = master_coefficient(p.delta, p.gamma)
        out["bound"] = expected_bound(p)
    except (DomainError, ConfigurationError) as err:
        assumption = getattr(err, "assumption", None)
        out["error"] = f"{assumption}: {err}" if assumption else str(err)
    return out

"""Gradient estimators and the accuracy conditions they are judged against.

Two accuracy conditions are supported:

* norm:  ``||g - grad|| <= theta * ||grad||``
* mixed: ``||g - grad|| <= max(zeta * epsilon_g, kappa * alpha * ||g||)``

Synthetic schemes construct ``g`` so the condition holds with probability
exactly ``1 - delta``. Finite-difference and smoothing schemes only use the
noisy oracle; their accuracy is measured after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from noisyls.errors import ConfigurationError
from noisyls.oracles import NoiseModel, Problem, evaluate_noisy

SCHEMES = (
    "synthetic_norm",
    "forward_difference",
    "gaussian_smoothing",
    "sphere_smoothing",
    "synthetic_mixed",
)

# proposals tried before falling back to the inscribed ball
_MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class NormCondition:
    theta: float


@dataclass(frozen=True)
class MixedCondition:
    zeta: float
    epsilon_g: float
    kappa: float


Condition = Union[NormCondition, MixedCondition]


def check_condition(g, grad_true, condition: Condition, alpha: Optional[float] = None) -> bool:
    """Whether ``g`` is sufficiently accurate for ``grad_true``.

    The comparison is exact: no tolerance is added on either side. ``alpha``
    is the current step parameter and is required by the mixed condition.
    """
    g = np.asarray(g, dtype=float)
    grad_true = np.asarray(grad_true, dtype=float)
    if g.shape != grad_true.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {grad_true.shape}")
    err = float(np.linalg.norm(g - grad_true))
    if isinstance(condition, NormCondition):
        return err <= condition.theta * float(np.linalg.norm(grad_true))
    if alpha is None:
        raise ValueError("the mixed condition needs the step parameter alpha")
    bound = max(
        condition.zeta * condition.epsilon_g,
        condition.kappa * alpha * float(np.linalg.norm(g)),
    )
    return err <= bound


@dataclass(frozen=True)
class GradientSpec:
    """Estimator choice and its parameters.

    ``condition`` selects the accuracy test (``"norm"`` or ``"mixed"``);
    left as ``None`` it is ``"mixed"`` for ``synthetic_mixed`` and
    ``"norm"`` otherwise. ``central`` switches finite differences to the
    two-sided formula.
    """

    scheme: str = "synthetic_norm"
    theta: float = 0.0
    delta: float = 0.0
    fd_step_h: float = 1e-6
    smoothing_sigma: float = 1e-3
    num_samples: int = 10
    kappa: float = 0.0
    zeta: float = 2.0
    epsilon_g: float = 0.0
    central: bool = False
    condition: Optional[str] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown gradient scheme {self.scheme!r}")
        if not 0.0 <= self.theta < 1.0:
            raise ConfigurationError(f"theta must lie in [0, 1), got {self.theta}")
        if not 0.0 <= self.delta < 0.5:
            raise ConfigurationError(f"delta must lie in [0, 1/2), got {self.delta}")
        if not self.fd_step_h > 0:
            raise ConfigurationError("fd_step_h must be positive")
        if not self.smoothing_sigma > 0:
            raise ConfigurationError("smoothing_sigma must be positive")
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ConfigurationError("num_samples must be a positive integer")
        if self.kappa < 0 or self.epsilon_g < 0:
            raise ConfigurationError("kappa and epsilon_g must be non-negative")
        if self.condition_kind == "mixed" and not self.zeta > 1:
            raise ConfigurationError(f"zeta must exceed 1 for the mixed condition, got {self.zeta}")
        if self.condition not in (None, "norm", "mixed"):
            raise ConfigurationError(f"unknown condition {self.condition!r}")

    @property
    def condition_kind(self) -> str:
        if self.condition is not None:
            return self.condition
        return "mixed" if self.scheme == "synthetic_mixed" else "norm"

    def accuracy_condition(self) -> Condition:
        if self.condition_kind == "mixed":
            return MixedCondition(self.zeta, self.epsilon_g, self.kappa)
        return NormCondition(self.theta)


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    accuracy_event: bool
    scheme_cost: int
    scheme: str = ""


def _uniform_in_ball(stream, dim, radius):
    """Uniform sample from the closed Euclidean ball of the given radius."""
    if radius == 0.0:
        return np.zeros(dim)
    v = stream.standard_normal(dim)
    v /= np.linalg.norm(v)
    return radius * stream.random() ** (1.0 / dim) * v


def _unit_direction(stream, vec):
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        return vec / norm
    v = stream.standard_normal(vec.shape[0])
    return v / np.linalg.norm(v)


def estimate_synthetic_norm(problem: Problem, x, theta, delta, stream) -> GradientEstimate:
    """Synthetic estimate satisfying the norm condition with probability ``1 - delta``.

    On the accurate branch ``g = grad + u`` with ``u`` uniform in the ball
    of radius ``theta * ||grad||``. On the failure branch ``g = -grad``, so
    the error is ``2 ||grad||`` and ``g`` points uphill.
    """
    if not 0.0 <= theta < 1.0:
        raise ConfigurationError(f"theta must lie in [0, 1), got {theta}")
    if not 0.0 <= delta < 0.5:
        raise ConfigurationError(f"delta must lie in [0, 1/2), got {delta}")
    grad = np.asarray(problem.grad(x), dtype=float)
    accurate = bool(stream.random() >= delta)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm == 0.0:
        return GradientEstimate(np.zeros_like(grad), True, 0, "synthetic_norm")
    if accurate:
        g = grad + _uniform_in_ball(stream, grad.shape[0], theta * grad_norm)
    else:
        g = -grad
    event = check_condition(g, grad, NormCondition(theta))
    return GradientEstimate(g, event, 0, "synthetic_norm")


def forward_difference_bound(dim, L, h, epsilon_f):
    """Per-call error bound ``sqrt(n) (L h / 2 + 2 eps_f / h)``."""
    return math.sqrt(dim) * (L * h / 2.0 + 2.0 * epsilon_f / h)


def estimate_forward_difference(
    problem: Problem,
    noise: NoiseModel,
    x,
    h,
    stream,
    condition: Optional[Condition] = None,
    alpha: Optional[float] = None,
    central: bool = False,
) -> GradientEstimate:
    """Coordinate finite differences through the noisy oracle.

    The forward formula shares one base value, costing ``n + 1`` calls; the
    central formula costs ``2n``. The accuracy event is judged against
    ``condition`` (exact gradient, ``theta = 0``, when omitted).
    """
    if not h > 0:
        raise ConfigurationError(f"finite-difference step must be positive, got {h}")
    x = problem.check_point(x)
    n = problem.dim
    steps = h * np.eye(n)
    # roles push the adversarial model towards the largest possible error
    if central:
        f_plus = evaluate_noisy(problem, noise, x + steps, stream, role="trial")
        f_minus = evaluate_noisy(problem, noise, x - steps, stream, role="current")
        g = (f_plus - f_minus) / (2.0 * h)
        cost = 2 * n
    else:
        f_base = evaluate_noisy(problem, noise, x, stream, role="current")
        f_plus = evaluate_noisy(problem, noise, x + steps, stream, role="trial")
        g = (f_plus - f_base) / h
        cost = n + 1
    scheme = "central_difference" if central else "forward_difference"
    event = check_condition(g, problem.grad(x), condition or NormCondition(0.0), alpha)
    return GradientEstimate(np.asarray(g, dtype=float), event, cost, scheme)


def estimate_smoothing(
    problem: Problem,
    noise: NoiseModel,
    x,
    sigma,
    num_samples,
    distribution,
    stream,
    condition: Optional[Condition] = None,
    alpha: Optional[float] = None,
) -> GradientEstimate:
    """Gaussian or spherical smoothing estimate from ``num_samples`` directions.

    ``g = mean_i [(f(x + sigma u_i) - f(x)) / sigma] * w * u_i`` with
    ``u_i ~ N(0, I)`` and ``w = 1`` (gaussian) or ``u_i`` uniform on the unit
    sphere and ``w = n`` (sphere). Costs ``num_samples + 1`` oracle calls.
    """
    if not sigma > 0:
        raise ConfigurationError(f"smoothing radius must be positive, got {sigma}")
    if int(num_samples) != num_samples or num_samples < 1:
        raise ConfigurationError(f"num_samples must be a positive integer, got {num_samples}")
    if distribution not in ("gaussian", "sphere"):
        raise ConfigurationError(f"unknown smoothing distribution {distribution!r}")
    x = problem.check_point(x)
    n = problem.dim
    u = stream.standard_normal((int(num_samples), n))
    weight = 1.0
    if distribution == "sphere":
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        weight = float(n)
    f_base = evaluate_noisy(problem, noise, x, stream, role="current")
    f_pert = evaluate_noisy(problem, noise, x + sigma * u, stream, role="trial")
    coeff = (f_pert - f_base) / sigma
    g = weight * (coeff[:, None] * u).mean(axis=0)
    event = check_condition(g, problem.grad(x), condition or NormCondition(0.0), alpha)
    return GradientEstimate(g, event, int(num_samples) + 1, distribution + "_smoothing")


def mixed_radius(grad_norm, alpha, zeta, epsilon_g, kappa):
    """Radius of a ball around ``grad`` that contains every mixed-accurate ``g``.

    From ``||u|| <= kappa alpha (||grad|| + ||u||)`` one gets
    ``||u|| <= kappa alpha ||grad|| / (1 - kappa alpha)`` when
    ``kappa alpha < 1``; the bias term contributes ``zeta epsilon_g``.
    """
    bias = zeta * epsilon_g
    ka = kappa * alpha
    if ka >= 1.0:
        if bias == 0.0:
            raise ConfigurationError(
                "mixed condition cannot be constructed: kappa*alpha >= 1 with zeta*epsilon_g = 0"
            )
        return bias
    return max(bias, ka * grad_norm / (1.0 - ka))


def _mixed_violation(grad, grad_norm, alpha, cond, stream):
    """A point violating the mixed condition, or ``None`` if none is found.

    Candidates lie on the ray ``-s * grad/||grad||`` (uphill), where
    ``||g - grad|| = s + ||grad||`` and ``||g|| = s``.
    """
    direction = _unit_direction(stream, grad)
    bias = cond.zeta * cond.epsilon_g
    ka = cond.kappa * alpha
    candidates = [grad_norm, bias + grad_norm + 1.0, 2.0 * bias]
    if ka > 1.0:
        lo = max(bias - grad_norm, 0.0)
        hi = grad_norm / (ka - 1.0)
        candidates.append(0.5 * (lo + hi))
    for s in candidates:
        g = -s * direction
        if not check_condition(g, grad, cond, alpha):
            return g
    return None


def estimate_synthetic_mixed(problem: Problem, x, alpha, spec: GradientSpec, stream) -> GradientEstimate:
    """Synthetic estimate satisfying the mixed condition with probability ``1 - delta``.

    Accurate draws are uniform on the admissible set: proposals come from
    the enclosing ball of :func:`mixed_radius` and are rejected until the
    condition holds. The ball of radius
    ``max(zeta eps_g, kappa alpha ||grad|| / (1 + kappa alpha))`` is always
    admissible and serves as a fallback. Failure draws point uphill. When no
    violating point exists (the condition admits every ``g``) the failure
    branch returns an accurate estimate and reports it as such.
    """
    if spec.condition_kind != "mixed":
        raise ConfigurationError("synthetic_mixed needs the mixed accuracy condition")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    cond = spec.accuracy_condition()
    grad = np.asarray(problem.grad(x), dtype=float)
    n = grad.shape[0]
    grad_norm = float(np.linalg.norm(grad))
    radius = mixed_radius(grad_norm, alpha, cond.zeta, cond.epsilon_g, cond.kappa)
    accurate = bool(stream.random() >= spec.delta)
    g = None
    if not accurate:
        g = _mixed_violation(grad, grad_norm, alpha, cond, stream)
    if g is None:
        for _ in range(_MAX_REJECTIONS):
            cand = grad + _uniform_in_ball(stream, n, radius)
            if check_condition(cand, grad, cond, alpha):
                g = cand
                break
        else:
            ka = cond.kappa * alpha
            inner = max(cond.zeta * cond.epsilon_g, ka * grad_norm / (1.0 + ka))
            g = grad + _uniform_in_ball(stream, n, inner)
    event = check_condition(g, grad, cond, alpha)
    return GradientEstimate(g, event, 0, "synthetic_mixed")


def estimate(spec: GradientSpec, problem: Problem, noise: NoiseModel, x, alpha, stream) -> GradientEstimate:
    """Dispatch to the estimator named by ``spec.scheme``."""
    cond = spec.accuracy_condition()
    if spec.scheme == "synthetic_norm":
        return estimate_synthetic_norm(problem, x, spec.theta, spec.delta, stream)
    if spec.scheme == "synthetic_mixed":
        return estimate_synthetic_mixed(problem, x, alpha, spec, stream)
    if spec.scheme == "forward_difference":
        return estimate_forward_difference(
            problem, noise, x, spec.fd_step_h, stream, cond, alpha, central=spec.central
        )
    distribution = "gaussian" if spec.scheme == "gaussian_smoothing" else "sphere"
    return estimate_smoothing(
        problem, noise, x, spec.smoothing_sigma, spec.num_samples, distribution, stream, cond, alpha
    )

"""Test problems and bounded-noise function oracles.

A :class:`Problem` bundles the smooth objective ``phi`` with its gradient and
the constants the complexity theory needs (Lipschitz constant, strong
convexity modulus, lower bound, minimiser). A :class:`NoiseModel` turns
``phi`` into the computable ``f(x, xi) = phi(x) + e(x, xi)`` with
``|e| <= epsilon_f``.

All objective callables accept either a single point of shape ``(n,)`` or a
batch of shape ``(m, n)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from noisyls.errors import ConfigurationError

CONVEXITY_CLASSES = ("convex", "strongly_convex", "nonconvex")
NOISE_KINDS = ("uniform", "deterministic_oscillatory", "adversarial_sign", "zero")
# Roles an evaluation can play inside the sufficient-decrease test.
ROLES = (None, "current", "trial")


@dataclass(frozen=True)
class Problem:
    """Smooth objective plus the constants used by the theory.

    ``lipschitz_region`` is the half-width of the box ``||x||_inf <= R`` on
    which ``lipschitz_L`` is a valid gradient Lipschitz constant; ``None``
    means the constant is global.
    """

    name: str
    dim: int
    eval_phi: Callable[[np.ndarray], np.ndarray]
    eval_grad: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: float
    lower_bound_phi_hat: float
    convexity_class: str
    strong_mu: Optional[float] = None
    optimum_x_star: Optional[np.ndarray] = None
    optimum_phi_star: Optional[float] = None
    region_D: Optional[float] = None
    x0: Optional[np.ndarray] = None
    lipschitz_region: Optional[float] = None
    eval_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"dim must be positive, got {self.dim}")
        if not self.lipschitz_L > 0:
            raise ConfigurationError("lipschitz_L must be positive")
        if self.convexity_class not in CONVEXITY_CLASSES:
            raise ConfigurationError(f"unknown convexity class {self.convexity_class!r}")
        if self.strong_mu is not None and not 0 < self.strong_mu <= self.lipschitz_L:
            raise ConfigurationError("strong_mu must lie in (0, L]")

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point has non-finite coordinates")
        return x

    def phi(self, x):
        return self.eval_phi(self.check_point(x))

    def grad(self, x):
        return self.eval_grad(self.check_point(x))


@dataclass(frozen=True)
class NoiseModel:
    """Bounded additive corruption of function values.

    ``uniform``
        independent ``e ~ U[-eps, eps]`` per evaluation.
    ``deterministic_oscillatory``
        ``e = eps * sin(2 pi u(x))`` where ``u`` is a stateless hash of the
        coordinates, so repeated evaluation at ``x`` returns the same value.
    ``adversarial_sign``
        ``e = +eps`` on trial points and ``-eps`` on current points, the
        coupling that works hardest against acceptance; a random sign when the
        evaluation has no role.
    ``zero``
        no noise.
    """

    epsilon_f: float = 0.0
    kind: str = "zero"

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.kind!r}")
        if not (self.epsilon_f >= 0 and math.isfinite(self.epsilon_f)):
            raise ConfigurationError("epsilon_f must be finite and non-negative")

    def sample(self, x: np.ndarray, stream: Optional[np.random.Generator] = None, role=None):
        """Noise values for the points ``x`` (shape ``(n,)`` or ``(m, n)``)."""
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {role!r}")
        batch_shape = x.shape[:-1]
        eps = self.epsilon_f
        if self.kind == "zero" or eps == 0.0:
            return np.zeros(batch_shape) if batch_shape else 0.0
        if self.kind == "uniform":
            return _rng(stream).uniform(-eps, eps, size=batch_shape or None)
        if self.kind == "deterministic_oscillatory":
            flat = x.reshape(-1, x.shape[-1])
            vals = np.array([eps * math.sin(2.0 * math.pi * _unit_hash(row)) for row in flat])
            return vals.reshape(batch_shape) if batch_shape else float(vals[0])
        # adversarial_sign
        if role == "trial":
            return np.full(batch_shape, eps) if batch_shape else eps
        if role == "current":
            return np.full(batch_shape, -eps) if batch_shape else -eps
        signs = _rng(stream).choice((-1.0, 1.0), size=batch_shape or None)
        return eps * signs


def _rng(stream):
    if stream is None:
        raise ValueError("this noise kind needs an RNG stream")
    return stream


def _unit_hash(row: np.ndarray) -> float:
    # + 0.0 folds -0.0 onto 0.0 so both hash identically
    digest = hashlib.blake2b(np.ascontiguousarray(row + 0.0).tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


def evaluate_noisy(problem: Problem, noise: NoiseModel, x, stream=None, role=None):
    """Return ``f(x, xi) = phi(x) + e(x, xi)`` with ``|e| <= epsilon_f``.

    Each call draws a fresh realisation of ``xi``; ``role`` ("current" or
    "trial") tells the adversarial model which side of the sufficient-decrease
    test the point sits on.
    """
    x = problem.check_point(x)
    return problem.eval_phi(x) + noise.sample(x, stream, role)


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------


def _quadratic_diag(dim, params):
    if "spectrum" in params:
        spectrum = np.asarray(params["spectrum"], dtype=float)
        if spectrum.shape != (dim,):
            raise ConfigurationError("spectrum length must equal dim")
        mu, L = float(spectrum.min()), float(spectrum.max())
    else:
        mu, L = float(params.get("mu", 1.0)), float(params.get("L", 1.0))
        if dim == 1 and mu != L:
            raise ConfigurationError("dim=1 quadratic needs mu == L")
        spectrum = np.linspace(mu, L, dim)
    if not 0 < mu <= L:
        raise ConfigurationError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    center = np.asarray(params.get("center", np.zeros(dim)), dtype=float)
    x0 = np.asarray(params.get("x0", np.ones(dim)), dtype=float)

    def phi(x):
        y = x - center
        return 0.5 * np.sum(spectrum * y * y, axis=-1)

    def grad(x):
        return spectrum * (x - center)

    def hess(x):
        return np.diag(spectrum)

    gap = float(phi(x0)) + float(params.get("level_slack", 0.0))
    return dict(
        eval_phi=phi,
        eval_grad=grad,
        eval_hess=hess,
        lipschitz_L=L,
        strong_mu=mu,
        lower_bound_phi_hat=0.0,
        optimum_x_star=center,
        optimum_phi_star=0.0,
        # {phi <= c} sits inside the ball of radius sqrt(2c/mu) around the centre
        region_D=math.sqrt(2.0 * gap / mu),
        convexity_class="strongly_convex",
        x0=x0,
        params={"spectrum": spectrum},
    )


def _logsumexp(dim, params):
    s = float(params.get("scale", 1.0))
    if s <= 0:
        raise ConfigurationError("scale must be positive")
    x0 = np.asarray(params.get("x0", np.full(dim, 2.0)), dtype=float)

    def _stack(x):
        return np.concatenate([s * x, -s * x], axis=-1)

    def phi(x):
        z = _stack(x)
        zmax = np.max(z, axis=-1, keepdims=True)
        return (np.log(np.sum(np.exp(z - zmax), axis=-1)) + zmax[..., 0]) / s

    def grad(x):
        z = _stack(x)
        p = np.exp(z - np.max(z, axis=-1, keepdims=True))
        p /= np.sum(p, axis=-1, keepdims=True)
        return p[..., :dim] - p[..., dim:]

    def hess(x):
        z = _stack(np.asarray(x, dtype=float))
        p = np.exp(z - z.max())
        p /= p.sum()
        q = p[:dim] - p[dim:]
        return s * (np.diag(p[:dim] + p[dim:]) - np.outer(q, q))

    # Hessian = s (diag(p+ + p-) - q q^T) with (p+ + p-)_i <= 1, so L = s.
    phi_star = math.log(2.0 * dim) / s
    level = float(phi(x0)) + float(params.get("level_slack", 0.0))
    # sum_i 2 cosh(s x_i) <= exp(s c) and every term is >= 2
    top = (math.exp(s * level) - 2.0 * (dim - 1)) / 2.0
    radius_inf = math.acosh(max(top, 1.0)) / s
    return dict(
        eval_phi=phi,
        eval_grad=grad,
        eval_hess=hess,
        lipschitz_L=s,
        lower_bound_phi_hat=phi_star,
        optimum_x_star=np.zeros(dim),
        optimum_phi_star=phi_star,
        region_D=math.sqrt(dim) * radius_inf,
        convexity_class="convex",
        x0=x0,
        params={"scale": s},
    )


def _rosenbrock(dim, params):
    if dim < 2:
        raise ConfigurationError("rosenbrock needs dim >= 2")
    a, b = float(params.get("a", 1.0)), float(params.get("b", 100.0))
    R = float(params.get("region", 1.5))
    default_x0 = np.array([-1.2 if i % 2 == 0 else 1.0 for i in range(dim)])
    x0 = np.asarray(params.get("x0", default_x0), dtype=float)

    def phi(x):
        head, tail = x[..., :-1], x[..., 1:]
        return np.sum(b * (tail - head**2) ** 2 + (a - head) ** 2, axis=-1)

    def grad(x):
        head, tail = x[..., :-1], x[..., 1:]
        inner = tail - head**2
        g = np.zeros_like(x)
        g[..., :-1] = -4.0 * b * head * inner - 2.0 * (a - head)
        g[..., 1:] += 2.0 * b * inner
        return g

    def hess(x):
        x = np.asarray(x, dtype=float)
        H = np.zeros((dim, dim))
        for i in range(dim - 1):
            H[i, i] += 2.0 - 4.0 * b * (x[i + 1] - 3.0 * x[i] ** 2)
            H[i + 1, i + 1] += 2.0 * b
            H[i, i + 1] = H[i + 1, i] = -4.0 * b * x[i]
        return H

    # Gershgorin row bound on the box ||x||_inf <= R.
    rows = []
    for i in range(dim):
        bound = 0.0
        if i < dim - 1:
            bound += 2.0 + 12.0 * b * R**2 + 4.0 * b * R + 4.0 * b * R
        if i > 0:
            bound += 2.0 * b + 4.0 * b * R
        rows.append(bound)
    return dict(
        eval_phi=phi,
        eval_grad=grad,
        eval_hess=hess,
        lipschitz_L=max(rows),
        lower_bound_phi_hat=0.0,
        optimum_x_star=np.full(dim, a),
        optimum_phi_star=0.0,
        convexity_class="nonconvex",
        x0=x0,
        lipschitz_region=R,
        params={"a": a, "b": b, "region": R},
    )


def _raleigh_like(dim, params):
    R = float(params.get("region", 1.5))
    x0 = np.asarray(params.get("x0", np.full(dim, 1.0)), dtype=float)

    def phi(x):
        return 0.25 * (np.sum(x * x, axis=-1) - 1.0) ** 2

    def grad(x):
        return (np.sum(x * x, axis=-1, keepdims=True) - 1.0) * x

    def hess(x):
        x = np.asarray(x, dtype=float)
        return (x @ x - 1.0) * np.eye(dim) + 2.0 * np.outer(x, x)

    # eigenvalues ||x||^2 - 1 and 3||x||^2 - 1 with ||x||^2 <= n R^2 on the box
    L = max(3.0 * dim * R**2 - 1.0, 1.0)
    x_star = np.zeros(dim)
    x_star[0] = 1.0
    return dict(
        eval_phi=phi,
        eval_grad=grad,
        eval_hess=hess,
        lipschitz_L=L,
        lower_bound_phi_hat=0.0,
        optimum_x_star=x_star,
        optimum_phi_star=0.0,
        convexity_class="nonconvex",
        x0=x0,
        lipschitz_region=R,
        params={"region": R},
    )


BUILTIN_PROBLEMS = {
    "quadratic_diag": _quadratic_diag,
    "logsumexp": _logsumexp,
    "rosenbrock": _rosenbrock,
    "raleigh_like": _raleigh_like,
}


def builtin_problem(name: str, dim: int, params: Optional[dict] = None) -> Problem:
    """Construct one of the built-in test problems.

    Parameters
    ----------
    name : {"quadratic_diag", "logsumexp", "rosenbrock", "raleigh_like"}
    dim : int
    params : dict, optional
        Problem-specific options. All problems accept ``x0``. Convex problems
        accept ``level_slack``, added to ``phi(x0)`` before the level-set
        radius ``region_D`` is computed. ``quadratic_diag`` takes ``mu`` and
        ``L`` (or an explicit ``spectrum``) and ``center``; ``logsumexp`` takes
        ``scale``; ``rosenbrock`` and ``raleigh_like`` take ``region``, the
        box half-width on which the reported Lipschitz constant is valid.
    """
    if name not in BUILTIN_PROBLEMS:
        raise ConfigurationError(
            f"unknown problem {name!r}; choose from {sorted(BUILTIN_PROBLEMS)}"
        )
    if int(dim) != dim or dim < 1:
        raise ConfigurationError(f"dim must be a positive integer, got {dim!r}")
    fields = BUILTIN_PROBLEMS[name](int(dim), dict(params or {}))
    x0 = fields.get("x0")
    if x0 is not None and x0.shape != (dim,):
        raise ConfigurationError(f"x0 must have length {dim}")
    return Problem(name=name, dim=int(dim), **fields)

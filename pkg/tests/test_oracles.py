import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyls.errors import ConfigurationError
from noisyls.oracles import NOISE_KINDS, NoiseModel, Problem, builtin_problem, evaluate_noisy

coords = st.floats(-1.5, 1.5, allow_nan=False)


def points(dim):
    return st.lists(coords, min_size=dim, max_size=dim).map(np.array)


PROBLEMS = [
    builtin_problem("quadratic_diag", 3, {"mu": 0.5, "L": 2.0}),
    builtin_problem("logsumexp", 2, {"scale": 1.0}),
    builtin_problem("logsumexp", 3, {"scale": 2.5}),
    builtin_problem("rosenbrock", 2),
    builtin_problem("rosenbrock", 3),
    builtin_problem("raleigh_like", 2),
]


def test_zero_noise_at_minimizer():
    p = builtin_problem("quadratic_diag", 1, {"mu": 1.0, "L": 1.0})
    assert evaluate_noisy(p, NoiseModel(0.0, "zero"), np.array([0.0])) == 0.0


def test_uniform_noise_interval():
    p = builtin_problem("quadratic_diag", 1, {"mu": 1.0, "L": 1.0})
    rng = np.random.default_rng(0)
    vals = [evaluate_noisy(p, NoiseModel(0.1, "uniform"), np.array([2.0]), rng) for _ in range(1000)]
    assert min(vals) >= 1.9 and max(vals) <= 2.1
    assert len(set(vals)) > 1  # independent realisations


def test_adversarial_sign_opposes_acceptance():
    p = builtin_problem("quadratic_diag", 1, {"mu": 1.0, "L": 1.0})
    noise = NoiseModel(0.1, "adversarial_sign")
    x = np.array([1.0])
    assert evaluate_noisy(p, noise, x, role="trial") == pytest.approx(0.6, abs=0)
    assert evaluate_noisy(p, noise, x, role="current") == pytest.approx(0.4, abs=0)
    rng = np.random.default_rng(1)
    assert evaluate_noisy(p, noise, x, rng) in (0.4, 0.6)


def test_oscillatory_noise_is_a_function_of_x():
    p = builtin_problem("quadratic_diag", 2)
    noise = NoiseModel(0.05, "deterministic_oscillatory")
    x = np.array([0.3, -0.7])
    a, b = evaluate_noisy(p, noise, x), evaluate_noisy(p, noise, x.copy())
    assert a == b
    assert evaluate_noisy(p, noise, np.array([0.3, -0.70001])) != a
    # signed zeros hash alike
    assert evaluate_noisy(p, noise, np.array([0.0, 1.0])) == evaluate_noisy(p, noise, np.array([-0.0, 1.0]))


def test_quadratic_dim1():
    p = builtin_problem("quadratic_diag", 1, {"mu": 1.0, "L": 1.0})
    assert p.lipschitz_L == 1.0 and p.strong_mu == 1.0
    assert p.optimum_phi_star == 0.0
    np.testing.assert_array_equal(p.optimum_x_star, [0.0])
    assert p.phi(np.array([3.0])) == 4.5


def test_rosenbrock_constants():
    p = builtin_problem("rosenbrock", 2)
    np.testing.assert_array_equal(p.optimum_x_star, [1.0, 1.0])
    assert p.optimum_phi_star == 0.0 and p.lower_bound_phi_hat == 0.0
    assert p.phi(p.optimum_x_star) == 0.0
    np.testing.assert_array_equal(p.grad(p.optimum_x_star), [0.0, 0.0])
    np.testing.assert_array_equal(p.x0, [-1.2, 1.0])


def test_logsumexp_lipschitz_by_hessian_grid():
    p = builtin_problem("logsumexp", 2, {"scale": 1.0})
    grid = np.linspace(-3, 3, 41)
    norms = [
        np.linalg.norm(p.eval_hess(np.array([a, b])), 2) for a in grid for b in grid
    ]
    assert p.lipschitz_L == 1.0
    assert max(norms) <= p.lipschitz_L
    assert max(norms) > 0.4
    assert p.region_D is not None and p.region_D > np.linalg.norm(p.x0)


def test_logsumexp_hessian_matches_gradient():
    p = builtin_problem("logsumexp", 3, {"scale": 1.7})
    x = np.array([0.3, -0.2, 0.9])
    h = 1e-6
    fd = np.array([(p.grad(x + h * e) - p.grad(x - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(fd, p.eval_hess(x), atol=1e-6)


@pytest.mark.parametrize("name,params", [("rosenbrock", {}), ("raleigh_like", {})])
def test_hessian_bound_on_box(name, params):
    p = builtin_problem(name, 2, params)
    R = p.lipschitz_region
    grid = np.linspace(-R, R, 31)
    worst = max(np.linalg.norm(p.eval_hess(np.array([a, b])), 2) for a in grid for b in grid)
    assert worst <= p.lipschitz_L


def test_quadratic_spectrum_audit():
    p = builtin_problem("quadratic_diag", 5, {"mu": 0.2, "L": 3.0})
    spec = p.params["spectrum"]
    assert p.lipschitz_L == spec.max() and p.strong_mu == spec.min()
    np.testing.assert_array_equal(np.diag(p.eval_hess(np.zeros(5))), spec)


def test_region_D_contains_level_set():
    p = builtin_problem("quadratic_diag", 2, {"mu": 0.5, "L": 2.0, "level_slack": 0.1})
    level = p.phi(p.x0) + 0.1
    rng = np.random.default_rng(3)
    pts = rng.uniform(-5, 5, size=(20000, 2))
    inside = pts[p.phi(pts) <= level]
    assert np.linalg.norm(inside, axis=1).max() <= p.region_D
    q = builtin_problem("logsumexp", 2, {"level_slack": 0.05})
    level = q.phi(q.x0) + 0.05
    pts = rng.uniform(-6, 6, size=(20000, 2))
    inside = pts[q.phi(pts) <= level]
    assert np.linalg.norm(inside, axis=1).max() <= q.region_D


@pytest.mark.parametrize(
    "name,dim,params",
    [
        ("nope", 2, {}),
        ("quadratic_diag", 2, {"mu": 2.0, "L": 1.0}),
        ("quadratic_diag", 1, {"mu": 0.5, "L": 1.0}),
        ("quadratic_diag", 0, {}),
        ("rosenbrock", 1, {}),
        ("logsumexp", 2, {"scale": -1.0}),
        ("logsumexp", 2, {"x0": [1.0, 2.0, 3.0]}),
    ],
)
def test_builtin_rejects_bad_input(name, dim, params):
    with pytest.raises(ConfigurationError):
        builtin_problem(name, dim, params)


def test_bad_points_rejected():
    p = builtin_problem("quadratic_diag", 2)
    with pytest.raises(ValueError):
        evaluate_noisy(p, NoiseModel(), np.array([np.nan, 0.0]))
    with pytest.raises(ValueError):
        evaluate_noisy(p, NoiseModel(), np.array([np.inf, 0.0]))
    with pytest.raises(ValueError):
        evaluate_noisy(p, NoiseModel(), np.zeros(3))


def test_noise_model_validation():
    with pytest.raises(ConfigurationError):
        NoiseModel(0.1, "gaussian")
    with pytest.raises(ConfigurationError):
        NoiseModel(-0.1, "uniform")
    with pytest.raises(ValueError):
        NoiseModel(0.1, "uniform").sample(np.zeros(2), None)


def test_problem_validation():
    with pytest.raises(ConfigurationError):
        Problem("p", 1, lambda x: x, lambda x: x, 1.0, 0.0, "weird")
    with pytest.raises(ConfigurationError):
        Problem("p", 1, lambda x: x, lambda x: x, 1.0, 0.0, "convex", strong_mu=2.0)


def test_batch_evaluation_matches_pointwise():
    for p in PROBLEMS:
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(6, p.dim))
        np.testing.assert_allclose(p.phi(X), [p.phi(x) for x in X], rtol=1e-13)
        np.testing.assert_allclose(p.grad(X), [p.grad(x) for x in X], rtol=1e-13)


# ---------------------------------------------------------------- properties


@settings(max_examples=200, deadline=None)
@given(
    kind=st.sampled_from(NOISE_KINDS),
    eps=st.floats(0, 10, allow_nan=False),
    x=points(2),
    role=st.sampled_from([None, "current", "trial"]),
    seed=st.integers(0, 2**32 - 1),
)
def test_noise_is_bounded(kind, eps, x, role, seed):
    p = builtin_problem("quadratic_diag", 2, {"mu": 0.5, "L": 2.0})
    noise = NoiseModel(eps, kind)
    e = noise.sample(x, np.random.default_rng(seed), role)
    assert abs(e) <= eps
    val = evaluate_noisy(p, noise, x, np.random.default_rng(seed), role)
    # the subtraction below rounds; allow one ulp of each operand
    slack = 2 * np.spacing(max(abs(val), abs(p.phi(x)), eps))
    assert abs(val - p.phi(x)) <= eps + slack


@settings(max_examples=50, deadline=None)
@given(x=points(3))
def test_zero_noise_is_exact(x):
    p = PROBLEMS[0]
    assert evaluate_noisy(p, NoiseModel(0.3, "zero"), x) == p.eval_phi(x)


@settings(max_examples=60, deadline=None)
@given(idx=st.integers(0, len(PROBLEMS) - 1), seed=st.integers(0, 10**6))
def test_gradient_consistency(idx, seed):
    p = PROBLEMS[idx]
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, p.dim)
    v = rng.standard_normal(p.dim)
    v /= np.linalg.norm(v)
    errs = []
    for h in (1e-2, 1e-3, 1e-4):
        errs.append(abs((p.phi(x + h * v) - p.phi(x)) / h - p.grad(x) @ v))
    assert errs[2] <= errs[0] + 1e-9
    assert errs[2] <= 1e-4 * max(1.0, p.lipschitz_L)


@settings(max_examples=100, deadline=None)
@given(idx=st.integers(0, len(PROBLEMS) - 1), seed=st.integers(0, 10**6))
def test_lipschitz_lower_bound_and_strong_convexity(idx, seed):
    p = PROBLEMS[idx]
    rng = np.random.default_rng(seed)
    R = p.lipschitz_region or 3.0
    x, y = rng.uniform(-R, R, (2, p.dim))
    gx, gy = p.grad(x), p.grad(y)
    assert np.linalg.norm(gx - gy) <= p.lipschitz_L * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12
    assert p.phi(x) >= p.lower_bound_phi_hat - 1e-12
    if p.strong_mu is not None:
        lhs = p.phi(x)
        rhs = p.phi(y) + gy @ (x - y) + 0.5 * p.strong_mu * np.sum((x - y) ** 2)
        assert lhs >= rhs - 1e-12 * max(1.0, abs(lhs))
    if p.convexity_class in ("convex", "strongly_convex"):
        assert p.phi(x) >= p.phi(y) + gy @ (x - y) - 1e-12


def test_known_optima_values():
    for p in PROBLEMS:
        if p.optimum_x_star is not None:
            assert math.isclose(float(p.phi(p.optimum_x_star)), p.optimum_phi_star, abs_tol=1e-15)

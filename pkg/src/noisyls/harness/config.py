"""Experiment configuration: TOML loading, defaults and cross-field checks.

A configuration is a nested mapping with the sections documented in the
README (``problem``, ``noise``, ``gradient``, ``linesearch``, ``theory``,
``stopping``, ``experiment``, ``process``, ``sweep``). :func:`build` turns
it into ready-to-use objects.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from noisyls import theory
from noisyls.errors import ConfigurationError, DomainError
from noisyls.gradients import GradientSpec
from noisyls.linesearch import DirectionRule, LineSearchConfig, StoppingSpec
from noisyls.oracles import NoiseModel, Problem, builtin_problem
from noisyls.process import AdversaryPolicy, ProcessParams, constant_h, linear_h

SECTIONS = {
    "problem": {"name", "dim", "params"},
    "noise": {"kind", "epsilon_f"},
    "gradient": {
        "scheme", "theta", "delta", "fd_step_h", "smoothing_sigma", "num_samples",
        "kappa", "zeta", "epsilon_g", "central", "condition",
    },
    "linesearch": {
        "c1", "tau", "alpha0", "alpha0_exponent", "alpha_max", "epsilon_f", "direction",
        "max_iter", "projection_radius", "projection_center",
    },
    "theory": {"enabled", "gamma", "case", "compare_remark"},
    "stopping": {"epsilon", "epsilon_factor", "mode"},
    "experiment": {"trials", "base_seed", "output_dir", "threads"},
    "process": {
        "delta", "gamma", "tau", "alpha0", "grid_exponent", "h_bar", "h_shape", "r", "r_ratio",
        "z_eps", "policy", "p", "z_gain", "z_loss", "horizon", "trials", "seed", "traces",
    },
    "sweep": None,  # free-form "section.key" -> list
}

DEFAULTS = {
    "problem": {"name": "quadratic_diag", "dim": 2, "params": {}},
    "noise": {"kind": "zero", "epsilon_f": 0.0},
    "gradient": {"scheme": "synthetic_norm"},
    "linesearch": {"c1": 0.5, "tau": 0.5, "alpha0": "alpha_bar"},
    "theory": {"enabled": True, "gamma": 0.5, "compare_remark": False},
    "stopping": {},
    "experiment": {"trials": 10, "base_seed": 0, "output_dir": "out", "threads": 1},
    "process": {},
    "sweep": {},
}

# the harness checks epsilon against this multiple of the floor
FLOOR_MARGIN = 1.01
# default level-set slack for convex problems, in units of epsilon_f
LEVEL_SLACK_FACTOR = 400.0


def load(path) -> dict:
    """Read a TOML file and validate its section and key names."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigurationError(f"{path}: {err}") from None
    return normalize(raw)


def normalize(raw: dict) -> dict:
    """Merge defaults into ``raw`` after checking for unknown keys."""
    for section, value in raw.items():
        if section not in SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
        if not isinstance(value, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        allowed = SECTIONS[section]
        if allowed is None:
            continue
        for key in value:
            if key not in allowed:
                raise ConfigurationError(f"unknown key {section}.{key}")
    cfg = copy.deepcopy(DEFAULTS)
    for section, value in raw.items():
        cfg[section].update(copy.deepcopy(value))
    return cfg


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form of ``cfg``."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def set_key(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``section.key`` (or ``section.key.sub``) replaced."""
    parts = dotted.split(".")
    if len(parts) < 2 or parts[0] not in SECTIONS or parts[0] == "sweep":
        raise ConfigurationError(f"cannot sweep over {dotted!r}")
    section, key = parts[0], parts[1]
    if SECTIONS[section] is not None and key not in SECTIONS[section]:
        raise ConfigurationError(f"cannot sweep over {dotted!r}: unknown key")
    out = copy.deepcopy(cfg)
    node = out[section]
    for part in parts[1:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot sweep over {dotted!r}")
    node[parts[-1]] = value
    return out


@dataclass
class Experiment:
    """Everything needed to run optimiser trials for one configuration."""

    cfg: dict
    problem: Problem
    noise: NoiseModel
    gradspec: GradientSpec
    linesearch: LineSearchConfig
    stopping: StoppingSpec
    theory: Optional[theory.TheoryParams]
    trials: int
    base_seed: int
    output_dir: Path
    threads: int
    phi_ref: float
    hash: str

    @property
    def case(self) -> str:
        return self.theory.case if self.theory is not None else self.problem.convexity_class

    def bound(self) -> Optional[float]:
        if self.theory is None:
            return None
        return theory.expected_bound(self.theory)


def _direction(spec) -> DirectionRule:
    if spec is None or spec == "steepest":
        return DirectionRule()
    if isinstance(spec, str):
        return DirectionRule(kind=spec)
    spec = dict(spec)
    if spec.get("matrix") is not None:
        spec["matrix"] = np.asarray(spec["matrix"], dtype=float)
    try:
        return DirectionRule(**spec)
    except TypeError as err:
        raise ConfigurationError(f"linesearch.direction: {err}") from None


def _problem(cfg) -> tuple:
    sec = cfg["problem"]
    noise = NoiseModel(float(sec_get(cfg, "noise", "epsilon_f", 0.0)), cfg["noise"].get("kind", "zero"))
    params = dict(sec.get("params", {}))
    if "x0" in params:
        params["x0"] = np.asarray(params["x0"], dtype=float)
    if sec["name"] in ("quadratic_diag", "logsumexp"):
        params.setdefault("level_slack", LEVEL_SLACK_FACTOR * noise.epsilon_f)
    return builtin_problem(sec["name"], int(sec["dim"]), params), noise


def sec_get(cfg, section, key, default=None):
    return cfg.get(section, {}).get(key, default)


def build(cfg: dict) -> Experiment:
    """Instantiate and cross-check every object described by ``cfg``."""
    problem, noise = _problem(cfg)
    g = cfg["gradient"]
    try:
        gradspec = GradientSpec(**g)
    except TypeError as err:
        raise ConfigurationError(f"gradient: {err}") from None

    ls = dict(cfg["linesearch"])
    direction = _direction(ls.pop("direction", None))
    alpha0 = ls.pop("alpha0", "alpha_bar")
    exponent = int(ls.pop("alpha0_exponent", 0))
    tau = float(ls.get("tau", 0.5))
    c1 = float(ls.get("c1", 0.5))
    alpha_max = ls.get("alpha_max")
    eps_f_ls = float(ls.pop("epsilon_f", noise.epsilon_f))

    use_theory = bool(cfg["theory"].get("enabled", True))
    case = cfg["theory"].get("case", problem.convexity_class)
    x0 = problem.x0
    phi0 = float(problem.eval_phi(x0))
    if case == "nonconvex":
        phi_ref = problem.lower_bound_phi_hat
    else:
        if problem.optimum_phi_star is None:
            raise ConfigurationError(f"case {case!r} needs a problem with known phi_star")
        phi_ref = problem.optimum_phi_star

    tp = None
    if use_theory or alpha0 == "alpha_bar":
        tp = theory.TheoryParams(
            L=problem.lipschitz_L,
            case=case,
            c1=c1,
            theta=gradspec.theta,
            delta=gradspec.delta,
            gamma=float(cfg["theory"].get("gamma", 0.5)),
            tau=tau,
            alpha0=None,
            epsilon_f=noise.epsilon_f,
            mu=problem.strong_mu,
            D=problem.region_D,
            phi0_gap=phi0 - phi_ref,
            kappa=gradspec.kappa,
            zeta=gradspec.zeta,
            epsilon_g=gradspec.epsilon_g,
            alpha_max=alpha_max,
            beta=direction.beta,
            kappa1=direction.kappa1,
            kappa2=direction.kappa2,
            condition=gradspec.condition_kind,
            direction="general" if direction.kind == "scaled" else "steepest",
        )
    if alpha0 == "alpha_bar":
        alpha0 = theory.alpha_bar(tp) * tau ** (-exponent)
    elif isinstance(alpha0, str):
        raise ConfigurationError(f"linesearch.alpha0 must be a number or 'alpha_bar', got {alpha0!r}")
    alpha0 = float(alpha0)
    if tp is not None:
        tp = tp.with_(alpha0=alpha0)

    radius = ls.pop("projection_radius", None)
    if radius == "D":
        if problem.region_D is None:
            raise ConfigurationError("projection_radius = 'D' needs a problem with region_D")
        radius = problem.region_D
    center = ls.pop("projection_center", None)
    linesearch = LineSearchConfig(
        c1=c1,
        tau=tau,
        alpha0=alpha0,
        alpha_max=None if alpha_max is None else float(alpha_max),
        epsilon_f=eps_f_ls,
        direction=direction,
        max_iter=int(ls.get("max_iter", 10**6)),
        projection_radius=None if radius is None else float(radius),
        projection_center=None if center is None else np.asarray(center, dtype=float),
    )
    if gradspec.condition_kind == "mixed" and linesearch.alpha_max is None:
        raise ConfigurationError("the mixed accuracy condition needs linesearch.alpha_max")

    st = cfg["stopping"]
    floor = theory.epsilon_floor(tp) if use_theory else None
    if "epsilon" in st:
        eps = float(st["epsilon"])
    elif "epsilon_factor" in st:
        if floor is None or floor == 0.0:
            raise ConfigurationError("stopping.epsilon_factor needs a positive theory floor; give epsilon")
        eps = float(st["epsilon_factor"]) * floor
    else:
        raise ConfigurationError("stopping needs epsilon or epsilon_factor")
    if use_theory and eps < FLOOR_MARGIN * floor * (1 - 1e-12):
        raise DomainError(
            f"epsilon={eps:.6g} is below {FLOOR_MARGIN} x floor ({floor:.6g})",
            theory.NEIGHBORHOOD[case],
        )
    if tp is not None:
        tp = tp.with_(epsilon=eps)
    if use_theory and tau == 1.0:
        theory.step_exponent(tp)  # fixed step needs alpha0 <= alpha_bar

    mode = st.get("mode")
    if mode is None:
        mode = "grad_norm" if case == "nonconvex" else "value_gap"
        if gradspec.condition_kind == "mixed" and gradspec.epsilon_g > 0:
            mode += "_or_biased_floor"
    biased = None
    if mode.endswith("biased_floor"):
        if tp is None:
            raise ConfigurationError(f"stopping mode {mode!r} needs theory parameters")
        biased = theory.biased_stop_level(tp)
    stopping = StoppingSpec(eps, mode, problem.optimum_phi_star, biased)

    ex = cfg["experiment"]
    trials = int(ex.get("trials", 10))
    if trials < 1:
        raise ConfigurationError("experiment.trials must be positive")
    return Experiment(
        cfg=cfg,
        problem=problem,
        noise=noise,
        gradspec=gradspec,
        linesearch=linesearch,
        stopping=stopping,
        theory=tp if use_theory else None,
        trials=trials,
        base_seed=int(ex.get("base_seed", 0)),
        output_dir=Path(ex.get("output_dir", "out")),
        threads=max(1, int(ex.get("threads", 1))),
        phi_ref=phi_ref,
        hash=config_hash(cfg),
    )


def build_process(cfg: dict) -> tuple:
    """``(ProcessParams, trials, seed, traces)`` from the ``[process]`` section.

    ``alpha_bar = alpha0 * tau**grid_exponent``; ``r`` defaults to
    ``r_ratio * gamma * h_bar``.
    """
    p = dict(cfg["process"])
    if not p:
        raise ConfigurationError("missing [process] section")
    gamma = float(p.get("gamma", 0.5))
    tau = float(p.get("tau", 0.5))
    c = int(p.get("grid_exponent", 0))
    if c < 0:
        raise ConfigurationError("process.grid_exponent must be >= 0")
    alpha0 = float(p.get("alpha0", 1.0))
    alpha_bar = alpha0 * tau**c
    if tau == 1.0 and c != 0:
        raise ConfigurationError("tau = 1 needs grid_exponent = 0")
    h_bar = float(p.get("h_bar", 0.1))
    shape = p.get("h_shape", "linear")
    if shape == "linear":
        h = linear_h(h_bar, alpha_bar)
    elif shape == "constant":
        h = constant_h(h_bar)
    else:
        raise ConfigurationError(f"unknown process.h_shape {shape!r}")
    r = float(p["r"]) if "r" in p else float(p.get("r_ratio", 0.99)) * gamma * h_bar
    policy = AdversaryPolicy(
        success_when_unforced=p.get("policy", "adversarial_greedy"),
        p=float(p.get("p", 0.5)),
        z_gain=p.get("z_gain", "minimal"),
        z_loss=p.get("z_loss", "maximal"),
    )
    params = ProcessParams(
        delta=float(p.get("delta", 0.0)),
        gamma=gamma,
        tau=tau,
        alpha0=alpha0,
        alpha_bar=alpha_bar,
        h=h,
        r=r,
        z_eps=float(p.get("z_eps", 1.0)),
        policy=policy,
        horizon=None if p.get("horizon") is None else int(p["horizon"]),
    )
    trials = int(p.get("trials", cfg["experiment"].get("trials", 1000)))
    seed = int(p.get("seed", cfg["experiment"].get("base_seed", 0)))
    traces = int(p.get("traces", 10))
    if math.isnan(r):
        raise ConfigurationError("process.r is not a number")
    return params, trials, seed, traces

"""Running trials, process simulations and sweeps, and writing their outputs."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from noisyls import theory
from noisyls.errors import ConfigurationError
from noisyls.harness.config import Experiment, build, build_process, config_hash, set_key
from noisyls.linesearch import RunRecord, run
from noisyls.process import check_counting_inequalities, simulate, simulate_batch

ITERATION_COLUMNS = [
    "trial", "k", "alpha", "successful", "accuracy_event",
    "f_cur", "f_trial", "phi_true", "grad_norm_true", "z_k",
]
SUMMARY_COLUMNS = ["trial", "N_eps", "censored", "delta_hat", "iterations", "successes", "bound"]
TRACE_COLUMNS = ["trial", "k", "alpha", "I", "Theta", "Lambda", "Lambda_bar", "z_k"]


def trial_seed(base_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(trial)])


_BUILD_CACHE = {}


def _cached_build(cfg):
    key = config_hash(cfg)
    if key not in _BUILD_CACHE:
        _BUILD_CACHE.clear()
        _BUILD_CACHE[key] = build(cfg)
    return _BUILD_CACHE[key]


def run_trial(exp: Experiment, trial: int) -> RunRecord:
    rec = run(
        exp.problem, exp.noise, exp.gradspec, exp.linesearch, exp.stopping,
        trial_seed(exp.base_seed, trial),
    )
    rec.seed = (exp.base_seed, trial)
    rec.config_hash = exp.hash
    return rec


def _trial_rows(args):
    cfg, trial, bound = args
    exp = _cached_build(cfg)
    rec = run_trial(exp, trial)
    return iteration_rows(exp, rec, trial), summary_row(rec, trial, bound), rec.wall_time


def iteration_rows(exp: Experiment, rec: RunRecord, trial: int) -> list:
    phis = np.array([r.phi_true for r in rec.records])
    phi0 = float(rec.phi_path[0])
    z = theory.progress_variable(exp.case, phis, phi0, exp.phi_ref)
    return [
        [trial, r.k, r.alpha, int(r.successful), int(r.accuracy_event),
         r.f_cur, r.f_trial, r.phi_true, r.grad_norm_true, float(zk)]
        for r, zk in zip(rec.records, z)
    ]


def summary_row(rec: RunRecord, trial: int, bound) -> list:
    return [
        trial,
        "" if rec.n_eps is None else rec.n_eps,
        int(rec.censored),
        rec.delta_hat,
        rec.iterations,
        rec.successes,
        "" if bound is None else bound,
    ]


@dataclass
class RunOutcome:
    exp: Experiment
    iteration_rows: list
    summary_rows: list
    bound: Optional[float]
    wall_time: float

    @property
    def n_eps(self) -> np.ndarray:
        return np.array([r[1] for r in self.summary_rows if r[1] != ""], dtype=float)

    @property
    def censored(self) -> int:
        return sum(r[2] for r in self.summary_rows)

    def stats(self):
        n = self.n_eps
        if n.size == 0:
            return math.nan, math.nan
        se = float(n.std(ddof=1) / math.sqrt(n.size)) if n.size > 1 else 0.0
        return float(n.mean()), se


def run_experiment(cfg: dict, trials: Optional[int] = None, threads: Optional[int] = None) -> RunOutcome:
    """Run all trials of a configuration; results are ordered by trial index."""
    if trials is not None:
        cfg = set_key(cfg, "experiment.trials", int(trials))
    if threads is not None:
        cfg = set_key(cfg, "experiment.threads", int(threads))
    exp = build(cfg)
    bound = exp.bound()
    jobs = [(exp.cfg, t, bound) for t in range(exp.trials)]
    _BUILD_CACHE.clear()
    _BUILD_CACHE[exp.hash] = exp
    if exp.threads > 1 and exp.trials > 1:
        with ProcessPoolExecutor(max_workers=exp.threads) as pool:
            results = list(pool.map(_trial_rows, jobs))
    else:
        results = [_trial_rows(j) for j in jobs]
    it_rows, sm_rows, wall = [], [], 0.0
    for its, sm, w in results:
        it_rows.extend(its)
        sm_rows.append(sm)
        wall += w
    return RunOutcome(exp, it_rows, sm_rows, bound, wall)


def write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def write_report(path: Path, items):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for key, value in items:
            fh.write(f"{key} = {value}\n")


def run_report(out: RunOutcome) -> list:
    mean, se = out.stats()
    items = [
        ("config_hash", out.exp.hash),
        ("case", out.exp.case),
        ("trials", out.exp.trials),
        ("epsilon", out.exp.stopping.epsilon),
        ("stopping_mode", out.exp.stopping.mode),
        ("censored", out.censored),
        ("mean_N_eps", mean),
        ("std_err_N_eps", se),
    ]
    if out.bound is not None:
        items += [
            ("bound", out.bound),
            ("mean_plus_3se_le_bound", bool(mean + 3 * se <= out.bound) and out.censored == 0),
        ]
    return items


def save_run(out: RunOutcome, out_dir: Path):
    write_csv(out_dir / "iterations.csv", ITERATION_COLUMNS, out.iteration_rows)
    write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, out.summary_rows)
    write_report(out_dir / "report.txt", run_report(out))


# --- process simulation ------------------------------------------------------


@dataclass
class SimulationOutcome:
    params: object
    trials: int
    mean: float
    std_err: float
    censored: int
    bound: float
    counting: object
    summary_rows: list
    trace_rows: list

    @property
    def literal_violations(self) -> int:
        return int(np.sum(self.counting.true_success_slack < 0))

    @property
    def prefix_violations(self) -> int:
        return int(np.sum(self.counting.true_success_slack_prefix < 0))

    @property
    def unsuccessful_violations(self) -> int:
        return int(np.sum(self.counting.unsuccessful_slack < 0))

    @property
    def identity_violations(self) -> int:
        return int(np.sum(~self.counting.true_count_identity))

    def passed(self, strict_literal: bool = False) -> bool:
        ok = (
            self.censored == 0
            and self.unsuccessful_violations == 0
            and self.prefix_violations == 0
            and self.identity_violations == 0
            and self.mean + 3 * self.std_err <= self.bound
        )
        if strict_literal:
            ok = ok and self.literal_violations == 0
        return ok

    def report(self) -> list:
        return [
            ("trials", self.trials),
            ("mean_N_eps", self.mean),
            ("std_err_N_eps", self.std_err),
            ("censored", self.censored),
            ("bound", self.bound),
            ("mean_plus_3se_le_bound", bool(self.mean + 3 * self.std_err <= self.bound)),
            ("unsuccessful_count_violations", self.unsuccessful_violations),
            ("true_success_violations_prefix", self.prefix_violations),
            ("true_success_violations_literal", self.literal_violations),
            ("true_count_identity_violations", self.identity_violations),
        ]


def run_simulation(cfg: dict, trials: Optional[int] = None, seed: Optional[int] = None) -> SimulationOutcome:
    params, n, base, traces = build_process(cfg)
    n = int(trials) if trials is not None else n
    base = int(seed) if seed is not None else base
    if n < 2:
        raise ConfigurationError("process simulation needs at least two trials")
    res = simulate_batch(params, n, np.random.SeedSequence([base]))
    counting = check_counting_inequalities(res, params)
    done = res.n_eps[~res.censored].astype(float)
    mean = float(done.mean()) if done.size else math.nan
    se = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else 0.0
    summary = []
    for i in range(n):
        row = [i, "" if res.censored[i] else int(res.n_eps[i]), int(res.censored[i])]
        row += [int(res.counters[k][i]) for k in ("N_TS", "N_FS", "N_T", "N_F", "N_TU", "N_U", "N_SS")]
        row += [
            int(counting.unsuccessful_slack[i]),
            float(counting.true_success_slack_prefix[i]),
            float(counting.true_success_slack[i]),
        ]
        summary.append(row)
    trace_rows = []
    for t in range(min(traces, n)):
        tr = simulate(params, trial_seed(base, t))
        for k in range(tr.I.shape[0]):
            trace_rows.append([
                t, k, float(tr.alpha[k]), int(tr.I[k]), int(tr.Theta[k]),
                int(tr.Lambda[k]), int(tr.Lambda_bar[k]), float(tr.z[k]),
            ])
    return SimulationOutcome(
        params, n, mean, se, int(res.censored.sum()), params.bound(), counting, summary, trace_rows
    )


SIM_SUMMARY_COLUMNS = [
    "trial", "N_eps", "censored", "N_TS", "N_FS", "N_T", "N_F", "N_TU", "N_U", "N_SS",
    "unsuccessful_slack", "true_success_slack_prefix", "true_success_slack_literal",
]


def save_simulation(out: SimulationOutcome, out_dir: Path):
    write_csv(out_dir / "simulate_summary.csv", SIM_SUMMARY_COLUMNS, out.summary_rows)
    write_csv(out_dir / "traces.csv", TRACE_COLUMNS, out.trace_rows)
    write_report(out_dir / "simulate_report.txt", out.report())


# --- sweeps -------------------------------------------------------------------


def sweep_points(cfg: dict):
    """Cartesian product of the ``[sweep]`` lists as ``(assignments, cfg)`` pairs."""
    spec = cfg.get("sweep", {}) or {}
    keys = sorted(spec)
    for k in keys:
        if not isinstance(spec[k], list) or not spec[k]:
            raise ConfigurationError(f"sweep.{k} must be a non-empty list")
    base = dict(cfg)
    base["sweep"] = {}
    for values in itertools.product(*(spec[k] for k in keys)):
        point = base
        for k, v in zip(keys, values):
            point = set_key(point, k, v)
        yield dict(zip(keys, values)), point


SWEEP_BASE_COLUMNS = ["point", "epsilon", "epsilon_f"]


def run_sweep(cfg: dict, out_dir: Path, trials=None, threads=None) -> list:
    """Run every sweep point and write tidy and plot-ready CSVs.

    Without sweep keys this is a plain run and writes the same files.
    Returns the per-point rows of ``sweep_points.csv``.
    """
    spec = cfg.get("sweep", {}) or {}
    if not spec:
        out = run_experiment(cfg, trials, threads)
        save_run(out, out_dir)
        mean, se = out.stats()
        return [[0, out.exp.stopping.epsilon, out.exp.noise.epsilon_f, mean, se, out.censored, out.bound]]
    if any(k.startswith("process.") for k in spec):
        raise ConfigurationError("process keys are swept with the simulate subcommand settings, not run")
    keys = sorted(spec)
    tidy, points = [], []
    for idx, (assign, point_cfg) in enumerate(sweep_points(cfg)):
        out = run_experiment(point_cfg, trials, threads)
        eps, eps_f = out.exp.stopping.epsilon, out.exp.noise.epsilon_f
        for row in out.summary_rows:
            tidy.append([idx, eps, eps_f] + [assign[k] for k in keys] + row)
        mean, se = out.stats()
        points.append([idx, eps, eps_f] + [assign[k] for k in keys] + [mean, se, out.censored, out.bound])
    write_csv(out_dir / "sweep.csv", SWEEP_BASE_COLUMNS + keys + SUMMARY_COLUMNS, tidy)
    write_csv(
        out_dir / "sweep_points.csv",
        SWEEP_BASE_COLUMNS + keys + ["mean_N_eps", "std_err_N_eps", "censored", "bound"],
        points,
    )
    _write_plot_data(out_dir, keys, points)
    return points


def _series_label(keys, row, exclude):
    parts = [f"{k}={v}" for k, v in zip(keys, row[3:3 + len(keys)]) if k not in exclude]
    return ";".join(parts)


def _write_plot_data(out_dir: Path, keys, points):
    n = len(keys)
    eps_rows, epsf_rows, cmp_rows = [], [], []
    eps_keys = {"stopping.epsilon", "stopping.epsilon_factor"}
    for row in points:
        mean, bound = row[3 + n], row[3 + n + 3]
        label_eps = _series_label(keys, row, eps_keys) or "all"
        label_epsf = _series_label(keys, row, {"noise.epsilon_f"}) or "all"
        eps_rows.append([row[1], mean, "empirical:" + label_eps])
        epsf_rows.append([row[2], mean, "empirical:" + label_epsf])
        if bound is not None:
            eps_rows.append([row[1], bound, "bound:" + label_eps])
            epsf_rows.append([row[2], bound, "bound:" + label_epsf])
            cmp_rows.append([bound, mean, _series_label(keys, row, set()) or "all"])
    write_csv(out_dir / "plot_neps_vs_epsilon.csv", ["x", "y", "series"], eps_rows)
    write_csv(out_dir / "plot_neps_vs_epsilon_f.csv", ["x", "y", "series"], epsf_rows)
    write_csv(out_dir / "plot_mean_vs_bound.csv", ["x", "y", "series"], cmp_rows)

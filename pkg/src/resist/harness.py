"""Turn parsed configs into runs, execute suites and write metric CSVs."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .attack import AttackError, AttackPlan, AttackStrategy, static_plan
from .config import ConfigError, RunSpec, SuiteSpec, parse_int_list, parse_links
from .graph import GraphError, complete_graph, directed_cycle, generate_erdos_renyi, read_edge_list
from .idx import load_idx
from .metrics import MetricsLog, metrics_from_trajectory
from .objectives import (
    ObjectiveError,
    add_intercept,
    centralized_solve,
    find_critical_points,
    gaussian_blobs,
    label_flip,
    make_logistic_l2,
    make_pl_sine,
    make_pl_sum_counterexample,
    make_quadratic,
    partition_data,
)
from .rng import substream
from .runner import RunConfig, StepSchedule, run_dgd_multistep, run_resist
from .runner import ConfigError as RunnerConfigError

log = logging.getLogger("resist")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
SUMMARY_COLUMNS = [
    "run", "algorithm", "n_seeds",
    "xi6_final_mean", "xi6_final_std",
    "xi1_asym_mean", "xi1_asym_std",
    "fgap_final_mean", "fgap_final_std",
    "dist_final_mean", "dist_final_std",
]
VALIDATION_ERRORS = (ConfigError, RunnerConfigError, GraphError, AttackError, ObjectiveError)


@dataclass
class BuiltRun:
    name: str
    seed: int
    algorithm: str
    config: RunConfig
    objectives: list
    wstar: np.ndarray
    fstar: float


def _graph(p: dict, seed: int):
    kind = p["graph"]
    if kind == "complete":
        return complete_graph(p["M"])
    if kind == "cycle":
        return directed_cycle(p["M"])
    if kind == "er":
        return generate_erdos_renyi(p["M"], p["rho"], seed)
    if not p["graph_file"]:
        raise ConfigError("graph = file needs graph_file")
    return read_edge_list(p["graph_file"])


@lru_cache(maxsize=1)
def _pl_sum_minimum():
    best = min(find_critical_points(make_pl_sum_counterexample()), key=lambda c: c.value)
    return best.point, best.value


def _objectives(p: dict, M: int, seed: int):
    kind = p["objective"]
    if kind in ("quadratic", "quadratic-identical"):
        rng = substream(seed, "targets")
        if kind == "quadratic":
            targets = rng.normal(0.0, p["target_scale"], size=(M, p["d"]))
        else:
            targets = np.tile(rng.normal(0.0, p["target_scale"], size=p["d"]), (M, 1))
        objs = make_quadratic(targets, p["lam"])
        w, f = centralized_solve(objs)
        return objs, w, f
    if kind == "pl-sine":
        return [make_pl_sine()] * M, np.zeros(2), 0.0
    if kind == "pl-sum":
        point, value = _pl_sum_minimum()
        return [make_pl_sum_counterexample()] * M, point.copy(), value
    if p["mnist_images"]:
        X, y = load_idx(p["mnist_images"], p["mnist_labels"])
        C = 10
    else:
        C = p["classes"]
        X, y = gaussian_blobs(p["n_per_node"] * M, C, p["features"], seed)
    X = add_intercept(X)
    data = partition_data(X, y, M, p["partition"], seed)
    if p["label_flip_nodes"]:
        data = label_flip(data, parse_int_list(p["label_flip_nodes"]), C)
    lam = p["lam"] if p["lam"] > 0 else 0.1
    objs = [make_logistic_l2(Xj, yj, lam, C) for Xj, yj in data.parts]
    w, f = centralized_solve(objs)
    return objs, w, f


def build_run(spec: RunSpec, seed: int) -> BuiltRun:
    p = spec.params
    g = _graph(p, seed)
    strat = AttackStrategy(
        p["attack_strategy"],
        p["attack_R"],
        tuple(float(x) for x in p["attack_constant"].split(",")) if p["attack_constant"] else None,
    )
    if p["attack_policy"] == "static":
        plan = static_plan(parse_links(p["static_links"]), g, p["b"], strat, seed)
    else:
        plan = AttackPlan("dynamic-random", strat, p["B_actual"], seed)
    sched = StepSchedule(p["schedule"], p["h"], p["p"], p["omega"], p["S"])
    objs, w, f = _objectives(p, g.node_count, seed)
    record = p["record_mixing"] if (p["rule"] == "cwtm" and p["algorithm"] == "resist") else "none"
    byz = frozenset(parse_int_list(p["byzantine"]))
    cfg = RunConfig(g, p["b"], plan, p["rule"], p["J"], sched, p["T_max"], p["init_radius"], seed, record, 0, byz)
    if p["algorithm"] == "resist":
        cfg.validate()
    return BuiltRun(spec.name, seed, p["algorithm"], cfg, objs, w, f)


def execute(run: BuiltRun) -> tuple[MetricsLog, float]:
    """Run one (config, seed) pair; returns the log and the final ||W - 1 w*^T||_F."""
    if run.algorithm == "dgd":
        traj = run_dgd_multistep(run.config, run.objectives)
    else:
        traj = run_resist(run.config, run.objectives)
    mlog = metrics_from_trajectory(traj, run.objectives, run.wstar, run.fstar)
    honest = [j for j in range(traj.final_W.shape[0]) if j not in run.config.byzantine]
    dist = float(np.linalg.norm(traj.final_W[honest] - run.wstar[None, :]))
    return mlog, dist


def _execute_job(args):
    spec, seed = args
    run = build_run(spec, seed)
    mlog, dist = execute(run)
    return mlog.to_csv(), _terminal(mlog, dist)


def _terminal(mlog: MetricsLog, dist: float) -> dict:
    n = len(mlog)
    if n == 0:
        return {"xi6": np.nan, "xi1": np.nan, "fgap": np.nan, "dist": dist}
    tail = max(1, n // 5)
    return {
        "xi6": float(mlog.xi6[-1]),
        "xi1": float(mlog.xi1[-tail:].max(axis=1).mean()),
        "fgap": float(mlog.fgap[-1]),
        "dist": dist,
    }


def unique_path(directory: Path, stem: str, suffix: str = ".csv") -> Path:
    """``stem.csv`` unless taken, then ``stem_1.csv``, ``stem_2.csv`` and so on."""
    path = directory / f"{stem}{suffix}"
    k = 1
    while path.exists():
        path = directory / f"{stem}_{k}{suffix}"
        k += 1
    return path


def _write_new(path: Path, text: str) -> None:
    with open(path, "x", newline="") as fh:
        fh.write(text)


def summary_csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r[0], r[1], r[2]] + [repr(float(v)) for v in r[3:]])
    return buf.getvalue()


def run_suite(suite: SuiteSpec, out_dir: str | Path, parallel: int = 1) -> int:
    """Validate every run, execute all (run, seed) pairs and write CSVs.

    Returns 0 on success, 2 when a config fails validation, 3 on IO errors.
    """
    out = Path(out_dir)
    jobs = []
    try:
        for spec in suite.runs:
            for seed in suite.seeds:
                build_run(spec, seed)
                jobs.append((spec, seed))
    except VALIDATION_ERRORS as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read input: %s", exc)
        return EXIT_IO
    try:
        out.mkdir(parents=True, exist_ok=True)
        if parallel > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=parallel) as ex:
                results = list(ex.map(_execute_job, jobs))
        else:
            results = [_execute_job(j) for j in jobs]
        rows = []
        for spec in suite.runs:
            terms = []
            for (sp, seed), (text, term) in zip(jobs, results):
                if sp.name != spec.name:
                    continue
                path = unique_path(out, f"{spec.name}_seed{seed}")
                _write_new(path, text)
                log.info("wrote %s", path)
                terms.append(term)
            row = [spec.name, spec.params["algorithm"], len(terms)]
            for key in ("xi6", "xi1", "fgap", "dist"):
                vals = np.array([t[key] for t in terms], dtype=float)
                row += [vals.mean(), vals.std()] if len(vals) else [np.nan, np.nan]
            rows.append(row)
        _write_new(unique_path(out, f"{suite.name}_summary"), summary_csv(rows))
    except OSError as exc:
        log.error("IO failure: %s", exc)
        return EXIT_IO
    return EXIT_OK


def configure_logging() -> None:
    level = os.environ.get("RESIST_VERBOSITY", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")

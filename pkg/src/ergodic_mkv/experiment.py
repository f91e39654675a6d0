"""Experiment orchestration: replications, references, outputs and sweeps."""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import RateFit, fit_rate, gaussian_expectation, mse_report
from .config import ExperimentConfig, build_initial_law
from .dynamics import TrajectoryDump, simulate
from .errors import ConfigurationError, DivergenceError, InputOutputError
from .estimators import CSV_HEADER, EstimatorAccumulator, ExperimentResult, estimate
from .model import EmpiricalFile, Gaussian, PointMass
from .planner import theoretical_cost

SWEEP_AXES = ("N", "n", "t", "epsilon")


def replication_seed(seed: int, replication: int) -> int:
    """Seed of replication ``r``: the global seed itself for ``r = 0``, a hash otherwise."""
    if replication == 0:
        return int(seed)
    words = np.random.SeedSequence(int(seed), spawn_key=(int(replication),)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def _initial_gaussian(config: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    law = build_initial_law(config.model)
    if isinstance(law, PointMass):
        return law.x0, np.zeros((law.dimension, law.dimension))
    if isinstance(law, Gaussian):
        return law.mean, law.covariance
    assert isinstance(law, EmpiricalFile)
    raise ConfigurationError("no analytic reference for an empirical initial law")


def resolve_reference(config: ExperimentConfig) -> float | None:
    """Reference value of ``int f`` selected by ``[estimator] reference``.

    ``invariant`` is the invariant law; ``transient`` is the law at the final
    grid time. Both are Gaussian for the linear and zero models.
    """
    ref = config.estimator.reference
    if ref is None or ref.lower() == "none":
        return None
    if ref.lower() not in ("invariant", "transient"):
        return float(ref)
    m = config.model
    if m.name == "polynomial":
        raise ConfigurationError("the polynomial model has no analytic reference; give a number instead")
    mean0, cov0 = _initial_gaussian(config)
    if m.name == "zero":
        mean, cov = mean0, cov0
    else:
        v_inf = m.sigma**2 / (2 * m.alpha) * np.eye(m.d)
        if ref.lower() == "invariant":
            mean, cov = np.zeros(m.d), v_inf
        else:
            res = config.resolve()
            T = res.grid.steps * res.grid.h
            mean = mean0 * math.exp(-(m.alpha - m.beta) * T)
            cov = v_inf + (cov0 - v_inf) * math.exp(-2 * m.alpha * T)
    return gaussian_expectation(config.estimator.observable, mean, cov)


def run_replication(config: ExperimentConfig, replication: int, reference: float | None = None) -> tuple[ExperimentResult, str | None]:
    """One independent replication; returns the result row and an optional trajectory dump."""
    res = config.resolve()
    model = config.build_model()
    f = config.build_observable()
    seed = replication_seed(config.execution.seed, replication)
    acc = EstimatorAccumulator(f, config.dynamics.burn_in)
    sinks = [acc]
    buffer = None
    if config.execution.dump_trajectory:
        buffer = io.StringIO()
        sinks.append(TrajectoryDump(buffer, replication))
    start = time.perf_counter()
    try:
        cloud, ledger = simulate(
            model, res.grid, res.M, res.schedule, res.kind, sinks, seed, fast=config.dynamics.mode == "fast"
        )
    except DivergenceError as exc:
        raise DivergenceError(exc.step, exc.ensemble, exc.particle, seed) from exc
    value = estimate(config.algorithm, acc, cloud)
    wall = time.perf_counter() - start
    result = ExperimentResult(config.algorithm, res.t, res.n, res.N, res.M, res.schedule.kind, seed, value, ledger, wall, reference)
    dump = buffer.getvalue() if buffer is not None else None
    if dump is not None and replication > 0:
        dump = dump.split("\n", 1)[1]
    return result, dump


def _run_all(config: ExperimentConfig, workers: int, reference: float | None):
    R = config.execution.replications
    reps = range(R)
    if workers <= 1 or R == 1:
        return [run_replication(config, r, reference) for r in reps]
    with ProcessPoolExecutor(max_workers=min(workers, R)) as pool:
        return list(pool.map(run_replication, [config] * R, reps, [reference] * R))


def run_experiment(config: ExperimentConfig, workers: int | None = None, write: bool = False) -> list[ExperimentResult]:
    """Run every replication in replication order.

    Results do not depend on ``workers``: replication ``r`` always uses
    :func:`replication_seed`. With ``write`` the CSV, JSON summary and
    optional trajectories go to the configured output (CSV to stdout if none).
    """
    reference = resolve_reference(config)
    workers = config.execution.workers if workers is None else workers
    outcomes = _run_all(config, workers, reference)
    results = [r for r, _ in outcomes]
    if write:
        dumps = [d for _, d in outcomes if d is not None]
        write_outputs(config, results, dumps)
    return results


def csv_text(results: Sequence[ExperimentResult], timing: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in results:
        writer.writerow(r.row(timing))
    return buf.getvalue()


def summarize(config: ExperimentConfig, results: Sequence[ExperimentResult]) -> dict:
    est = np.array([r.estimate for r in results])
    res = config.resolve()
    summary = {
        "algorithm": config.algorithm,
        "replications": len(results),
        "t": res.t,
        "n": res.n,
        "N": res.N,
        "M": res.M,
        "schedule": res.schedule.kind,
        "seed": config.execution.seed,
        "mean": float(est.mean()),
        "std": float(est.std(ddof=1)) if est.size > 1 else 0.0,
        "kernel_evals": int(sum(r.ledger.kernel_evals for r in results)),
        "noise_draws": int(sum(r.ledger.noise_draws for r in results)),
        "predicted_cost": theoretical_cost(config.algorithm, res.t, res.n, res.N, res.M, res.schedule.kind),
    }
    reference = results[0].reference if results else None
    if reference is not None:
        report = mse_report(est, reference)
        summary.update(reference=reference, mse=report.mse, bias=report.bias)
    if res.plan is not None:
        summary["plan"] = res.plan.to_dict()
    if config.execution.timing:
        summary["wall_time_s"] = float(sum(r.wall_time for r in results))
    return summary


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise InputOutputError(f"cannot write {path}: {exc}") from exc


def write_outputs(config: ExperimentConfig, results: Sequence[ExperimentResult], dumps: Sequence[str] = (), extra: dict | None = None) -> None:
    summary = summarize(config, results)
    if extra:
        summary.update(extra)
    text = csv_text(results, config.execution.timing)
    js = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    out = config.execution.output
    if out is None:
        sys.stdout.write(text)
        sys.stderr.write(js)
        if dumps:
            sys.stderr.write("trajectory dump needs [execution] output; skipped\n")
        return
    path = Path(out)
    _write(path, text)
    _write(path.with_suffix(".json"), js)
    if dumps:
        _write(path.with_suffix(".traj.csv"), "".join(dumps))


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    axis: str
    values: list[float]
    results: list[list[ExperimentResult]]
    points: list[dict]
    fit: RateFit | None

    def summary(self) -> dict:
        return {"axis": self.axis, "points": self.points, "fit": None if self.fit is None else self.fit.to_dict()}


def _sweep_config(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "epsilon":
        if config.planner is None:
            raise ConfigurationError("sweeping epsilon needs a [planner] section")
        return config.with_values(**{"planner.epsilon": float(value)})
    if config.planner is not None:
        raise ConfigurationError(f"sweeping {axis} conflicts with the [planner] section")
    if axis in ("N", "n"):
        if float(value) != int(value):
            raise ConfigurationError(f"{axis} values must be integers, got {value}")
        return config.with_values(**{f"dynamics.{axis}": int(value)})
    return config.with_values(**{"dynamics.t": float(value)})


def run_sweep(
    config: ExperimentConfig, axis: str, values: Sequence[float], metric: str = "bias", workers: int | None = None
) -> SweepResult:
    """One experiment per axis value plus a fitted rate.

    For ``epsilon`` the fit is log predicted cost against log epsilon. For
    the other axes it is log error (``bias`` = |mean - reference| or ``mse``)
    against log N, log n, or t.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"axis must be one of {', '.join(SWEEP_AXES)}, got {axis!r}")
    if metric not in ("bias", "mse"):
        raise ConfigurationError(f"metric must be bias or mse, got {metric!r}")
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ConfigurationError(f"a sweep needs at least three values, got {len(values)}")
    if any(not v > 0 for v in values):
        raise ConfigurationError("sweep values must be positive")
    configs = [_sweep_config(config, axis, v) for v in values]
    all_results, points = [], []
    for value, cfg in zip(values, configs):
        results = run_experiment(cfg, workers=workers)
        summary = summarize(cfg, results)
        summary["value"] = value
        all_results.append(results)
        points.append(summary)
    if axis == "epsilon":
        fit = fit_rate([(math.log(p["value"]), p["predicted_cost"]) for p in points])
    elif all(metric in p for p in points):
        x = [p["value"] if axis == "t" else math.log(p["value"]) for p in points]
        fit = fit_rate(list(zip(x, [p[metric] for p in points])))
    else:
        fit = None
    return SweepResult(axis, values, all_results, points, fit)


def write_sweep(config: ExperimentConfig, sweep: SweepResult) -> None:
    rows = [r for group in sweep.results for r in group]
    text = csv_text(rows, config.execution.timing)
    js = json.dumps(sweep.summary(), indent=2, sort_keys=True) + "\n"
    out = config.execution.output
    if out is None:
        sys.stdout.write(text)
        sys.stderr.write(js)
        return
    path = Path(out)
    _write(path, text)
    _write(path.with_suffix(".json"), js)

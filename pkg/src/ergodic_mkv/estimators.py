"""Streaming estimators of ``int f dpi`` built from particle trajectories.

Time integrals use the left-endpoint rule on the Euler grid, which is exact
for the piecewise-constant interpolation ``s -> y_{kappa_n(s)}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import CostLedger, ParticleCloud, TimeGrid
from .errors import ConfigurationError, PreconditionError
from .model import Observable, symmetric_mean

EA = "EA"
MCA = "MCA"
AEA = "AEA"
C_AEA = "C_AEA"
ES_AEA = "ES_AEA"
CS_AEA = "CS_AEA"
ALGORITHMS = (EA, MCA, AEA, C_AEA, ES_AEA, CS_AEA)


def normalize_algorithm(name: str) -> str:
    key = name.strip().upper().replace("-", "_")
    if key not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return key


class EstimatorAccumulator:
    """Running time sums of ``f`` per particle and per ensemble.

    Grid times before ``burn_in`` are skipped. Particles only accumulate at
    times where they are active, and ``step_sums`` collects the mean over the
    active particles at each grid time (used by the self-interacting
    estimator, whose particle count may shrink).
    """

    def __init__(self, observable: Observable, burn_in: float = 0.0):
        if burn_in < 0:
            raise ConfigurationError(f"burn-in must be nonnegative, got {burn_in}")
        self.observable = observable
        self.burn_in = burn_in
        self.sums: np.ndarray | None = None
        self.counts: np.ndarray | None = None
        self.step_sums: np.ndarray | None = None
        self.steps = 0
        self.h: float | None = None
        self.final: np.ndarray | None = None
        self.final_active = 0

    def observe(self, cloud: ParticleCloud, grid: TimeGrid) -> None:
        if cloud.step / grid.n < self.burn_in - 1e-12:
            return
        values = self.observable(cloud.states)
        if self.sums is None:
            self.sums = np.zeros(values.shape)
            self.counts = np.zeros(values.shape, dtype=np.int64)
            self.step_sums = np.zeros(values.shape[0])
            self.h = grid.h
        na = cloud.active
        self.sums[:, :na] += values[:, :na]
        self.counts[:, :na] += 1
        self.step_sums += symmetric_mean(values[:, :na], axis=1)
        self.steps += 1

    def finish(self, cloud: ParticleCloud, grid: TimeGrid) -> None:
        self.final = self.observable(cloud.states)
        self.final_active = cloud.active
        if self.h is None:
            self.h = grid.h

    @property
    def time_sums(self) -> np.ndarray:
        """``sum_k f(y_{t_k}) / n`` per (ensemble, particle)."""
        self._require_steps()
        return self.sums * self.h

    @property
    def ensembles(self) -> int:
        self._require_steps()
        return self.sums.shape[0]

    def _require_steps(self):
        if self.steps == 0:
            raise PreconditionError("no time steps were ingested (horizon shorter than burn-in?)")

    def particle_averages(self, ensemble: int = 0) -> np.ndarray:
        self._require_steps()
        seen = self.counts[ensemble] > 0
        return self.sums[ensemble, seen] / self.counts[ensemble, seen]


def _accs(accs) -> list[EstimatorAccumulator]:
    return [accs] if isinstance(accs, EstimatorAccumulator) else list(accs)


def finalize_ea(acc: EstimatorAccumulator, ensemble: int = 0) -> float:
    """Time average along the first particle of one ensemble."""
    acc._require_steps()
    return float(acc.sums[ensemble, 0] / acc.counts[ensemble, 0])


def finalize_aea(acc: EstimatorAccumulator, ensemble: int = 0) -> float:
    """Mean over particles of their individual time averages."""
    return float(np.mean(acc.particle_averages(ensemble)))


def finalize_mca(cloud: ParticleCloud, f: Observable, ensemble: int = 0) -> float:
    """Space average of ``f`` over the active particles at the final time."""
    return float(np.mean(f(cloud.states[ensemble, : cloud.active])))


def finalize_c_aea(accs: EstimatorAccumulator | Sequence[EstimatorAccumulator]) -> float:
    values = [finalize_aea(a, e) for a in _accs(accs) for e in range(a.ensembles)]
    return float(np.mean(values))


def finalize_cs_aea(accs: EstimatorAccumulator | Sequence[EstimatorAccumulator]) -> float:
    """Ensemble mean of the time-averaged mean over active particles."""
    values = []
    for a in _accs(accs):
        a._require_steps()
        values.extend(a.step_sums / a.steps)
    return float(np.mean(values))


def estimate(algorithm: str, acc: EstimatorAccumulator, cloud: ParticleCloud) -> float:
    algorithm = normalize_algorithm(algorithm)
    if algorithm == EA:
        return finalize_ea(acc)
    if algorithm == MCA:
        return finalize_mca(cloud, acc.observable)
    if algorithm == AEA:
        return finalize_aea(acc)
    if algorithm == C_AEA:
        return finalize_c_aea(acc)
    return finalize_cs_aea(acc)


CSV_HEADER = (
    "algorithm",
    "t",
    "n",
    "N",
    "M",
    "schedule",
    "seed",
    "estimate",
    "reference",
    "abs_error",
    "kernel_evals",
    "noise_draws",
    "wall_time_s",
)


@dataclass
class ExperimentResult:
    algorithm: str
    t: float
    n: int
    N: int
    M: int
    schedule: str
    seed: int
    estimate: float
    ledger: CostLedger
    wall_time: float
    reference: float | None = None

    @property
    def error(self) -> float | None:
        if self.reference is None:
            return None
        return abs(self.estimate - self.reference)

    def row(self, timing: bool = False) -> list[str]:
        """CSV fields; wall time is left blank unless ``timing`` (keeps output reproducible)."""

        def opt(v):
            return "" if v is None else repr(float(v))

        return [
            self.algorithm,
            repr(float(self.t)),
            str(self.n),
            str(self.N),
            str(self.M),
            self.schedule,
            str(self.seed),
            repr(float(self.estimate)),
            opt(self.reference),
            opt(self.error),
            str(self.ledger.kernel_evals),
            str(self.ledger.noise_draws),
            f"{self.wall_time:.6f}" if timing else "",
        ]

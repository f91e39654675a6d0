"""Euler-Maruyama engines for interacting and self-interacting particle systems.

Two dynamics are supported on the grid ``t_k = k / n``:

``IPS``
    every particle interacts with the current empirical measure of its ensemble;
``SELF``
    every particle interacts with the time-averaged empirical measure of the
    whole past of its ensemble (a self-interacting diffusion when ``N = 1``).

Each run keeps an exact :class:`CostLedger`. In the naive (pairwise) mode one
IPS step of an ensemble with ``N`` particles costs ``N**2`` kernel evaluations
and step ``k`` (1-based) of the self-interacting scheme costs ``N_k**2 * k``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, PreconditionError
from .model import (
    ConstantKernel,
    FeatureAverage,
    InteractionKernel,
    ModelSpec,
    combine_features,
    draw_initial,
    evaluate,
    symmetric_mean,
)
from .rng import NOISE, RngStream

IPS = "ips"
SELF = "self"

_GRID_TOL = 1e-9


def kappa(s: float, n: int) -> float:
    """Left grid point ``floor(s n) / n`` of the grid with mesh ``1/n``."""
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    if s < 0:
        raise PreconditionError(f"s must be nonnegative, got {s}")
    return math.floor(s * n + _GRID_TOL) / n


def ceil_tol(x: float) -> int:
    """Ceiling that ignores floating noise just above an integer."""
    return math.ceil(x - _GRID_TOL * max(1.0, abs(x)))


@dataclass(frozen=True)
class TimeGrid:
    n: int
    t: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n must be a positive integer, got {self.n}")
        if not self.t > 0:
            raise ConfigurationError(f"horizon t must be positive, got {self.t}")

    @property
    def steps(self) -> int:
        return ceil_tol(self.t * self.n)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.steps + 1) / self.n

    def index_of(self, time: float) -> int:
        """Grid index ``k`` with ``t_k = kappa(time)``."""
        return math.floor(time * self.n + _GRID_TOL)


@dataclass(frozen=True)
class ParticleSchedule:
    """Number of active particles per step.

    ``count(k)`` gives the particles used by step ``k`` (1-based); ``count(0)``
    is the number of particles drawn from the initial law.
    """

    kind: str
    N: int
    n: int = 1
    N_max: int | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.N < 1:
            raise ConfigurationError(f"schedule needs N >= 1, got {self.N}")
        if self.kind == "harmonic" and self.N_max is None:
            object.__setattr__(self, "N_max", self.n * self.N)

    @classmethod
    def constant(cls, N: int) -> "ParticleSchedule":
        return cls("constant", int(N))

    @classmethod
    def harmonic(cls, N: int, n: int, N_max: int | None = None) -> "ParticleSchedule":
        return cls("harmonic", int(N), int(n), N_max)

    def count(self, k: int) -> int:
        if self.kind == "constant":
            return self.N
        if k == 0:
            return min(self.N_max, self.n * self.N)
        return min(self.N_max, max(1, math.floor(self.n * self.N / k + 0.5)))

    def __str__(self) -> str:
        if self.kind == "constant":
            return f"constant({self.N})"
        return f"harmonic({self.N};cap={self.N_max})"


@dataclass
class CostLedger:
    kernel_evals: int = 0
    noise_draws: int = 0
    steps: int = 0

    def merge(self, other: "CostLedger") -> "CostLedger":
        return CostLedger(
            self.kernel_evals + other.kernel_evals,
            self.noise_draws + other.noise_draws,
            self.steps + other.steps,
        )


@dataclass
class ParticleCloud:
    """States of ``M`` ensembles at one grid time.

    ``states`` has shape ``(M, N_alloc, d)``; only the first ``active``
    particles of every ensemble evolve and enter the empirical measure.
    ``history`` (self-interacting naive mode) is a preallocated buffer whose
    first ``step + 1`` entries are filled; it is shared between successive
    clouds of one run. ``feature_sums`` hold running sums of kernel features
    over the same history.
    """

    states: np.ndarray
    active: int
    step: int
    ensemble_ids: np.ndarray
    stream_ids: np.ndarray
    history: np.ndarray | None = None
    feature_sums: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[2]

    def active_states(self) -> np.ndarray:
        return self.states[:, : self.active]

    def history_length(self) -> int:
        return 0 if self.history is None else self.step + 1


class Sink(Protocol):
    def observe(self, cloud: ParticleCloud, grid: TimeGrid) -> None: ...

    def finish(self, cloud: ParticleCloud, grid: TimeGrid) -> None: ...


def _drift_kernel(model: ModelSpec, fast: bool) -> InteractionKernel:
    if not fast:
        return model.drift
    if model.fast_drift is not None:
        return model.fast_drift
    if isinstance(model.drift, (FeatureAverage, ConstantKernel)):
        return model.drift
    raise ConfigurationError(f"model {model.name} has no feature-average drift for the fast path")


def _noise(cloud: ParticleCloud, model: ModelSpec, grid: TimeGrid, rng: RngStream, ledger: CostLedger | None):
    na = cloud.active
    dw = rng.normals(NOISE, cloud.step, cloud.ensemble_ids[:, None], cloud.stream_ids[:, :na], model.k)
    if ledger is not None:
        ledger.noise_draws += cloud.M * na * model.k
    return dw * math.sqrt(grid.h)


def _apply(cloud: ParticleCloud, drift: np.ndarray, sigma: np.ndarray, dw: np.ndarray, grid: TimeGrid) -> np.ndarray:
    x = cloud.active_states()
    if sigma.ndim == 2:
        shock = dw @ sigma.T
    else:
        shock = np.einsum("mnij,mnj->mni", sigma, dw)
    new = x + drift * grid.h + shock
    bad = ~np.isfinite(new)
    if bad.any():
        e, p, _ = np.argwhere(bad)[0]
        raise DivergenceError(cloud.step + 1, int(cloud.ensemble_ids[e]), int(cloud.stream_ids[e, p]))
    return new


def _diffusion_value(model: ModelSpec, x: np.ndarray, atoms: np.ndarray, ledger) -> np.ndarray:
    if isinstance(model.diffusion, ConstantKernel):
        return model.diffusion.value
    return evaluate(model.diffusion, x, atoms, ledger)


def euler_step_ips(
    cloud: ParticleCloud,
    model: ModelSpec,
    grid: TimeGrid,
    rng: RngStream,
    ledger: CostLedger | None = None,
    fast: bool = False,
    law_features: Callable[[int], np.ndarray] | None = None,
) -> ParticleCloud:
    """One Euler step of every ensemble against its own empirical measure.

    With ``law_features`` the empirical feature average is replaced by the
    feature average of the true law at the current step, which simulates
    independent copies of the limiting (McKean-Vlasov) Euler scheme.
    """
    if cloud.step >= grid.steps:
        raise PreconditionError(f"grid has only {grid.steps} steps")
    x = cloud.active_states()
    if law_features is not None:
        kernel = _drift_kernel(model, fast=True)
        if not isinstance(kernel, FeatureAverage):
            raise ConfigurationError("law_features needs a feature-average drift")
        feat = np.atleast_1d(np.asarray(law_features(cloud.step), dtype=float))
        hbar = np.broadcast_to(feat, (cloud.M,) + feat.shape)
        drift = combine_features(kernel, x, hbar)
        if ledger is not None:
            ledger.kernel_evals += cloud.M * cloud.active
    else:
        drift = evaluate(_drift_kernel(model, fast), x, x, ledger)
    sigma = _diffusion_value(model, x, x, ledger)
    new = _apply(cloud, drift, sigma, _noise(cloud, model, grid, rng, ledger), grid)
    states = cloud.states.copy()
    states[:, : cloud.active] = new
    if ledger is not None:
        ledger.steps += 1
    return replace(cloud, states=states, step=cloud.step + 1)


def _history_atoms(cloud: ParticleCloud, count: int, na: int) -> np.ndarray:
    hist = cloud.history[:count, :, :na]  # (count, M, na, d)
    return np.ascontiguousarray(hist.transpose(1, 0, 2, 3)).reshape(cloud.M, count * na, cloud.d)


def _self_coefficient(kernel, key, cloud, x, count, na, ledger, use_sums):
    if isinstance(kernel, ConstantKernel):
        return kernel.value
    if use_sums and isinstance(kernel, FeatureAverage) and key in cloud.feature_sums:
        hbar = symmetric_mean(cloud.feature_sums[key][:, :na], axis=1) / count
        if ledger is not None:
            ledger.kernel_evals += cloud.M * na
        return combine_features(kernel, x, hbar)
    if cloud.history is None:
        raise PreconditionError("self-interacting step needs a history buffer or running feature sums")
    return evaluate(kernel, x, _history_atoms(cloud, count, na), ledger)


def euler_step_self(
    cloud: ParticleCloud,
    model: ModelSpec,
    grid: TimeGrid,
    schedule: ParticleSchedule,
    rng: RngStream,
    ledger: CostLedger | None = None,
    fast: bool = False,
) -> ParticleCloud:
    """One Euler step of the self-interacting particle system.

    Step ``k = cloud.step + 1`` averages the kernel over the ``k`` stored
    states ``r_0 .. r_{k-1}`` of the ``N_k`` active particles, so the history
    average at the first step is taken against the initial state alone.
    Particles beyond ``N_k`` are frozen and leave the measure.
    """
    if cloud.step >= grid.steps:
        raise PreconditionError(f"grid has only {grid.steps} steps")
    k = cloud.step + 1
    na = schedule.count(k)
    if na > cloud.active:
        raise ConfigurationError(f"schedule requests {na} particles at step {k} but only {cloud.active} are active")
    cloud = replace(cloud, active=na)
    x = cloud.active_states()
    drift_kernel = _drift_kernel(model, fast)
    drift = _self_coefficient(drift_kernel, "drift", cloud, x, k, na, ledger, use_sums=fast)
    sigma = _self_coefficient(model.diffusion, "diffusion", cloud, x, k, na, ledger, use_sums=fast)
    new = _apply(cloud, drift, sigma, _noise(cloud, model, grid, rng, ledger), grid)
    states = cloud.states.copy()
    states[:, :na] = new
    if cloud.history is not None:
        cloud.history[k] = states
    sums = dict(cloud.feature_sums)
    for key, kernel in (("drift", drift_kernel), ("diffusion", model.diffusion)):
        if key in sums:
            sums[key] = sums[key].copy()
            sums[key][:, :na] += kernel.feature(new)
            if ledger is not None:
                ledger.kernel_evals += cloud.M * na
    if ledger is not None:
        ledger.steps += 1
    return replace(cloud, states=states, step=k, feature_sums=sums)


def initial_cloud(
    model: ModelSpec,
    grid: TimeGrid,
    M: int,
    schedule: ParticleSchedule,
    kind: str,
    rng: RngStream,
    fast: bool = False,
    keep_history: bool = False,
    ensemble_ids: Sequence[int] | None = None,
    stream_ids: np.ndarray | None = None,
    ledger: CostLedger | None = None,
) -> ParticleCloud:
    if M < 1:
        raise ConfigurationError(f"need at least one ensemble, got M={M}")
    n0 = schedule.count(0)
    ens = np.arange(M, dtype=np.uint64) if ensemble_ids is None else np.asarray(ensemble_ids, dtype=np.uint64)
    if ens.shape != (M,):
        raise ConfigurationError(f"ensemble_ids must have length {M}")
    if stream_ids is None:
        streams = np.broadcast_to(np.arange(n0, dtype=np.uint64), (M, n0)).copy()
    else:
        streams = np.asarray(stream_ids, dtype=np.uint64)
        if streams.shape != (M, n0):
            raise ConfigurationError(f"stream_ids must have shape {(M, n0)}")
    states = draw_initial(model.initial_law, rng, ens[:, None], streams)
    cloud = ParticleCloud(states, n0, 0, ens, streams)
    if kind == SELF:
        if not fast or keep_history:
            cloud.history = np.empty((grid.steps + 1,) + states.shape)
            cloud.history[0] = states
        if fast:
            for key, kernel in (("drift", _drift_kernel(model, True)), ("diffusion", model.diffusion)):
                if isinstance(kernel, FeatureAverage):
                    cloud.feature_sums[key] = np.array(kernel.feature(states), dtype=float)
                    if ledger is not None:
                        ledger.kernel_evals += M * n0
    return cloud


def simulate(
    model: ModelSpec,
    grid: TimeGrid,
    M: int,
    schedule: ParticleSchedule,
    kind: str = IPS,
    sinks: Iterable[Sink] = (),
    seed: int = 0,
    replication: int = 0,
    fast: bool = False,
    keep_history: bool = False,
    law_features: Callable[[int], np.ndarray] | None = None,
    ensemble_ids: Sequence[int] | None = None,
    stream_ids: np.ndarray | None = None,
) -> tuple[ParticleCloud, CostLedger]:
    """Run ``grid.steps`` Euler steps and feed ``sinks`` at every grid time.

    Sinks see the cloud at times ``t_0 .. t_{K-1}`` through ``observe`` (with
    the active count of the step about to be taken) and the final cloud
    through ``finish``. The result is a pure function of the arguments.
    """
    if kind not in (IPS, SELF):
        raise ConfigurationError(f"unknown dynamics kind {kind!r}")
    if kind == IPS and schedule.kind != "constant":
        raise ConfigurationError("interacting particle systems need a constant schedule")
    if law_features is not None and kind != IPS:
        raise ConfigurationError("law_features is only available for IPS dynamics")
    sinks = list(sinks)
    rng = RngStream(seed, replication)
    ledger = CostLedger()
    cloud = initial_cloud(model, grid, M, schedule, kind, rng, fast, keep_history, ensemble_ids, stream_ids, ledger)
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite states are caught by the divergence guard
        cloud = _run_steps(cloud, model, grid, schedule, kind, sinks, rng, ledger, fast, law_features)
    for sink in sinks:
        sink.finish(cloud, grid)
    return cloud, ledger


def _run_steps(cloud, model, grid, schedule, kind, sinks, rng, ledger, fast, law_features):
    for k in range(grid.steps):
        na = schedule.count(k + 1)
        if na > cloud.active:
            raise ConfigurationError(f"schedule requests {na} particles at step {k + 1} but only {cloud.active} are active")
        cloud = replace(cloud, active=na)
        for sink in sinks:
            sink.observe(cloud, grid)
        if kind == IPS:
            cloud = euler_step_ips(cloud, model, grid, rng, ledger, fast, law_features)
        else:
            cloud = euler_step_self(cloud, model, grid, schedule, rng, ledger, fast)
    return cloud


# ---------------------------------------------------------------------------
# sinks


class TrajectoryRecorder:
    """Keeps a copy of every grid-time state in memory (tests, small runs)."""

    def __init__(self):
        self.states: list[np.ndarray] = []
        self.active: list[int] = []

    def observe(self, cloud, grid):
        self.states.append(cloud.states.copy())
        self.active.append(cloud.active)

    def finish(self, cloud, grid):
        self.observe(cloud, grid)

    def array(self) -> np.ndarray:
        return np.stack(self.states)


class SnapshotSink:
    """Copies of the states at selected grid indices."""

    def __init__(self, indices: Iterable[int]):
        self.indices = set(int(i) for i in indices)
        self.snapshots: dict[int, np.ndarray] = {}

    def observe(self, cloud, grid):
        if cloud.step in self.indices:
            self.snapshots[cloud.step] = cloud.active_states().copy()

    def finish(self, cloud, grid):
        self.observe(cloud, grid)


class TrajectoryDump:
    """Streams ``step,ensemble,particle,x0..`` rows of active particles as CSV."""

    def __init__(self, stream, replication: int | None = None):
        self.writer = csv.writer(stream, lineterminator="\n")
        self.replication = replication
        self._header = False

    def _rows(self, cloud):
        if not self._header:
            head = ["step", "ensemble", "particle"] + [f"x{j}" for j in range(cloud.d)]
            if self.replication is not None:
                head.insert(0, "replication")
            self.writer.writerow(head)
            self._header = True
        for e in range(cloud.M):
            for p in range(cloud.active):
                row = [cloud.step, int(cloud.ensemble_ids[e]), int(cloud.stream_ids[e, p])]
                row += [repr(float(v)) for v in cloud.states[e, p]]
                if self.replication is not None:
                    row.insert(0, self.replication)
                self.writer.writerow(row)

    def observe(self, cloud, grid):
        self._rows(cloud)

    def finish(self, cloud, grid):
        self._rows(cloud)


def fast_path_check(
    model: ModelSpec,
    grid: TimeGrid,
    seed: int,
    M: int = 2,
    N: int = 8,
    kind: str = IPS,
    schedule: ParticleSchedule | None = None,
) -> float:
    """Largest absolute state difference between the naive and fast paths."""
    schedule = schedule or ParticleSchedule.constant(N)
    runs = []
    for fast in (False, True):
        rec = TrajectoryRecorder()
        simulate(model, grid, M, schedule, kind, [rec], seed, fast=fast)
        runs.append(rec.array())
    return float(np.max(np.abs(runs[0] - runs[1])))


def expected_kernel_evals(kind: str, grid: TimeGrid, M: int, schedule: ParticleSchedule) -> int:
    """Kernel evaluations of a naive pairwise run with constant diffusion."""
    K = grid.steps
    if kind == IPS:
        return M * K * schedule.N**2
    return M * sum(schedule.count(k) ** 2 * k for k in range(1, K + 1))

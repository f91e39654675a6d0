"""Analytic references for the linear model, 1-d Wasserstein distance,
mse reports and convergence-rate fits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import IPS, ParticleSchedule, SnapshotSink, TimeGrid, simulate
from .errors import ConfigurationError, PreconditionError
from .model import ModelSpec, Observable, squared_norm
from .rng import REFERENCE, RngStream

# ---------------------------------------------------------------------------
# linear model references


def _check_ergodic(alpha: float, beta: float) -> None:
    if not alpha > 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    if not alpha > beta:
        raise ConfigurationError(f"need alpha > beta for ergodicity (alpha={alpha}, beta={beta})")


def linear_mean(alpha: float, beta: float, m0: float, t: float) -> float:
    """Mean of the linear model, ``m0 exp(-(alpha - beta) t)``."""
    _check_ergodic(alpha, beta)
    return m0 * math.exp(-(alpha - beta) * t)


def linear_variance(alpha: float, v0: float, t: float, sigma: float = 1.0) -> float:
    """Variance of each coordinate, solving ``v' = -2 alpha v + sigma^2``."""
    if not alpha > 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    v_inf = sigma**2 / (2 * alpha)
    return v_inf + (v0 - v_inf) * math.exp(-2 * alpha * t)


def invariant_moment(alpha: float, beta: float, order: int, sigma: float = 1.0) -> float:
    """First or second moment of the invariant law ``N(0, sigma^2 / (2 alpha))``."""
    _check_ergodic(alpha, beta)
    if order == 1:
        return 0.0
    if order == 2:
        return sigma**2 / (2 * alpha)
    raise ConfigurationError(f"order must be 1 or 2, got {order}")


def linear_euler_moments(
    alpha: float, beta: float, m0: float, v0: float, h: float, steps: int, sigma: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and variance of the Euler scheme of the limit equation.

    Returns arrays of length ``steps + 1`` (grid times ``0 .. steps``).
    """
    m = np.empty(steps + 1)
    v = np.empty(steps + 1)
    m[0], v[0] = m0, v0
    for k in range(steps):
        m[k + 1] = m[k] * (1 - h * (alpha - beta))
        v[k + 1] = (1 - alpha * h) ** 2 * v[k] + h * sigma**2
    return m, v


def ergodic_mean_bias(alpha: float, beta: float, m0: float, t: float) -> float:
    """``|m(t) - (1/t) int_0^t m(s) ds|`` for the linear model, in closed form."""
    _check_ergodic(alpha, beta)
    if not t > 0:
        raise ConfigurationError("t must be positive")
    lam = alpha - beta
    return abs(m0 * math.exp(-lam * t) - m0 * (1 - math.exp(-lam * t)) / (lam * t))


def gaussian_expectation(observable: str, mean, cov) -> float:
    """``E f(X)`` for ``X ~ N(mean, cov)`` and an observable written as in configs.

    Supports ``x``, ``x^2``/``squared_norm``, ``coordinate:j`` and ``poly:c0,c1,...``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    s = observable.strip().lower().replace(" ", "")
    if s in ("x", "identity"):
        return float(mean[0])
    if s.startswith("coordinate:"):
        return float(mean[int(s.split(":", 1)[1])])
    if s in ("x^2", "x2", "squared_norm"):
        return float(mean @ mean + np.trace(cov))
    if s.startswith("poly:"):
        coeffs = [float(c) for c in s.split(":", 1)[1].split(",")]
        mu, var = float(mean[0]), float(cov[0, 0])
        total = 0.0
        for j, c in enumerate(coeffs):
            # E (mu + Z)^j with Z ~ N(0, var)
            total += c * sum(math.comb(j, i) * mu ** (j - i) * _central(i, var) for i in range(j + 1))
        return total
    raise ConfigurationError(f"no closed-form expectation for observable {observable!r}")


def _central(order: int, var: float) -> float:
    if order % 2:
        return 0.0
    return var ** (order // 2) * math.prod(range(order - 1, 0, -2))


# ---------------------------------------------------------------------------
# Wasserstein distance


def w2_1d(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """Wasserstein-2 distance between two empirical measures on the line.

    Equal sizes use the monotone (sorted) coupling. Unequal sizes integrate
    the squared difference of the two quantile functions exactly, which is
    the same distance between the uniform empirical measures.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise PreconditionError("w2_1d needs non-empty samples")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise PreconditionError("w2_1d needs finite samples")
    if a.size == b.size:
        return float(math.sqrt(np.mean((a - b) ** 2)))
    cuts = np.union1d(np.arange(a.size + 1) / a.size, np.arange(b.size + 1) / b.size)
    widths = np.diff(cuts)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    qa = a[np.minimum((mids * a.size).astype(np.int64), a.size - 1)]
    qb = b[np.minimum((mids * b.size).astype(np.int64), b.size - 1)]
    return float(math.sqrt(np.sum(widths * (qa - qb) ** 2)))


# ---------------------------------------------------------------------------
# mse and rates


@dataclass(frozen=True)
class MseReport:
    R: int
    estimates: tuple[float, ...]
    reference: float
    mse: float
    std: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))

    @property
    def bias(self) -> float:
        return abs(self.mean - self.reference)

    def to_dict(self) -> dict:
        return {"R": self.R, "mean": self.mean, "std": self.std, "mse": self.mse, "bias": self.bias, "reference": self.reference}


def mse_report(estimates: Sequence[float], reference: float) -> MseReport:
    """Root-mean-square deviation from ``reference`` plus the sample std."""
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise PreconditionError("no estimates")
    mse = float(math.sqrt(np.mean((est - reference) ** 2)))
    std = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
    return MseReport(int(est.size), tuple(float(v) for v in est), float(reference), mse, std)


def estimate_mse(config, reference: float | None = None, R: int | None = None, workers: int | None = None) -> MseReport:
    """Run ``R`` seeded replications of ``config`` and compare with ``reference``.

    ``reference`` defaults to the one the configuration resolves to.
    """
    from .experiment import resolve_reference, run_experiment

    if R is not None:
        config = config.with_values(**{"execution.replications": R})
    if config.execution.replications < 2:
        raise PreconditionError("estimate_mse needs at least two replications")
    if reference is None:
        reference = resolve_reference(config)
        if reference is None:
            raise ConfigurationError("no reference value given or configured")
    results = run_experiment(config, workers=workers)
    return mse_report([r.estimate for r in results], reference)


@dataclass(frozen=True)
class RateFit:
    x: tuple[float, ...]
    log_error: tuple[float, ...]
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "x": list(self.x), "log_error": list(self.log_error)}


def fit_rate(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(x, log error)``.

    ``x`` is used as given, so callers pass ``log N`` for power laws and
    ``t`` for exponential decay.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise PreconditionError("fit_rate needs at least three (x, error) points")
    x, err = pts[:, 0], pts[:, 1]
    if not np.all(np.isfinite(pts)):
        raise PreconditionError("fit_rate needs finite points")
    if np.any(err <= 0):
        raise PreconditionError("fit_rate needs positive errors")
    if np.ptp(x) == 0:
        raise PreconditionError("fit_rate needs distinct abscissae")
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-300:
        slope, r2 = 0.0, 1.0
    else:
        r2 = float(min(1.0, max(0.0, 1.0 - np.sum(resid**2) / ss_tot)))
    return RateFit(tuple(x.tolist()), tuple(y.tolist()), float(slope), float(intercept), r2)


# ---------------------------------------------------------------------------
# experiments on the linear model


def _linear_params(model: ModelSpec) -> tuple[float, float, float]:
    if model.name != "linear":
        raise ConfigurationError("this experiment needs the linear model")
    p = model.params
    return p["alpha"], p["beta"], p["sigma"]


def _initial_moments(model: ModelSpec) -> tuple[float, float]:
    law = model.initial_law
    if hasattr(law, "x0"):
        return float(np.asarray(law.x0)[0]), 0.0
    if hasattr(law, "covariance"):
        return float(np.asarray(law.mean)[0]), float(np.asarray(law.covariance)[0, 0])
    raise ConfigurationError("initial law has no closed-form moments")


@dataclass(frozen=True)
class ChaosPoint:
    N: int
    strong_error: float
    weak_bias: float
    weak_stderr: float
    direct_bias: float


def chaos_error(
    model: ModelSpec,
    grid: TimeGrid,
    N_list: Sequence[int],
    R: int,
    seed: int = 0,
    observable: Observable | None = None,
    ref_factor: int = 8,
) -> list[ChaosPoint]:
    """Strong and weak particle-approximation errors at the final grid time.

    Ensembles play the role of replications. The strong error is the rms
    distance to a system of ``ref_factor * max(N_list)`` particles whose
    first ``N`` particles share initial draws and Brownian increments.

    The weak bias of ``f`` (default ``|x|^2``) is estimated as the mean of
    ``f(x_i^N) - f(y_i)``, where ``y_i`` are copies of the Euler scheme of the
    limit equation driven by the same noise. Their law is known exactly, so
    this difference isolates the particle bias from the time discretisation
    and cancels most Monte Carlo noise. ``direct_bias`` compares the particle
    average with the exact continuous-time moment instead.
    """
    alpha, beta, sigma = _linear_params(model)
    f = observable or squared_norm()
    m0, v0 = _initial_moments(model)
    N_list = sorted(int(N) for N in N_list)
    if not N_list or N_list[0] < 1 or R < 1:
        raise ConfigurationError("need positive particle counts and replications")
    means, _ = linear_euler_moments(alpha, beta, m0, v0, grid.h, grid.steps, sigma)

    def law_features(step):
        return np.full(model.d, means[step])

    N_ref = ref_factor * N_list[-1]
    ref, _ = simulate(model, grid, R, ParticleSchedule.constant(N_ref), IPS, seed=seed, fast=True)
    T = grid.steps * grid.h
    exact = model.d * (linear_mean(alpha, beta, m0, T) ** 2 + linear_variance(alpha, v0, T, sigma))
    out = []
    for N in N_list:
        sched = ParticleSchedule.constant(N)
        cloud, _ = simulate(model, grid, R, sched, IPS, seed=seed, fast=True)
        limit, _ = simulate(model, grid, R, sched, IPS, seed=seed, fast=True, law_features=law_features)
        diff = cloud.states - ref.states[:, :N]
        strong = float(math.sqrt(np.mean(np.sum(diff**2, axis=-1))))
        per_ensemble = np.mean(f(cloud.states) - f(limit.states), axis=1)
        weak = float(np.mean(per_ensemble))
        stderr = float(np.std(per_ensemble, ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
        direct = float(np.mean(f(cloud.states)) - exact)
        out.append(ChaosPoint(N, strong, weak, stderr, direct))
    return out


def invariant_samples(model: ModelSpec, size: int, seed: int = 0) -> np.ndarray:
    """Draws from the invariant Gaussian of the linear model (first coordinate)."""
    alpha, beta, sigma = _linear_params(model)
    z = RngStream(seed).normals(REFERENCE, 0, np.zeros((1, 1), dtype=np.uint64), np.arange(size, dtype=np.uint64)[None, :])
    return z[0, :, 0] * math.sqrt(invariant_moment(alpha, beta, 2, sigma))


def w2_decay(
    model: ModelSpec,
    times: Sequence[float],
    N: int,
    M: int,
    n: int,
    seed: int = 0,
    reference_size: int = 10_000,
) -> list[tuple[float, float]]:
    """``(t, W2)`` between pooled particle samples at time ``t`` and the invariant law."""
    times = sorted(float(t) for t in times)
    grid = TimeGrid(n, times[-1])
    indices = [grid.index_of(t) for t in times]
    snap = SnapshotSink(indices)
    simulate(model, grid, M, ParticleSchedule.constant(N), IPS, [snap], seed, fast=model.fast_drift is not None)
    target = invariant_samples(model, reference_size, seed)
    return [(t, w2_1d(snap.snapshots[i][..., 0].ravel(), target)) for t, i in zip(times, indices)]

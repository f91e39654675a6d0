"""McKean-Vlasov model coefficients, initial laws and observables.

A drift or diffusion coefficient depends on the current law only through an
empirical measure, which is realised in one of two ways:

* :class:`PairwiseKernel` -- ``b(x, mu) = mean_{y ~ mu} b(x, y)``, O(m) per point;
* :class:`FeatureAverage` -- ``b(x, mu) = B(x, mean_{y ~ mu} h(y))``, where the
  feature average is shared by every point evaluated against the same measure.

All averages over atoms are taken after sorting the summands, which makes them
invariant (bit for bit) under permutations of the atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, InputOutputError, NumericError, PreconditionError
from .rng import INITIAL, RngStream

ArrayFn = Callable[..., np.ndarray]


def symmetric_mean(values: np.ndarray, axis: int) -> np.ndarray:
    """Mean along ``axis`` that does not depend on the order of the entries."""
    count = values.shape[axis]
    return np.sort(values, axis=axis).sum(axis=axis) / count


@dataclass(frozen=True)
class PairwiseKernel:
    """``fn(x, y)`` broadcasts over leading axes of ``x`` and ``y`` (both ``(..., d)``)."""

    fn: ArrayFn
    shape: tuple[int, ...]
    name: str = "pairwise"


@dataclass(frozen=True)
class FeatureAverage:
    """``feature: (..., d) -> (..., p)`` and ``combine(x, hbar) -> (..., *shape)``."""

    feature: ArrayFn
    combine: ArrayFn
    shape: tuple[int, ...]
    name: str = "feature"


@dataclass(frozen=True)
class ConstantKernel:
    """Coefficient that ignores both the point and the measure."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


InteractionKernel = Union[PairwiseKernel, FeatureAverage, ConstantKernel]


class CostCounter:
    """Minimal protocol used by :func:`evaluate`; see ``dynamics.CostLedger``."""

    kernel_evals: int = 0


def evaluate(kernel: InteractionKernel, points: np.ndarray, atoms: np.ndarray, ledger=None) -> np.ndarray:
    """Evaluate ``kernel`` at ``points`` (B, N, d) against measures ``atoms`` (B, m, d).

    Returns an array of shape ``(B, N, *kernel.shape)``. Pairwise kernels cost
    ``B*N*m`` evaluations; feature averages cost ``B*(m + N)`` (features plus
    combiner calls); constants are free.
    """
    B, N = points.shape[:2]
    if isinstance(kernel, ConstantKernel):
        return np.broadcast_to(kernel.value, (B, N) + kernel.shape)
    m = atoms.shape[1]
    if m == 0:
        raise PreconditionError("empirical measure has no atoms")
    if isinstance(kernel, PairwiseKernel):
        values = kernel.fn(points[:, :, None, :], atoms[:, None, :, :])
        values = np.broadcast_to(values, (B, N, m) + kernel.shape)
        if ledger is not None:
            ledger.kernel_evals += B * N * m
        return symmetric_mean(values, axis=2)
    if isinstance(kernel, FeatureAverage):
        hbar = symmetric_mean(kernel.feature(atoms), axis=1)
        if ledger is not None:
            ledger.kernel_evals += B * (m + N)
        return combine_features(kernel, points, hbar)
    raise ConfigurationError(f"unsupported kernel type {type(kernel).__name__}")


def combine_features(kernel: FeatureAverage, points: np.ndarray, hbar: np.ndarray) -> np.ndarray:
    """Apply the combiner with one feature average per leading batch entry."""
    B, N = points.shape[:2]
    out = kernel.combine(points, hbar[:, None, :])
    return np.broadcast_to(out, (B, N) + kernel.shape)


def eval_drift(kernel: InteractionKernel, x, measure, ledger=None) -> np.ndarray:
    """Drift at a single point ``x`` (d,) against the empirical measure ``measure`` (m, d)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    atoms = np.asarray(measure, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms.reshape(-1, x.shape[0]) if x.shape[0] > 1 else atoms[:, None]
    if atoms.shape[0] == 0:
        raise PreconditionError("empirical measure has no atoms")
    if atoms.shape[1] != x.shape[0]:
        raise ConfigurationError(f"dimension mismatch: point has d={x.shape[0]}, measure has d={atoms.shape[1]}")
    return np.array(evaluate(kernel, x[None, None, :], atoms[None], ledger)[0, 0])


# ---------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class PointMass:
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))

    @property
    def dimension(self) -> int:
        return self.x0.shape[0]


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ConfigurationError(f"covariance shape {cov.shape} does not match mean of length {mean.shape[0]}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ConfigurationError("covariance must be symmetric")
        w, v = np.linalg.eigh(cov)
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ConfigurationError("covariance must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_factor", v * np.sqrt(np.clip(w, 0.0, None)))

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class EmpiricalFile:
    """Uniform draws (with replacement) from the rows of a whitespace-separated text file."""

    path: str
    atoms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        try:
            atoms = np.loadtxt(self.path, ndmin=2, dtype=float)
        except (OSError, ValueError) as exc:
            raise InputOutputError(f"cannot read initial samples from {self.path}: {exc}") from exc
        if atoms.shape[0] == 0:
            raise InputOutputError(f"{self.path} holds no samples")
        object.__setattr__(self, "atoms", atoms)

    @property
    def dimension(self) -> int:
        return self.atoms.shape[1]


InitialLaw = Union[PointMass, Gaussian, EmpiricalFile]


def draw_initial(law: InitialLaw, rng: RngStream, ensembles: np.ndarray, particles: np.ndarray) -> np.ndarray:
    """Initial states for broadcast ``(ensembles, particles)`` ids; trailing axis is d.

    Each particle draws from its own substream, so adding particles never changes
    the initial states of existing ones.
    """
    shape = np.broadcast_shapes(np.shape(ensembles), np.shape(particles))
    if isinstance(law, PointMass):
        return np.broadcast_to(law.x0, shape + law.x0.shape).copy()
    if isinstance(law, Gaussian):
        z = rng.normals(INITIAL, 0, ensembles, particles, law.dimension)
        return law.mean + z @ law._factor.T
    if isinstance(law, EmpiricalFile):
        u = rng.uniforms(INITIAL, 0, ensembles, particles)[..., 0]
        idx = np.minimum((u * law.atoms.shape[0]).astype(np.int64), law.atoms.shape[0] - 1)
        return law.atoms[idx]
    raise ConfigurationError(f"unsupported initial law {type(law).__name__}")


def sample_initial(law: InitialLaw, count: int, rng: RngStream, ensemble: int = 0) -> np.ndarray:
    """``count`` i.i.d. draws of shape ``(count, d)`` for one ensemble."""
    if count < 1:
        raise PreconditionError(f"count must be >= 1, got {count}")
    return draw_initial(law, rng, np.uint64(ensemble), np.arange(count, dtype=np.uint64))


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    """Scalar observable; ``fn`` maps ``(..., d)`` to ``(...)``."""

    name: str
    fn: ArrayFn

    def __call__(self, states: np.ndarray) -> np.ndarray:
        return self.fn(states)


def coordinate(j: int) -> Observable:
    return Observable(f"coordinate({j})", lambda x: x[..., j])


def squared_norm() -> Observable:
    return Observable("squared_norm", lambda x: np.sum(x * x, axis=-1))


def polynomial(coefficients: Sequence[float]) -> Observable:
    """``c0 + c1 x + c2 x^2 + ...`` in the first coordinate."""
    coeffs = tuple(float(c) for c in coefficients)
    if not coeffs:
        raise ConfigurationError("polynomial observable needs at least one coefficient")

    def fn(x):
        x0 = x[..., 0]
        acc = np.full(x0.shape, coeffs[-1])
        for c in reversed(coeffs[:-1]):
            acc = acc * x0 + c
        return acc

    return Observable("poly(" + ",".join(repr(c) for c in coeffs) + ")", fn)


def linear_combination(terms: Sequence[tuple[float, Observable]]) -> Observable:
    name = " + ".join(f"{a!r}*{f.name}" for a, f in terms)
    return Observable(name, lambda x: sum(a * f(x) for a, f in terms))


def eval_observable(f: Observable, x, dimension: int | None = None) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if dimension is not None and x.shape[-1] != dimension:
        raise ConfigurationError(f"observable expects d={dimension}, got point of length {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite input to observable {f.name}: {x}")
    return float(f(x))


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class StructuralSplit:
    """Drift written as a confining part ``V(x)`` plus an interaction kernel ``W``."""

    confining: ArrayFn
    interaction: InteractionKernel


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of a McKean-Vlasov SDE together with its initial law.

    ``fast_drift`` is an optional feature-average realisation of ``drift``
    used by the O(N) simulation path; it must agree with ``drift`` on every
    empirical measure.
    """

    d: int
    k: int
    drift: InteractionKernel
    diffusion: InteractionKernel
    initial_law: InitialLaw
    fast_drift: FeatureAverage | None = None
    structural_split: StructuralSplit | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise ConfigurationError(f"need d >= 1 and k >= 1, got d={self.d}, k={self.k}")
        if tuple(self.drift.shape) != (self.d,):
            raise ConfigurationError(f"drift must map to R^{self.d}, kernel shape is {self.drift.shape}")
        if self.fast_drift is not None and tuple(self.fast_drift.shape) != (self.d,):
            raise ConfigurationError("fast_drift shape must equal drift shape")
        if tuple(self.diffusion.shape) != (self.d, self.k):
            raise ConfigurationError(f"diffusion must map to {self.d}x{self.k} matrices, got {self.diffusion.shape}")
        if self.initial_law.dimension != self.d:
            raise ConfigurationError(f"initial law has dimension {self.initial_law.dimension}, model has d={self.d}")

    def split_drift(self, points: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        """Evaluate ``V + W`` from the structural split (B, N, d)."""
        if self.structural_split is None:
            raise ConfigurationError(f"model {self.name} declares no structural split")
        split = self.structural_split
        return split.confining(points) + evaluate(split.interaction, points, atoms)


def _as_law(initial, d: int) -> InitialLaw:
    if isinstance(initial, (PointMass, Gaussian, EmpiricalFile)):
        return initial
    return PointMass(np.broadcast_to(np.asarray(initial, dtype=float), (d,)))


def linear_model(alpha: float, beta: float, initial=1.0, d: int = 1, sigma: float = 1.0) -> ModelSpec:
    """``dx = (-alpha x + beta E[x]) dt + sigma dw``, ergodic when ``alpha > beta``.

    The drift is stored as the pairwise kernel ``b(x, y) = -alpha x + beta y``
    with the equivalent feature average ``h(y) = y`` as fast path.
    """
    if not alpha > 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    if not alpha > beta:
        raise ConfigurationError(f"linear model is ergodic only for alpha > beta (got alpha={alpha}, beta={beta})")
    a, b = float(alpha), float(beta)
    return ModelSpec(
        d=d,
        k=d,
        drift=PairwiseKernel(lambda x, y: -a * x + b * y, (d,), "linear"),
        diffusion=ConstantKernel(sigma * np.eye(d)),
        initial_law=_as_law(initial, d),
        fast_drift=FeatureAverage(lambda y: y, lambda x, h: -a * x + b * h, (d,), "linear-mean"),
        structural_split=StructuralSplit(
            lambda x: -a * x, PairwiseKernel(lambda x, y: np.broadcast_to(b * y, np.broadcast_shapes(x.shape, y.shape)), (d,))
        ),
        name="linear",
        params={"alpha": a, "beta": b, "sigma": float(sigma)},
    )


def zero_model(d: int = 1, initial=0.0) -> ModelSpec:
    """``b = 0`` and ``sigma = 0``: every particle stays at its initial state."""

    def zero_pair(x, y):
        return np.zeros(np.broadcast_shapes(x.shape, y.shape))

    return ModelSpec(
        d=d,
        k=d,
        drift=PairwiseKernel(zero_pair, (d,), "zero"),
        diffusion=ConstantKernel(np.zeros((d, d))),
        initial_law=_as_law(initial, d),
        fast_drift=FeatureAverage(lambda y: y, lambda x, h: np.zeros(np.broadcast_shapes(x.shape, h.shape)), (d,), "zero"),
        structural_split=StructuralSplit(lambda x: np.zeros_like(x), PairwiseKernel(zero_pair, (d,))),
        name="zero",
    )


def polynomial_model(confinement: Sequence[float], kappa: float, initial=0.0, sigma: float = 1.0) -> ModelSpec:
    """Scalar model ``b(x, y) = -p(x) - kappa (x - y)`` with ``p(x) = sum_j c_j x^j``.

    ``p`` is the confining force (e.g. ``[0, -1, 0, 1]`` for the double well
    ``x^3 - x``) and ``kappa`` the strength of the quadratic attraction to the
    other particles.
    """
    coeffs = tuple(float(c) for c in confinement)
    kap = float(kappa)
    if not coeffs:
        raise ConfigurationError("confinement polynomial needs at least one coefficient")

    def force(x):
        acc = np.full(x.shape, coeffs[-1])
        for c in reversed(coeffs[:-1]):
            acc = acc * x + c
        return -acc

    return ModelSpec(
        d=1,
        k=1,
        drift=PairwiseKernel(lambda x, y: force(x) - kap * (x - y), (1,), "polynomial"),
        diffusion=ConstantKernel(np.array([[sigma]])),
        initial_law=_as_law(initial, 1),
        fast_drift=FeatureAverage(lambda y: y, lambda x, h: force(x) - kap * (x - h), (1,), "polynomial-mean"),
        structural_split=StructuralSplit(force, PairwiseKernel(lambda x, y: -kap * (x - y), (1,))),
        name="polynomial",
        params={"confinement": coeffs, "kappa": kap, "sigma": float(sigma)},
    )


def gaussian_moment(order: int, variance: float) -> float:
    """``E[Z^order]`` for ``Z ~ N(0, variance)``."""
    if order % 2:
        return 0.0
    return variance ** (order // 2) * math.prod(range(order - 1, 0, -2))

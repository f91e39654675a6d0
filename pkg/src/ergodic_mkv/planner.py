"""Tolerance-driven parameter allocation and cost formulas.

Every "of order" allocation uses the implied constant ``cost_constant``
(default 1) and integer parameters are rounded up.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

from scipy.special import digamma

from .dynamics import IPS, SELF, CostLedger, ParticleSchedule, TimeGrid, ceil_tol, expected_kernel_evals
from .errors import ConfigurationError
from .estimators import AEA, C_AEA, CS_AEA, EA, ES_AEA, MCA, normalize_algorithm

HARMONIC = "harmonic"
CONSTANT = "constant"


@dataclass(frozen=True)
class PlannerInput:
    algorithm: str
    epsilon: float
    lam: float = 1.0
    cost_constant: float = 1.0
    variant: str = HARMONIC  # ES_AEA only: harmonic N_t = N/t, or constant N_t = 1

    def __post_init__(self):
        object.__setattr__(self, "algorithm", normalize_algorithm(self.algorithm))
        if not 0 < self.epsilon < 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if not self.cost_constant > 0:
            raise ConfigurationError(f"cost constant must be positive, got {self.cost_constant}")
        if self.variant not in (HARMONIC, CONSTANT):
            raise ConfigurationError(f"unknown ES_AEA variant {self.variant!r}")


@dataclass(frozen=True)
class ParameterPlan:
    algorithm: str
    t: float
    n: int
    N: int
    M: int
    schedule: str
    predicted_cost: float
    epsilon: float | None = None
    lam: float | None = None

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.n, self.t)

    @property
    def dynamics(self) -> str:
        return SELF if self.algorithm in (ES_AEA, CS_AEA) else IPS

    def particle_schedule(self) -> ParticleSchedule:
        if self.schedule == HARMONIC:
            return ParticleSchedule.harmonic(self.N, self.n)
        return ParticleSchedule.constant(self.N)

    def to_dict(self) -> dict:
        return asdict(self)


def plan(inp: PlannerInput | str, epsilon: float | None = None, lam: float = 1.0, **kw) -> ParameterPlan:
    """Closed-form allocation ``(t, n, N, M)`` for a target tolerance.

    The factor ``log(1/eps)`` is replaced by ``max(log(1/eps), 1)``; this only
    changes plans with ``eps > 1/e``, where the small-tolerance formulas would
    otherwise ask for fewer ensembles as the tolerance tightens.

    Accepts a :class:`PlannerInput` or the same fields as arguments.
    """
    if not isinstance(inp, PlannerInput):
        inp = PlannerInput(inp, epsilon, lam, **kw)
    eps, lam, c = inp.epsilon, inp.lam, inp.cost_constant
    # log factor floored at 1 so allocations stay monotone for eps > 1/e
    log_inv = max(math.log(1.0 / eps), 1.0)
    n = ceil_tol(c / eps)
    M = 1
    schedule = CONSTANT
    alg = inp.algorithm
    if alg == EA:
        t, N = c / eps**2, ceil_tol(c / eps)
    elif alg == MCA:
        t, N = c * log_inv / lam, ceil_tol(c / eps**2)
    elif alg == AEA:
        t, N = c / eps, ceil_tol(c / eps)
    elif alg == C_AEA:
        t, N = c * log_inv / lam, ceil_tol(c / eps)
        M = ceil_tol(1.0 / (t * eps))
    elif alg == ES_AEA and inp.variant == HARMONIC:
        t, N = c * log_inv / lam, ceil_tol(c / (eps**2 * log_inv))
        schedule = HARMONIC
    elif alg == ES_AEA:
        t, N = c / eps**2, 1
    else:  # CS_AEA
        t, N = c * log_inv / lam, 1
        M = ceil_tol(math.exp(2 * lam * t) / t)
    cost = theoretical_cost(alg, t, n, N, M, schedule)
    return ParameterPlan(alg, t, n, N, M, schedule, cost, eps, lam)


def harmonic_number(x: float) -> float:
    """``sum_{k=1}^{x} 1/k``, extended to real ``x`` through the digamma function."""
    if abs(x - round(x)) < 1e-9:
        return float(sum((Fraction(1, k) for k in range(1, round(x) + 1)), Fraction(0)))
    return float(digamma(x + 1.0) + 0.5772156649015329)


def simulation_cost(kind: str, t: float, n: int, N: int, M: int = 1, schedule: str = CONSTANT) -> float:
    """Kernel evaluations needed to simulate the particles (no estimator cost)."""
    if min(t, n, N, M) <= 0:
        raise ConfigurationError("cost parameters must be positive")
    tn = t * n
    if kind == IPS:
        return t * n * N**2 * M
    if schedule == HARMONIC:
        if abs(tn - round(tn)) < 1e-9 and float(n * N).is_integer():
            return float(M * (n * N) ** 2 * sum((Fraction(1, k) for k in range(1, round(tn) + 1)), Fraction(0)))
        return M * (n * N) ** 2 * harmonic_number(tn)
    return M * N**2 * 0.5 * tn * (1.0 + tn)


def theoretical_cost(algorithm: str, t: float, n: int, N: int, M: int = 1, schedule: str = CONSTANT) -> float:
    """Cost formula of each algorithm (exact harmonic sum, not its log approximation)."""
    alg = normalize_algorithm(algorithm)
    if alg in (EA, MCA):
        return simulation_cost(IPS, t, n, N, M)
    if alg in (AEA, C_AEA):
        return simulation_cost(IPS, t, n, N, M) + t * N * M
    return simulation_cost(SELF, t, n, N, M, schedule)


def asymptotic_cost_order(algorithm: str, epsilon: float, lam: float = 1.0) -> float:
    """Leading-order cost as a function of the tolerance."""
    alg = normalize_algorithm(algorithm)
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    log_inv = math.log(1.0 / epsilon)
    return {
        EA: epsilon**-5,
        MCA: log_inv / lam * epsilon**-5,
        AEA: epsilon**-4,
        C_AEA: epsilon**-4,
        ES_AEA: epsilon**-6,
        CS_AEA: log_inv / lam * epsilon**-4,
    }[alg]


@dataclass(frozen=True)
class ConsistencyReport:
    observed: int
    expected: int
    theoretical: float
    match: bool
    ratio: float


def consistency_check(
    plan: ParameterPlan, ledger: CostLedger, kind: str | None = None, schedule: ParticleSchedule | None = None
) -> ConsistencyReport:
    """Compare a run's kernel count with the naive count and the cost formula.

    ``expected`` is the exact naive-mode count on the discrete grid (``ceil(tn)``
    steps, rounded schedule); ``ratio`` is observed over the formula value.
    """
    kind = kind or plan.dynamics
    schedule = schedule or plan.particle_schedule()
    expected = expected_kernel_evals(kind, plan.grid, plan.M, schedule)
    theory = simulation_cost(kind, plan.t, plan.n, plan.N, plan.M, plan.schedule)
    return ConsistencyReport(ledger.kernel_evals, expected, theory, ledger.kernel_evals == expected, ledger.kernel_evals / theory)

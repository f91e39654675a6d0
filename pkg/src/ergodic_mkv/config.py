"""Experiment configuration: a sectioned, case-sensitive INI file.

Example::

    [model]
    name = linear
    alpha = 1.0
    beta = 0.5
    initial = point
    x0 = 1.0

    [dynamics]
    kind = ips
    t = 3
    n = 50
    N = 64

    [estimator]
    algorithm = MCA
    observable = x^2
    reference = invariant

    [execution]
    seed = 7
    replications = 20

A ``[planner]`` section (``epsilon``, ``lambda``) replaces explicit ``t``,
``n``, ``N`` and ``M``.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import IPS, SELF, ParticleSchedule, TimeGrid
from .errors import ConfigurationError, InputOutputError
from .estimators import CS_AEA, ES_AEA, normalize_algorithm
from .model import (
    EmpiricalFile,
    Gaussian,
    ModelSpec,
    Observable,
    PointMass,
    coordinate,
    linear_model,
    polynomial,
    polynomial_model,
    squared_norm,
    zero_model,
)
from .planner import CONSTANT, HARMONIC, ParameterPlan, PlannerInput, plan

WORKERS_ENV = "MKV_WORKERS"
MODEL_NAMES = ("linear", "zero", "polynomial")


class ConfigValidationError(ConfigurationError):
    """All problems found in one configuration."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class ModelConfig:
    name: str = "linear"
    alpha: float = 1.0
    beta: float = 0.5
    d: int = 1
    sigma: float = 1.0
    confinement: tuple[float, ...] = ()
    kappa: float = 0.0
    initial: str = "point"
    x0: tuple[float, ...] = (1.0,)
    mean: tuple[float, ...] = (0.0,)
    covariance: tuple[float, ...] = (1.0,)
    path: str | None = None


@dataclass(frozen=True)
class DynamicsConfig:
    kind: str | None = None
    t: float | None = None
    n: int | None = None
    N: int | None = None
    M: int | None = None
    schedule: str = CONSTANT
    N_max: int | None = None
    burn_in: float = 0.0
    mode: str = "naive"


@dataclass(frozen=True)
class EstimatorConfig:
    algorithm: str = "MCA"
    observable: str = "x"
    reference: str | None = None


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExecutionConfig:
    seed: int = 0
    replications: int = 1
    workers: int = field(default_factory=default_workers)
    output: str | None = None
    dump_trajectory: bool = False
    timing: bool = False


@dataclass(frozen=True)
class PlannerConfig:
    epsilon: float
    lam: float = 1.0
    cost_constant: float = 1.0
    variant: str = HARMONIC


@dataclass(frozen=True)
class Resolved:
    t: float
    n: int
    N: int
    M: int
    kind: str
    schedule: ParticleSchedule
    plan: ParameterPlan | None

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.n, self.t)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = ModelConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    estimator: EstimatorConfig = EstimatorConfig()
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    planner: PlannerConfig | None = None

    @property
    def algorithm(self) -> str:
        return normalize_algorithm(self.estimator.algorithm)

    def resolve(self) -> Resolved:
        dyn = self.dynamics
        if self.planner is not None:
            p = plan(
                PlannerInput(self.algorithm, self.planner.epsilon, self.planner.lam, self.planner.cost_constant, self.planner.variant)
            )
            return Resolved(p.t, p.n, p.N, p.M, p.dynamics, p.particle_schedule(), p)
        kind = dyn.kind or (SELF if self.algorithm in (ES_AEA, CS_AEA) else IPS)
        if dyn.schedule == HARMONIC:
            schedule = ParticleSchedule.harmonic(dyn.N, dyn.n, dyn.N_max)
        else:
            schedule = ParticleSchedule.constant(dyn.N)
        return Resolved(float(dyn.t), int(dyn.n), int(dyn.N), int(dyn.M or 1), kind, schedule, None)

    def build_model(self) -> ModelSpec:
        m = self.model
        law = build_initial_law(m)
        if m.name == "linear":
            return linear_model(m.alpha, m.beta, law, d=m.d, sigma=m.sigma)
        if m.name == "zero":
            return zero_model(m.d, law)
        return polynomial_model(m.confinement, m.kappa, law, sigma=m.sigma)

    def build_observable(self) -> Observable:
        return parse_observable(self.estimator.observable)

    def with_values(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-section overrides, e.g. ``{"dynamics.N": 8}``."""
        cfg = self
        for dotted, value in changes.items():
            section, key = dotted.split(".")
            current = getattr(cfg, section)
            cfg = replace(cfg, **{section: replace(current, **{key: value})})
        return cfg


def build_initial_law(m: ModelConfig):
    d = m.d
    if m.initial == "point":
        x0 = np.broadcast_to(np.asarray(m.x0, dtype=float), (d,)) if len(m.x0) in (1, d) else None
        if x0 is None:
            raise ConfigurationError(f"x0 must have 1 or {d} entries")
        return PointMass(x0)
    if m.initial == "gaussian":
        mean = np.broadcast_to(np.asarray(m.mean, dtype=float), (d,))
        cov = np.asarray(m.covariance, dtype=float)
        if cov.size == 1:
            cov = float(cov.ravel()[0]) * np.eye(d)
        elif cov.size == d:
            cov = np.diag(cov)
        elif cov.size == d * d:
            cov = cov.reshape(d, d)
        else:
            raise ConfigurationError(f"covariance needs 1, {d} or {d * d} entries")
        return Gaussian(mean, cov)
    if m.path is None:
        raise ConfigurationError("initial = file needs a path")
    return EmpiricalFile(m.path)


def parse_observable(spec: str) -> Observable:
    s = spec.strip().lower().replace(" ", "")
    if s in ("x", "identity"):
        return coordinate(0)
    if s in ("x^2", "x2", "squared_norm"):
        return squared_norm()
    if s.startswith("coordinate:"):
        return coordinate(int(s.split(":", 1)[1]))
    if s.startswith("poly:"):
        return polynomial([float(c) for c in s.split(":", 1)[1].split(",")])
    raise ConfigurationError(f"unknown observable {spec!r} (use x, x^2, squared_norm, coordinate:j or poly:c0,c1,...)")


# ---------------------------------------------------------------------------
# parsing

_SECTIONS = {
    "model": {"name", "alpha", "beta", "d", "sigma", "confinement", "kappa", "initial", "x0", "mean", "covariance", "variance", "path"},
    "dynamics": {"kind", "t", "n", "N", "M", "schedule", "N_max", "burn_in", "mode"},
    "estimator": {"algorithm", "observable", "reference"},
    "execution": {"seed", "replications", "workers", "output", "dump_trajectory", "timing"},
    "planner": {"epsilon", "lambda", "cost_constant", "variant"},
}


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, problems: list[str]):
        self.parser, self.problems = parser, problems

    def get(self, section, key, conv, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.problems.append(f"[{section}] {key} = {raw!r}: {exc}")
            return default


def _int(raw: str) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError("expected an integer")
    return int(value)


def _floats(raw: str) -> tuple[float, ...]:
    return tuple(float(v) for v in raw.replace(",", " ").split())


def _bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _finite(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("expected a finite number")
    return value


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigValidationError([f"malformed configuration: {exc}"]) from exc
    problems: list[str] = []
    for section in parser.sections():
        if section not in _SECTIONS:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                problems.append(f"[{section}] unknown field {key!r}")
    r = _Reader(parser, problems)

    path = r.get("model", "path", str)
    if path is not None and base_dir is not None and not Path(path).is_absolute():
        path = str(base_dir / path)
    covariance = r.get("model", "covariance", _floats) or r.get("model", "variance", _floats) or (1.0,)
    model = ModelConfig(
        name=r.get("model", "name", str.lower, "linear"),
        alpha=r.get("model", "alpha", _finite, 1.0),
        beta=r.get("model", "beta", _finite, 0.5),
        d=r.get("model", "d", _int, 1),
        sigma=r.get("model", "sigma", _finite, 1.0),
        confinement=r.get("model", "confinement", _floats, ()),
        kappa=r.get("model", "kappa", _finite, 0.0),
        initial=r.get("model", "initial", str.lower, "point"),
        x0=r.get("model", "x0", _floats, (1.0,)),
        mean=r.get("model", "mean", _floats, (0.0,)),
        covariance=covariance,
        path=path,
    )
    dynamics = DynamicsConfig(
        kind=r.get("dynamics", "kind", str.lower),
        t=r.get("dynamics", "t", _finite),
        n=r.get("dynamics", "n", _int),
        N=r.get("dynamics", "N", _int),
        M=r.get("dynamics", "M", _int),
        schedule=r.get("dynamics", "schedule", str.lower, CONSTANT),
        N_max=r.get("dynamics", "N_max", _int),
        burn_in=r.get("dynamics", "burn_in", _finite, 0.0),
        mode=r.get("dynamics", "mode", str.lower, "naive"),
    )
    estimator = EstimatorConfig(
        algorithm=r.get("estimator", "algorithm", str, "MCA"),
        observable=r.get("estimator", "observable", str, "x"),
        reference=r.get("estimator", "reference", str),
    )
    execution = ExecutionConfig(
        seed=r.get("execution", "seed", _int, 0),
        replications=r.get("execution", "replications", _int, 1),
        workers=r.get("execution", "workers", _int, default_workers()),
        output=r.get("execution", "output", str),
        dump_trajectory=r.get("execution", "dump_trajectory", _bool, False),
        timing=r.get("execution", "timing", _bool, False),
    )
    planner = None
    if parser.has_section("planner"):
        eps = r.get("planner", "epsilon", _finite)
        if eps is None:
            problems.append("[planner] epsilon is required")
        else:
            planner = PlannerConfig(
                epsilon=eps,
                lam=r.get("planner", "lambda", _finite, 1.0),
                cost_constant=r.get("planner", "cost_constant", _finite, 1.0),
                variant=r.get("planner", "variant", str.lower, HARMONIC),
            )
    cfg = ExperimentConfig(model, dynamics, estimator, execution, planner)
    problems.extend(validate(cfg, explicit={k for k in ("t", "n", "N", "M") if parser.has_option("dynamics", k)}))
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    """Read and validate a configuration file, reporting every problem at once."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputOutputError(f"cannot read configuration {p}: {exc}") from exc
    return parse_config_text(text, base_dir=p.parent)


def validate(cfg: ExperimentConfig, explicit: set[str] | None = None) -> list[str]:
    """List of human-readable problems; empty when the configuration is usable."""
    problems: list[str] = []
    m, dyn, est, ex = cfg.model, cfg.dynamics, cfg.estimator, cfg.execution
    if explicit is None:
        explicit = {k for k in ("t", "n", "N", "M") if getattr(dyn, k) is not None}

    if m.name not in MODEL_NAMES:
        problems.append(f"[model] name must be one of {', '.join(MODEL_NAMES)}, got {m.name!r}")
    if not 1 <= m.d <= 3:
        problems.append(f"[model] d must be 1, 2 or 3, got {m.d}")
    if m.name == "linear":
        if not m.alpha > 0:
            problems.append(f"[model] alpha must be positive, got {m.alpha}")
        if not m.alpha > m.beta:
            problems.append(f"[model] ergodicity requires alpha > beta (alpha={m.alpha}, beta={m.beta})")
    if m.name == "polynomial":
        if m.d != 1:
            problems.append("[model] the polynomial model is scalar (d = 1)")
        if not m.confinement:
            problems.append("[model] polynomial model needs confinement coefficients")
    if m.initial not in ("point", "gaussian", "file"):
        problems.append(f"[model] initial must be point, gaussian or file, got {m.initial!r}")
    else:
        try:
            build_initial_law(m)
        except (ConfigurationError, InputOutputError) as exc:
            problems.append(f"[model] {exc}")

    try:
        alg = normalize_algorithm(est.algorithm)
    except ConfigurationError as exc:
        problems.append(f"[estimator] {exc}")
        alg = None
    try:
        parse_observable(est.observable)
    except (ConfigurationError, ValueError) as exc:
        problems.append(f"[estimator] {exc}")
    if est.reference is not None and est.reference.lower() not in ("none", "invariant", "transient"):
        try:
            float(est.reference)
        except ValueError:
            problems.append(f"[estimator] reference must be none, invariant, transient or a number, got {est.reference!r}")

    if dyn.kind is not None and dyn.kind not in (IPS, SELF):
        problems.append(f"[dynamics] kind must be ips or self, got {dyn.kind!r}")
    if dyn.mode not in ("naive", "fast"):
        problems.append(f"[dynamics] mode must be naive or fast, got {dyn.mode!r}")
    if dyn.schedule not in (CONSTANT, HARMONIC):
        problems.append(f"[dynamics] schedule must be constant or harmonic, got {dyn.schedule!r}")
    if dyn.burn_in < 0:
        problems.append("[dynamics] burn_in must be nonnegative")
    wants_self = alg in (ES_AEA, CS_AEA)
    if alg is not None and dyn.kind is not None and (dyn.kind == SELF) != wants_self:
        problems.append(f"[dynamics] kind = {dyn.kind} is incompatible with algorithm {alg}")

    if cfg.planner is not None:
        clash = sorted(explicit)
        if clash:
            problems.append(
                "conflicting sections: [planner] epsilon determines t, n, N, M but [dynamics] also sets "
                + ", ".join(clash)
            )
        pl = cfg.planner
        if not 0 < pl.epsilon < 1:
            problems.append(f"[planner] epsilon must lie in (0, 1), got {pl.epsilon}")
        if not pl.lam > 0:
            problems.append(f"[planner] lambda must be positive, got {pl.lam}")
        if not pl.cost_constant > 0:
            problems.append("[planner] cost_constant must be positive")
        if pl.variant not in (CONSTANT, HARMONIC):
            problems.append(f"[planner] variant must be constant or harmonic, got {pl.variant!r}")
    else:
        for key in ("t", "n", "N"):
            if getattr(dyn, key) is None:
                problems.append(f"[dynamics] {key} is required (or give a [planner] section)")
        if dyn.t is not None and not dyn.t > 0:
            problems.append(f"[dynamics] t must be positive, got {dyn.t}")
        for key in ("n", "N", "M"):
            value = getattr(dyn, key)
            if value is not None and value < 1:
                problems.append(f"[dynamics] {key} must be >= 1, got {value}")
        if dyn.schedule == HARMONIC and (dyn.kind == IPS or (dyn.kind is None and not wants_self)):
            problems.append("[dynamics] the harmonic schedule needs self-interacting dynamics")

    if not 0 <= ex.seed < 2**64:
        problems.append(f"[execution] seed must be a 64-bit unsigned integer, got {ex.seed}")
    if ex.replications < 1:
        problems.append(f"[execution] replications must be >= 1, got {ex.replications}")
    if ex.workers < 1:
        problems.append(f"[execution] workers must be >= 1, got {ex.workers}")
    return problems

from __future__ import annotations

import pytest

from ergodic_mkv.config import ConfigValidationError, parse_config, parse_config_text, parse_observable
from ergodic_mkv.errors import ConfigurationError, InputOutputError
from ergodic_mkv.model import Gaussian

MINIMAL = """
[model]
name = linear
alpha = 1
beta = 0.5

[dynamics]
t = 2
n = 10
N = 8
"""


def test_minimal_defaults():
    cfg = parse_config_text(MINIMAL)
    res = cfg.resolve()
    assert (res.M, res.kind, res.schedule.kind) == (1, "ips", "constant")
    assert cfg.dynamics.burn_in == 0 and cfg.execution.replications == 1 and cfg.algorithm == "MCA"
    assert cfg.build_model().name == "linear"


def test_case_sensitive_fields():
    cfg = parse_config_text(MINIMAL)
    assert cfg.dynamics.N == 8 and cfg.dynamics.n == 10


def test_planner_and_explicit_conflict():
    with pytest.raises(ConfigValidationError) as info:
        parse_config_text(MINIMAL + "\n[planner]\nepsilon = 0.1\n")
    msg = str(info.value)
    assert "epsilon" in msg and "N" in msg


def test_ergodicity_error():
    with pytest.raises(ConfigValidationError) as info:
        parse_config_text(MINIMAL.replace("alpha = 1", "alpha = 0.5").replace("beta = 0.5", "beta = 1"))
    assert "alpha > beta" in str(info.value)


def test_all_errors_reported():
    text = """
[model]
name = linear
alpha = 0.5
beta = 1
bogus = 3

[dynamics]
n = 0
N = x

[estimator]
algorithm = NOPE
observable = cos
"""
    with pytest.raises(ConfigValidationError) as info:
        parse_config_text(text)
    problems = info.value.problems
    assert len(problems) >= 5
    joined = "\n".join(problems)
    for needle in ("bogus", "alpha > beta", "[dynamics] t is required", "n must be >= 1", "NOPE", "cos"):
        assert needle in joined


def test_planner_section():
    cfg = parse_config_text("[model]\nname = linear\n[estimator]\nalgorithm = C_AEA\n[planner]\nepsilon = 0.1\nlambda = 1\n")
    res = cfg.resolve()
    assert (res.n, res.N, res.M) == (10, 10, 5) and res.plan is not None


def test_self_interacting_resolution():
    cfg = parse_config_text(
        "[model]\nname = linear\n[dynamics]\nt = 1\nn = 4\nN = 2\nschedule = harmonic\n[estimator]\nalgorithm = ES_AEA\n"
    )
    res = cfg.resolve()
    assert res.kind == "self" and res.schedule.kind == "harmonic"


def test_kind_algorithm_mismatch():
    with pytest.raises(ConfigValidationError, match="incompatible"):
        parse_config_text(MINIMAL + "kind = self\n[estimator]\nalgorithm = MCA\n")


def test_gaussian_initial_and_file(tmp_path):
    cfg = parse_config_text(MINIMAL.replace("beta = 0.5", "beta = 0.5\ninitial = gaussian\nmean = 1\nvariance = 0.25"))
    law = cfg.build_model().initial_law
    assert isinstance(law, Gaussian) and law.covariance[0, 0] == 0.25
    (tmp_path / "atoms.txt").write_text("1\n2\n")
    path = tmp_path / "exp.ini"
    path.write_text(MINIMAL.replace("beta = 0.5", "beta = 0.5\ninitial = file\npath = atoms.txt"))
    assert parse_config(path).build_model().initial_law.atoms.shape == (2, 1)


def test_missing_file(tmp_path):
    with pytest.raises(InputOutputError):
        parse_config(tmp_path / "nope.ini")


def test_bad_reference_and_seed():
    with pytest.raises(ConfigValidationError) as info:
        parse_config_text(MINIMAL + "[estimator]\nreference = maybe\n[execution]\nseed = -1\n")
    assert len(info.value.problems) == 2


def test_observable_syntax():
    assert parse_observable("x").name == "coordinate(0)"
    assert parse_observable("x^2").name == "squared_norm"
    assert parse_observable("coordinate:1").name == "coordinate(1)"
    assert parse_observable("poly:1,2").name.startswith("poly")
    with pytest.raises(ConfigurationError):
        parse_observable("tan")


def test_malformed_text():
    with pytest.raises(ConfigValidationError):
        parse_config_text("not an ini file")

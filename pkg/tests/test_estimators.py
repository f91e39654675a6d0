from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergodic_mkv.dynamics import IPS, SELF, CostLedger, ParticleCloud, ParticleSchedule, TimeGrid, TrajectoryRecorder, simulate
from ergodic_mkv.errors import ConfigurationError, PreconditionError
from ergodic_mkv.estimators import (
    CSV_HEADER,
    EstimatorAccumulator,
    ExperimentResult,
    estimate,
    finalize_aea,
    finalize_c_aea,
    finalize_cs_aea,
    finalize_ea,
    finalize_mca,
    normalize_algorithm,
)
from ergodic_mkv.model import Gaussian, Observable, coordinate, linear_combination, linear_model, squared_norm, zero_model


def feed(values, n=1, burn_in=0.0):
    """Accumulator fed with one particle taking ``values`` at successive grid times."""
    acc = EstimatorAccumulator(coordinate(0), burn_in)
    grid = TimeGrid(n, len(values) / n)
    ids = np.zeros(1, dtype=np.uint64)
    for k, v in enumerate(values):
        cloud = ParticleCloud(np.full((1, 1, 1), float(v)), 1, k, ids, ids[:, None])
        acc.observe(cloud, grid)
    return acc


def cloud_of(values):
    v = np.asarray(values, dtype=float)
    return ParticleCloud(v[None, :, None], v.size, 0, np.zeros(1, np.uint64), np.arange(v.size, dtype=np.uint64)[None])


def test_ea_examples():
    assert finalize_ea(feed([1, 2, 3])) == pytest.approx(2.0)
    assert finalize_ea(feed([1, 2, 3, 4], burn_in=2.0)) == pytest.approx(3.5)
    assert finalize_ea(feed([5, 5, 5, 5], n=4)) == 5


def test_mca_examples():
    assert finalize_mca(cloud_of([3, 3, 3]), coordinate(0)) == 3
    assert finalize_mca(cloud_of([0, 2]), coordinate(0)) == 1
    assert finalize_mca(cloud_of([1, 2, 3]), squared_norm()) == pytest.approx(14 / 3)


def test_aea_and_ensemble_examples():
    acc = EstimatorAccumulator(coordinate(0))
    grid = TimeGrid(1, 2.0)
    ids = np.arange(2, dtype=np.uint64)
    for k, vals in enumerate(([0.0, 2.0], [2.0, 4.0])):
        acc.observe(ParticleCloud(np.array(vals)[None, :, None], 2, k, ids[:1], ids[None]), grid)
    assert finalize_aea(acc) == pytest.approx(2.0)  # time-averages 1 and 3
    ens = EstimatorAccumulator(coordinate(0))
    for k in range(2):
        ens.observe(ParticleCloud(np.array([[[1.0]], [[2.0]], [[6.0]]]), 1, k, ids[:1].repeat(3), ids[:1].repeat(3)[:, None]), grid)
    assert finalize_c_aea(ens) == pytest.approx(3.0)
    assert finalize_cs_aea(ens) == pytest.approx(3.0)
    assert finalize_c_aea([feed([0, 0]), feed([4, 4])]) == pytest.approx(2.0)
    assert finalize_cs_aea([feed([1]), feed([3])]) == pytest.approx(2.0)


def test_single_particle_reductions():
    model = linear_model(1, 0.5, 1.0)
    grid = TimeGrid(5, 2.0)
    acc = EstimatorAccumulator(squared_norm())
    simulate(model, grid, 1, ParticleSchedule.constant(1), IPS, [acc], seed=3)
    assert finalize_aea(acc) == finalize_ea(acc) == finalize_c_aea(acc)
    acc = EstimatorAccumulator(squared_norm())
    simulate(model, grid, 1, ParticleSchedule.constant(1), SELF, [acc], seed=3)
    assert finalize_cs_aea(acc) == pytest.approx(finalize_ea(acc), abs=1e-15)


def test_constant_particles_collapse():
    acc = EstimatorAccumulator(coordinate(0))
    grid = TimeGrid(1, 3.0)
    ids = np.arange(2, dtype=np.uint64)
    for k in range(3):
        acc.observe(ParticleCloud(np.array([[[1.0], [4.0]]]), 2, k, ids[:1], ids[None]), grid)
    assert finalize_aea(acc) == finalize_mca(cloud_of([1.0, 4.0]), coordinate(0)) == 2.5


@pytest.mark.parametrize("kind,sched", [(IPS, ParticleSchedule.constant(3)), (SELF, ParticleSchedule.harmonic(2, 3))])
def test_frozen_dynamics_all_estimators(kind, sched):
    grid = TimeGrid(3, 2.0)
    acc = EstimatorAccumulator(squared_norm())
    cloud, _ = simulate(zero_model(1, 1.5), grid, 2, sched, kind, [acc], seed=0)
    for alg in ("EA", "MCA", "AEA", "C_AEA", "CS_AEA"):
        assert estimate(alg, acc, cloud) == 2.25


def test_constant_observable_running_average():
    model = linear_model(1, 0.5, Gaussian([0.0], [[1.0]]))
    one = Observable("one", lambda x: np.ones(x.shape[:-1]))
    acc = EstimatorAccumulator(one)
    simulate(model, TimeGrid(4, 2.0), 2, ParticleSchedule.constant(3), IPS, [acc], seed=1)
    assert finalize_ea(acc) == finalize_aea(acc) == finalize_c_aea(acc) == 1.0


def batch(traj, active, h):
    """Brute-force recomputation from a recorded (K+1, M, N, d) trajectory."""
    f = (traj**2).sum(-1)
    run = f[:-1]
    K = run.shape[0]
    per_particle = []
    for e in range(traj.shape[1]):
        vals = []
        for i in range(traj.shape[2]):
            seen = [run[k, e, i] for k in range(K) if i < active[k]]
            if seen:
                vals.append(sum(seen) / len(seen))
        per_particle.append(vals)
    step_means = [[np.mean(run[k, e, : active[k]]) for k in range(K)] for e in range(traj.shape[1])]
    return {
        "EA": run[:, 0, 0].sum() * h / (K * h),
        "AEA": np.mean(per_particle[0]),
        "C_AEA": np.mean([np.mean(v) for v in per_particle]),
        "CS_AEA": np.mean([np.mean(s) for s in step_means]),
        "MCA": f[-1, 0, : active[-1]].mean(),
    }


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([IPS, SELF]), st.integers(1, 3), st.integers(1, 4))
def test_streaming_equals_batch(seed, kind, M, N):
    model = linear_model(1, 0.4, Gaussian([0.5], [[0.5]]))
    grid = TimeGrid(4, 1.5)
    sched = ParticleSchedule.harmonic(N, 4) if kind == SELF else ParticleSchedule.constant(N)
    acc = EstimatorAccumulator(squared_norm())
    rec = TrajectoryRecorder()
    cloud, _ = simulate(model, grid, M, sched, kind, [acc, rec], seed=seed)
    ref = batch(rec.array(), rec.active, grid.h)
    got = {
        "EA": finalize_ea(acc),
        "AEA": finalize_aea(acc),
        "C_AEA": finalize_c_aea(acc),
        "CS_AEA": finalize_cs_aea(acc),
        "MCA": finalize_mca(cloud, squared_norm()),
    }
    for key in ref:
        assert got[key] == pytest.approx(ref[key], abs=1e-12)
    assert np.allclose(acc.time_sums, (rec.array()[:-1] ** 2).sum(-1).sum(0) * grid.h, atol=1e-12) or kind == SELF


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(["EA", "MCA", "AEA", "C_AEA"]))
def test_linearity_in_observable(a, b, alg):
    model = linear_model(1, 0.5, Gaussian([0.0], [[1.0]]))
    grid = TimeGrid(5, 1.0)
    f, g = coordinate(0), squared_norm()
    combo = linear_combination([(a, f), (b, g)])
    values = {}
    for name, obs in (("f", f), ("g", g), ("fg", combo)):
        acc = EstimatorAccumulator(obs)
        cloud, _ = simulate(model, grid, 2, ParticleSchedule.constant(4), IPS, [acc], seed=8)
        values[name] = estimate(alg, acc, cloud)
    assert values["fg"] == pytest.approx(a * values["f"] + b * values["g"], abs=1e-12)


def test_variance_ordering():
    model = linear_model(1, 0.5, 1.0)
    R = 200
    acc = EstimatorAccumulator(squared_norm())
    cloud, _ = simulate(model, TimeGrid(20, 10.0), R, ParticleSchedule.constant(50), IPS, [acc], 4, fast=True)
    var = {
        "EA": np.var([finalize_ea(acc, e) for e in range(R)], ddof=1),
        "MCA": np.var([finalize_mca(cloud, squared_norm(), e) for e in range(R)], ddof=1),
        "AEA": np.var([finalize_aea(acc, e) for e in range(R)], ddof=1),
    }
    assert var["AEA"] <= 1.05 * var["MCA"] and var["MCA"] <= 1.05 * var["EA"]


def test_errors():
    acc = EstimatorAccumulator(coordinate(0))
    with pytest.raises(PreconditionError):
        finalize_ea(acc)
    with pytest.raises(ConfigurationError):
        EstimatorAccumulator(coordinate(0), burn_in=-1)
    with pytest.raises(ConfigurationError):
        normalize_algorithm("XYZ")
    assert normalize_algorithm("c-aea") == "C_AEA"


def test_result_row():
    res = ExperimentResult("MCA", 1.0, 4, 5, 1, "constant", 7, 0.25, CostLedger(100, 20, 4), 0.5, 0.5)
    assert res.error == 0.25
    row = res.row()
    assert len(row) == len(CSV_HEADER) and row[-1] == "" and row[9] == "0.25"
    assert res.row(timing=True)[-1] == "0.500000"
    assert ExperimentResult("EA", 1.0, 1, 1, 1, "constant", 0, 1.0, CostLedger(), 0.0).row()[8:10] == ["", ""]


def test_cs_aea_mean_matches_exact_recursion():
    from oracles import self_interacting_moments

    grid = TimeGrid(50, 20.0)
    M = 2048
    acc = EstimatorAccumulator(squared_norm())
    simulate(linear_model(1, 0.5, 1.0), grid, M, ParticleSchedule.constant(1), SELF, [acc], seed=12, fast=True)
    per_ensemble = acc.step_sums / acc.steps
    exact, _, _ = self_interacting_moments(1.0, 0.5, 1.0, 50, grid.steps)
    assert abs(per_ensemble.mean() - exact) < 4 * per_ensemble.std() / np.sqrt(M)
    # slow t^-1/2 relaxation of the history average keeps the target 0.5 out of reach
    assert exact > 0.6

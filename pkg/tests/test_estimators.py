import math

import numpy as np
import pytest

from cbmlab.catalog import boundary_pair, brownian_branching_pair, linear_pair, sqrt_explosive_pair
from cbmlab.cbm_sim import SimConfig, simulate_batch
from cbmlab.errors import NotExplosiveError, PreconditionError
from cbmlab.estimators import (
    EstimateWithCI,
    config_hash,
    default_workers,
    dt_convergence_study,
    mc_explosion,
    mc_first_passage,
    mc_occupation,
)
from cbmlab.scale_fns import occupation_lt

FAST = SimConfig(dt_base=1e-2, horizon=5.0)


def test_first_passage_at_level():
    est = mc_first_passage(brownian_branching_pair(), 1.0, 1.0, 1.0, 0.0, FAST, 100, seed=0)
    assert (est.mean, est.std_error) == (1.0, 0.0)


def test_explosion_and_occupation_at_level():
    assert mc_explosion(sqrt_explosive_pair(), 1.0, 1.0, 2.0, FAST, 100, seed=0).mean == 0.0
    assert mc_occupation(brownian_branching_pair(), 1.0, 1.0, 2.0, 1.0, FAST, 100, seed=0).mean == 0.0


def test_linear_first_passage():
    est = mc_first_passage(linear_pair(), 1.0, 0.0, 1.0, 0.0, SimConfig(dt_base=1e-3), 256, seed=1)
    assert est.std_error < 1e-12
    assert abs(est.mean - 0.5) <= 3 * est.std_error + est.bias_bound + 1e-3


def test_first_passage_bias_is_reported():
    est = mc_first_passage(linear_pair(), 1.0, 0.0, 1.0, 0.0, FAST, 10, seed=1, eps_tail=1e-3)
    assert est.bias_bound == pytest.approx(1e-3)
    assert est.extras["horizon"] == pytest.approx(math.log(1e3))


def test_boundary_pair_converges_upward():
    vals = []
    for T in (1.0, 4.0):
        est = mc_first_passage(boundary_pair(), 1.0, 0.0, 0.0, 0.0, SimConfig(dt_base=1e-2), 2000, seed=3, horizon=T)
        vals.append(est)
        assert 0.0 <= est.mean <= 1.0
    assert vals[1].mean > vals[0].mean
    assert vals[1].mean <= math.exp(-1.0) + 3 * vals[1].std_error + 0.02


def test_zero_rate_needs_horizon():
    with pytest.raises(PreconditionError):
        mc_first_passage(boundary_pair(), 1.0, 0.0, 0.0, 0.0, FAST, 10, seed=0)


def test_monotone_in_start():
    means = [mc_first_passage(brownian_branching_pair(), x, 0.0, 1.0, 0.0, FAST, 4096, seed=7).mean
             for x in (0.5, 1.0, 2.0)]
    assert means[0] >= means[1] >= means[2]


def test_deterministic_reruns():
    args = (brownian_branching_pair(), 1.0, 0.0, 1.0, 0.0, FAST, 5000, 21)
    a, b = mc_first_passage(*args, block_size=1024), mc_first_passage(*args, block_size=1024)
    assert a == b
    assert a.to_dict() == b.to_dict()
    assert a.config_hash == b.config_hash


def test_parallel_blocks_match_serial():
    args = (brownian_branching_pair(), 1.0, 0.0, 1.0, 0.0, FAST, 3000, 5)
    serial = mc_first_passage(*args, block_size=1000, workers=1)
    parallel = mc_first_passage(*args, block_size=1000, workers=2)
    assert serial == parallel


def test_default_workers(monkeypatch):
    monkeypatch.setenv("CBM_THREADS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("CBM_THREADS", "junk")
    assert default_workers() == 1


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1.0, 2.0]}) == config_hash({"b": [1.0, 2.0], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_covers():
    est = EstimateWithCI(0.5, 0.01, 100, 0.005)
    assert est.covers(0.53)
    assert not est.covers(0.54)
    assert est.covers(0.54, extra=0.01)


def test_explosion_requires_explosive_branching():
    with pytest.raises(NotExplosiveError):
        mc_explosion(linear_pair(), 2.0, 0.0, 1.0, FAST, 10, seed=0)


def test_explosion_sweep_is_monotone():
    cfg = SimConfig(dt_base=1e-3, adaptive=True, y_ref=1e3)
    est = mc_explosion(sqrt_explosive_pair(), 2.0, 0.0, 2.0, cfg, 300, seed=2, M_sweep=(1e2, 1e3, 1e4))
    sweep = [m for _, m, _ in est.extras["sweep"]]
    assert sweep[0] >= sweep[1] >= sweep[2] >= 0.0
    assert est.mean == sweep[-1]
    assert est.bias_bound >= est.extras["decrement"]
    assert 0.0 < est.extras["exploded_fraction"] <= 1.0


def test_occupation_contributions_bounded():
    est = mc_occupation(brownian_branching_pair(), 1.0, 0.0, 2.0, 1.0, FAST, 2000, seed=4)
    assert 0.0 <= est.extras["max_contribution"] <= 0.5
    target = occupation_lt(brownian_branching_pair(), 2.0, 1.0, 1.0, 0.0)
    assert abs(est.mean - target) <= 4 * est.std_error + est.bias_bound + 0.01


def test_occupation_preconditions():
    with pytest.raises(PreconditionError):
        mc_occupation(brownian_branching_pair(), 1.0, 0.0, 2.0, 0.0, FAST, 10, seed=0)


def _tau_estimate(dt):
    res = simulate_batch(linear_pair(), 1.0, SimConfig(dt_base=dt), 8, seed=0)
    return EstimateWithCI(float(res.tau.mean()), 0.0, 8, 0.0)


def test_dt_study_first_order():
    rows = dt_convergence_study(_tau_estimate, [4e-3, 2e-3, 1e-3, 5e-4], reference=math.log(2.0))
    ratios = [b.error / a.error for a, b in zip(rows[:-1], rows[1:])]
    assert all(0.4 <= r <= 0.6 for r in ratios), ratios
    assert math.isnan(rows[0].difference)


def test_dt_study_constant_estimator():
    run = lambda dt: mc_first_passage(linear_pair(), 1.0, 1.0, 1.0, 0.0, SimConfig(dt_base=dt), 10, seed=0)
    rows = dt_convergence_study(run, [1e-2, 1e-3])
    assert rows[1].difference == 0.0

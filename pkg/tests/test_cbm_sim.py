import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from cbmlab.catalog import brownian_branching_pair, linear_pair, sqrt_explosive_pair
from cbmlab.cbm_sim import (
    ABSORBED,
    EXPLODED,
    Absorbed,
    Censored,
    ExplodedAbove,
    Passed,
    SimConfig,
    couple_monotone,
    simulate_batch,
    simulate_lamperti,
    simulate_sde,
    superpose,
)
from cbmlab.cli import ordering_violations, superposition_gap
from cbmlab.levy_mech import CompoundExponential, LevyMechanism, MechanismPair
from cbmlab.scale_fns import first_passage_lt


def noisy_linear_pair():
    """Psi_b = z with a Brownian plus compound-exponential migration."""
    return MechanismPair(LevyMechanism.linear(1.0), LevyMechanism(1.0, -1.0, CompoundExponential(1.0, 0.5)))


@pytest.mark.parametrize("sim", [simulate_sde, simulate_lamperti])
def test_start_at_zero(sim):
    path = sim(brownian_branching_pair(), 0.0, SimConfig(), seed=1)
    assert len(path.times) == 1
    assert path.status == Absorbed(0.0)


def test_deterministic_hitting_time():
    res = simulate_batch(linear_pair(), 1.0, SimConfig(dt_base=1e-3), 200, seed=0)
    assert np.all(res.status == ABSORBED)
    assert abs(res.tau.mean() - math.log(2.0)) <= 2e-3
    assert res.tau.std() <= 1e-12


def test_passed_status_for_positive_level():
    path = simulate_sde(linear_pair(), 2.0, SimConfig(dt_base=1e-3), seed=0, stop_level=1.0)
    assert isinstance(path.status, Passed)
    # dY = -(1 + Y) dt from 2 reaches 1 at log(3/2)
    assert path.status.tau == pytest.approx(math.log(1.5), abs=2e-3)
    assert path.values[-1] == 1.0


def test_censoring():
    path = simulate_sde(linear_pair(), 1.0, SimConfig(horizon=0.5, dt_base=0.01), seed=0)
    assert path.status == Censored(0.5)
    assert path.end_time == pytest.approx(0.5)


def test_non_explosive_linear_branching():
    cfg = SimConfig(dt_base=1e-2, horizon=20.0, explosion_threshold=1e6)
    res = simulate_batch(noisy_linear_pair(), 1.0, cfg, 2000, seed=3)
    assert not np.any(res.status == EXPLODED)


@pytest.mark.parametrize("sim", [simulate_sde, simulate_lamperti])
@pytest.mark.parametrize("seed", range(5))
def test_paths_nonnegative_and_stopped_at_zero(sim, seed):
    path = sim(brownian_branching_pair(), 0.5, SimConfig(dt_base=1e-3, horizon=5.0), seed=seed)
    assert np.all(path.values >= 0)
    zero = np.flatnonzero(path.values == 0.0)
    if zero.size:
        assert zero[0] == len(path.values) - 1
        assert isinstance(path.status, Absorbed)
    assert np.all(np.diff(path.times) > 0)
    assert np.all(np.diff(path.theta) >= 0)


def test_clamp_rate_per_step_vanishes():
    # every absorption of a diffusive path overshoots on the Euler grid, so
    # the rate per step of clamp events is what shrinks with dt
    rates = []
    dts = [1e-2, 1e-3, 1e-4]
    for dt in dts:
        res = simulate_batch(brownian_branching_pair(), 1.0, SimConfig(dt_base=dt, horizon=2.0), 400, seed=5)
        rates.append(res.clamped.sum() / (res.tau.sum() / dt))
    slope = np.polyfit(np.log(dts), np.log(rates), 1)[0]
    assert slope > 0.7
    assert rates[-1] < rates[0]


def test_explosion_recrossing_time_shrinks():
    pair = sqrt_explosive_pair()
    gaps = []
    for M in (1e2, 1e3, 1e4):
        cfg = SimConfig(dt_base=1e-3, adaptive=True, y_ref=1e3, explosion_threshold=10 * M, horizon=5.0)
        res = simulate_batch(pair, 2.0, cfg, 500, seed=4, up_levels=[M])
        ex = res.status == EXPLODED
        assert ex.mean() > 0.01
        assert np.all(np.isfinite(res.up_times[ex, 0]))
        gaps.append(np.mean(res.tau[ex] - res.up_times[ex, 0]))
    assert gaps[0] > gaps[1] > gaps[2]


def test_lamperti_flags_explosions():
    cfg = SimConfig(dt_base=1e-3, adaptive=True, y_ref=1e3, explosion_threshold=1e4, horizon=5.0)
    res = simulate_batch(sqrt_explosive_pair(), 2.0, cfg, 300, seed=8, scheme="lamperti")
    assert np.any(res.status == EXPLODED)
    path = simulate_lamperti(sqrt_explosive_pair(), 2.0, cfg, seed=8)
    assert isinstance(path.status, (ExplodedAbove, Absorbed, Censored))


@pytest.mark.slow
def test_lamperti_matches_sde_in_law():
    pair = noisy_linear_pair()
    cfg = SimConfig(dt_base=1e-3, horizon=20.0)
    a = simulate_batch(pair, 1.0, cfg, 10_000, seed=2)
    b = simulate_batch(pair, 1.0, cfg, 10_000, seed=2, scheme="lamperti")
    assert np.all(a.status == ABSORBED) and np.all(b.status == ABSORBED)
    assert stats.ks_2samp(a.tau, b.tau).statistic <= 0.02
    for alpha in (0.5, 1.0, 2.0):
        ea, eb = np.exp(-alpha * a.tau), np.exp(-alpha * b.tau)
        pooled = math.sqrt(ea.var(ddof=1) / ea.size + eb.var(ddof=1) / eb.size)
        assert abs(ea.mean() - eb.mean()) <= 3 * pooled
        exact = first_passage_lt(pair, alpha, 0.0, 1.0, 0.0)
        assert abs(ea.mean() - exact) <= 4 * math.sqrt(ea.var(ddof=1) / ea.size) + 5e-3


def test_batches_are_reproducible():
    cfg = SimConfig(dt_base=1e-2, horizon=3.0)
    r1 = simulate_batch(brownian_branching_pair(), 1.0, cfg, 50, seed=11, block=2)
    r2 = simulate_batch(brownian_branching_pair(), 1.0, cfg, 50, seed=11, block=2)
    r3 = simulate_batch(brownian_branching_pair(), 1.0, cfg, 50, seed=11, block=3)
    assert np.array_equal(r1.tau, r2.tau)
    assert not np.array_equal(r1.tau, r3.tau)


def test_occupation_integral_deterministic():
    # Y_t = 2 e^{-t} - 1 for dY = -(1 + Y) dt from 1; alphabar = 0 gives int_0^tau e^{-s} ds
    res = simulate_batch(linear_pair(), 1.0, SimConfig(dt_base=1e-4), 1, seed=0, occupation=(1.0, 0.0))
    assert res.occupation[0] == pytest.approx(1.0 - math.exp(-math.log(2.0)), abs=1e-3)
    assert res.theta[0] == pytest.approx(2.0 * (1.0 - 0.5) - math.log(2.0), abs=1e-3)


def test_config_roundtrip_and_validation():
    cfg = SimConfig(dt_base=0.01, adaptive=True)
    assert SimConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        SimConfig(dt_base=0.0)
    with pytest.raises(ValueError):
        SimConfig(explosion_threshold=10.0, truncation_level=1.0)
    with pytest.raises(ValueError):
        simulate_batch(linear_pair(), 1.0, SimConfig(), 1, seed=0, scheme="other")


# -- couplings ----------------------------------------------------------------

COUPLING_CFG = SimConfig(dt_base=1e-2, horizon=2.0)


def two_migration_pairs():
    b = LevyMechanism(math.sqrt(2.0), 0.0)
    return (MechanismPair(b, LevyMechanism(0.5, -1.0, CompoundExponential(1.0, 0.5))),
            MechanismPair(b, LevyMechanism(0.0, -0.5, CompoundExponential(2.0, 0.3))))


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1), x1=st.floats(0.1, 3.0), x2=st.floats(0.1, 3.0))
def test_superposition_identity(seed, x1, x2):
    p1, p2 = two_migration_pairs()
    y, y1, y2 = superpose(p1, p2, x1, x2, COUPLING_CFG, seed)
    assert superposition_gap(y, y1, y2) <= 1e-12
    assert y.values[0] == x1 + x2


def test_superposition_with_extinct_second_component():
    p1, _ = two_migration_pairs()
    p2 = MechanismPair(p1.branching, LevyMechanism(0.0, 0.0), allow_degenerate=True)
    y, y1, y2 = superpose(p1, p2, 1.0, 0.0, COUPLING_CFG, seed=3)
    assert np.all(y2.values == 0.0)
    assert np.array_equal(y.values[: len(y1.values)], y1.values)


def test_superposition_linear_exact():
    y, y1, y2 = superpose(linear_pair(1.0, 1.0), linear_pair(1.0, 2.0), 1.0, 2.0, COUPLING_CFG, seed=0)
    assert superposition_gap(y, y1, y2) <= 1e-14


def test_superposition_needs_equal_branching():
    with pytest.raises(ValueError):
        superpose(linear_pair(1.0, 1.0), linear_pair(2.0, 1.0), 1.0, 1.0, COUPLING_CFG, seed=0)


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), x_low=st.floats(0.0, 2.0), extra=st.floats(0.0, 2.0))
def test_monotone_coupling_ordering(seed, x_low, extra):
    lo, hi = couple_monotone(brownian_branching_pair(), x_low, x_low + extra, COUPLING_CFG, seed)
    assert ordering_violations(lo, hi) == 0


def test_monotone_coupling_equal_starts():
    lo, hi = couple_monotone(brownian_branching_pair(), 1.0, 1.0, COUPLING_CFG, seed=9)
    n = len(lo.values)
    assert np.array_equal(lo.values, hi.values[:n])


def test_monotone_coupling_low_at_zero():
    lo, hi = couple_monotone(brownian_branching_pair(), 0.0, 1.0, COUPLING_CFG, seed=9)
    assert lo.status == Absorbed(0.0)
    assert hi.values[0] == 1.0


def test_monotone_coupling_rejects_order():
    with pytest.raises(ValueError):
        couple_monotone(brownian_branching_pair(), 2.0, 1.0, COUPLING_CFG, seed=0)

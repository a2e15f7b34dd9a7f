"""Acceptance criteria 1-9 at their stated tolerances.

Each test records one PASS/FAIL line; the lines are repeated in the
"acceptance criteria" section of the pytest terminal summary.
"""
import math

import numpy as np
import pytest

from cbmlab.catalog import (
    boundary_pair,
    brownian_branching_pair,
    generator_cases,
    linear_pair,
    log_tail_migration_pair,
    sqrt_explosive_pair,
)
from cbmlab.cbm_sim import ABSORBED, EXPLODED, SimConfig, couple_monotone, simulate_batch, superpose
from cbmlab.cli import ordering_violations, superposition_gap
from cbmlab.errors import CbmError, UndecidedByPaper
from cbmlab.estimators import mc_explosion, mc_first_passage
from cbmlab.generator_check import ode_residual_phi, ode_residual_psi
from cbmlab.levy_mech import CompoundExponential, LevyMechanism, MechanismPair
from cbmlab.scale_fns import explosion_lt, first_passage_lt, hit_zero_prob, phi_many

from conftest import record_criterion


def test_criterion_1_linear_closed_form():
    worst = 0.0
    for b in (0.5, 1.0, 2.0):
        for m in (0.5, 1.0, 2.0):
            pair = linear_pair(b, m)
            for alpha in (0.5, 1.0, 2.0):
                for x in (0.5, 1.0, 2.0, 5.0):
                    exact = (1.0 + b / m * x) ** (-alpha / b)
                    got = first_passage_lt(pair, alpha, 0.0, x, 0.0)
                    worst = max(worst, abs(got - exact) / exact)
    ok = worst <= 1e-6
    record_criterion(1, ok, f"108 cases, worst relative error {worst:.2e} (tol 1e-6)")
    assert ok


def test_criterion_2_deterministic_hitting_time():
    res = simulate_batch(linear_pair(), 1.0, SimConfig(dt_base=1e-3), 10_000, seed=2024)
    tau = res.tau[res.status == ABSORBED]
    err, sd = abs(tau.mean() - math.log(2.0)), tau.std(ddof=1)
    ok = tau.size == 10_000 and err <= 0.01 and sd <= 0.01
    record_criterion(2, ok, f"|mean - ln 2| = {err:.2e}, sd = {sd:.2e} (tol 0.01 each)")
    assert ok


CROSS_POINTS = [(1.0, 0.0, 1.0, 0.0), (2.0, 1.0, 1.0, 0.0), (1.0, 0.0, 1.0, 1.0)]


@pytest.mark.slow
@pytest.mark.parametrize("point", CROSS_POINTS, ids=lambda p: "x={}_a={}_alpha={}_alphabar={}".format(*p))
def test_criterion_3_cross_validation(point):
    x, a, alpha, alphabar = point
    pair = brownian_branching_pair()
    try:
        q = first_passage_lt(pair, alpha, alphabar, x, a)
    except CbmError as exc:
        record_criterion(3, False, f"{point}: no quadrature value ({type(exc).__name__}: {exc})")
        raise
    est = mc_first_passage(pair, x, a, alpha, alphabar, SimConfig(dt_base=1e-3), 100_000, seed=31 + int(10 * x))
    gap = abs(est.mean - q)
    tol = 3 * est.std_error + est.bias_bound
    ok = gap <= tol
    record_criterion(3, ok, f"{point}: quad {q:.5f}, MC {est.mean:.5f} +- {est.std_error:.1e}, "
                            f"gap {gap:.1e} vs tol {tol:.1e}")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("x, a", [(1.0, 0.0), (2.0, 1.0)])
def test_criterion_4_boundary_case(x, a):
    T = 50.0
    cfg = SimConfig(dt_base=1e-3, horizon=T, explosion_threshold=1e4)
    est = mc_first_passage(boundary_pair(), x, a, 0.0, 0.0, cfg, 20_000, seed=404, horizon=T)
    target = math.exp(-(x - a))
    # the slack e^{-T} bounds hits after the horizon (c = 1 in e^{-cT})
    tol = 3 * est.std_error + math.exp(-T)
    ok = abs(est.mean - target) <= tol
    record_criterion(4, ok, f"(x, a) = ({x:g}, {a:g}): MC {est.mean:.4f} +- {est.std_error:.1e} vs {target:.4f}")
    assert ok


def test_criterion_5_generator_residuals():
    grid = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0]
    worst = 0.0
    for _, pair, alpha, alphabar, with_psi in generator_cases():
        worst = max(worst, ode_residual_phi(pair, alpha, alphabar, grid))
        if with_psi:
            worst = max(worst, ode_residual_psi(pair, alpha, alphabar, grid))
    ok = worst <= 1e-4
    record_criterion(5, ok, f"{len(generator_cases())} pairs, worst relative residual {worst:.1e} (tol 1e-4)")
    assert ok


def test_criterion_6_delimiter_invariance():
    cases = [(brownian_branching_pair(), 1.0, 0.0, 2.0, 1.0), (brownian_branching_pair(), 2.0, 1.0, 1.0, 0.0),
             (sqrt_explosive_pair(), 2.0, 0.0, 2.0, 0.5), (linear_pair(), 1.0, 0.0, 1.0, 0.0)]
    worst = 0.0
    for pair, alpha, alphabar, x, a in cases:
        ratios = []
        for theta in (1.5, 3.0, 7.0):
            v, _, _ = phi_many(pair, alpha, alphabar, [x, a], theta=theta)
            ratios.append(v[0] / v[1])
        worst = max(worst, (max(ratios) - min(ratios)) / min(ratios))
    ok = worst <= 1e-7
    record_criterion(6, ok, f"three delimiters on {len(cases)} cases, worst spread {worst:.1e} (tol 1e-7)")
    assert ok


@pytest.mark.slow
def test_criterion_7_explosion_dichotomy():
    calm = MechanismPair(LevyMechanism.linear(1.0), LevyMechanism(1.0, 1.0, CompoundExponential(1.0, 0.5)))
    res = simulate_batch(calm, 1.0, SimConfig(dt_base=1e-2, horizon=20.0, explosion_threshold=1e6), 10_000, seed=7)
    n_calm = int(np.sum(res.status == EXPLODED))

    pair = sqrt_explosive_pair()
    cfg = SimConfig(dt_base=1e-3, adaptive=True, y_ref=1e3)
    est = mc_explosion(pair, 2.0, 0.0, 2.0, cfg, 10_000, seed=77)
    target = explosion_lt(pair, 2.0, 2.0, 0.0)
    frac = est.extras["exploded_fraction"]
    ok = n_calm == 0 and frac >= 0.01 and est.covers(target)
    record_criterion(7, ok, f"non-explosive: {n_calm}/10000 exploded; explosive: fraction {frac:.3f}, "
                            f"MC {est.mean:.4f} +- {est.std_error:.1e} vs {target:.4f} "
                            f"(decrement {est.extras['decrement']:.1e})")
    assert ok


@pytest.mark.slow
def test_criterion_8_coupling_exactness():
    cfg = SimConfig(dt_base=1e-2, horizon=2.0)
    b = LevyMechanism(math.sqrt(2.0), 0.0)
    p1 = MechanismPair(b, LevyMechanism(0.5, -1.0, CompoundExponential(1.0, 0.5)))
    p2 = MechanismPair(b, LevyMechanism(0.0, -0.5, CompoundExponential(2.0, 0.3)))
    worst, repro = 0.0, True
    for seed in range(100):
        y, y1, y2 = superpose(p1, p2, 1.0, 0.7, cfg, seed)
        again = superpose(p1, p2, 1.0, 0.7, cfg, seed)
        repro &= all(np.array_equal(u.values, v.values) and np.array_equal(u.times, v.times)
                     for u, v in zip((y, y1, y2), again))
        worst = max(worst, superposition_gap(y, y1, y2))
    violations = 0
    for seed in range(1000):
        lo, hi = couple_monotone(brownian_branching_pair(), 1.0, 2.0, cfg, seed)
        violations += ordering_violations(lo, hi)
    ok = repro and worst <= 1e-12 and violations == 0
    record_criterion(8, ok, f"superpose gap {worst:.1e} over 100 seeds (reruns identical: {repro}); "
                            f"{violations} ordering violations over 1000 seeds")
    assert ok


def test_criterion_9_hitting_zero():
    lin = tuple(hit_zero_prob(linear_pair(), 1.0))
    bd = [abs(hit_zero_prob(boundary_pair(), x).probability - math.exp(-x)) for x in (0.5, 1.0, 2.0)]
    try:
        hit_zero_prob(log_tail_migration_pair(), 1.0)
        undecided = False
    except UndecidedByPaper:
        undecided = True
    ok = lin == (1.0, True) and max(bd) <= 1e-6 and undecided
    record_criterion(9, ok, f"linear {lin}; boundary error {max(bd):.1e}; log-tail undecided: {undecided}")
    assert ok

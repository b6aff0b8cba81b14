"""Batch experiments: partitioning sizes, concentration, expectation, tightness."""

import math

import numpy as np
import pytest
from scipy import stats

import hardgrid as hg
from hardgrid import rng
from hardgrid.discretize import EmptyCellError, HypercubePartitioning


def test_hypercube_partitioning_size_examples():
    assert hg.hypercube_partitioning_size(2, 1.0, 0.5) == 9
    assert hg.hypercube_partitioning_size(1, 1.0, 1.0) == 1
    assert hg.hypercube_partitioning_size(1, 10.0, 0.1) == 100


def test_partitioning_geometry():
    part = HypercubePartitioning.for_eps(hg.Region(2, 1.0), 0.5)
    assert part.size == hg.hypercube_partitioning_size(2, 1.0, 0.5)
    assert part.eps <= 0.5 + 1e-12
    assert part.gamma == 1.0
    # cells tile the region exactly
    assert part.cells_per_axis * part.cell_side == pytest.approx(1.0)


def test_required_points_examples():
    assert hg.required_points(16, 1.0, 0.5, 0.5) == 12777
    assert hg.required_points(1, 1.0, 1.0, 2 / math.e ** 2) == 96
    n1 = hg.required_points(100, 1.0, 0.5, 0.5)
    n2 = hg.required_points(200, 1.0, 0.5, 0.5)
    assert n2 > 2 * n1  # m ln m growth


def test_modified_markov_examples():
    assert hg.modified_markov_bound(0.1, 0.01, 1.0) == pytest.approx(0.545)
    assert hg.modified_markov_bound(0.3, 0.0, 3.0) == pytest.approx(0.25)
    assert hg.modified_markov_bound(0.5, 1.0, 0.0) == pytest.approx(2.0)


def test_modified_markov_empirical():
    # two-point variable engineered to satisfy the lower-tail hypothesis
    delta, eps = 0.05, 0.3
    hi = 1.0
    # X = 0 w.p. delta, X = hi otherwise; E[X] = hi (1 - delta)
    mean = hi * (1 - delta)
    assert 0.0 < (1 - eps) * mean < hi  # hypothesis holds with exactly delta mass
    stream = rng.Stream(99)
    draws = np.array([0.0 if stream.uniform() < delta else hi
                      for _ in range(10_000)])
    for c in (0.05, 0.1, 0.2):
        bound = hg.modified_markov_bound(eps, delta, c)
        emp = float((draws >= (1 + c * eps) * mean).mean())
        se = math.sqrt(emp * (1 - emp) / draws.size + 1e-12)
        assert emp <= bound + 3 * se, (c, emp, bound)


def test_tightness_examples():
    assert hg.tightness_check(1.0, 12.0, 20, 1.0)
    assert not hg.tightness_check(1.0, 12.0, 10 ** 6, 1.0)
    # every n below the quadratic threshold must fail to approximate
    for n in range(1, 24):
        assert hg.tightness_check(1.0, 12.0, n, 1.0), n
    with pytest.raises(ValueError):
        hg.tightness_check(1.0, 2.0, 5, 1.0)


def test_quadratic_gap_inequality_grid():
    # (1 + x/y)^y <= exp(-x^2/(6y)) exp(x) on a grid with y >= x > 0
    for x in np.linspace(0.5, 30.0, 10):
        for y in np.linspace(x, x + 50.0, 10):
            lhs = y * math.log1p(x / y)
            rhs = x - x * x / (6.0 * y)
            assert lhs <= rhs + 1e-9, (x, y)


def test_concentration_report(rod_model):
    rep = hg.concentration_trial(rod_model, 400, 60, 0.2, seed=3)
    assert rep.trials == 60 and len(rep.rows) == 60
    assert 0.0 <= rep.fraction_within <= 1.0
    assert rep.reference_ln_z == pytest.approx(
        float(hg.tonks_log_z(10.0, 0.25, 1.0)))
    # rows carry |ln_z_hc - ln_z_ref|
    t, n, lhc, lref, dev = rep.rows[0]
    assert dev == pytest.approx(abs(lhc - lref))

    empty = hg.concentration_trial(rod_model, 100, 0, 0.2, seed=3)
    assert math.isnan(empty.fraction_within) and empty.rows == []


def test_concentration_tiny_n_fails(rod_model):
    rep = hg.concentration_trial(rod_model, 2, 40, 0.2, seed=5)
    assert rep.fraction_within <= 0.1


def test_concentration_monotone_trend(rod_model):
    ladder = [50, 150, 450, 1350, 4050]
    fracs = [hg.concentration_trial(rod_model, n, 60, 0.2, seed=11).fraction_within
             for n in ladder]
    rho, _ = stats.spearmanr(ladder, fracs)
    assert rho >= 0.0


def test_expectation_check(rod_model):
    rep = hg.expectation_check(rod_model, 1000, 80, seed=7)
    assert rep.passed
    assert rep.mean_z - 2 * rep.standard_error <= rep.z_ref

    # free model: E[Z] = (1 + lam vol / n)^n < e^(lam vol), deterministically
    n, lam, vol = 500, 1.0, 10.0
    z_det = (1 + lam * vol / n) ** n
    assert z_det < math.exp(lam * vol)


def test_expectation_zero_fugacity():
    m = hg.ModelSpec.hard_sphere(1, 10.0, 0.25, 0.0)
    rep = hg.expectation_check(m, 100, 10, seed=9)
    assert rep.mean_z == pytest.approx(1.0)
    assert rep.z_ref == pytest.approx(1.0)
    assert rep.passed


def test_deterministic_lower_bound_direction():
    """Trials with a partition-based allocation satisfy
    ln Z_hc >= ln(1 - eps_d) + ln Z_ref at the eps_d implied by the achieved
    (delta, eps) through the lower-bound parameter map."""
    m = hg.ModelSpec.hard_sphere(1, 2.0, 0.25, 1.0)
    lam = 1.0
    vol = 2.0
    lam_max_inter = m.interaction.lambda_max()
    ball = hg.ball_volume(1, lam_max_inter + 1.0)
    part = HypercubePartitioning.for_eps(m.region, 1.0 / 15.0)
    n = 500_000
    z_ref = float(hg.tonks_log_z(2.0, 0.25, 1.0))
    checked = 0
    for trial in range(5):
        pts = hg.RandomPointSet(m.region, n, rng.derive_key(123, trial))
        try:
            alloc = hg.partition_allocation_from_random(pts, part)
        except EmptyCellError:
            continue
        eps_d = max(alloc.eps * 2 * m.q * lam ** 2 * ball * vol,
                    alloc.delta * 16 * m.q * lam * vol,
                    64 * m.q * lam ** 2 * vol ** 2 / n)
        if eps_d >= 1.0:
            continue
        pos = np.sort(pts.points[:, 0])
        ln_z_hc = float(hg.exact_log_z_1d(pos, 0.5, lam * vol / n))
        assert ln_z_hc >= math.log(1 - eps_d) + z_ref, (trial, eps_d)
        checked += 1
    assert checked >= 3  # the bound must be non-vacuous at this scale

"""Tests for operator revenue accounting and pricing sweeps."""

import itertools

import numpy as np
import pytest

from crowdwifi.membership import (
    ExpectationConfig,
    MembershipState,
    expected_ap_revenue,
    profile_weight,
    stage2_cache,
)
from crowdwifi.operator import (
    best_price_assignment,
    evaluate_location_pricing,
    operator_revenue,
    pure_profile_revenue,
    revenue_breakdown,
    sweep,
)
from crowdwifi.scenario import load_scenario

from conftest import random_scenario


def test_revenue_breakdown_conserves_payments():
    rng = np.random.default_rng(99)
    for _ in range(5):
        sc = random_scenario(rng, n_aps=3, n_aliens=1)
        cache = stage2_cache(sc)
        x = {uid: int(rng.integers(0, 2)) for uid in sc.subscriber_ids}
        total, kept, shares = revenue_breakdown(sc, x, cache=cache)
        assert kept == pytest.approx(pure_profile_revenue(sc, x, cache=cache), abs=0.0)
        assert total == pytest.approx(kept + sum(shares.values()), abs=1e-9)
        # shares flow only to Bill owners
        for uid, share in shares.items():
            if x[uid] == 0:
                assert share == 0.0


def test_pure_profile_revenue_formula():
    sc = load_scenario("scenarios/small_network.yaml")
    cache = stage2_cache(sc)
    x = {"s1": 1, "s2": 0}
    expected = ((1 - sc.pricing.delta) * expected_ap_revenue(sc, "s1", x, cache=cache)
                + expected_ap_revenue(sc, "s2", x, cache=cache))
    assert pure_profile_revenue(sc, x, cache=cache) == pytest.approx(expected, rel=1e-12)


def test_operator_revenue_mixed_degenerate_equals_pure():
    sc = load_scenario("scenarios/small_network.yaml")
    cache = stage2_cache(sc)
    for bits in itertools.product((0, 1), repeat=2):
        x = dict(zip(sc.subscriber_ids, bits))
        alpha = {uid: float(v) for uid, v in x.items()}
        pure = operator_revenue(sc, MembershipState(pure=x), cache=cache)
        mixed = operator_revenue(sc, MembershipState(mixed=alpha), cache=cache)
        assert mixed == pure  # zero-weight profiles are pruned, not averaged


def test_operator_revenue_mixed_is_profile_weighted_average():
    sc = load_scenario("scenarios/small_network.yaml")
    cache = stage2_cache(sc)
    alpha = {"s1": 0.25, "s2": 0.8}
    got = operator_revenue(sc, MembershipState(mixed=alpha), cache=cache)
    expected = 0.0
    for bits in itertools.product((0, 1), repeat=2):
        x = dict(zip(sc.subscriber_ids, bits))
        expected += profile_weight(alpha, x) * pure_profile_revenue(sc, x, cache=cache)
    assert got == pytest.approx(expected, rel=1e-12)


def test_operator_revenue_mc_close_to_exact():
    sc = load_scenario("scenarios/small_network.yaml")
    cache = stage2_cache(sc)
    alpha = {"s1": 0.3, "s2": 0.6}
    exact = operator_revenue(sc, MembershipState(mixed=alpha), cache=cache)
    cfg = ExpectationConfig(mode="mc", sample_count=50_000, rng_seed=17)
    mc = operator_revenue(sc, MembershipState(mixed=alpha), config=cfg, cache=cache)
    assert mc == pytest.approx(exact, rel=0.05)


def test_evaluate_location_pricing_cell():
    sc = load_scenario("scenarios/small_network.yaml")
    cell = evaluate_location_pricing(sc, [1.0, 1.0], delta=0.5)
    assert cell.valid and cell.converged
    assert np.isfinite(cell.revenue)
    assert set(cell.alpha) == set(sc.subscriber_ids)


def test_sweep_surface_shape_and_argmax():
    sc = load_scenario("scenarios/small_network.yaml")
    surf = sweep(sc, p_grid=[0.8, 1.0], delta_grid=[0.0, 0.5, 1.0])
    M = surf.revenue_matrix()
    assert M.shape == (2, 3)
    assert np.isfinite(M).all()
    best = surf.best_cell()
    assert best is not None
    assert best.revenue == np.nanmax(M)
    i, j = surf.argmax
    assert surf.cells[i][j] is best


def test_sweep_uniform_cell_matches_evaluate_location_pricing_bitwise():
    sc = load_scenario("scenarios/small_network.yaml")
    surf = sweep(sc, p_grid=[0.9, 1.1], delta_grid=[0.25, 0.75])
    for i, p in enumerate([0.9, 1.1]):
        for j, d in enumerate([0.25, 0.75]):
            cell = surf.cells[i][j]
            solo = evaluate_location_pricing(sc, [p] * sc.ap_count, delta=d)
            assert solo.revenue == cell.revenue
            assert solo.alpha == cell.alpha


def test_sweep_invalid_price_yields_invalid_cell():
    sc = load_scenario("scenarios/small_network.yaml")
    surf = sweep(sc, p_grid=[1.0, 50.0], delta_grid=[0.5])  # 50 > p_max
    good, bad = surf.cells[0][0], surf.cells[1][0]
    assert good.valid
    assert not bad.valid and bad.error is not None
    assert np.isnan(bad.revenue)
    best = surf.best_cell()
    assert best is good


def test_best_price_assignment_beats_or_matches_uniform():
    sc = load_scenario("scenarios/small_network.yaml")
    levels = [0.8, 1.2]
    best = best_price_assignment(sc, levels, delta=0.5)
    for p in levels:
        uni = evaluate_location_pricing(sc, [p] * sc.ap_count, delta=0.5)
        assert best.revenue >= uni.revenue - 1e-12


def test_best_price_assignment_guards_combinatorics():
    rng = np.random.default_rng(1)
    sc = random_scenario(rng, n_aps=3, n_aliens=1)
    with pytest.raises(ValueError):
        best_price_assignment(sc, levels=list(np.linspace(0.5, 2.0, 9)), delta=0.5)

"""Acceptance suite: one test per release criterion, each with a pinned
tolerance and a wall-clock budget.  Run with `pytest -v` to get one
pass/fail line per criterion."""

import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from crowdwifi.access_game import (
    AccessGameInstance,
    PaymentType,
    Player,
    SolveConfig,
    contraction_constant,
    solve_equilibrium,
    solve_two_player,
    verify_equilibrium,
)
from crowdwifi.cli import home_share_mobility, phase_rows
from crowdwifi.membership import (
    DegenerateThresholdError,
    bill_threshold,
    enumerate_pure_equilibria,
    mixed_expected_payoff,
    overall_payoff,
    payoff_gap,
    solve_mixed_equilibrium,
    stage2_cache,
)
from crowdwifi.operator import evaluate_location_pricing, revenue_breakdown, sweep
from crowdwifi.rate_model import (
    DEFAULT_80211G,
    occupancy_distribution,
    per_user_rate,
    rate_table,
)
from crowdwifi.scenario import load_scenario

from conftest import random_access_instance, random_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
SMALL = SCENARIO_DIR / "small_network.yaml"
POPULAR = SCENARIO_DIR / "popular_ap.yaml"

# Single-user through ten-user throughput for the default parameter set,
# frozen from an independent 50-digit evaluation of the closed form.
RATE_ORACLE = {
    1: 14.236637420712012095,
    2: 9.840402205019935334,
    3: 7.3745283921693287959,
    4: 5.8005742084606491082,
    5: 4.711657528553807392,
    6: 3.9156904352814376023,
    7: 3.310162937545235127,
    8: 2.8353755161758519091,
    9: 2.4542016046686044815,
    10: 2.1423386387458744557,
}


def elapsed_under(t0: float, budget: float, label: str) -> None:
    dt = time.perf_counter() - t0
    assert dt < budget, f"{label} took {dt:.1f}s, budget {budget}s"


def test_criterion_01_rate_oracle():
    """Throughput matches the frozen oracle and decreases with crowding."""
    t0 = time.perf_counter()
    for n, want in RATE_ORACLE.items():
        got = per_user_rate(n, DEFAULT_80211G)
        assert abs(got - want) / want <= 1e-9, f"n={n}: {got} vs {want}"
    rates = rate_table(30, DEFAULT_80211G)
    assert np.all(np.diff(rates) < 0.0), "rate must strictly decrease on 1..30"
    elapsed_under(t0, 1.0, "criterion 1")


def test_criterion_02_occupancy_vs_enumeration():
    """Activity-count pmf agrees with explicit subset enumeration."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_2)
    for _ in range(200):
        n = int(rng.integers(0, 11))
        sigmas = rng.random(n)
        fast = occupancy_distribution(sigmas)
        slow = np.zeros(n + 1)
        for mask in range(1 << n):
            p = 1.0
            k = 0
            for i in range(n):
                if mask >> i & 1:
                    p *= sigmas[i]
                    k += 1
                else:
                    p *= 1.0 - sigmas[i]
            slow[k] += p
        assert np.max(np.abs(fast - slow)) <= 1e-12
    elapsed_under(t0, 5.0, "criterion 2")


def test_criterion_03_random_access_equilibria():
    """Solved access games survive grid verification; two-player matches
    the closed form."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_3)
    config = SolveConfig(epsilon=1e-10, max_iters=20_000, damping=0.5)
    for trial in range(100):
        n = 2 if trial % 2 == 0 else 3
        inst = random_access_instance(rng, n)
        res = solve_equilibrium(inst, config)
        gap = verify_equilibrium(inst, res.profile, grid_step=1e-3)
        assert gap <= 1e-4, f"trial {trial}: improvement {gap}"
        if n == 2:
            closed = solve_two_player(inst)
            for uid, sigma in closed.items():
                assert abs(sigma - res.profile[uid]) <= 1e-6, \
                    f"trial {trial}, {uid}: {sigma} vs {res.profile[uid]}"
    elapsed_under(t0, 60.0, "criterion 3")


def test_criterion_04_contraction_rate():
    """Undamped best-response iteration contracts at least at rate c."""
    t0 = time.perf_counter()
    c = contraction_constant(DEFAULT_80211G)
    assert c < 1.0
    inst = AccessGameInstance(
        ap_id="owner",
        players=(Player("u0", PaymentType.PAYING, 0.8),
                 Player("u1", PaymentType.PAYING, 0.9)),
        price=1.0,
        rate_params=DEFAULT_80211G,
    )
    star = solve_two_player(inst)
    assert 0.0 < star["u0"] < 1.0 and 0.0 < star["u1"] < 1.0, "need interior point"
    res = solve_equilibrium(inst, SolveConfig(epsilon=1e-13, damping=1.0))
    assert res.converged
    target = np.array([star[uid] for uid in res.players])
    errors = [float(np.max(np.abs(np.array(pt) - target))) for pt in res.trajectory]
    # allow a tiny absolute slack for floating-point rounding near the fixed point
    for t in range(len(errors) - 1):
        assert errors[t + 1] <= c * errors[t] + 5e-12, \
            f"iteration {t}: {errors[t + 1]} > c * {errors[t]}"
    elapsed_under(t0, 10.0, "criterion 4")


def test_criterion_05_pure_equilibria_match_flip_enumeration():
    """Pure membership equilibria equal the exhaustive single-flip check."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_5)
    for trial in range(20):
        sc = random_scenario(rng, n_aps=3, n_aliens=1)
        cache = stage2_cache(sc)
        subs = sc.subscriber_ids
        found = {tuple(e[uid] for uid in subs)
                 for e in enumerate_pure_equilibria(sc, cache=cache)}
        expected = set()
        for bits in itertools.product((0, 1), repeat=len(subs)):
            x = dict(zip(subs, bits))
            is_eq = True
            for uid in subs:
                flipped = dict(x, **{uid: 1 - x[uid]})
                if overall_payoff(sc, uid, flipped, cache=cache) > \
                        overall_payoff(sc, uid, x, cache=cache):
                    is_eq = False
                    break
            if is_eq:
                expected.add(bits)
        assert found == expected, f"trial {trial}: {found} vs {expected}"
    elapsed_under(t0, 300.0, "criterion 5")


def test_criterion_06_home_time_threshold_sufficiency():
    """Above the home-time threshold, revenue sharing always wins."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_6)
    tested = 0
    attempts = 0
    while tested < 50:
        attempts += 1
        assert attempts < 500, "could not find 50 scenarios with defined thresholds"
        sc = random_scenario(rng, n_aps=int(rng.integers(2, 4)), n_aliens=1)
        cache = stage2_cache(sc)
        subs = sc.subscriber_ids
        focal = subs[int(rng.integers(0, len(subs)))]
        x_others = {uid: int(rng.integers(0, 2)) for uid in subs if uid != focal}
        try:
            eta_bar = bill_threshold(sc, focal, x_others, cache=cache)
        except DegenerateThresholdError:
            continue
        if eta_bar >= 1.0:
            continue  # nothing to test above the threshold
        tested += 1
        home_ap = sc.ap_of(focal)
        lo = max(eta_bar, 0.0)
        for eta in np.linspace(lo, 1.0, 6)[1:]:
            mob = home_share_mobility(sc.user(focal).mobility, home_ap, float(eta))
            sc_eta = sc.with_user(focal, mobility=mob)
            f = payoff_gap(sc_eta, focal, x_others, cache=cache)
            assert f >= -1e-9, \
                f"focal {focal}: eta={eta:.4f} > threshold {eta_bar:.4f} but f={f}"
    elapsed_under(t0, 300.0, "criterion 6")


def test_criterion_07_mixed_equilibrium_deviation_bound():
    """Smoothed equilibrium on the bundled scenario: converged, and no grid
    deviation improves a subscriber by more than gamma * ln 2."""
    t0 = time.perf_counter()
    sc = load_scenario(SMALL)
    cache = stage2_cache(sc)
    memo = {}
    half = {uid: 0.5 for uid in sc.subscriber_ids}
    scale = max(abs(mixed_expected_payoff(sc, uid, x, half, cache=cache, memo=memo))
                for uid in sc.subscriber_ids for x in (0, 1))
    gamma = 0.01 * scale
    res = solve_mixed_equilibrium(sc, gamma=gamma, tol=1e-6, cache=cache)
    assert res.converged and res.residual <= 1e-6

    bound = gamma * math.log(2.0) + 1e-6
    memo = {}
    for uid in sc.subscriber_ids:
        v0 = mixed_expected_payoff(sc, uid, 0, res.alpha, cache=cache, memo=memo)
        v1 = mixed_expected_payoff(sc, uid, 1, res.alpha, cache=cache, memo=memo)
        a = res.alpha[uid]
        current = (1.0 - a) * v0 + a * v1
        for g in np.linspace(0.0, 1.0, 11):
            improvement = ((1.0 - g) * v0 + g * v1) - current
            assert improvement <= bound, \
                f"{uid}: deviating to {g} improves by {improvement} > {bound}"
    elapsed_under(t0, 120.0, "criterion 7")


def test_criterion_08_membership_phase_structure():
    """Membership phase plot: home-time band chooses Bill, the high-demand
    low-home corner chooses Linus, and the response is monotone."""
    t0 = time.perf_counter()
    sc = load_scenario(SMALL)
    rho_grid = np.linspace(0.0, 1.0, 21)
    eta_grid = np.linspace(0.0, 1.0, 21)
    rows = phase_rows(sc, "s1", rho_grid, eta_grid)
    assert all(r[3] for r in rows), "all phase cells must converge"

    alpha = np.full((21, 21), np.nan)
    for rho, eta, a, _ in rows:
        alpha[int(round(rho * 20)), int(round(eta * 20))] = a
    assert np.isfinite(alpha).all()

    tol = 0.02  # headroom for smoothing/Monte-Carlo noise in alpha
    band = alpha[:, eta_grid >= 0.9 - 1e-12]
    assert (band >= 1.0 - tol).all(), f"band min {band.min()}"
    corner = alpha[np.ix_(rho_grid >= 0.8 - 1e-12, eta_grid <= 0.1 + 1e-12)]
    assert (corner <= 0.05).all(), f"corner max {corner.max()}"
    assert np.diff(alpha, axis=0).max() <= tol, "alpha must not increase with rho"
    assert np.diff(alpha, axis=1).min() >= -tol, "alpha must not decrease with home time"
    elapsed_under(t0, 600.0, "criterion 8")


def test_criterion_09_conservation_and_sweep_consistency():
    """Payments are conserved and uniform pricing cells are reproducible
    byte-for-byte through both entry points."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(20_9)
    for trial in range(20):
        sc = random_scenario(rng, n_aps=int(rng.integers(2, 4)), n_aliens=1)
        cache = stage2_cache(sc)
        x = {uid: int(rng.integers(0, 2)) for uid in sc.subscriber_ids}
        total, kept, shares = revenue_breakdown(sc, x, cache=cache)
        assert abs(total - (kept + sum(shares.values()))) <= 1e-9, f"trial {trial}"

        p = float(rng.uniform(0.5, 2.0))
        d = float(rng.uniform(0.0, 1.0))
        surf = sweep(sc, p_grid=[p], delta_grid=[d])
        cell = surf.cells[0][0]
        solo = evaluate_location_pricing(sc, [p] * sc.ap_count, delta=d)
        assert solo.revenue == cell.revenue, f"trial {trial}: revenue differs"
        assert solo.alpha == cell.alpha, f"trial {trial}: alpha differs"
        assert solo.converged == cell.converged
    elapsed_under(t0, 300.0, "criterion 9")


def test_criterion_10_popular_ap_prefers_interior_share():
    """On the popular-AP scenario the best interior revenue-share level is
    at least as good as either all-or-nothing edge."""
    t0 = time.perf_counter()
    sc = load_scenario(POPULAR)
    p_grid = [0.8, 1.0, 1.25]
    delta_grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    surf = sweep(sc, p_grid, delta_grid)
    for cell in surf.iter_cells():
        assert cell.valid, cell.error
        assert cell.converged
    M = surf.revenue_matrix()
    best_interior = np.max(M[:, 1:-1])
    best_edge0 = np.max(M[:, 0])
    best_edge1 = np.max(M[:, -1])
    assert best_interior >= best_edge0, f"{best_interior} < {best_edge0}"
    assert best_interior >= best_edge1, f"{best_interior} < {best_edge1}"
    elapsed_under(t0, 600.0, "criterion 10")


def test_criterion_11_cli_runs_are_reproducible(tmp_path):
    """Every CLI command produces byte-identical files on identical reruns."""
    t0 = time.perf_counter()
    commands = [
        ("access-eq", "--scenario", str(SMALL), "--ap", "1", "--bills", "s2"),
        ("membership-eq", "--scenario", str(SMALL)),
        ("membership-eq", "--scenario", str(SMALL), "--mode", "mc",
         "--samples", "2000", "--seed", "5"),
        ("sweep", "--scenario", str(POPULAR), "--p-grid", "0.8:1.25:3",
         "--delta-grid", "0:1:6"),
        ("phase-plot", "--scenario", str(SMALL), "--subscriber", "s1",
         "--rho-grid", "0:1:5", "--eta-grid", "0:1:5"),
    ]
    for k, args in enumerate(commands):
        outs = []
        for run in ("first", "second"):
            out = tmp_path / f"{k}_{run}.csv"
            proc = subprocess.run(
                [sys.executable, "-m", "crowdwifi.cli", *args, "--out", str(out)],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, f"{args}: {proc.stderr}"
            outs.append(out.read_bytes())
        assert outs[0] == outs[1], f"{args[0]} output differs between reruns"
    elapsed_under(t0, 120.0, "criterion 11")

"""Operator-side revenue evaluation and pricing sweeps.

The operator collects every payment made at every AP, then hands the
fraction delta of an AP's takings to its owner when that owner chose
Bill; payments at Linus-owned APs are kept in full.  Revenue is
evaluated at the membership equilibrium induced by a candidate
(price, delta) pair, which is what the sweep grids over.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .access_game import EquilibriumCache
from .membership import (
    ExpectationConfig,
    MembershipState,
    expected_ap_revenue,
    profile_weight,
    solve_mixed_equilibrium,
    stage2_cache,
)
from .randomness import TAG_OPERATOR, derive_rng
from .scenario import Scenario


def pure_profile_revenue(
    scenario: Scenario,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    """Expected per-slot operator revenue under a pure membership profile.

    sum over APs of (1 - delta * x_owner) * expected payments collected
    there: Bill owners siphon off their share, Linus owners none.
    """
    cache = cache if cache is not None else stage2_cache(scenario)
    delta = scenario.pricing.delta
    total = 0.0
    for ap in range(1, scenario.ap_count + 1):
        owner = scenario.ap_owner(ap)
        takings = expected_ap_revenue(scenario, owner, x, config, cache)
        total += (1.0 - delta * x[owner]) * takings
    return total


def revenue_breakdown(
    scenario: Scenario,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> tuple[float, float, dict[str, float]]:
    """(total payments, operator revenue, per-owner shares) for a pure profile."""
    cache = cache if cache is not None else stage2_cache(scenario)
    delta = scenario.pricing.delta
    total = 0.0
    shares: dict[str, float] = {}
    for ap in range(1, scenario.ap_count + 1):
        owner = scenario.ap_owner(ap)
        takings = expected_ap_revenue(scenario, owner, x, config, cache)
        total += takings
        shares[owner] = delta * x[owner] * takings
    operator = pure_profile_revenue(scenario, x, config, cache)
    return total, operator, shares


def operator_revenue(
    scenario: Scenario,
    membership: MembershipState,
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    """Expected per-slot operator revenue at a membership state.

    Mixed states average the pure-profile revenue over the product
    membership distribution; profiles of probability zero are skipped,
    so degenerate mixes cost the same as pure profiles.
    """
    cache = cache if cache is not None else stage2_cache(scenario)
    if membership.pure is not None:
        return pure_profile_revenue(scenario, membership.pure, config, cache)
    alpha = membership.mixed
    assert alpha is not None
    cfg = scenario.expectation if config is None else config
    subs = scenario.subscriber_ids
    if set(alpha) != set(subs):
        raise ValueError("mixed membership keys must match the subscriber set")
    if cfg.mode == "exact":
        total = 0.0
        for bits in itertools.product((0, 1), repeat=len(subs)):
            x = dict(zip(subs, bits))
            w = profile_weight(alpha, x)
            if w == 0.0:
                continue
            total += w * pure_profile_revenue(scenario, x, cfg, cache)
        return total
    rng = derive_rng(cfg.rng_seed, TAG_OPERATOR)
    alpha_vec = np.array([alpha[uid] for uid in subs])
    draws = rng.random((cfg.sample_count, len(subs))) < alpha_vec
    seen: dict[bytes, float] = {}
    total = 0.0
    for s in range(cfg.sample_count):
        key = draws[s].tobytes()
        v = seen.get(key)
        if v is None:
            x = {uid: int(hit) for uid, hit in zip(subs, draws[s])}
            v = pure_profile_revenue(scenario, x, cfg, cache)
            seen[key] = v
        total += v
    return total / cfg.sample_count


# ---------------------------------------------------------------------------
# Pricing evaluation and sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PricingCell:
    """Equilibrium outcome at one (price vector, delta) point."""

    prices: tuple[float, ...]
    delta: float
    revenue: float  # NaN when invalid
    alpha: dict[str, float] | None
    converged: bool
    iterations: int
    valid: bool
    error: str | None = None


def evaluate_location_pricing(
    scenario: Scenario,
    prices: Sequence[float],
    delta: float,
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> PricingCell:
    """Equilibrium revenue under per-AP prices and revenue share delta.

    Re-solves the membership equilibrium for the candidate pricing and
    evaluates operator revenue there.  A uniform price vector follows
    exactly the same code path as a sweep cell at that price.
    """
    prices = tuple(float(p) for p in prices)
    if len(prices) != scenario.ap_count:
        raise ValueError(f"need {scenario.ap_count} prices, got {len(prices)}")
    priced = scenario.with_pricing(price=prices, delta=float(delta))
    cache = cache if cache is not None else stage2_cache(priced)
    mixed = solve_mixed_equilibrium(priced, config=config, cache=cache)
    revenue = operator_revenue(priced, MembershipState(mixed=mixed.alpha), config, cache)
    return PricingCell(
        prices=prices,
        delta=float(delta),
        revenue=revenue,
        alpha=mixed.alpha,
        converged=mixed.converged,
        iterations=mixed.iterations,
        valid=True,
    )


@dataclass(frozen=True)
class RevenueSurface:
    """Operator revenue over a (price, delta) grid, plus its argmax."""

    p_grid: tuple[float, ...]
    delta_grid: tuple[float, ...]
    cells: tuple[tuple[PricingCell, ...], ...]  # indexed [i_p][j_delta]
    argmax: tuple[int, int] | None

    def revenue_matrix(self) -> np.ndarray:
        return np.array([[c.revenue for c in row] for row in self.cells])

    def best_cell(self) -> PricingCell | None:
        if self.argmax is None:
            return None
        i, j = self.argmax
        return self.cells[i][j]

    def iter_cells(self) -> Iterator[PricingCell]:
        for row in self.cells:
            yield from row


def sweep(
    scenario: Scenario,
    p_grid: Sequence[float],
    delta_grid: Sequence[float],
    config: ExpectationConfig | None = None,
) -> RevenueSurface:
    """Revenue surface over uniform prices x revenue shares.

    Every cell is solved independently from the scenario's seed (cells
    share nothing but the read-only access-game cache, so the surface
    does not depend on traversal order).  A cell whose evaluation
    raises is recorded as invalid and skipped by the argmax; solver
    non-convergence is only flagged, never fatal.
    """
    p_values = tuple(float(p) for p in p_grid)
    d_values = tuple(float(d) for d in delta_grid)
    cache = stage2_cache(scenario)
    rows = []
    for p in p_values:
        row = []
        for d in d_values:
            try:
                cell = evaluate_location_pricing(
                    scenario, (p,) * scenario.ap_count, d, config, cache
                )
            except Exception as err:  # noqa: BLE001 - cell isolation is the point
                cell = PricingCell(
                    prices=(p,) * scenario.ap_count,
                    delta=d,
                    revenue=math.nan,
                    alpha=None,
                    converged=False,
                    iterations=0,
                    valid=False,
                    error=str(err),
                )
            row.append(cell)
        rows.append(tuple(row))

    best: tuple[int, int] | None = None
    best_rev = -math.inf
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            if cell.valid and cell.revenue > best_rev:
                best, best_rev = (i, j), cell.revenue
    return RevenueSurface(p_values, d_values, tuple(rows), best)


def best_price_assignment(
    scenario: Scenario,
    levels: Sequence[float],
    delta: float,
    config: ExpectationConfig | None = None,
) -> PricingCell:
    """Best per-AP assignment of the given price levels, by exhaustion.

    Capped at 6 APs and 6 levels (6^6 cells); ties keep the first
    assignment in lexicographic level order.
    """
    levels = tuple(float(p) for p in levels)
    k = scenario.ap_count
    if k > 6 or len(levels) > 6:
        raise ValueError(
            f"exhaustive assignment capped at 6 APs x 6 levels, got {k} APs, "
            f"{len(levels)} levels"
        )
    cache = stage2_cache(scenario)
    best_cell: PricingCell | None = None
    for assignment in itertools.product(levels, repeat=k):
        cell = evaluate_location_pricing(scenario, assignment, delta, config, cache)
        if best_cell is None or (
            cell.valid and (not best_cell.valid or cell.revenue > best_cell.revenue)
        ):
            best_cell = cell
    assert best_cell is not None
    return best_cell

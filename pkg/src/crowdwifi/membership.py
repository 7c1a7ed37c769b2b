"""Membership selection game among subscribers.

Each subscriber chooses Linus (x=0: shares their AP for free, roams for
free, earns nothing) or Bill (x=1: roams as a paying user and receives
the fraction delta of the revenue collected at their own AP).  Aliens
are non-members who always pay.  A subscriber's overall payoff blends
home usage, roaming usage at other APs (each resolved by the slot-level
access game) and their revenue share, weighted by where they spend
their time slots.

Expectations over who is present where (and, for mixed strategies, over
who chose Bill) run either by exact enumeration or Monte Carlo; both
paths share one cache of solved access games.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator, Mapping

import numpy as np

from .access_game import (
    AccessGameInstance,
    EquilibriumCache,
    PaymentType,
    Player,
    SolveConfig,
    access_payoff,
)
from .randomness import TAG_AWAY, TAG_MIXED, TAG_REVENUE, derive_rng

if TYPE_CHECKING:  # pragma: no cover - annotation only
    from .scenario import Scenario


class Role(Enum):
    SUBSCRIBER = "subscriber"
    ALIEN = "alien"


@dataclass(frozen=True)
class UserProfile:
    """One network user.

    mobility has length K+1: entry 0 is the probability of spending a
    slot outside coverage, entry k the probability of being at AP k.
    Subscribers own the AP matching their position in the scenario's
    subscriber order; home_rate is the throughput they get at home
    (defaulting to the solo channel rate).  Aliens have no home.
    """

    user_id: str
    role: Role
    rho: float
    mobility: tuple[float, ...]
    home_rate: float | None = None

    def __post_init__(self) -> None:
        if self.rho < 0.0:
            raise ValueError(f"user {self.user_id}: rho must be >= 0, got {self.rho}")
        if any(m < 0.0 or m > 1.0 for m in self.mobility):
            raise ValueError(f"user {self.user_id}: mobility entries must lie in [0, 1]")
        if abs(sum(self.mobility) - 1.0) > 1e-9:
            raise ValueError(
                f"user {self.user_id}: mobility must sum to 1 within 1e-9, "
                f"got {sum(self.mobility)!r}"
            )
        if self.role is Role.ALIEN and self.home_rate is not None:
            raise ValueError(f"user {self.user_id}: aliens have no home AP, home_rate must be None")


@dataclass(frozen=True)
class ExpectationConfig:
    """How to evaluate expectations over presence and membership draws."""

    mode: str = "exact"
    sample_count: int = 20_000
    rng_seed: int = 0
    exact_population_limit: int = 12

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "mc"):
            raise ValueError(f"mode must be 'exact' or 'mc', got {self.mode!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


@dataclass
class MembershipState:
    """A pure (x in {0,1}) or mixed (alpha in [0,1]) membership profile."""

    pure: dict[str, int] | None = None
    mixed: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if (self.pure is None) == (self.mixed is None):
            raise ValueError("exactly one of pure/mixed must be given")
        if self.pure is not None and any(v not in (0, 1) for v in self.pure.values()):
            raise ValueError("pure memberships must be 0 or 1")
        if self.mixed is not None and any(not 0.0 <= v <= 1.0 for v in self.mixed.values()):
            raise ValueError("mixed memberships must lie in [0, 1]")


class DegenerateThresholdError(ValueError):
    """Raised when the Bill-advantage threshold is undefined."""


def stage2_cache(scenario: "Scenario") -> EquilibriumCache:
    """Fresh access-game cache configured from the scenario's solver block."""
    s = scenario.solver
    return EquilibriumCache(
        SolveConfig(epsilon=s.epsilon, max_iters=s.max_iters, damping=s.damping)
    )


def _config(scenario: "Scenario", config: ExpectationConfig | None) -> ExpectationConfig:
    return scenario.expectation if config is None else config


def _require_exact_ok(scenario: "Scenario", config: ExpectationConfig) -> None:
    if len(scenario.users) > config.exact_population_limit:
        raise ValueError(
            f"exact expectation needs population <= {config.exact_population_limit}, "
            f"got {len(scenario.users)} users; switch to mc mode"
        )


# ---------------------------------------------------------------------------
# Presence distributions
# ---------------------------------------------------------------------------

def presence_probability(
    scenario: "Scenario",
    present: Iterable[str],
    ap: int,
    excluded: Iterable[str] = (),
) -> float:
    """Probability that exactly ``present`` shows up at AP ``ap``.

    The AP owner never roams to their own AP and is skipped
    automatically; ``excluded`` names users conditioned out of the
    draw (e.g. a focal user whose location is already fixed).
    """
    owner = scenario.ap_owner(ap)
    present_set = set(present)
    excluded_set = set(excluded)
    if owner in present_set or owner in excluded_set:
        raise ValueError(f"AP owner {owner!r} cannot appear in present/excluded sets")
    if present_set & excluded_set:
        raise ValueError("present and excluded sets must be disjoint")
    prob = 1.0
    for user in scenario.users:
        uid = user.user_id
        if uid == owner or uid in excluded_set:
            continue
        eta = user.mobility[ap]
        prob *= eta if uid in present_set else 1.0 - eta
    return prob


def _presence_sets(
    scenario: "Scenario", ap: int, excluded: frozenset[str]
) -> Iterator[tuple[tuple[str, ...], float]]:
    """Yield (present ids, probability) over all positive-probability sets."""
    owner = scenario.ap_owner(ap)
    certain: list[str] = []
    varying: list[tuple[str, float]] = []
    for user in scenario.users:
        uid = user.user_id
        if uid == owner or uid in excluded:
            continue
        eta = user.mobility[ap]
        if eta >= 1.0:
            certain.append(uid)
        elif eta > 0.0:
            varying.append((uid, eta))
    base = tuple(certain)
    n = len(varying)
    for mask in range(1 << n):
        prob = 1.0
        chosen = list(base)
        for j, (uid, eta) in enumerate(varying):
            if mask >> j & 1:
                prob *= eta
                chosen.append(uid)
            else:
                prob *= 1.0 - eta
        yield tuple(chosen), prob


def _payment_type(scenario: "Scenario", uid: str, x: Mapping[str, int]) -> PaymentType:
    user = scenario.user(uid)
    if user.role is Role.ALIEN:
        return PaymentType.PAYING
    return PaymentType.PAYING if x[uid] == 1 else PaymentType.FREE


def _roster(
    scenario: "Scenario", present: Iterable[str], x: Mapping[str, int]
) -> tuple[Player, ...]:
    return tuple(
        Player(uid, _payment_type(scenario, uid, x), scenario.user(uid).rho)
        for uid in present
    )


def _game(scenario: "Scenario", ap: int, roster: tuple[Player, ...]) -> AccessGameInstance:
    return AccessGameInstance(
        ap_id=scenario.ap_owner(ap),
        players=roster,
        price=scenario.price(ap),
        rate_params=scenario.rate_params,
    )


# ---------------------------------------------------------------------------
# Slot payoffs and AP revenue
# ---------------------------------------------------------------------------

def home_slot_payoff(scenario: "Scenario", focal_id: str) -> float:
    """Payoff of a subscriber spending a slot at their own AP."""
    user = scenario.user(focal_id)
    if user.role is not Role.SUBSCRIBER:
        raise ValueError(f"{focal_id!r} is not a subscriber and has no home AP")
    return user.rho * math.log1p(user.home_rate)


def _slot_payoff_at(
    scenario: "Scenario",
    focal_id: str,
    ap: int,
    present: Iterable[str],
    x: Mapping[str, int],
    cache: EquilibriumCache,
) -> float:
    """Focal's equilibrium payoff at ``ap`` against ``present`` users."""
    roster = _roster(scenario, tuple(present) + (focal_id,), x)
    game = _game(scenario, ap, roster)
    result = cache.solve(game)
    others = {uid: s for uid, s in result.profile.items() if uid != focal_id}
    return access_payoff(game, focal_id, result.profile[focal_id], others)


def away_slot_payoff_stats(
    scenario: "Scenario",
    focal_id: str,
    ap: int,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> tuple[float, float]:
    """(estimate, standard error) of a visitor's slot payoff at ``ap``.

    The focal user is conditioned to be present; everyone else (owner
    aside) shows up according to their mobility.  Exact mode enumerates
    presence sets, mc mode samples them; exact estimates carry a
    standard error of 0.
    """
    cfg = _config(scenario, config)
    cache = cache if cache is not None else stage2_cache(scenario)
    owner = scenario.ap_owner(ap)
    if focal_id == owner:
        raise ValueError(f"{focal_id!r} owns AP {ap}; away payoff is for visitors")
    if cfg.mode == "exact":
        _require_exact_ok(scenario, cfg)
        total = 0.0
        for present, prob in _presence_sets(scenario, ap, frozenset((focal_id,))):
            if prob == 0.0:
                continue
            total += prob * _slot_payoff_at(scenario, focal_id, ap, present, x, cache)
        return total, 0.0

    focal_idx = scenario.user_index(focal_id)
    rng = derive_rng(cfg.rng_seed, TAG_AWAY, focal_idx, ap)
    candidates = [
        u for u in scenario.users
        if u.user_id not in (focal_id, owner) and u.mobility[ap] > 0.0
    ]
    etas = np.array([u.mobility[ap] for u in candidates])
    draws = rng.random((cfg.sample_count, len(candidates))) < etas
    values = _mc_values(
        draws,
        lambda mask: _slot_payoff_at(
            scenario,
            focal_id,
            ap,
            [u.user_id for u, hit in zip(candidates, mask) if hit],
            x,
            cache,
        ),
    )
    return _mean_stderr(values)


def away_slot_payoff(
    scenario: "Scenario",
    focal_id: str,
    ap: int,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    return away_slot_payoff_stats(scenario, focal_id, ap, x, config, cache)[0]


def _mc_values(draws: np.ndarray, evaluate) -> np.ndarray:
    """Evaluate a per-sample function, deduplicating repeated rows."""
    values = np.empty(draws.shape[0])
    seen: dict[bytes, float] = {}
    for s in range(draws.shape[0]):
        key = draws[s].tobytes()
        v = seen.get(key)
        if v is None:
            v = evaluate(draws[s])
            seen[key] = v
        values[s] = v
    return values


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(values.size))


def _roster_payment(
    scenario: "Scenario",
    ap: int,
    present: Iterable[str],
    x: Mapping[str, int],
    cache: EquilibriumCache,
) -> float:
    """Total payments collected at ``ap`` from one presence draw."""
    present = tuple(present)
    if not present:
        return 0.0
    roster = _roster(scenario, present, x)
    if all(p.payment_type is PaymentType.FREE for p in roster):
        return 0.0
    result = cache.solve(_game(scenario, ap, roster))
    price = scenario.price(ap)
    return sum(
        price * result.profile[p.user_id]
        for p in roster
        if p.payment_type is PaymentType.PAYING
    )


def expected_ap_revenue_stats(
    scenario: "Scenario",
    owner_id: str,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> tuple[float, float]:
    """(estimate, standard error) of per-slot payments collected at an AP.

    Sums price * sigma over paying visitors (Bills and Aliens) at the
    owner's AP; Linus visitors contribute nothing.  Independent of the
    owner's own membership, since owners never visit their own AP.
    """
    cfg = _config(scenario, config)
    cache = cache if cache is not None else stage2_cache(scenario)
    ap = scenario.ap_of(owner_id)
    if cfg.mode == "exact":
        _require_exact_ok(scenario, cfg)
        total = 0.0
        for present, prob in _presence_sets(scenario, ap, frozenset()):
            if prob == 0.0:
                continue
            total += prob * _roster_payment(scenario, ap, present, x, cache)
        return total, 0.0

    owner_idx = scenario.user_index(owner_id)
    rng = derive_rng(cfg.rng_seed, TAG_REVENUE, owner_idx, ap)
    candidates = [
        u for u in scenario.users if u.user_id != owner_id and u.mobility[ap] > 0.0
    ]
    etas = np.array([u.mobility[ap] for u in candidates])
    draws = rng.random((cfg.sample_count, len(candidates))) < etas
    values = _mc_values(
        draws,
        lambda mask: _roster_payment(
            scenario,
            ap,
            [u.user_id for u, hit in zip(candidates, mask) if hit],
            x,
            cache,
        ),
    )
    return _mean_stderr(values)


def expected_ap_revenue(
    scenario: "Scenario",
    owner_id: str,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    return expected_ap_revenue_stats(scenario, owner_id, x, config, cache)[0]


# ---------------------------------------------------------------------------
# Overall payoff and pure equilibria
# ---------------------------------------------------------------------------

def overall_payoff(
    scenario: "Scenario",
    focal_id: str,
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    """Expected total payoff of a subscriber over the whole horizon.

    time_slots * (x_i * delta * revenue share at their AP
                  + sum_k eta_{i,k} * slot payoff at AP k),
    where the k = home term uses the uncontended home rate and slots
    outside coverage pay nothing.
    """
    user = scenario.user(focal_id)
    if user.role is not Role.SUBSCRIBER:
        raise ValueError(f"overall payoff is defined for subscribers, not {focal_id!r}")
    cache = cache if cache is not None else stage2_cache(scenario)
    home_ap = scenario.ap_of(focal_id)
    roam = 0.0
    for ap in range(1, scenario.ap_count + 1):
        eta = user.mobility[ap]
        if eta == 0.0:
            continue
        if ap == home_ap:
            roam += eta * home_slot_payoff(scenario, focal_id)
        else:
            roam += eta * away_slot_payoff(scenario, focal_id, ap, x, config, cache)
    share = 0.0
    if x[focal_id] == 1:
        share = scenario.pricing.delta * expected_ap_revenue(
            scenario, focal_id, x, config, cache
        )
    return scenario.time_slots * (share + roam)


def payoff_gap(
    scenario: "Scenario",
    focal_id: str,
    x_others: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    """Bill-minus-Linus payoff difference f_i, others' memberships fixed."""
    cache = cache if cache is not None else stage2_cache(scenario)
    as_bill = dict(x_others)
    as_bill[focal_id] = 1
    as_linus = dict(x_others)
    as_linus[focal_id] = 0
    return overall_payoff(scenario, focal_id, as_bill, config, cache) - overall_payoff(
        scenario, focal_id, as_linus, config, cache
    )


@dataclass(frozen=True)
class PureEquilibriumCheck:
    is_equilibrium: bool
    signed_gaps: dict[str, float]  # (2 x_i - 1) * f_i per subscriber
    violators: tuple[str, ...]


def is_pure_equilibrium(
    scenario: "Scenario",
    x: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> PureEquilibriumCheck:
    """Check x against every unilateral membership flip.

    A profile is an equilibrium when each subscriber weakly prefers
    their own choice: (2 x_i - 1) * f_i >= 0, with indifference
    (f_i = 0) counting as satisfied.
    """
    cache = cache if cache is not None else stage2_cache(scenario)
    signed: dict[str, float] = {}
    violators: list[str] = []
    for uid in scenario.subscriber_ids:
        others = {j: x[j] for j in scenario.subscriber_ids if j != uid}
        gap = payoff_gap(scenario, uid, others, config, cache)
        value = (2 * x[uid] - 1) * gap
        signed[uid] = value
        if value < 0.0:
            violators.append(uid)
    return PureEquilibriumCheck(not violators, signed, tuple(violators))


def enumerate_pure_equilibria(
    scenario: "Scenario",
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> list[dict[str, int]]:
    """All pure equilibria, by exhaustive search over 2^K profiles."""
    subs = scenario.subscriber_ids
    if len(subs) > 12:
        raise ValueError(f"exhaustive search capped at 12 subscribers, got {len(subs)}")
    cache = cache if cache is not None else stage2_cache(scenario)
    found = []
    for bits in itertools.product((0, 1), repeat=len(subs)):
        x = dict(zip(subs, bits))
        if is_pure_equilibrium(scenario, x, config, cache).is_equilibrium:
            found.append(x)
    return found


def bill_threshold(
    scenario: "Scenario",
    focal_id: str,
    x_others: Mapping[str, int],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> float:
    """Home-time threshold above which Bill is the better choice.

    Compares the guaranteed revenue share against the worst-case
    roaming loss: staying home more than the returned fraction of the
    time makes f_i >= 0.  Raises DegenerateThresholdError when roaming
    as Bill never costs anything (denominator <= 0), in which case the
    comparison is degenerate and no threshold exists.
    """
    cache = cache if cache is not None else stage2_cache(scenario)
    x_any = dict(x_others)
    x_any[focal_id] = 0  # own entry irrelevant: owners never visit their own AP
    revenue = expected_ap_revenue(scenario, focal_id, x_any, config, cache)
    home_ap = scenario.ap_of(focal_id)
    drop = 0.0
    for ap in range(1, scenario.ap_count + 1):
        if ap == home_ap:
            continue
        as_linus = dict(x_others)
        as_linus[focal_id] = 0
        as_bill = dict(x_others)
        as_bill[focal_id] = 1
        drop += away_slot_payoff(scenario, focal_id, ap, as_linus, config, cache)
        drop -= away_slot_payoff(scenario, focal_id, ap, as_bill, config, cache)
    if drop <= 0.0:
        raise DegenerateThresholdError(
            f"threshold undefined for {focal_id!r}: Bill comparison degenerate "
            f"(roaming payoff drop {drop!r} is not positive)"
        )
    return 1.0 - scenario.pricing.delta * revenue / drop


# ---------------------------------------------------------------------------
# Mixed strategies
# ---------------------------------------------------------------------------

def profile_weight(alpha: Mapping[str, float], x: Mapping[str, int]) -> float:
    """Probability of pure profile x under independent mixing alpha."""
    w = 1.0
    for uid, a in alpha.items():
        w *= a if x[uid] == 1 else 1.0 - a
    return w


PayoffMemo = dict[tuple[str, tuple[int, ...]], float]


def mixed_expected_payoff_stats(
    scenario: "Scenario",
    focal_id: str,
    x_i: int,
    alpha: Mapping[str, float],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
    memo: PayoffMemo | None = None,
) -> tuple[float, float]:
    """(estimate, stderr) of a subscriber's payoff for a fixed own choice.

    Averages the overall payoff over opponents' memberships drawn from
    ``alpha``.  Exact mode enumerates opponent profiles (weights of
    zero are skipped, so degenerate mixes cost nothing); mc mode draws
    memberships, the focal user's location and everyone's presence
    jointly from streams keyed on (seed, focal, own choice), which
    keeps repeated evaluations at different alphas positively coupled
    and the fixed-point iteration deterministic.
    """
    cfg = _config(scenario, config)
    cache = cache if cache is not None else stage2_cache(scenario)
    subs = scenario.subscriber_ids
    others = [uid for uid in subs if uid != focal_id]
    if cfg.mode == "exact":
        _require_exact_ok(scenario, cfg)
        if memo is None:
            memo = {}
        total = 0.0
        for bits in itertools.product((0, 1), repeat=len(others)):
            w = 1.0
            for uid, b in zip(others, bits):
                a = alpha[uid]
                w *= a if b else 1.0 - a
            if w == 0.0:
                continue
            x = dict(zip(others, bits))
            x[focal_id] = x_i
            key = (focal_id, tuple(x[uid] for uid in subs))
            v = memo.get(key)
            if v is None:
                v = overall_payoff(scenario, focal_id, x, cfg, cache)
                memo[key] = v
            total += w * v
        return total, 0.0

    return _mixed_payoff_mc(scenario, focal_id, x_i, alpha, cfg, cache)


def _mixed_payoff_mc(
    scenario: "Scenario",
    focal_id: str,
    x_i: int,
    alpha: Mapping[str, float],
    cfg: ExpectationConfig,
    cache: EquilibriumCache,
) -> tuple[float, float]:
    user = scenario.user(focal_id)
    subs = scenario.subscriber_ids
    others = [uid for uid in subs if uid != focal_id]
    home_ap = scenario.ap_of(focal_id)
    delta = scenario.pricing.delta
    horizon = scenario.time_slots
    rng = derive_rng(cfg.rng_seed, TAG_MIXED, scenario.user_index(focal_id), x_i)
    S = cfg.sample_count
    pop = scenario.users

    u_member = rng.random((S, len(others)))
    loc_u = rng.random(S)
    pres_u = rng.random((S, len(pop)))
    rev_u = rng.random((S, len(pop)))
    cum = np.cumsum(user.mobility)
    alpha_vec = np.array([alpha[uid] for uid in others])
    home_pay = home_slot_payoff(scenario, focal_id)

    values = np.empty(S)
    for s in range(S):
        x = {uid: int(hit) for uid, hit in zip(others, u_member[s] < alpha_vec)}
        x[focal_id] = x_i
        loc = int(np.searchsorted(cum, loc_u[s], side="right"))
        if loc == 0:
            slot = 0.0
        elif loc == home_ap:
            slot = home_pay
        else:
            owner = scenario.ap_owner(loc)
            present = [
                u.user_id
                for j, u in enumerate(pop)
                if u.user_id not in (focal_id, owner) and pres_u[s, j] < u.mobility[loc]
            ]
            slot = _slot_payoff_at(scenario, focal_id, loc, present, x, cache)
        share = 0.0
        if x_i == 1:
            present = [
                u.user_id
                for j, u in enumerate(pop)
                if u.user_id != focal_id and rev_u[s, j] < u.mobility[home_ap]
            ]
            share = delta * _roster_payment(scenario, home_ap, present, x, cache)
        values[s] = horizon * (share + slot)
    return _mean_stderr(values)


def mixed_expected_payoff(
    scenario: "Scenario",
    focal_id: str,
    x_i: int,
    alpha: Mapping[str, float],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
    memo: PayoffMemo | None = None,
) -> float:
    return mixed_expected_payoff_stats(scenario, focal_id, x_i, alpha, config, cache, memo)[0]


def mixed_payoff(
    scenario: "Scenario",
    focal_id: str,
    alpha_i: float,
    alpha: Mapping[str, float],
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
    memo: PayoffMemo | None = None,
) -> float:
    """Payoff when the focal subscriber also mixes: linear in alpha_i."""
    if not 0.0 <= alpha_i <= 1.0:
        raise ValueError(f"alpha_i must lie in [0, 1], got {alpha_i}")
    v1 = mixed_expected_payoff(scenario, focal_id, 1, alpha, config, cache, memo)
    v0 = mixed_expected_payoff(scenario, focal_id, 0, alpha, config, cache, memo)
    return alpha_i * v1 + (1.0 - alpha_i) * v0


def _logistic(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def smoothed_best_response_step(
    scenario: "Scenario",
    alpha: Mapping[str, float],
    gamma: float,
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
    memo: PayoffMemo | None = None,
) -> dict[str, float]:
    """One synchronous logit-response sweep over all subscribers.

    Each subscriber's next mixing weight is the logistic of their
    payoff advantage for Bill scaled by the temperature gamma, computed
    against everyone else's current alpha (Jacobi update).
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    cache = cache if cache is not None else stage2_cache(scenario)
    new: dict[str, float] = {}
    for uid in scenario.subscriber_ids:
        v1 = mixed_expected_payoff(scenario, uid, 1, alpha, config, cache, memo)
        v0 = mixed_expected_payoff(scenario, uid, 0, alpha, config, cache, memo)
        new[uid] = _logistic((v1 - v0) / gamma)
    return new


@dataclass(frozen=True)
class MixedEquilibriumResult:
    alpha: dict[str, float]
    converged: bool
    iterations: int
    residual: float
    gamma_final: float
    subscriber_ids: tuple[str, ...]
    trajectory: tuple[tuple[float, ...], ...]


def solve_mixed_equilibrium(
    scenario: "Scenario",
    alpha0: Mapping[str, float] | None = None,
    gamma: float | None = None,
    tol: float = 1e-6,
    max_iters: int | None = None,
    anneal_beta: float | None = None,
    config: ExpectationConfig | None = None,
    cache: EquilibriumCache | None = None,
) -> MixedEquilibriumResult:
    """Fixed point of the smoothed best response by synchronous sweeps.

    gamma defaults to the scenario's solver setting; optional geometric
    annealing shrinks it by anneal_beta each sweep.  Stops when the
    sup-norm change of alpha falls below tol; running out of sweeps
    reports converged=False rather than raising.
    """
    subs = scenario.subscriber_ids
    cache = cache if cache is not None else stage2_cache(scenario)
    memo: PayoffMemo = {}
    gamma = scenario.solver.gamma if gamma is None else gamma
    max_iters = scenario.solver.mixed_max_iters if max_iters is None else max_iters
    if anneal_beta is None:
        anneal_beta = scenario.solver.anneal_beta
    if anneal_beta is not None and not 0.0 < anneal_beta <= 1.0:
        raise ValueError(f"anneal_beta must lie in (0, 1], got {anneal_beta}")
    alpha = dict(alpha0) if alpha0 is not None else {uid: 0.5 for uid in subs}
    if set(alpha) != set(subs):
        raise ValueError("alpha0 keys must match the subscriber set")

    trajectory = [tuple(alpha[uid] for uid in subs)]
    gamma_t = gamma
    converged = False
    iterations = 0
    residual = math.inf
    for t in range(max_iters):
        gamma_t = gamma * (anneal_beta**t) if anneal_beta is not None else gamma
        new = smoothed_best_response_step(scenario, alpha, gamma_t, config, cache, memo)
        residual = max(abs(new[uid] - alpha[uid]) for uid in subs) if subs else 0.0
        alpha = new
        iterations += 1
        trajectory.append(tuple(alpha[uid] for uid in subs))
        if residual <= tol:
            converged = True
            break
    return MixedEquilibriumResult(
        alpha=alpha,
        converged=converged,
        iterations=iterations,
        residual=residual,
        gamma_final=gamma_t,
        subscriber_ids=tuple(subs),
        trajectory=tuple(trajectory),
    )

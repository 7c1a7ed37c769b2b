"""Network access game played at a single AP during one time slot.

Players present at the AP pick an access probability sigma in [0, 1].
Free users (the AP owner never plays; Linus-style visitors ride free)
get utility rho * ln(1 + r * sigma) where r is the expected throughput
given everyone else's intensity.  Paying users (Bill-style subscribers
and Aliens) are charged price * sigma on top.  This module computes
payoffs, best responses, and equilibria of that game.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .rate_model import RateModelParams, DEFAULT_80211G, occupancy_distribution, rate_table


class PaymentType(Enum):
    FREE = "free"
    PAYING = "paying"


@dataclass(frozen=True)
class Player:
    user_id: str
    payment_type: PaymentType
    rho: float  # utility weight on log-throughput, >= 0

    def __post_init__(self) -> None:
        if self.rho < 0.0:
            raise ValueError(f"player {self.user_id}: rho must be >= 0, got {self.rho}")


@dataclass(frozen=True)
class AccessGameInstance:
    """One slot's game at one AP: roster, price and channel model.

    The AP owner is identified by ap_id and is never part of the
    roster; they do not contend for their own channel.
    """

    ap_id: str
    players: tuple[Player, ...]
    price: float
    rate_params: RateModelParams = DEFAULT_80211G

    def __post_init__(self) -> None:
        ids = [p.user_id for p in self.players]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate players in roster: {sorted(ids)}")
        if any(p.user_id == self.ap_id for p in self.players):
            raise ValueError(f"AP owner {self.ap_id!r} cannot appear in its own roster")
        if self.price <= 0.0:
            raise ValueError(f"price must be positive, got {self.price}")

    def player(self, user_id: str) -> Player:
        for p in self.players:
            if p.user_id == user_id:
                return p
        raise KeyError(f"no player {user_id!r} in roster")


# A (possibly non-equilibrium) strategy profile: user_id -> sigma.
AccessProfile = Mapping[str, float]


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float = 1e-9
    max_iters: int = 10_000
    damping: float = 1.0
    initial: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.epsilon <= 0.0 or self.max_iters < 1:
            raise ValueError("epsilon must be > 0 and max_iters >= 1")


@dataclass(frozen=True)
class EquilibriumResult:
    """Outcome of a best-response iteration.

    trajectory holds the sigma vector after every sweep (including the
    starting point), aligned with ``players``; non-convergence is
    reported through ``converged``, never raised.
    """

    profile: dict[str, float]
    converged: bool
    iterations: int
    residual: float
    contraction_estimate: float | None
    players: tuple[str, ...]
    trajectory: tuple[tuple[float, ...], ...]

    def sigma(self, user_id: str) -> float:
        return self.profile[user_id]


def _check_profile(instance: AccessGameInstance, profile: AccessProfile) -> None:
    ids = {p.user_id for p in instance.players}
    if set(profile) != ids:
        raise ValueError(f"profile keys {sorted(profile)} do not match roster {sorted(ids)}")
    for uid, s in profile.items():
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"sigma for {uid} must lie in [0, 1], got {s}")


def access_payoff(
    instance: AccessGameInstance,
    focal_id: str,
    sigma_focal: float,
    others: AccessProfile,
) -> float:
    """Slot payoff of one player given everyone else's intensities."""
    if not 0.0 <= sigma_focal <= 1.0:
        raise ValueError(f"sigma must lie in [0, 1], got {sigma_focal}")
    focal = instance.player(focal_id)
    other_sigmas = [others[p.user_id] for p in instance.players if p.user_id != focal_id]
    rbar = _expected_rate(other_sigmas, instance.rate_params)
    value = focal.rho * math.log1p(rbar * sigma_focal)
    if focal.payment_type is PaymentType.PAYING:
        value -= instance.price * sigma_focal
    return value


def _expected_rate(other_sigmas: Sequence[float], params: RateModelParams) -> float:
    probs = occupancy_distribution(other_sigmas)
    return float(probs @ rate_table(probs.size, params))


def best_response(instance: AccessGameInstance, focal_id: str, others: AccessProfile) -> float:
    """Payoff-maximising sigma for one player, others held fixed.

    Free users saturate at 1.  For paying users the objective is
    strictly concave, so the first-order condition rho / p - 1/rbar,
    clipped to [0, 1], is the unique maximiser.
    """
    focal = instance.player(focal_id)
    if focal.payment_type is PaymentType.FREE:
        return 1.0
    other_sigmas = [others[p.user_id] for p in instance.players if p.user_id != focal_id]
    rbar = _expected_rate(other_sigmas, instance.rate_params)
    return min(1.0, max(focal.rho / instance.price - 1.0 / rbar, 0.0))


def contraction_constant(params: RateModelParams = DEFAULT_80211G) -> float:
    """Lipschitz bound of the two-player best-response map.

    c = (R(1) - R(2)) / R(2)^2; a value below 1 certifies uniqueness of
    the two-player equilibrium and linear convergence of best-response
    iteration at rate c.
    """
    r = rate_table(2, params)
    return float((r[0] - r[1]) / r[1] ** 2)


def _default_start(instance: AccessGameInstance) -> np.ndarray:
    # Best response against an empty channel: free users at 1, paying
    # users at their solo optimum.
    r1 = rate_table(1, instance.rate_params)[0]
    start = np.empty(len(instance.players))
    for i, p in enumerate(instance.players):
        if p.payment_type is PaymentType.FREE:
            start[i] = 1.0
        else:
            start[i] = min(1.0, max(p.rho / instance.price - 1.0 / r1, 0.0))
    return start


def solve_equilibrium(
    instance: AccessGameInstance,
    config: SolveConfig = SolveConfig(),
) -> EquilibriumResult:
    """Damped synchronous best-response iteration.

    Every sweep maps the whole profile through the best-response
    operator at once and mixes it with the previous profile using the
    damping weight.  Stops when the sup-norm step falls below epsilon.
    """
    players = instance.players
    n = len(players)
    ids = tuple(p.user_id for p in players)
    if config.initial is not None:
        _check_profile(instance, config.initial)
        sigma = np.array([config.initial[uid] for uid in ids], dtype=float)
    else:
        sigma = _default_start(instance)

    rates = rate_table(max(n, 1), instance.rate_params)
    free_mask = np.array([p.payment_type is PaymentType.FREE for p in players])
    rho_over_p = np.array([p.rho / instance.price for p in players])

    trajectory = [tuple(sigma)]
    residuals: list[float] = []
    converged = False
    iterations = 0
    residual = math.inf
    for _ in range(config.max_iters):
        target = np.empty(n)
        for i in range(n):
            if free_mask[i]:
                target[i] = 1.0
                continue
            others = np.delete(sigma, i)
            probs = occupancy_distribution(others)
            rbar = float(probs @ rates[: probs.size])
            target[i] = min(1.0, max(rho_over_p[i] - 1.0 / rbar, 0.0))
        new_sigma = (1.0 - config.damping) * sigma + config.damping * target
        residual = float(np.max(np.abs(new_sigma - sigma))) if n else 0.0
        sigma = new_sigma
        iterations += 1
        trajectory.append(tuple(sigma))
        residuals.append(residual)
        if residual <= config.epsilon:
            converged = True
            break

    estimate = _contraction_estimate(residuals, config.epsilon)
    profile = {uid: float(s) for uid, s in zip(ids, sigma)}
    return EquilibriumResult(
        profile=profile,
        converged=converged,
        iterations=iterations,
        residual=residual,
        contraction_estimate=estimate,
        players=ids,
        trajectory=tuple(trajectory),
    )


def _contraction_estimate(residuals: Sequence[float], epsilon: float) -> float | None:
    # Observed worst-case ratio of successive sup-norm steps, ignoring
    # steps already at the noise floor.
    ratios = [
        residuals[t + 1] / residuals[t]
        for t in range(len(residuals) - 1)
        if residuals[t] > 10.0 * epsilon
    ]
    return max(ratios) if ratios else None


def solve_two_player(instance: AccessGameInstance) -> dict[str, float]:
    """Closed-form equilibrium of the two-player game.

    Free players pin at 1.  With two paying players the interior case
    reduces to the unique fixed point of the composed clipped
    best-response map, found by bisection (the composition is
    nondecreasing, so sign bracketing is guaranteed); boundary cases
    are classified directly from rho/p against 1/R(1) and 1/R(2).
    """
    if len(instance.players) != 2:
        raise ValueError(f"need exactly two players, got {len(instance.players)}")
    p1, p2 = instance.players
    r = rate_table(2, instance.rate_params)
    r1, r2 = float(r[0]), float(r[1])

    def rate_vs(sigma_other: float) -> float:
        # Expected rate seen by the focal user: linear mix of the solo
        # and shared-channel rates.
        return r1 - sigma_other * (r1 - r2)

    def br(player: Player, sigma_other: float) -> float:
        if player.payment_type is PaymentType.FREE:
            return 1.0
        raw = player.rho / instance.price - 1.0 / rate_vs(sigma_other)
        return min(1.0, max(raw, 0.0))

    sig: dict[str, float] = {}
    # Any free player sits at 1 regardless of the opponent.
    if p1.payment_type is PaymentType.FREE:
        sig[p1.user_id] = 1.0
        sig[p2.user_id] = br(p2, 1.0)
        return sig
    if p2.payment_type is PaymentType.FREE:
        sig[p2.user_id] = 1.0
        sig[p1.user_id] = br(p1, 1.0)
        return sig

    # Both paying: check the per-player pins first.
    def pinned(player: Player) -> float | None:
        a = player.rho / instance.price
        if a - 1.0 / r1 <= 0.0:
            return 0.0  # even an empty channel is not worth paying for
        if a - 1.0 / r2 >= 1.0:
            return 1.0  # saturated even against a saturated opponent
        return None

    pin1, pin2 = pinned(p1), pinned(p2)
    if pin1 is not None and pin2 is not None:
        return {p1.user_id: pin1, p2.user_id: pin2}
    if pin1 is not None:
        return {p1.user_id: pin1, p2.user_id: br(p2, pin1)}
    if pin2 is not None:
        return {p2.user_id: pin2, p1.user_id: br(p1, pin2)}

    # Interior: bisect h(s) = br1(br2(s)) - s, which brackets a root on
    # [0, 1] because the composition maps [0, 1] into itself.
    def h(s: float) -> float:
        return br(p1, br(p2, s)) - s

    lo, hi = 0.0, 1.0
    if h(lo) <= 0.0:
        s1 = lo
    elif h(hi) >= 0.0:
        s1 = hi
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if h(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12:
                break
        s1 = 0.5 * (lo + hi)
    s2 = br(p2, s1)
    # Polish with exact alternating best responses when the map is a
    # contraction; a few rounds push the residual to the float floor.
    if contraction_constant(instance.rate_params) < 1.0:
        for _ in range(8):
            s1 = br(p1, s2)
            s2 = br(p2, s1)
    return {p1.user_id: float(s1), p2.user_id: float(s2)}


def verify_equilibrium(
    instance: AccessGameInstance,
    profile: AccessProfile,
    grid_step: float = 1e-3,
) -> float:
    """Largest unilateral payoff gain found on a sigma grid.

    For each player the payoff is evaluated on a uniform grid of
    candidate sigmas with everyone else fixed at ``profile``; returns
    the maximum improvement over the profile payoff, floored at 0.
    A small value certifies an approximate equilibrium.
    """
    _check_profile(instance, profile)
    if grid_step <= 0.0 or grid_step > 1.0:
        raise ValueError(f"grid_step must lie in (0, 1], got {grid_step}")
    n_steps = int(round(1.0 / grid_step))
    grid = np.linspace(0.0, 1.0, n_steps + 1)
    worst = 0.0
    for player in instance.players:
        others = [profile[q.user_id] for q in instance.players if q.user_id != player.user_id]
        rbar = _expected_rate(others, instance.rate_params)
        pay = player.rho * np.log1p(rbar * grid)
        if player.payment_type is PaymentType.PAYING:
            pay = pay - instance.price * grid
        s0 = profile[player.user_id]
        current = player.rho * math.log1p(rbar * s0)
        if player.payment_type is PaymentType.PAYING:
            current -= instance.price * s0
        worst = max(worst, float(pay.max()) - current)
    return max(0.0, worst)


class EquilibriumCache:
    """Thread-safe cache of solved access games.

    Instances are keyed by the multiset of (payment type, rho) on the
    roster plus price and channel constants, so expectation sums over
    presence sets reuse each distinct game once.  Cached solves run on
    a canonical roster sorted by (type, rho); identical players receive
    identical sigmas under the symmetric synchronous iteration, which
    makes mapping the canonical solution back to arbitrary ids exact.
    """

    def __init__(self, config: SolveConfig = SolveConfig()):
        self.config = config
        self._store: dict[tuple, EquilibriumResult] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def _key(instance: AccessGameInstance) -> tuple:
        roster = tuple(sorted((p.payment_type.value, p.rho) for p in instance.players))
        rp = instance.rate_params
        return (
            roster,
            instance.price,
            (rp.tau, rp.payload_bits, rp.backoff_slot_us, rp.collision_slot_us, rp.success_slot_us),
        )

    def solve(self, instance: AccessGameInstance) -> EquilibriumResult:
        """Equilibrium profile for ``instance``, solved once per key."""
        key = self._key(instance)
        with self._lock:
            canonical = self._store.get(key)
        if canonical is None:
            order = sorted(instance.players, key=lambda p: (p.payment_type.value, p.rho))
            stand_in = AccessGameInstance(
                ap_id="#cache",
                players=tuple(
                    Player(str(i), p.payment_type, p.rho) for i, p in enumerate(order)
                ),
                price=instance.price,
                rate_params=instance.rate_params,
            )
            canonical = solve_equilibrium(stand_in, self.config)
            with self._lock:
                canonical = self._store.setdefault(key, canonical)
                self.misses += 1
        else:
            with self._lock:
                self.hits += 1
        # Rebind canonical sigmas to the instance's ids via the shared
        # (type, rho) sort order; ties are between identical players.
        order = sorted(instance.players, key=lambda p: (p.payment_type.value, p.rho))
        sigmas = [canonical.profile[str(i)] for i in range(len(order))]
        profile = {p.user_id: s for p, s in zip(order, sigmas)}
        return EquilibriumResult(
            profile=profile,
            converged=canonical.converged,
            iterations=canonical.iterations,
            residual=canonical.residual,
            contraction_estimate=canonical.contraction_estimate,
            players=tuple(p.user_id for p in instance.players),
            trajectory=canonical.trajectory,
        )

    @property
    def n_unconverged(self) -> int:
        with self._lock:
            return sum(1 for r in self._store.values() if not r.converged)

    def __len__(self) -> int:
        with self._lock:
            return len(self._store)

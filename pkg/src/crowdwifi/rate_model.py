"""Saturated per-user throughput of an 802.11g access point.

All time constants are in microseconds and payload sizes in bits, so
rates come out in bits per microsecond, which is numerically equal to
Mbps.  The per-user rate is a closed form in the number of users
simultaneously attached to the AP; expectation over a random occupancy
is a dot product against the occupancy distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class RateModelParams:
    """MAC/PHY constants of the contention model.

    tau is the per-slot transmission attempt probability of a saturated
    station; the three slot durations cover an idle backoff slot, a slot
    wasted on collision and a successful transmission slot (header,
    payload at PHY rate, ACK).
    """

    tau: float = 0.0765
    payload_bits: float = 8192.0
    backoff_slot_us: float = 28.0
    collision_slot_us: float = 85.7 + 8192.0 / 54.0
    success_slot_us: float = 85.7 + 8192.0 / 54.0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        for name in ("payload_bits", "backoff_slot_us", "collision_slot_us", "success_slot_us"):
            value = getattr(self, name)
            if value <= 0.0:
                raise ValueError(f"{name} must be positive, got {value}")


#: Default parameter set: 54 Mbps 802.11g with 1024-byte payloads.
DEFAULT_80211G = RateModelParams()


def per_user_rate(n: int, params: RateModelParams = DEFAULT_80211G) -> float:
    """Expected per-user throughput (bits/us) with ``n`` users attached.

    Derived from the slot-level renewal cycle of the saturated channel:
    the expected payload delivered to one tagged user per slot, divided
    by the expected slot duration.  Strictly decreasing in ``n``.
    """
    if n < 1:
        raise ValueError(f"per-user rate needs at least one attached user, got n={n}")
    tau = params.tau
    quiet = 1.0 - tau
    # Probability that a given slot is idle / a success by one station.
    p_idle = quiet**n
    p_single = n * tau * quiet ** (n - 1)
    p_collision = (1.0 - p_idle) - p_single
    slot = (
        p_idle * params.backoff_slot_us
        + p_collision * params.collision_slot_us
        + p_single * params.success_slot_us
    )
    # Tagged user succeeds with probability tau * quiet**(n-1) per slot.
    return tau * quiet ** (n - 1) * params.payload_bits / slot


def rate_table(n_max: int, params: RateModelParams = DEFAULT_80211G) -> np.ndarray:
    """Vector of per_user_rate(1..n_max), index 0 holding the 1-user rate."""
    return np.array([per_user_rate(n, params) for n in range(1, n_max + 1)])


def occupancy_distribution(sigmas: Sequence[float] | Iterable[float]) -> np.ndarray:
    """Distribution of the number of simultaneously active users.

    Each user i is active independently with probability sigmas[i]
    (their access intensity), so the count follows a Poisson-binomial
    law.  Computed by the standard O(N^2) convolution recurrence; exact
    up to float rounding, no sampling involved.

    Returns an array p of length N+1 with p[n] = P(exactly n active).
    """
    sig = np.asarray(list(sigmas), dtype=float)
    if sig.size and (sig.min() < 0.0 or sig.max() > 1.0):
        raise ValueError("access probabilities must lie in [0, 1]")
    probs = np.zeros(sig.size + 1)
    probs[0] = 1.0
    for m, s in enumerate(sig):
        # After m+1 users: shift-and-mix one Bernoulli(s) into the count.
        probs[1 : m + 2] = probs[1 : m + 2] * (1.0 - s) + probs[: m + 1] * s
        probs[0] *= 1.0 - s
    return probs


def expected_rate(
    other_sigmas: Sequence[float] | Iterable[float],
    params: RateModelParams = DEFAULT_80211G,
) -> float:
    """Expected throughput seen by a tagged active user.

    The tagged user always counts as one occupant; the others join
    independently with the given access probabilities.  Equals
    sum_n P(n others active) * per_user_rate(n + 1).
    """
    probs = occupancy_distribution(other_sigmas)
    rates = rate_table(probs.size, params)
    return float(probs @ rates)

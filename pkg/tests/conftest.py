"""Shared builders for randomized test instances."""

import numpy as np

from crowdwifi.access_game import AccessGameInstance, PaymentType, Player
from crowdwifi.membership import ExpectationConfig, Role, UserProfile
from crowdwifi.rate_model import DEFAULT_80211G, per_user_rate
from crowdwifi.scenario import PricingScheme, Scenario, SolverSettings

HOME_RATE_1 = per_user_rate(1)


def random_access_instance(rng: np.random.Generator, n_players: int,
                           allow_free: bool = True) -> AccessGameInstance:
    """A random per-AP access game with a mix of free and paying users."""
    players = []
    for i in range(n_players):
        free = allow_free and rng.random() < 0.3
        players.append(Player(
            user_id=f"u{i}",
            payment_type=PaymentType.FREE if free else PaymentType.PAYING,
            rho=float(rng.uniform(0.05, 1.5)),
        ))
    return AccessGameInstance(
        ap_id="owner",
        players=tuple(players),
        price=float(rng.uniform(0.5, 2.0)),
        rate_params=DEFAULT_80211G,
    )


def random_scenario(rng: np.random.Generator, n_aps: int, n_aliens: int = 1,
                    mode: str = "exact") -> Scenario:
    """A random community: one subscriber per AP plus roaming aliens."""
    users = []
    for i in range(n_aps):
        mobility = rng.dirichlet(np.ones(n_aps + 1))
        users.append(UserProfile(
            user_id=f"s{i + 1}",
            role=Role.SUBSCRIBER,
            rho=float(rng.uniform(0.1, 1.2)),
            mobility=tuple(float(m) for m in mobility),
            home_rate=HOME_RATE_1,
        ))
    for j in range(n_aliens):
        mobility = rng.dirichlet(np.ones(n_aps + 1))
        users.append(UserProfile(
            user_id=f"a{j + 1}",
            role=Role.ALIEN,
            rho=float(rng.uniform(0.2, 1.2)),
            mobility=tuple(float(m) for m in mobility),
            home_rate=None,
        ))
    return Scenario(
        users=tuple(users),
        time_slots=10.0,
        pricing=PricingScheme(price=float(rng.uniform(0.5, 2.0)),
                              delta=float(rng.uniform(0.0, 1.0))),
        solver=SolverSettings(damping=0.5),
        expectation=ExpectationConfig(mode=mode, rng_seed=int(rng.integers(0, 2**31))),
        seed=int(rng.integers(0, 2**31)),
    )

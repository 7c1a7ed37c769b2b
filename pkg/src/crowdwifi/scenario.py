"""Scenario definition, YAML loading/saving and validation.

A scenario bundles the user population (subscribers own APs 1..K in
file order; aliens are visitors), the channel constants, pricing,
solver knobs, expectation settings and the master seed.  Loading
applies defaults and resolves derived fields (home rates), so a loaded
scenario is always fully specified and a dump/load round trip is the
identity on the dataclass.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .membership import ExpectationConfig, Role, UserProfile
from .rate_model import RateModelParams, per_user_rate


class ScenarioError(ValueError):
    """Malformed scenario file or inconsistent scenario contents."""


@dataclass(frozen=True)
class PricingScheme:
    """Operator-side pricing: access price(s), revenue share, price cap.

    price is either one number applied at every AP or a per-AP tuple
    (location-dependent pricing).  delta is the fraction of an AP's
    collected payments handed to its owner when the owner is a Bill.
    """

    price: float | tuple[float, ...]
    delta: float
    p_max: float = 10.0

    def __post_init__(self) -> None:
        prices = self.price if isinstance(self.price, tuple) else (self.price,)
        for p in prices:
            if not 0.0 < p <= self.p_max:
                raise ScenarioError(f"prices must lie in (0, p_max={self.p_max}], got {p}")
        if not 0.0 <= self.delta <= 1.0:
            raise ScenarioError(f"delta must lie in [0, 1], got {self.delta}")

    def price_vector(self, ap_count: int) -> tuple[float, ...]:
        if isinstance(self.price, tuple):
            if len(self.price) != ap_count:
                raise ScenarioError(
                    f"price vector has {len(self.price)} entries for {ap_count} APs"
                )
            return self.price
        return (self.price,) * ap_count

    def price_at(self, ap: int, ap_count: int) -> float:
        return self.price_vector(ap_count)[ap - 1]


@dataclass(frozen=True)
class SolverSettings:
    """Knobs of the two equilibrium solvers."""

    epsilon: float = 1e-9          # access game: sup-norm stopping threshold
    max_iters: int = 10_000        # access game: sweep budget
    damping: float = 1.0           # access game: best-response mixing weight
    gamma: float = 0.05            # membership: logit temperature
    tol: float = 1e-6              # membership: sup-norm stopping threshold
    mixed_max_iters: int = 2_000   # membership: sweep budget
    anneal_beta: float | None = None  # membership: optional gamma decay per sweep


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserProfile, ...]
    time_slots: float
    pricing: PricingScheme
    rate_params: RateModelParams = field(default_factory=RateModelParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    expectation: ExpectationConfig = field(default_factory=ExpectationConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        subs = tuple(u.user_id for u in self.users if u.role is Role.SUBSCRIBER)
        index = {u.user_id: i for i, u in enumerate(self.users)}
        if len(index) != len(self.users):
            raise ScenarioError("duplicate user ids in scenario")
        object.__setattr__(self, "_subscriber_ids", subs)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_ap_of", {uid: k for k, uid in enumerate(subs, start=1)})
        problems = validate_scenario(self)
        if problems:
            raise ScenarioError("; ".join(problems))

    # -- structure lookups -------------------------------------------------

    @property
    def subscriber_ids(self) -> tuple[str, ...]:
        return self._subscriber_ids

    @property
    def ap_count(self) -> int:
        return len(self._subscriber_ids)

    def user(self, user_id: str) -> UserProfile:
        try:
            return self.users[self._index[user_id]]
        except KeyError:
            raise KeyError(f"no user {user_id!r} in scenario") from None

    def user_index(self, user_id: str) -> int:
        return self._index[user_id]

    def ap_owner(self, ap: int) -> str:
        if not 1 <= ap <= self.ap_count:
            raise ScenarioError(f"AP index {ap} outside 1..{self.ap_count}")
        return self._subscriber_ids[ap - 1]

    def ap_of(self, user_id: str) -> int:
        try:
            return self._ap_of[user_id]
        except KeyError:
            raise ScenarioError(f"{user_id!r} is not a subscriber, owns no AP") from None

    def eta(self, user_id: str, ap: int) -> float:
        return self.user(user_id).mobility[ap]

    def price(self, ap: int) -> float:
        return self.pricing.price_at(ap, self.ap_count)

    # -- functional updates ------------------------------------------------

    def with_pricing(
        self,
        price: float | tuple[float, ...] | None = None,
        delta: float | None = None,
    ) -> "Scenario":
        new_pricing = PricingScheme(
            price=self.pricing.price if price is None else price,
            delta=self.pricing.delta if delta is None else delta,
            p_max=self.pricing.p_max,
        )
        return replace(self, pricing=new_pricing)

    def with_user(self, user_id: str, **changes) -> "Scenario":
        users = tuple(
            replace(u, **changes) if u.user_id == user_id else u for u in self.users
        )
        return replace(self, users=users)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(
            self,
            seed=seed,
            expectation=replace(self.expectation, rng_seed=seed),
        )


def validate_scenario(scenario: Scenario) -> list[str]:
    """All structural problems found, as human-readable strings."""
    problems: list[str] = []
    k = scenario.ap_count
    if k == 0:
        problems.append("scenario needs at least one subscriber")
    if scenario.time_slots <= 0:
        problems.append(f"time_slots must be positive, got {scenario.time_slots}")
    if scenario.seed < 0:
        problems.append(f"seed must be non-negative, got {scenario.seed}")
    for u in scenario.users:
        if len(u.mobility) != k + 1:
            problems.append(
                f"user {u.user_id}: mobility needs {k + 1} entries "
                f"(uncovered + {k} APs), got {len(u.mobility)}"
            )
        if u.role is Role.SUBSCRIBER and u.home_rate is not None and u.home_rate <= 0.0:
            problems.append(f"user {u.user_id}: home_rate must be positive")
    try:
        scenario.pricing.price_vector(max(k, 1))
    except ScenarioError as err:
        problems.append(str(err))
    return problems


# ---------------------------------------------------------------------------
# YAML round trip
# ---------------------------------------------------------------------------

def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file, applying defaults."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ScenarioError(f"cannot read scenario file: {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ScenarioError(f"cannot parse {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    try:
        rate_params = RateModelParams(**raw.get("rate_params", {}))
    except (TypeError, ValueError) as err:
        raise ScenarioError(f"rate_params: {err}") from err

    pricing_raw = dict(raw.get("pricing") or {})
    if "price" not in pricing_raw or "delta" not in pricing_raw:
        raise ScenarioError("pricing section must set price and delta")
    if isinstance(pricing_raw["price"], list):
        pricing_raw["price"] = tuple(float(p) for p in pricing_raw["price"])
    pricing = PricingScheme(**pricing_raw)

    try:
        solver = SolverSettings(**raw.get("solver", {}))
        expectation_raw = dict(raw.get("expectation", {}))
        seed = int(raw.get("seed", 0))
        expectation_raw.setdefault("rng_seed", seed)
        expectation = ExpectationConfig(**expectation_raw)
    except (TypeError, ValueError) as err:
        raise ScenarioError(str(err)) from err

    users_raw = raw.get("users")
    if not users_raw:
        raise ScenarioError("users section is missing or empty")
    default_home = per_user_rate(1, rate_params)
    users = []
    for entry in users_raw:
        uid = entry.get("id")
        if not uid:
            raise ScenarioError(f"every user needs an id, got entry {entry!r}")
        try:
            role = Role(entry.get("role", "subscriber"))
            home_rate = entry.get("home_rate")
            if role is Role.SUBSCRIBER and home_rate is None:
                home_rate = default_home
            users.append(
                UserProfile(
                    user_id=str(uid),
                    role=role,
                    rho=float(entry["rho"]),
                    mobility=tuple(float(m) for m in entry["mobility"]),
                    home_rate=home_rate,
                )
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ScenarioError(f"user {uid!r}: {err}") from err

    try:
        return Scenario(
            users=tuple(users),
            time_slots=float(raw.get("time_slots", 1.0)),
            pricing=pricing,
            rate_params=rate_params,
            solver=solver,
            expectation=expectation,
            seed=seed,
        )
    except (TypeError, ValueError) as err:
        raise ScenarioError(str(err)) from err


def scenario_to_dict(scenario: Scenario) -> dict:
    rp = scenario.rate_params
    price = scenario.pricing.price
    out = {
        "rate_params": {
            "tau": rp.tau,
            "payload_bits": rp.payload_bits,
            "backoff_slot_us": rp.backoff_slot_us,
            "collision_slot_us": rp.collision_slot_us,
            "success_slot_us": rp.success_slot_us,
        },
        "time_slots": scenario.time_slots,
        "pricing": {
            "price": list(price) if isinstance(price, tuple) else price,
            "delta": scenario.pricing.delta,
            "p_max": scenario.pricing.p_max,
        },
        "solver": {
            "epsilon": scenario.solver.epsilon,
            "max_iters": scenario.solver.max_iters,
            "damping": scenario.solver.damping,
            "gamma": scenario.solver.gamma,
            "tol": scenario.solver.tol,
            "mixed_max_iters": scenario.solver.mixed_max_iters,
            "anneal_beta": scenario.solver.anneal_beta,
        },
        "expectation": {
            "mode": scenario.expectation.mode,
            "sample_count": scenario.expectation.sample_count,
            "rng_seed": scenario.expectation.rng_seed,
            "exact_population_limit": scenario.expectation.exact_population_limit,
        },
        "seed": scenario.seed,
        "users": [
            {
                "id": u.user_id,
                "role": u.role.value,
                "rho": u.rho,
                "mobility": list(u.mobility),
                **({"home_rate": u.home_rate} if u.home_rate is not None else {}),
            }
            for u in scenario.users
        ],
    }
    return out


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    """Write a scenario back to YAML; load(dump(s)) == s."""
    Path(path).write_text(
        yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)
    )

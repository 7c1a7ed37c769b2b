"""Command line interface.

Subcommands: validate, access-eq, membership-eq, sweep, phase-plot.
All outputs are deterministic for a fixed scenario and seed: floats are
written with 12 significant digits, rows follow scenario order, and
Monte-Carlo streams are derived from the seed, never from global state.

Exit codes: 0 success, 1 usage error, 2 scenario validation error,
3 runtime failure.  Solver non-convergence is reported on stderr but
does not change the exit code.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .access_game import (
    AccessGameInstance,
    PaymentType,
    Player,
    SolveConfig,
    contraction_constant,
    solve_equilibrium,
)
from .membership import (
    MembershipState,
    Role,
    enumerate_pure_equilibria,
    solve_mixed_equilibrium,
    stage2_cache,
)
from .operator import sweep as run_sweep
from .scenario import Scenario, ScenarioError, load_scenario


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def _write_csv(path: str, comment: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [f"# {comment}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_grid(text: str) -> np.ndarray:
    """Parse 'lo:hi:count' into an inclusive linspace."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ScenarioError(f"grid must look like lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as err:
        raise ScenarioError(f"bad grid {text!r}: {err}") from err
    if count < 1 or hi < lo:
        raise ScenarioError(f"bad grid {text!r}: need hi >= lo and count >= 1")
    return np.linspace(lo, hi, count)


def _apply_overrides(scenario: Scenario, args: argparse.Namespace) -> Scenario:
    if getattr(args, "seed", None) is not None:
        scenario = scenario.with_seed(args.seed)
    expectation = scenario.expectation
    if getattr(args, "mode", None) is not None:
        expectation = replace(expectation, mode=args.mode)
    if getattr(args, "samples", None) is not None:
        expectation = replace(expectation, sample_count=args.samples)
    if expectation is not scenario.expectation:
        scenario = replace(scenario, expectation=expectation)
    if getattr(args, "gamma", None) is not None:
        scenario = replace(scenario, solver=replace(scenario.solver, gamma=args.gamma))
    return scenario


def _tag(scenario: Scenario, args: argparse.Namespace, command: str) -> str:
    cfg = scenario.expectation
    return (
        f"crowdwifi {command} scenario={Path(args.scenario).name} "
        f"seed={scenario.seed} mode={cfg.mode} samples={cfg.sample_count} "
        f"gamma={_fmt(scenario.solver.gamma)}"
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    n_alien = sum(1 for u in scenario.users if u.role is Role.ALIEN)
    print(
        f"OK: {Path(args.scenario).name}: {scenario.ap_count} APs, "
        f"{len(scenario.users)} users ({scenario.ap_count} subscribers, {n_alien} aliens)"
    )
    return 0


def _cmd_access_eq(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    ap = args.ap
    owner = scenario.ap_owner(ap)
    roster_ids = args.roster or [u.user_id for u in scenario.users if u.user_id != owner]
    bills = set(args.bills or ())
    unknown = [uid for uid in list(roster_ids) + sorted(bills) if uid not in
               {u.user_id for u in scenario.users}]
    if unknown:
        raise ScenarioError(f"unknown users: {unknown}")
    if owner in roster_ids:
        raise ScenarioError(f"AP {ap} owner {owner!r} cannot be in the roster")
    players = []
    for uid in roster_ids:
        user = scenario.user(uid)
        if user.role is Role.ALIEN or uid in bills:
            ptype = PaymentType.PAYING
        else:
            ptype = PaymentType.FREE
        players.append(Player(uid, ptype, user.rho))
    game = AccessGameInstance(
        ap_id=owner,
        players=tuple(players),
        price=scenario.price(ap),
        rate_params=scenario.rate_params,
    )
    s = scenario.solver
    result = solve_equilibrium(
        game, SolveConfig(epsilon=s.epsilon, max_iters=s.max_iters, damping=s.damping)
    )
    if not result.converged:
        print(
            f"warning: access solver stopped at residual {result.residual:.3e} "
            f"after {result.iterations} sweeps",
            file=sys.stderr,
        )
    print(f"access game at AP {ap} (owner {owner}, price {_fmt(scenario.price(ap))}):")
    for p in players:
        print(f"  {p.user_id:<12} {p.payment_type.value:<7} rho={_fmt(p.rho):<10} "
              f"sigma={_fmt(result.profile[p.user_id])}")
    print(
        f"converged={result.converged} iterations={result.iterations} "
        f"residual={_fmt(result.residual)} "
        f"contraction_bound={_fmt(contraction_constant(scenario.rate_params))}"
    )
    if args.out:
        comment = (
            _tag(scenario, args, "access-eq")
            + f" ap={ap} converged={int(result.converged)} iterations={result.iterations}"
        )
        _write_csv(
            args.out,
            comment,
            ("user_id", "payment_type", "rho", "sigma"),
            [
                (p.user_id, p.payment_type.value, p.rho, result.profile[p.user_id])
                for p in players
            ],
        )
    return 0


def _cmd_membership_eq(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    cache = stage2_cache(scenario)
    if not args.mixed_only:
        if scenario.ap_count > 12:
            print("note: > 12 subscribers, skipping exhaustive pure search", file=sys.stderr)
        else:
            pure = enumerate_pure_equilibria(scenario, cache=cache)
            print(f"pure equilibria ({len(pure)} of {2 ** scenario.ap_count} profiles):")
            for x in pure:
                flat = " ".join(f"{uid}={x[uid]}" for uid in scenario.subscriber_ids)
                print(f"  {flat}")
    mixed = solve_mixed_equilibrium(scenario, cache=cache)
    if not mixed.converged:
        print(
            f"warning: mixed solver stopped at residual {mixed.residual:.3e} "
            f"after {mixed.iterations} sweeps",
            file=sys.stderr,
        )
    print(
        f"mixed equilibrium: converged={mixed.converged} iterations={mixed.iterations} "
        f"residual={_fmt(mixed.residual)} gamma={_fmt(mixed.gamma_final)}"
    )
    for uid in scenario.subscriber_ids:
        print(f"  alpha[{uid}] = {_fmt(mixed.alpha[uid])}")
    if args.out:
        comment = (
            _tag(scenario, args, "membership-eq")
            + f" converged={int(mixed.converged)} iterations={mixed.iterations}"
        )
        _write_csv(
            args.out,
            comment,
            ("user_id", "alpha"),
            [(uid, mixed.alpha[uid]) for uid in scenario.subscriber_ids],
        )
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    p_grid = _parse_grid(args.p_grid)
    delta_grid = _parse_grid(args.delta_grid)
    surface = run_sweep(scenario, p_grid, delta_grid)
    bad = [c for c in surface.iter_cells() if not c.valid]
    shaky = [c for c in surface.iter_cells() if c.valid and not c.converged]
    if bad:
        print(f"warning: {len(bad)} of {len(p_grid) * len(delta_grid)} cells failed",
              file=sys.stderr)
    if shaky:
        print(f"warning: {len(shaky)} cells did not converge to tolerance", file=sys.stderr)
    rows = []
    for i, p in enumerate(surface.p_grid):
        for j, d in enumerate(surface.delta_grid):
            cell = surface.cells[i][j]
            rows.append(
                (p, d, cell.revenue, int(cell.converged), int(cell.valid),
                 int(surface.argmax == (i, j)))
            )
    _write_csv(
        args.out,
        _tag(scenario, args, "sweep")
        + f" p_grid={args.p_grid} delta_grid={args.delta_grid}",
        ("p", "delta", "revenue", "converged", "valid", "is_argmax"),
        rows,
    )
    best = surface.best_cell()
    if best is None:
        print("no valid cells")
    else:
        print(
            f"best cell: p={_fmt(best.prices[0])} delta={_fmt(best.delta)} "
            f"revenue={_fmt(best.revenue)}"
        )
    print(f"wrote {args.out}")
    return 0


def home_share_mobility(user_mobility: Sequence[float], home_ap: int, share: float) -> tuple[float, ...]:
    """Set the home-AP share and rescale the rest of the row.

    Off-home entries keep their proportions; if the row had no off-home
    mass, the remainder spreads uniformly over uncovered + other APs.
    """
    if not 0.0 <= share <= 1.0:
        raise ValueError(f"home share must lie in [0, 1], got {share}")
    row = list(user_mobility)
    rest = [m for i, m in enumerate(row) if i != home_ap]
    mass = sum(rest)
    out = []
    for i, m in enumerate(row):
        if i == home_ap:
            out.append(share)
        elif mass > 0.0:
            out.append((1.0 - share) * (m / mass))
        else:
            out.append((1.0 - share) / (len(row) - 1))
    return tuple(out)


def phase_rows(
    scenario: Scenario,
    subscriber: str,
    rho_values: Sequence[float],
    eta_values: Sequence[float],
) -> list[tuple[float, float, float, bool]]:
    """Mixed-equilibrium membership of one subscriber over a parameter grid.

    For every (rho, home share) the subscriber's utility weight and
    mobility row are replaced, the mixed equilibrium re-solved, and
    their alpha recorded.  Cells share only the access-game cache.
    """
    home_ap = scenario.ap_of(subscriber)
    base = scenario.user(subscriber).mobility
    cache = stage2_cache(scenario)
    rows = []
    for rho in rho_values:
        for eta in eta_values:
            cell = scenario.with_user(
                subscriber,
                rho=float(rho),
                mobility=home_share_mobility(base, home_ap, float(eta)),
            )
            mixed = solve_mixed_equilibrium(cell, cache=cache)
            rows.append((float(rho), float(eta), mixed.alpha[subscriber], mixed.converged))
    return rows


def _cmd_phase_plot(args: argparse.Namespace) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    subscriber = args.subscriber or scenario.subscriber_ids[0]
    if subscriber not in scenario.subscriber_ids:
        raise ScenarioError(f"{subscriber!r} is not a subscriber")
    rho_values = _parse_grid(args.rho_grid)
    eta_values = _parse_grid(args.eta_grid)
    rows = phase_rows(scenario, subscriber, rho_values, eta_values)
    stuck = sum(1 for r in rows if not r[3])
    if stuck:
        print(f"warning: {stuck} of {len(rows)} cells did not converge", file=sys.stderr)
    _write_csv(
        args.out,
        _tag(scenario, args, "phase-plot")
        + f" subscriber={subscriber} rho_grid={args.rho_grid} eta_grid={args.eta_grid}",
        ("rho", "eta_home", "alpha", "converged"),
        [(rho, eta, alpha, int(conv)) for rho, eta, alpha, conv in rows],
    )
    print(f"wrote {args.out} ({len(rows)} cells)")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdwifi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--mode", choices=("exact", "mc"), default=None,
                       help="expectation mode override")
        p.add_argument("--samples", type=int, default=None, help="Monte-Carlo sample count")
        p.add_argument("--gamma", type=float, default=None, help="logit temperature override")
        p.add_argument("--out", required=out_required, default=None, help="output CSV path")

    p = sub.add_parser("validate", help="parse and validate a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("access-eq", help="solve one slot's access game at an AP")
    common(p)
    p.add_argument("--ap", type=int, required=True, help="AP index (1-based)")
    p.add_argument("--roster", nargs="+", default=None,
                   help="present users (default: everyone but the owner)")
    p.add_argument("--bills", nargs="+", default=None,
                   help="subscribers in the roster who roam as Bills")
    p.set_defaults(func=_cmd_access_eq)

    p = sub.add_parser("membership-eq", help="pure and mixed membership equilibria")
    common(p)
    p.add_argument("--mixed-only", action="store_true",
                   help="skip the exhaustive pure-profile search")
    p.set_defaults(func=_cmd_membership_eq)

    p = sub.add_parser("sweep", help="revenue surface over uniform price x delta")
    common(p, out_required=True)
    p.add_argument("--p-grid", required=True, help="price grid lo:hi:count")
    p.add_argument("--delta-grid", required=True, help="delta grid lo:hi:count")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("phase-plot", help="membership map over (rho, home share)")
    common(p, out_required=True)
    p.add_argument("--subscriber", default=None,
                   help="subscriber to vary (default: the first)")
    p.add_argument("--rho-grid", default="0:1:21", help="rho grid lo:hi:count")
    p.add_argument("--eta-grid", default="0:1:21", help="home-share grid lo:hi:count")
    p.set_defaults(func=_cmd_phase_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except SystemExit as exit_:  # --help and friends
        return 0 if not exit_.code else 1
    try:
        return args.func(args)
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

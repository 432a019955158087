#!/usr/bin/env python3

# Command line front end for the Dynkin game solver.
#
# Subcommands: validate, solve, oracle, epsilon, gen.
# Reports are JSON unless --human is given. Exit codes:
#   0 ok, 1 oracle disagreement, 2 invalid model, 3 Mokobodski fails,
#   4 diverged, 5 oracle cap exceeded

import sys
import time
import logging
import argparse

from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from .common import add_general_parameters, show_version, configure_logging, seconds_to_human, print_table
from .common import STALL_TOL, STRATEGY_CAP, InvalidModel, Diverged, TooManyStrategies
from .dynkin_core import GameSpec, DynkinSolution, iterate, epsilon_saddle, supermartingale_shortcut, default_max_iter
from . import oracle
from .generator import generate_model
from .model_io import GameModel, load_model, write_json, solution_report, oracle_report, epsilon_report

logger = logging.getLogger("dynkin-tools.cli")

EXIT_OK = 0
EXIT_DISAGREE = 1
EXIT_INVALID = 2
EXIT_FAILS = 3
EXIT_DIVERGED = 4
EXIT_TOO_MANY = 5


def _str2bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: Optional[str] = None
    output: Optional[str] = None
    tol: float = STALL_TOL
    max_iter: Optional[int] = None
    lam: float = 0.9
    cap: int = STRATEGY_CAP
    seed: int = 1
    horizon: int = 2
    branching: int = 2
    low: float = -5.0
    high: float = 5.0
    force_sandwich: bool = True
    violations: int = 0
    supermartingale_xi: bool = False
    ragged: bool = False
    human: bool = False

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        fields = {key: getattr(args, key) for key in cls.__dataclass_fields__ if hasattr(args, key)}  # pylint: disable=no-member
        return cls(**fields)


def parse_args(argv: List[str]) -> argparse.Namespace:
    """
    Parse command line arguments.
    """

    parser = argparse.ArgumentParser(prog="dynkin-game", formatter_class=argparse.RawDescriptionHelpFormatter, add_help=False)
    parser.add_argument("--version", "-V", action="store_true", dest="show_version", help="Show package version and exit.")
    parser.add_argument("--help", "-h", action="help", help="Print this help and exit")
    parser.set_defaults(log_level=logging.INFO)
    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    def _subparser(name: str, description: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=description, description=description, formatter_class=argparse.RawDescriptionHelpFormatter, add_help=False)
        add_general_parameters(sub)
        return sub

    def _add_io(sub: argparse.ArgumentParser, needs_input: bool = True) -> None:
        group_io = sub.add_argument_group("Input / Output")
        if needs_input:
            group_io.add_argument("--input", "-i", dest="input", metavar="PATH", required=True, help="Tree model file (JSON)")
        group_io.add_argument("--output", "-o", dest="output", metavar="PATH", help="Write the report here instead of standard output")
        group_io.add_argument("--human", dest="human", type=_str2bool, nargs="?", const=True, default=False, metavar="BOOL", help="Print aligned text tables instead of JSON")

    def _add_solver(sub: argparse.ArgumentParser, with_cap: bool = False) -> None:
        group_solver = sub.add_argument_group("Solver Options")
        group_solver.add_argument("--tol", dest="tol", type=float, default=STALL_TOL, metavar="REAL", help=f"Sup-norm stall that ends the J / J' iteration, also the margin for xi > zeta. Default: {STALL_TOL}")
        group_solver.add_argument("--max-iter", dest="max_iter", type=int, metavar="INT", help="Iteration limit. Default: 10 * horizon + 10")
        if with_cap:
            group_solver.add_argument("--cap", dest="cap", type=int, default=STRATEGY_CAP, metavar="INT", help=f"Refuse to enumerate more stopping times than this. Default: {STRATEGY_CAP}")

    # fmt: off
    sub = _subparser("validate", "Check a tree model and summarize it")
    _add_io(sub)
    sub.add_argument("--tol", dest="tol", type=float, default=STALL_TOL, metavar="REAL", help=f"Margin for xi > zeta, same as solve. Default: {STALL_TOL}")

    sub = _subparser("solve", "Solve the game with the J / J' iteration")
    _add_io(sub)
    _add_solver(sub)

    sub = _subparser("oracle", "Cross-check the solver against brute-force enumeration")
    _add_io(sub)
    _add_solver(sub, with_cap=True)

    sub = _subparser("epsilon", "Show the (1 - lambda)-saddle point at the root")
    _add_io(sub)
    _add_solver(sub, with_cap=True)
    sub.add_argument("--lambda", dest="lam", type=float, default=0.9, metavar="REAL", help="lambda in (0, 1). Default: 0.9")

    sub = _subparser("gen", "Generate a random tree model")
    _add_io(sub, needs_input=False)
    group_gen = sub.add_argument_group("Generator Options")
    group_gen.add_argument("--seed", dest="seed", type=int, default=1, metavar="INT", help="Random seed. Same seed, same model. Default: 1")
    group_gen.add_argument("--horizon", dest="horizon", type=int, default=2, metavar="INT", help="Number of time steps T. Default: 2")
    group_gen.add_argument("--branching", dest="branching", type=int, default=2, metavar="INT", help="Children per interior node. Default: 2")
    group_gen.add_argument("--low", dest="low", type=float, default=-5.0, metavar="REAL", help="Lower end of the payoff range. Default: -5")
    group_gen.add_argument("--high", dest="high", type=float, default=5.0, metavar="REAL", help="Upper end of the payoff range. Default: 5")
    group_gen.add_argument("--force-sandwich", dest="force_sandwich", type=_str2bool, nargs="?", const=True, default=True, metavar="BOOL", help="Order the payoffs so that xi <= zeta. Default: true")
    group_gen.add_argument("--violations", dest="violations", type=int, default=0, metavar="INT", help="Number of interior nodes with xi > zeta to inject. Default: 0")
    group_gen.add_argument("--supermartingale-xi", dest="supermartingale_xi", type=_str2bool, nargs="?", const=True, default=False, metavar="BOOL", help="Draw xi as a supermartingale family, zeta unconstrained")
    group_gen.add_argument("--ragged", dest="ragged", type=_str2bool, nargs="?", const=True, default=False, metavar="BOOL", help="Draw each node's child count from 1..branching instead of branching fully")
    # fmt: on

    parser.description = "Solve zero-sum Dynkin (optimal stopping) games on finite event trees"
    parser.epilog = f"""
Run '{parser.prog} SUBCOMMAND --help' for the options of each subcommand.

Exit codes: 0 ok, 1 oracle disagreement, 2 invalid model,
3 Mokobodski's condition fails, 4 iteration diverged,
5 too many stopping times for the oracle.
"""

    # Parse supplied arguments
    args = parser.parse_args(argv)

    # If --version do it now and exit
    if args.show_version:
        show_version(args)

    if not args.subcommand:
        parser.error("Specify a SUBCOMMAND")

    if args.subcommand == "epsilon" and not 0.0 < args.lam < 1.0:
        parser.error(f"BadLambda: --lambda must be in (0, 1), got {args.lam}")

    if getattr(args, "max_iter", None) is not None and args.max_iter < 1:
        parser.error("--max-iter must be >= 1")

    return args


# ---------------------------------------------------------


def _solve(model: GameModel, config: RunConfig) -> DynkinSolution:
    if model.needs_normalization:
        logger.info("Terminal values are not 0, normalizing")
    spec = GameSpec.from_raw(model.xi, model.zeta)
    max_iter = config.max_iter or default_max_iter(model.tree)
    return iterate(spec, max_iter=max_iter, tol=config.tol)


def _node_rows(sol: DynkinSolution) -> List[Dict[str, Any]]:
    tree = sol.spec.tree
    rows = []
    for node in tree.nodes:
        rows.append(
            {
                "node": node.label,
                "time": node.time,
                "prob": f"{tree.prob[node.id]:.6g}",
                "xi": f"{sol.spec.xi[node.id]:.6g}",
                "zeta": f"{sol.spec.zeta[node.id]:.6g}",
                "J": f"{sol.J[node.id]:.6g}",
                "Jp": f"{sol.Jp[node.id]:.6g}",
                "Y": "-" if sol.Y is None else f"{sol.Y[node.id]:.6g}",
                "stop": "".join(
                    [
                        "tau" if sol.tau_star is not None and node.id in sol.tau_star.region else "",
                        " sigma" if sol.sigma_star is not None and node.id in sol.sigma_star.region else "",
                    ]
                ).strip(),
            }
        )
    return rows


def cmd_validate(config: RunConfig) -> int:
    model = load_model(config.input)  # type: ignore[arg-type]
    spec = GameSpec.from_raw(model.xi, model.zeta)
    violations = spec.sandwich_violations(config.tol)
    tree = model.tree

    summary = {
        "nodes": len(tree),
        "horizon": tree.horizon,
        "normalization": "required" if model.needs_normalization else "ok",
        "sandwich": "ok" if not violations else "fails",
        "fails_at": [tree.label(n) for n in violations],
    }
    if config.human:
        print(f"{summary['nodes']} nodes, T={summary['horizon']}, sandwich: {summary['sandwich']}")
        if model.needs_normalization:
            print("note: normalization required, terminal values are not 0")
        if violations:
            print(f"xi > zeta at: {' '.join(str(label) for label in summary['fails_at'])}")  # type: ignore[union-attr]
    else:
        write_json(summary, config.output)
    return EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    model = load_model(config.input)  # type: ignore[arg-type]
    sol = _solve(model, config)
    if config.human:
        print_table(_node_rows(sol))
        print(f"value: {solution_report(sol)['value']}  iterations: {sol.iterations}  mokobodski: {sol.mokobodski}")
    else:
        write_json(solution_report(sol), config.output)

    if not sol.mokobodski.holds:
        logger.warning("Mokobodski's condition fails: xi > zeta at %s", " ".join(str(model.tree.label(n)) for n in sol.mokobodski.fails_at))
        return EXIT_FAILS
    return EXIT_OK


def cmd_oracle(config: RunConfig) -> int:
    model = load_model(config.input)  # type: ignore[arg-type]
    tree = model.tree
    spec = GameSpec.from_raw(model.xi, model.zeta)
    report = oracle.brute_force_values(spec, tree.root, config.cap)
    sol = _solve(model, config)

    document = oracle_report(report)
    exit_code = EXIT_FAILS
    if sol.solved:
        agree = oracle.agreement(sol, report)
        saddle_ok = oracle.verify_saddle(spec, tree.root, sol.tau_star, sol.sigma_star, config.cap)  # type: ignore[arg-type]
        document.update({"solver": agree.solver, "backward_induction": agree.backward_induction, "fair": agree.fair, "saddle_verified": saddle_ok})
        exit_code = EXIT_OK if agree.fair and saddle_ok else EXIT_DISAGREE
    else:
        document.update({"solver": None, "backward_induction": None, "fair": report.fair, "saddle_verified": None})

    shortcut = supermartingale_shortcut(spec, tree.root, verify_cap=0)
    if shortcut is not None:
        tau, sigma, shortcut_value = shortcut
        document["shortcut"] = {
            "tau": tau.labels(),
            "sigma": sigma.labels(),
            "value": shortcut_value,
            "verified": oracle.verify_saddle(spec, tree.root, tau, sigma, config.cap),
        }

    if config.human:
        print(f"lower: {report.lower:.12g}  upper: {report.upper:.12g}  solver: {document['solver']}  stopping times: {report.strategy_count}")
        if "shortcut" in document:
            print(f"shortcut saddle: tau={document['shortcut']['tau']} sigma={document['shortcut']['sigma']} value={shortcut_value:.12g} verified: {document['shortcut']['verified']}")
        print(f"FAIR: {'yes' if document['fair'] else 'no'}")
    else:
        logger.info("FAIR: %s", "yes" if document["fair"] else "no")
        write_json(document, config.output)
    return exit_code


def cmd_epsilon(config: RunConfig) -> int:
    model = load_model(config.input)  # type: ignore[arg-type]
    sol = _solve(model, config)
    if not sol.solved:
        logger.error("Mokobodski's condition fails, there is no (1 - lambda)-saddle point to show")
        return EXIT_FAILS

    tree = model.tree
    eps = epsilon_saddle(sol, config.lam, tree.root)
    try:
        bounds_hold: Optional[bool] = oracle.verify_epsilon_saddle(sol, eps, tree.root, config.cap)
    except TooManyStrategies as ex:
        logger.warning("Bounds not verified: %s", ex)
        bounds_hold = None

    if config.human:
        print(f"lambda: {eps.lam}")
        print(f"tau^lambda:   {' '.join(str(label) for label in eps.tau_lambda.labels())}")
        print(f"sigma^lambda: {' '.join(str(label) for label in eps.sigma_lambda.labels())}")
        print(f"slacks: lower {eps.lower_slack:.6g} upper {eps.upper_slack:.6g}  bounds hold: {bounds_hold}")
    else:
        write_json(epsilon_report(eps, bounds_hold), config.output)
    return EXIT_OK if bounds_hold is not False else EXIT_DISAGREE


def cmd_gen(config: RunConfig) -> int:
    document = generate_model(
        seed=config.seed,
        horizon=config.horizon,
        branching=config.branching,
        low=config.low,
        high=config.high,
        force_sandwich=config.force_sandwich,
        violations=config.violations,
        supermartingale_xi=config.supermartingale_xi,
        ragged=config.ragged,
    )
    write_json(document, config.output)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
    "epsilon": cmd_epsilon,
    "gen": cmd_gen,
}


def main(argv: Optional[List[str]] = None) -> None:
    args = parse_args(sys.argv[1:] if argv is None else argv)

    configure_logging(args.log_level)
    config = RunConfig.from_args(args)

    started = time.time()
    try:
        exit_code = COMMANDS[config.subcommand](config)

    except InvalidModel as e:
        logger.error("%s: %s", type(e).__name__, e)
        sys.exit(EXIT_INVALID)
    except Diverged as e:
        logger.error(e)
        sys.exit(EXIT_DIVERGED)
    except TooManyStrategies as e:
        logger.error(e)
        sys.exit(EXIT_TOO_MANY)
    except ValueError as e:
        logger.error(e)
        sys.exit(EXIT_INVALID)

    logger.debug("%s finished in %s", config.subcommand, seconds_to_human(time.time() - started))
    sys.exit(exit_code)


if __name__ == "__main__":
    main()

# Ground truth for the solver: every stopping time of a small tree is
# enumerated and the game is evaluated pair by pair.

import itertools
import logging

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .common import IDENTITY_TOL, EQUALITY_TOL, STRATEGY_CAP, NotSandwiched, TooManyStrategies
from .filtration import EventTree, NodeRef
from .families import Family, StoppingTime
from .dynkin_core import GameSpec, DynkinSolution, EpsilonSaddle, criterion, value

logger = logging.getLogger("dynkin-tools.oracle")

PAIR_TABLE_LIMIT = 2000

__all__ = [
    "OracleReport",
    "count_stopping_times",
    "enumerate_stopping_times",
    "PAIR_TABLE_LIMIT",
    "iter_criterion_rows",
    "criterion_matrix",
    "brute_force_values",
    "backward_induction_value",
    "verify_saddle",
    "verify_epsilon_saddle",
    "value_table",
    "Agreement",
    "agreement",
]


@dataclass(frozen=True)
class OracleReport:
    node: int
    lower: float
    upper: float
    strategies: Tuple[StoppingTime, ...] = field(repr=False)
    # pair_table[i, j] = I_theta(strategies[i], strategies[j]), None above the table limit
    pair_table: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def strategy_count(self) -> int:
        return len(self.strategies)

    @property
    def fair(self) -> bool:
        return abs(self.upper - self.lower) <= EQUALITY_TOL


@dataclass(frozen=True)
class Agreement:
    solver: float
    backward_induction: float
    lower: float
    upper: float
    fair: bool


# ---------------------------------------------------------


def count_stopping_times(tree: EventTree, node: NodeRef = 0) -> int:
    """
    count(leaf) = 1, count(n) = 1 + product of count(child).
    """
    counts: Dict[int, int] = {}
    for current in reversed(tree.subtree(node)):
        product = 1
        for child in tree.children[current]:
            product *= counts[child]
        counts[current] = 1 + product if tree.children[current] else 1
    return counts[tree.index(node)]


def enumerate_stopping_times(tree: EventTree, node: NodeRef = 0, cap: int = STRATEGY_CAP) -> List[StoppingTime]:
    """
    All stopping times in T_node: stop at n, or any combination of the
    choices below its children. Order is fixed by node index.
    """
    idx = tree.index(node)
    count = count_stopping_times(tree, idx)
    if count > cap:
        raise TooManyStrategies(count, cap)

    choices: Dict[int, List[FrozenSet[int]]] = {}
    for current in reversed(tree.subtree(idx)):
        options = [frozenset([current])]
        if tree.children[current]:
            for combo in itertools.product(*(choices[child] for child in tree.children[current])):
                options.append(frozenset().union(*combo))
        choices[current] = options

    ret = [StoppingTime(tree, region, idx) for region in choices[idx]]
    logger.debug("Enumerated %d stopping times from node %r", len(ret), tree.label(idx))
    return ret


def iter_criterion_rows(spec: GameSpec, theta: NodeRef, taus: Sequence[StoppingTime], sigmas: Sequence[StoppingTime]) -> Iterator[np.ndarray]:
    """
    Yields I_theta(taus[i], sigma) over all sigmas, one i at a time.
    """
    tree = spec.tree
    idx = tree.index(theta)
    weights = tree.prob[tree.leaves_below(idx)] / tree.prob[idx]

    tau_stops = np.array([tau.restrict(idx).stops for tau in taus], dtype=np.int64).reshape(len(taus), -1)
    sigma_stops = np.array([sigma.restrict(idx).stops for sigma in sigmas], dtype=np.int64).reshape(len(sigmas), -1)
    tau_times, sigma_times = tree.time[tau_stops], tree.time[sigma_stops]
    sigma_pay = spec.zeta.values[sigma_stops]

    for i in range(len(taus)):
        payoff = np.where(tau_times[i][None, :] <= sigma_times, spec.xi.values[tau_stops[i]][None, :], sigma_pay)
        yield payoff @ weights


def criterion_matrix(spec: GameSpec, theta: NodeRef, taus: Sequence[StoppingTime], sigmas: Sequence[StoppingTime]) -> np.ndarray:
    table = np.empty((len(taus), len(sigmas)))
    for i, row in enumerate(iter_criterion_rows(spec, theta, taus, sigmas)):
        table[i] = row
    return table


def brute_force_values(spec: GameSpec, theta: NodeRef = 0, cap: int = STRATEGY_CAP, table_limit: int = PAIR_TABLE_LIMIT) -> OracleReport:
    """
    lower = max_tau min_sigma I_theta, upper = min_sigma max_tau I_theta over
    all pure stopping times.

    Rows are reduced as they come; the full pair table is only kept when
    there are at most `table_limit` strategies.
    """
    tree = spec.tree
    idx = tree.index(theta)
    strategies = enumerate_stopping_times(tree, idx, cap)
    count = len(strategies)
    table = np.empty((count, count)) if count <= table_limit else None
    lower = -np.inf
    column_max = np.full(count, -np.inf)
    for i, row in enumerate(iter_criterion_rows(spec, idx, strategies, strategies)):
        lower = max(lower, float(row.min()))
        np.maximum(column_max, row, out=column_max)
        if table is not None:
            table[i] = row
    upper = float(column_max.min())
    if lower > upper + IDENTITY_TOL:
        logger.error("Minimax inequality broken at %r: lower %.12g > upper %.12g", tree.label(idx), lower, upper)
    if table is None:
        logger.debug("Pair table of %d x %d not kept", count, count)
    else:
        table.setflags(write=False)
    return OracleReport(node=idx, lower=lower, upper=upper, pair_table=table, strategies=tuple(strategies))


def backward_induction_value(spec: GameSpec) -> Family:
    """
    Y(leaf) = 0, Y(n) = min(zeta(n), max(xi(n), E[Y(child) | n])).
    """
    tree = spec.tree
    violations = spec.sandwich_violations(EQUALITY_TOL)
    if violations:
        raise NotSandwiched(f"xi > zeta at nodes {[tree.label(n) for n in violations]}")

    xi, zeta = spec.xi.values, spec.zeta.values
    y = np.zeros(len(tree))
    for t in range(tree.horizon - 1, -1, -1):
        lo, hi = tree.level_bounds(t)
        y[lo:hi] = np.minimum(zeta[lo:hi], np.maximum(xi[lo:hi], tree.expect_children(y, t)))
    return Family(tree, y)


def verify_saddle(spec: GameSpec, theta: NodeRef, tau_hat: StoppingTime, sigma_hat: StoppingTime, cap: int = STRATEGY_CAP, tol: float = EQUALITY_TOL) -> bool:
    """
    I(tau, sigma_hat) <= I(tau_hat, sigma_hat) <= I(tau_hat, sigma) for every tau, sigma in T_theta.
    """
    tree = spec.tree
    idx = tree.index(theta)
    strategies = enumerate_stopping_times(tree, idx, cap)
    center = criterion(spec, tau_hat, sigma_hat, idx)
    against_sigma_hat = criterion_matrix(spec, idx, strategies, [sigma_hat])[:, 0]
    against_tau_hat = criterion_matrix(spec, idx, [tau_hat], strategies)[0]

    ok = bool(np.all(against_sigma_hat <= center + tol) and np.all(center <= against_tau_hat + tol))
    if not ok:
        logger.debug(
            "Not a saddle at %r: center %.12g, best deviation for tau %.12g, for sigma %.12g",
            tree.label(idx),
            center,
            float(np.max(against_sigma_hat)),
            float(np.min(against_tau_hat)),
        )
    return ok


def value_table(spec: GameSpec, cap: int = STRATEGY_CAP) -> Tuple[Family, Family]:
    """
    Lower and upper values at every node (conditional oracle at interior nodes).
    """
    tree = spec.tree
    lower, upper = np.zeros(len(tree)), np.zeros(len(tree))
    for idx in range(len(tree)):
        report = brute_force_values(spec, idx, cap)
        lower[idx], upper[idx] = report.lower, report.upper
    return Family(tree, lower), Family(tree, upper)


def agreement(sol: DynkinSolution, report: OracleReport, tol: float = EQUALITY_TOL) -> Agreement:
    """
    Solver value, backward induction and the oracle's lower / upper at the
    report's node, fair when all four coincide within `tol`.
    """
    solver = value(sol, report.node)
    induction = backward_induction_value(sol.spec)[report.node]
    numbers = [solver, induction, report.lower, report.upper]
    return Agreement(solver=solver, backward_induction=induction, lower=report.lower, upper=report.upper, fair=max(numbers) - min(numbers) <= tol)


def verify_epsilon_saddle(sol: DynkinSolution, eps: EpsilonSaddle, theta: NodeRef, cap: int = STRATEGY_CAP, tol: float = EQUALITY_TOL) -> bool:
    """
    I(tau, sigma^lam) - lower_slack <= Y(theta) <= I(tau^lam, sigma) + upper_slack for every tau, sigma in T_theta.
    """
    spec = sol.spec
    idx = spec.tree.index(theta)
    y = value(sol, idx)
    strategies = enumerate_stopping_times(spec.tree, idx, cap)
    against_sigma = criterion_matrix(spec, idx, strategies, [eps.sigma_lambda])[:, 0]
    against_tau = criterion_matrix(spec, idx, [eps.tau_lambda], strategies)[0]
    return bool(np.all(against_sigma - eps.lower_slack <= y + tol) and np.all(y <= against_tau + eps.upper_slack + tol))

# Zero-sum Dynkin game on an event tree.
#
# The maximizer stops at tau and receives xi(tau) if tau <= sigma, the
# minimizer stops at sigma and pays zeta(sigma) if sigma < tau. The value is
# obtained from the pair of supermartingale families J, J' built by the
# coupled iteration J_{n+1} = R(J'_n + xi), J'_{n+1} = R(J_n - zeta).

import time
import logging

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .common import INPUT_TOL, IDENTITY_TOL, STALL_TOL, EQUALITY_TOL, TerminalMismatch, NotSolved, Diverged, seconds_to_human
from .filtration import EventTree, NodeRef
from .families import Family, StoppingTime, immediate, terminal, first_hitting, check_lambda, is_supermartingale, is_martingale_on, snell_envelope

logger = logging.getLogger("dynkin-tools.dynkin-core")

__all__ = [
    "GameSpec",
    "Mokobodski",
    "DynkinSolution",
    "EpsilonSaddle",
    "normalize_terminal",
    "criterion",
    "iterate",
    "value",
    "raw_value",
    "saddle",
    "epsilon_saddle",
    "check_mokobodski_witness",
    "check_saddle_criterion",
    "fixed_point_residuals",
    "supermartingale_shortcut",
    "default_max_iter",
]


@dataclass(frozen=True)
class GameSpec:
    """
    Payoff families with xi(T) = zeta(T) = 0 at every leaf.

    `offset` is E[xi_raw(T) | F_t] when the GameSpec came out of from_raw(),
    adding it back to a value gives the value of the un-normalized game.
    """

    tree: EventTree
    xi: Family
    zeta: Family
    offset: Optional[Family] = None

    def __post_init__(self) -> None:
        leaves = self.tree.leaves
        if np.any(np.abs(self.xi.values[leaves]) > INPUT_TOL) or np.any(np.abs(self.zeta.values[leaves]) > INPUT_TOL):
            raise TerminalMismatch("Terminal values must be 0, normalize the game with GameSpec.from_raw() first")
        if self.offset is None:
            object.__setattr__(self, "offset", Family.constant(self.tree))

    @classmethod
    def from_raw(cls, xi_raw: Family, zeta_raw: Family) -> "GameSpec":
        xi, zeta = normalize_terminal(xi_raw, zeta_raw)
        offset = Family(xi_raw.tree, xi_raw.tree.martingale_from_terminal(xi_raw.values))
        return cls(xi_raw.tree, xi, zeta, offset)

    def sandwich_violations(self, tol: float = EQUALITY_TOL) -> List[int]:
        return [int(idx) for idx in np.flatnonzero(self.xi.values > self.zeta.values + tol)]


@dataclass(frozen=True)
class Mokobodski:
    """
    Nodewise xi <= zeta test. An empty `fails_at` means the condition holds.
    """

    fails_at: Tuple[int, ...] = ()

    @property
    def holds(self) -> bool:
        return not self.fails_at

    def __str__(self) -> str:
        return "holds" if self.holds else "fails"


@dataclass(frozen=True)
class DynkinSolution:
    spec: GameSpec
    J: Family
    Jp: Family
    Y: Optional[Family]
    iterations: int
    converged: bool
    mokobodski: Mokobodski
    tau_star: Optional[StoppingTime] = None
    sigma_star: Optional[StoppingTime] = None
    # (J_n, J'_n) for n = 0 .. iterations
    history: Tuple[Tuple[Family, Family], ...] = field(default=(), repr=False)

    @property
    def solved(self) -> bool:
        return self.mokobodski.holds and self.converged


@dataclass(frozen=True)
class EpsilonSaddle:
    lam: float
    tau_lambda: StoppingTime
    sigma_lambda: StoppingTime
    lower_slack: float
    upper_slack: float


# ---------------------------------------------------------


def default_max_iter(tree: EventTree) -> int:
    return 10 * tree.horizon + 10


def normalize_terminal(xi_raw: Family, zeta_raw: Family) -> Tuple[Family, Family]:
    """
    Subtract E[xi(T) | F_t] from both families so that both end at 0.

    The criterion only shifts by E[xi(T) | F_theta], the game itself is unchanged.
    """
    tree = xi_raw.tree
    leaves = tree.leaves
    mismatch = leaves[np.abs(xi_raw.values[leaves] - zeta_raw.values[leaves]) > INPUT_TOL]
    if mismatch.size:
        raise TerminalMismatch(f"xi(T) != zeta(T) at leaves: {[tree.label(int(n)) for n in mismatch]}")

    offset = tree.martingale_from_terminal(xi_raw.values)
    xi = xi_raw.values - offset
    zeta = zeta_raw.values - offset
    xi[leaves] = 0.0
    zeta[leaves] = 0.0
    return Family(tree, xi), Family(tree, zeta)


def criterion(spec: GameSpec, tau: StoppingTime, sigma: StoppingTime, theta: NodeRef) -> float:
    """
    I_theta(tau, sigma) = E[xi(tau) 1{tau <= sigma} + zeta(sigma) 1{sigma < tau} | theta]
    """
    tree = spec.tree
    idx = tree.index(theta)
    tau_r = tau.restrict(idx)
    sigma_r = sigma.restrict(idx)
    payoff = np.where(tau_r.stop_times() <= sigma_r.stop_times(), spec.xi.values[tau_r.stops], spec.zeta.values[sigma_r.stops])
    weights = tree.prob[tree.leaves_below(idx)] / tree.prob[idx]
    return float(np.dot(payoff, weights))


def _mokobodski_verdict(spec: GameSpec, tol: float) -> Mokobodski:
    return Mokobodski(tuple(spec.sandwich_violations(tol)))


def iterate(spec: GameSpec, max_iter: Optional[int] = None, tol: float = STALL_TOL) -> DynkinSolution:
    """
    Run the coupled Snell envelope iteration from J_0 = J'_0 = 0.

    Stops once both families move by at most `tol` in sup-norm. When xi > zeta
    somewhere the iterates grow without bound: the solution then comes back
    with converged=False and no value instead of raising.
    """
    tree = spec.tree
    if max_iter is None:
        max_iter = default_max_iter(tree)
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")

    verdict = _mokobodski_verdict(spec, tol)
    if not verdict.holds:
        logger.info("Mokobodski's condition fails: xi > zeta at %d node(s)", len(verdict.fails_at))

    started = time.time()
    J = Jp = Family.constant(tree)
    history = [(J, Jp)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        J_next = snell_envelope(Jp + spec.xi).envelope
        Jp_next = snell_envelope(J - spec.zeta).envelope
        delta, delta_p = J_next.sup_distance(J), Jp_next.sup_distance(Jp)
        J, Jp = J_next, Jp_next
        history.append((J, Jp))
        logger.debug("Iteration %d: |J_n+1 - J_n| = %.3g, |J'_n+1 - J'_n| = %.3g", iterations, delta, delta_p)
        if max(delta, delta_p) <= tol:
            converged = True
            break
    logger.debug("Iteration took %s", seconds_to_human(time.time() - started))

    sol = DynkinSolution(spec=spec, J=J, Jp=Jp, Y=None, iterations=iterations, converged=converged, mokobodski=verdict, history=tuple(history))

    if not verdict.holds:
        return sol
    if not converged:
        raise Diverged(iterations, history)

    sol = replace(sol, Y=J - Jp)
    tau_star, sigma_star = saddle(sol, tree.root)
    logger.info("Converged after %d iteration(s), value %.12g", iterations, value(sol, tree.root))
    return replace(sol, tau_star=tau_star, sigma_star=sigma_star)


def _require_solved(sol: DynkinSolution) -> Family:
    if not sol.mokobodski.holds:
        raise NotSolved(f"Mokobodski's condition fails at {len(sol.mokobodski.fails_at)} node(s), the game has no finite J")
    if not sol.converged or sol.Y is None:
        raise NotSolved("The J / J' iteration has not converged")
    return sol.Y


def value(sol: DynkinSolution, theta: NodeRef) -> float:
    return _require_solved(sol)[theta]


def raw_value(sol: DynkinSolution, theta: NodeRef) -> float:
    """Value of the game before terminal normalization."""
    return value(sol, theta) + sol.spec.offset[theta]  # type: ignore[index]


def saddle(sol: DynkinSolution, theta: NodeRef) -> Tuple[StoppingTime, StoppingTime]:
    """
    tau* = first time Y = xi, sigma* = first time Y = zeta, both from theta.
    """
    Y = _require_solved(sol)
    spec = sol.spec
    start = immediate(spec.tree, theta)
    tau_star = first_hitting(spec.tree, np.abs(Y.values - spec.xi.values) <= EQUALITY_TOL, start)
    sigma_star = first_hitting(spec.tree, np.abs(Y.values - spec.zeta.values) <= EQUALITY_TOL, start)
    return tau_star, sigma_star


def epsilon_saddle(sol: DynkinSolution, lam: float, theta: NodeRef) -> EpsilonSaddle:
    check_lambda(lam)
    _require_solved(sol)
    spec = sol.spec
    J, Jp = sol.J.values, sol.Jp.values
    start = immediate(spec.tree, theta)
    tau_lambda = first_hitting(spec.tree, lam * J <= Jp + spec.xi.values + IDENTITY_TOL, start)
    sigma_lambda = first_hitting(spec.tree, lam * Jp <= J - spec.zeta.values + IDENTITY_TOL, start)
    return EpsilonSaddle(
        lam=lam,
        tau_lambda=tau_lambda,
        sigma_lambda=sigma_lambda,
        lower_slack=(1.0 - lam) * sol.Jp[theta],
        upper_slack=(1.0 - lam) * sol.J[theta],
    )


def check_mokobodski_witness(spec: GameSpec, H: Family, Hp: Family, sol: Optional[DynkinSolution] = None) -> bool:
    """
    True iff H, H' are nonnegative supermartingales with H >= H' + xi and H' >= H - zeta.

    With a solved `sol` the witness should also dominate (J, J'). A valid
    witness that doesn't means the iteration overshot: that is logged as an
    error, the verdict on the witness itself is unchanged.
    """
    ok = H.dominates(0.0) and Hp.dominates(0.0) and is_supermartingale(H) and is_supermartingale(Hp) and H.dominates(Hp + spec.xi) and Hp.dominates(H - spec.zeta)
    if ok and sol is not None and sol.solved:
        if not (H.dominates(sol.J) and Hp.dominates(sol.Jp)):
            logger.error("Witness pair lies below the computed solution (J, J'): the iteration is not minimal")
    return ok


def check_saddle_criterion(sol: DynkinSolution, theta: NodeRef, tau: StoppingTime, sigma: StoppingTime) -> bool:
    """
    Y = xi where tau stops, Y = zeta where sigma stops, J martingale on
    [theta, tau] and J' martingale on [theta, sigma].
    """
    Y = _require_solved(sol)
    spec = sol.spec
    start = immediate(spec.tree, theta)
    tau_r, sigma_r = tau.restrict(start.origin), sigma.restrict(start.origin)
    tau_nodes = np.fromiter(tau_r.region, dtype=np.int64)
    sigma_nodes = np.fromiter(sigma_r.region, dtype=np.int64)
    if np.any(np.abs(Y.values[tau_nodes] - spec.xi.values[tau_nodes]) > EQUALITY_TOL):
        return False
    if np.any(np.abs(Y.values[sigma_nodes] - spec.zeta.values[sigma_nodes]) > EQUALITY_TOL):
        return False
    return is_martingale_on(sol.J, start, tau_r) and is_martingale_on(sol.Jp, start, sigma_r)


def fixed_point_residuals(sol: DynkinSolution) -> Tuple[float, float]:
    """(|J - R(J' + xi)|, |J' - R(J - zeta)|) in sup-norm."""
    spec = sol.spec
    return (
        sol.J.sup_distance(snell_envelope(sol.Jp + spec.xi).envelope),
        sol.Jp.sup_distance(snell_envelope(sol.J - spec.zeta).envelope),
    )


def supermartingale_shortcut(spec: GameSpec, theta: NodeRef, verify_cap: int = 50) -> Optional[Tuple[StoppingTime, StoppingTime, float]]:
    """
    When xi is a supermartingale family, (theta, T) is a theta-saddle point
    worth xi(theta), whatever zeta is.

    The pair is checked against all stopping times when there are at most
    `verify_cap` of them.
    """
    if not is_supermartingale(spec.xi):
        return None

    from . import oracle  # pylint: disable=import-outside-toplevel

    tree = spec.tree
    tau, sigma = immediate(tree, theta), terminal(tree, theta)
    if oracle.count_stopping_times(tree, theta) <= verify_cap and not oracle.verify_saddle(spec, theta, tau, sigma):
        logger.error("(theta, T) failed the saddle check at %r although xi is a supermartingale", tree.label(theta))
        return None
    return tau, sigma, spec.xi[theta]

# Admissible families, stopping times and the Snell envelope on an event tree.
#
# A family holds one value per node: phi(theta) on the atom where theta stops
# at that node. A stopping time is its stop region, an antichain met once by
# every path from its origin node down to the leaves.

import logging

from dataclasses import dataclass
from typing import Any, FrozenSet, Hashable, Iterable, List, Union

import numpy as np

from .common import IDENTITY_TOL, EQUALITY_TOL, InvalidModel, RegionMismatch, BadLambda
from .filtration import EventTree, NodeRef

logger = logging.getLogger("dynkin-tools.families")

__all__ = [
    "Family",
    "StoppingTime",
    "SnellResult",
    "immediate",
    "terminal",
    "precedes",
    "first_hitting",
    "check_lambda",
    "is_supermartingale",
    "is_martingale_on",
    "snell_envelope",
    "lambda_hitting",
    "minimal_optimal",
    "check_optimality_criterion",
]


class Family:
    """
    One finite real value per node of `tree`. Read-only after construction.
    """

    __slots__ = ("tree", "values")

    def __init__(self, tree: EventTree, values: Any) -> None:
        array = np.array(values, dtype=np.float64, copy=True)
        if array.shape != (len(tree),):
            raise ValueError(f"Family needs {len(tree)} values, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            bad = [tree.label(int(idx)) for idx in np.flatnonzero(~np.isfinite(array))]
            raise InvalidModel(f"Family values must be finite, offending nodes: {bad}")
        array.setflags(write=False)
        self.tree = tree
        self.values = array

    @classmethod
    def constant(cls, tree: EventTree, value: float = 0.0) -> "Family":
        return cls(tree, np.full(len(tree), value))

    def __getitem__(self, node: NodeRef) -> float:
        return float(self.values[self.tree.index(node)])

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"Family({np.array2string(self.values, precision=6)})"

    def _other(self, other: Union["Family", float]) -> Any:
        if isinstance(other, Family):
            if other.tree is not self.tree:
                raise ValueError("Families live on different trees")
            return other.values
        return float(other)

    def __add__(self, other: Union["Family", float]) -> "Family":
        return Family(self.tree, self.values + self._other(other))

    def __sub__(self, other: Union["Family", float]) -> "Family":
        return Family(self.tree, self.values - self._other(other))

    def __neg__(self) -> "Family":
        return Family(self.tree, -self.values)

    def __mul__(self, scalar: float) -> "Family":
        return Family(self.tree, self.values * float(scalar))

    __rmul__ = __mul__

    def sup_distance(self, other: "Family") -> float:
        return float(np.max(np.abs(self.values - self._other(other))))

    def dominates(self, other: Union["Family", float], tol: float = EQUALITY_TOL) -> bool:
        return bool(np.all(self.values >= self._other(other) - tol))

    def as_dict(self) -> dict:
        return {str(self.tree.label(idx)): float(val) for idx, val in enumerate(self.values)}


class StoppingTime:
    """
    Stop region on the subtree of `origin` (the root unless restricted).

    Construction validates the antichain and covering invariants.
    """

    __slots__ = ("tree", "region", "origin", "stops")

    def __init__(self, tree: EventTree, region: Iterable[int], origin: NodeRef = 0) -> None:
        origin_idx = tree.index(origin)
        region_set = frozenset(tree.index(n) for n in region)
        outside = [n for n in region_set if not tree.is_ancestor_or_self(origin_idx, n)]
        if outside:
            raise RegionMismatch(f"Stop region has nodes outside the subtree of {tree.label(origin_idx)!r}: {sorted(tree.label(n) for n in outside)}")  # type: ignore[type-var]
        self.tree = tree
        self.region: FrozenSet[int] = region_set
        self.origin = origin_idx
        # Stop node per leaf below origin, in leaf order
        self.stops = tree.stop_nodes(region_set, origin_idx)
        self.stops.setflags(write=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StoppingTime):
            return NotImplemented
        return self.tree is other.tree and self.origin == other.origin and self.region == other.region

    def __hash__(self) -> int:
        return hash((id(self.tree), self.origin, self.region))

    def __repr__(self) -> str:
        return f"StoppingTime({self.labels()})"

    def labels(self) -> List[Hashable]:
        return [self.tree.label(n) for n in sorted(self.region)]

    def stop_times(self) -> np.ndarray:
        """Stopping date per leaf below origin."""
        return self.tree.time[self.stops]

    def restrict(self, node: NodeRef) -> "StoppingTime":
        """
        The same rule seen from `node`: an element of T_node.

        Raises RegionMismatch if the rule has already stopped before `node`.
        """
        idx = self.tree.index(node)
        if idx == self.origin:
            return self
        return StoppingTime(self.tree, [n for n in self.region if self.tree.is_ancestor_or_self(idx, n)], idx)


@dataclass(frozen=True)
class SnellResult:
    envelope: Family
    reward: Family


# ---------------------------------------------------------


def immediate(tree: EventTree, node: NodeRef = 0) -> StoppingTime:
    idx = tree.index(node)
    return StoppingTime(tree, [idx], idx)


def terminal(tree: EventTree, node: NodeRef = 0) -> StoppingTime:
    idx = tree.index(node)
    return StoppingTime(tree, tree.leaves_below(idx).tolist(), idx)


def precedes(first: StoppingTime, second: StoppingTime) -> bool:
    """
    Pathwise first <= second on the subtree of first's origin.

    Raises RegionMismatch if `second` stops before first's origin.
    """
    later = second.restrict(first.origin)
    return bool(np.all(first.stop_times() <= later.stop_times()))


def first_hitting(tree: EventTree, mask: np.ndarray, start: StoppingTime) -> StoppingTime:
    """
    Per path, the first node at-or-after `start` where `mask` holds.
    """
    region = []
    stack = list(start.region)
    while stack:
        current = stack.pop()
        if mask[current]:
            region.append(current)
        elif not tree.children[current]:
            raise RegionMismatch(f"Hitting set never reached on the path to leaf {tree.label(current)!r}")
        else:
            stack.extend(tree.children[current])
    return StoppingTime(tree, region, start.origin)


def is_supermartingale(f: Family) -> bool:
    tree = f.tree
    cont = tree.one_step_expectation(f.values)
    internal = ~np.isnan(cont)
    return bool(np.all(cont[internal] <= f.values[internal] + IDENTITY_TOL))


def is_martingale_on(f: Family, start: StoppingTime, end: StoppingTime) -> bool:
    """
    f(n) = E[f(child) | n] at every node on or after `start` and strictly before `end`.
    """
    if not precedes(start, end):
        raise RegionMismatch("is_martingale_on needs start <= end on every path")
    tree = f.tree
    cont = tree.one_step_expectation(f.values)
    stack = list(start.region)
    while stack:
        current = stack.pop()
        if current in end.region:
            continue
        if abs(f.values[current] - cont[current]) > EQUALITY_TOL:
            logger.debug("Martingale step fails at %r: %g vs %g", tree.label(current), f.values[current], cont[current])
            return False
        stack.extend(tree.children[current])
    return True


def snell_envelope(phi: Family) -> SnellResult:
    """
    Smallest supermartingale family above phi, by backward induction.
    """
    tree = phi.tree
    v = np.array(phi.values, copy=True)
    for t in range(tree.horizon - 1, -1, -1):
        lo, hi = tree.level_bounds(t)
        v[lo:hi] = np.maximum(phi.values[lo:hi], tree.expect_children(v, t))
    return SnellResult(envelope=Family(tree, v), reward=phi)


def check_lambda(lam: float) -> None:
    if not 0.0 < lam < 1.0:
        raise BadLambda(f"lambda must be in (0, 1), got {lam}")


def lambda_hitting(v: Family, phi: Family, lam: float, start: StoppingTime) -> StoppingTime:
    """
    First time at-or-after `start` with lam * v <= phi. Ties stop.

    Signed rewards are shifted by c = max(0, -min(phi)) first, so the set is
    lam * (v + c) <= phi + c. Snell envelopes commute with constant shifts,
    hence every leaf qualifies and the hit never passes minimal_optimal.
    For phi >= 0 the shift is zero.
    """
    check_lambda(lam)
    shift = max(0.0, -float(phi.values.min()))
    mask = lam * (v.values + shift) <= phi.values + shift + IDENTITY_TOL
    return first_hitting(v.tree, mask, start)


def minimal_optimal(v: Family, phi: Family, start: StoppingTime) -> StoppingTime:
    mask = np.abs(v.values - phi.values) <= EQUALITY_TOL
    return first_hitting(v.tree, mask, start)


def check_optimality_criterion(v: Family, phi: Family, start: StoppingTime, theta: StoppingTime) -> bool:
    """
    theta is optimal from `start` iff v = phi where theta stops and v is a
    martingale between start and theta.
    """
    if not precedes(start, theta):
        raise RegionMismatch("check_optimality_criterion needs start <= theta on every path")
    stops = np.fromiter(theta.region, dtype=np.int64)
    if np.any(np.abs(v.values[stops] - phi.values[stops]) > EQUALITY_TOL):
        return False
    return is_martingale_on(v, start, theta)

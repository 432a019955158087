#!/usr/bin/env python3

# Finite filtered probability space as an event tree.
#
# Nodes at depth t are the atoms of F_t. Node ids handed in by the caller are
# kept as labels, internally every node is addressed by its dense
# breadth-first index. In that order the leaves below any node form one
# contiguous span of the leaf level, which most of the helpers rely on.

import logging
import collections

from dataclasses import dataclass
from typing import Any, AbstractSet, Dict, Hashable, List, Mapping, NoReturn, Optional, Sequence, Tuple, Union, TYPE_CHECKING

import numpy as np

from .common import INPUT_TOL, MalformedTree, BadProbabilities, UnknownNode, RegionMismatch

if TYPE_CHECKING:
    from .families import Family, StoppingTime

logger = logging.getLogger("dynkin-tools.filtration")

__all__ = ["Node", "EventTree", "build_tree", "node_probability", "conditional_expectation"]


@dataclass(frozen=True)
class Node:
    id: int
    label: Hashable
    time: int
    parent: Optional[int]
    cond_prob: float


NodeRef = Union[int, Node]


class EventTree:
    """
    Validated, immutable event tree. Use build_tree() to make one.
    """

    def __init__(self, horizon: int, nodes: Sequence[Node]) -> None:
        self.horizon = horizon
        self.nodes: Tuple[Node, ...] = tuple(nodes)
        self.root = 0

        size = len(self.nodes)
        self.parent = np.array([-1 if n.parent is None else n.parent for n in self.nodes], dtype=np.int64)
        self.time = np.array([n.time for n in self.nodes], dtype=np.int64)
        self.cond_prob = np.array([n.cond_prob for n in self.nodes], dtype=np.float64)
        self.cond_prob[self.root] = 1.0

        children: List[List[int]] = [[] for _ in range(size)]
        for node in self.nodes[1:]:
            children[node.parent].append(node.id)  # type: ignore[index]
        self.children: Tuple[Tuple[int, ...], ...] = tuple(tuple(c) for c in children)

        # Breadth-first order keeps every level contiguous
        starts = np.searchsorted(self.time, np.arange(horizon + 2), side="left")
        self._level_bounds = [(int(starts[t]), int(starts[t + 1])) for t in range(horizon + 1)]

        self.prob = np.empty(size, dtype=np.float64)
        self.prob[self.root] = 1.0
        for idx in range(1, size):
            self.prob[idx] = self.prob[self.parent[idx]] * self.cond_prob[idx]

        lo, hi = self._level_bounds[horizon]
        self.leaves = np.arange(lo, hi, dtype=np.int64)

        # [first, last + 1) positions in self.leaves below each node
        span = np.empty((size, 2), dtype=np.int64)
        for idx in range(size - 1, -1, -1):
            if not self.children[idx]:
                span[idx] = (idx - lo, idx - lo + 1)
            else:
                span[idx] = (span[self.children[idx][0], 0], span[self.children[idx][-1], 1])
        self._leaf_span = span

        self._labels: Dict[Hashable, int] = {n.label: n.id for n in self.nodes}

        for array in (self.parent, self.time, self.cond_prob, self.prob, self.leaves, self._leaf_span):
            array.setflags(write=False)

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"EventTree(horizon={self.horizon}, nodes={len(self.nodes)})"

    # -----------------------------------------------------
    # Node lookups

    def index(self, node: NodeRef) -> int:
        if isinstance(node, Node):
            if node.id < len(self.nodes) and self.nodes[node.id] is node:
                return node.id
            raise UnknownNode(f"Node {node.label!r} does not belong to this tree")
        if isinstance(node, (int, np.integer)) and 0 <= node < len(self.nodes):
            return int(node)
        raise UnknownNode(f"Node index {node!r} is out of range")

    def by_label(self, label: Hashable) -> int:
        try:
            return self._labels[label]
        except KeyError:
            raise UnknownNode(f"No node with id {label!r}") from None

    def label(self, node: NodeRef) -> Hashable:
        return self.nodes[self.index(node)].label

    def is_leaf(self, node: NodeRef) -> bool:
        return not self.children[self.index(node)]

    def level_bounds(self, t: int) -> Tuple[int, int]:
        """[first, last + 1) indices of the nodes at time t."""
        return self._level_bounds[t]

    def level(self, t: int) -> np.ndarray:
        lo, hi = self._level_bounds[t]
        return np.arange(lo, hi, dtype=np.int64)

    def ancestors(self, node: NodeRef) -> List[int]:
        """Strict ancestors, nearest first."""
        idx = self.index(node)
        ret = []
        while self.parent[idx] >= 0:
            idx = int(self.parent[idx])
            ret.append(idx)
        return ret

    def path_to(self, node: NodeRef) -> List[int]:
        idx = self.index(node)
        return list(reversed(self.ancestors(idx))) + [idx]

    def is_ancestor_or_self(self, upper: int, lower: int) -> bool:
        return self.time[upper] <= self.time[lower] and (upper == lower or upper in self.ancestors(lower))

    def subtree(self, node: NodeRef) -> List[int]:
        idx = self.index(node)
        ret = []
        queue = collections.deque([idx])
        while queue:
            current = queue.popleft()
            ret.append(current)
            queue.extend(self.children[current])
        return ret

    def leaf_span(self, node: NodeRef) -> Tuple[int, int]:
        lo, hi = self._leaf_span[self.index(node)]
        return int(lo), int(hi)

    def leaves_below(self, node: NodeRef) -> np.ndarray:
        lo, hi = self.leaf_span(node)
        return self.leaves[lo:hi]

    # -----------------------------------------------------
    # Expectations

    def expect_children(self, values: np.ndarray, t: int) -> np.ndarray:
        """
        E[values(child) | node] for every node at time t < horizon.
        """
        lo, hi = self._level_bounds[t]
        nlo, nhi = self._level_bounds[t + 1]
        nxt = slice(nlo, nhi)
        return np.bincount(self.parent[nxt] - lo, weights=self.cond_prob[nxt] * values[nxt], minlength=hi - lo)

    def one_step_expectation(self, values: np.ndarray) -> np.ndarray:
        """
        E[values(child) | node] at every internal node, NaN at the leaves.
        """
        ret = np.full(len(self.nodes), np.nan)
        for t in range(self.horizon):
            lo, hi = self._level_bounds[t]
            ret[lo:hi] = self.expect_children(values, t)
        return ret

    def martingale_from_terminal(self, values: np.ndarray) -> np.ndarray:
        """
        E[values(T) | F_t] at every node, only the leaf entries of `values` are read.
        """
        ret = np.array(values, dtype=np.float64, copy=True)
        for t in range(self.horizon - 1, -1, -1):
            lo, hi = self._level_bounds[t]
            ret[lo:hi] = self.expect_children(ret, t)
        return ret

    def stop_nodes(self, region: AbstractSet[int], start: NodeRef) -> np.ndarray:
        """
        For every leaf below `start` (in leaf order) the region node at which
        the path through that leaf stops.

        Raises RegionMismatch unless the region, seen from `start`, is met
        exactly once on every path from `start` to a leaf.
        """
        start_idx = self.index(start)
        for anc in self.ancestors(start_idx):
            if anc in region:
                raise RegionMismatch(f"Region stops at {self.label(anc)!r} before node {self.label(start_idx)!r}")

        base, _ = self.leaf_span(start_idx)
        ret = np.full(len(self.leaves_below(start_idx)), -1, dtype=np.int64)
        hit = set()
        stack = [start_idx]
        while stack:
            current = stack.pop()
            if current in region:
                lo, hi = self.leaf_span(current)
                ret[lo - base : hi - base] = current
                hit.add(current)
                continue
            if not self.children[current]:
                raise RegionMismatch(f"Region misses the path to leaf {self.label(current)!r} below {self.label(start_idx)!r}")
            stack.extend(self.children[current])

        below = {n for n in region if self.is_ancestor_or_self(start_idx, n)}
        if below - hit:
            extra = sorted(self.label(n) for n in below - hit)  # type: ignore[type-var]
            raise RegionMismatch(f"Region is not an antichain below {self.label(start_idx)!r}, unreachable stops: {extra}")
        return ret


# ---------------------------------------------------------


def _fail(exc: type, message: str) -> NoReturn:
    logger.debug("Tree rejected: %s", message)
    raise exc(message)


def _hashable(value: Any) -> bool:
    try:
        hash(value)
    except TypeError:
        return False
    return True


def build_tree(spec: Mapping[str, Any]) -> EventTree:
    """
    Validate a raw tree description and return an EventTree.

    `spec` is a mapping with "horizon" and "nodes", each node a mapping with
    "id", "time", "parent" (None for the root) and "cond_prob". Extra keys
    are ignored here.
    """
    horizon = spec.get("horizon")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        _fail(MalformedTree, f"horizon must be an integer >= 1, got {horizon!r}")
    raw_nodes = spec.get("nodes")
    if not isinstance(raw_nodes, (list, tuple)) or not raw_nodes:
        _fail(MalformedTree, "nodes must be a non-empty list")

    by_id: Dict[Hashable, Mapping[str, Any]] = {}
    order: List[Hashable] = []
    for raw in raw_nodes:  # type: ignore[union-attr]
        try:
            node_id = raw["id"]
            time = raw["time"]
        except (KeyError, TypeError):
            _fail(MalformedTree, f"node entry {raw!r} needs 'id' and 'time'")
        if not _hashable(node_id):
            _fail(MalformedTree, f"node id {node_id!r} must be a string or a number")
        if node_id in by_id:
            _fail(MalformedTree, f"duplicate node id {node_id!r}")
        if not isinstance(time, int) or isinstance(time, bool) or not 0 <= time <= horizon:  # type: ignore[operator]
            _fail(MalformedTree, f"node {node_id!r}: time {time!r} outside [0, {horizon}]")
        by_id[node_id] = raw
        order.append(node_id)

    roots = [node_id for node_id in order if by_id[node_id].get("parent") is None]
    if not roots:
        _fail(MalformedTree, "missing root: no node without a parent")
    if len(roots) > 1:
        _fail(MalformedTree, f"more than one root: {roots}")
    root_id = roots[0]
    if by_id[root_id]["time"] != 0:
        _fail(MalformedTree, f"root {root_id!r} must be at time 0")

    children: Dict[Hashable, List[Hashable]] = {node_id: [] for node_id in order}
    for node_id in order:
        parent = by_id[node_id].get("parent")
        if parent is None:
            continue
        if not _hashable(parent):
            _fail(MalformedTree, f"node {node_id!r}: parent {parent!r} must be a string or a number")
        if parent not in by_id:
            _fail(MalformedTree, f"node {node_id!r}: unknown parent {parent!r}")
        if by_id[node_id]["time"] != by_id[parent]["time"] + 1:
            _fail(MalformedTree, f"node {node_id!r}: time must be parent time + 1")
        children[parent].append(node_id)

    # Breadth-first renumbering, also catches cycles and orphans
    bfs: List[Hashable] = []
    queue = collections.deque([root_id])
    while queue:
        current = queue.popleft()
        bfs.append(current)
        queue.extend(children[current])
    if len(bfs) != len(order):
        orphans = [node_id for node_id in order if node_id not in set(bfs)]
        _fail(MalformedTree, f"nodes not reachable from the root (cycle?): {orphans}")

    for node_id in bfs:
        if not children[node_id] and by_id[node_id]["time"] != horizon:
            _fail(MalformedTree, f"leaf {node_id!r} at time {by_id[node_id]['time']} is above the horizon {horizon}")

    cond: Dict[Hashable, float] = {}
    for node_id in bfs:
        raw_prob = by_id[node_id].get("cond_prob", 1.0 if node_id == root_id else None)
        try:
            prob = float(raw_prob)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            _fail(BadProbabilities, f"node {node_id!r}: cond_prob {raw_prob!r} is not a number")
        if not np.isfinite(prob) or not 0.0 < prob <= 1.0:
            _fail(BadProbabilities, f"node {node_id!r}: cond_prob {prob} not in (0, 1]")
        if node_id == root_id and abs(prob - 1.0) > INPUT_TOL:
            _fail(BadProbabilities, f"root {node_id!r}: cond_prob must be 1, got {prob}")
        cond[node_id] = prob

    for node_id in bfs:
        if children[node_id]:
            total = sum(cond[child] for child in children[node_id])
            if abs(total - 1.0) > INPUT_TOL:
                _fail(BadProbabilities, f"children of node {node_id!r} have probabilities summing to {total:.12g}, not 1")

    dense = {node_id: idx for idx, node_id in enumerate(bfs)}
    nodes = [
        Node(
            id=dense[node_id],
            label=node_id,
            time=by_id[node_id]["time"],
            parent=None if node_id == root_id else dense[by_id[node_id]["parent"]],
            cond_prob=cond[node_id],
        )
        for node_id in bfs
    ]
    tree = EventTree(horizon, nodes)  # type: ignore[arg-type]
    logger.debug("Built %r", tree)
    return tree


def node_probability(tree: EventTree, node: NodeRef) -> float:
    return float(tree.prob[tree.index(node)])


def conditional_expectation(tree: EventTree, X: "Family", start: NodeRef, at: "StoppingTime") -> float:
    """
    E[X(at) | start]: value of X where `at` stops, averaged over the paths
    through `start`.
    """
    start_idx = tree.index(start)
    stops = tree.stop_nodes(at.region, start_idx)
    weights = tree.prob[tree.leaves_below(start_idx)] / tree.prob[start_idx]
    return float(np.dot(X.values[stops], weights))

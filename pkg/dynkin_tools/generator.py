# Seeded random game models for `dynkin-game gen` and the test campaigns.

import logging

from typing import Any, Dict, List, Optional, Tuple, TYPE_CHECKING

import numpy as np

from .filtration import EventTree
from .families import Family

if TYPE_CHECKING:
    from .dynkin_core import GameSpec

logger = logging.getLogger("dynkin-tools.generator")

__all__ = ["MAX_HORIZON", "MAX_BRANCHING", "generate_model", "generate_spec", "random_family", "dominating_supermartingale"]

MAX_HORIZON = 8
MAX_BRANCHING = 6


def _random_shape(rng: np.random.Generator, horizon: int, branching: int, ragged: bool) -> Tuple[List[int], List[int], List[float]]:
    """
    Parents, times and conditional probabilities in breadth-first order.

    Every interior node gets `branching` children, or a uniform draw from
    1..branching of them when `ragged`.
    """
    parents, times, probs = [-1], [0], [1.0]
    frontier = [0]
    for t in range(horizon):
        next_frontier = []
        for node in frontier:
            count = int(rng.integers(1, branching + 1)) if ragged else branching
            weights = rng.uniform(0.1, 1.0, size=count)
            weights /= weights.sum()
            for weight in weights:
                parents.append(node)
                times.append(t + 1)
                probs.append(float(weight))
                next_frontier.append(len(parents) - 1)
        frontier = next_frontier
    return parents, times, probs


def _expect_children(probs: List[float], values: np.ndarray, node: int, children: Dict[int, List[int]]) -> float:
    return float(sum(probs[child] * values[child] for child in children[node]))


def generate_model(
    seed: int,
    horizon: int = 2,
    branching: int = 2,
    low: float = -5.0,
    high: float = 5.0,
    force_sandwich: bool = True,
    violations: int = 0,
    supermartingale_xi: bool = False,
    ragged: bool = False,
) -> Dict[str, Any]:
    """
    Random tree model in the JSON model layout, terminal values zeroed.

    force_sandwich orders each node's pair so that xi <= zeta. `violations`
    then pushes zeta below xi at that many interior nodes. With
    supermartingale_xi, xi is built backward as a supermartingale family and
    zeta is left unconstrained. `ragged` draws each node's child count
    instead of branching fully.
    """
    if not 1 <= horizon <= MAX_HORIZON:
        raise ValueError(f"horizon must be in [1, {MAX_HORIZON}], got {horizon}")
    if not 1 <= branching <= MAX_BRANCHING:
        raise ValueError(f"branching must be in [1, {MAX_BRANCHING}], got {branching}")
    if not low < high:
        raise ValueError(f"empty value range [{low}, {high}]")

    rng = np.random.default_rng(seed)
    parents, times, probs = _random_shape(rng, horizon, branching, ragged)
    size = len(parents)
    children: Dict[int, List[int]] = {idx: [] for idx in range(size)}
    for idx in range(1, size):
        children[parents[idx]].append(idx)
    interior = [idx for idx in range(size) if children[idx]]

    xi = rng.uniform(low, high, size=size)
    zeta = rng.uniform(low, high, size=size)

    if supermartingale_xi:
        xi = np.zeros(size)
        for idx in reversed(interior):
            xi[idx] = _expect_children(probs, xi, idx, children) + rng.uniform(0.0, (high - low) / 4)
    elif force_sandwich:
        xi, zeta = np.minimum(xi, zeta), np.maximum(xi, zeta)

    if violations:
        picked = rng.choice(interior, size=min(violations, len(interior)), replace=False)
        for idx in picked:
            zeta[idx] = xi[idx] - rng.uniform(0.5, 2.0)
        logger.debug("Injected xi > zeta at nodes %s", sorted(int(i) for i in picked))

    leaves = [idx for idx in range(size) if not children[idx]]
    xi[leaves] = 0.0
    zeta[leaves] = 0.0

    nodes = [
        {
            "id": idx,
            "time": times[idx],
            "parent": None if parents[idx] < 0 else parents[idx],
            "cond_prob": probs[idx],
            "xi": float(xi[idx]),
            "zeta": float(zeta[idx]),
        }
        for idx in range(size)
    ]
    logger.debug("Generated model: seed %d, %d nodes, horizon %d", seed, size, horizon)
    return {"horizon": horizon, "nodes": nodes}


def generate_spec(seed: int, **kwargs: Any) -> "GameSpec":
    """
    generate_model() parsed into a GameSpec, for the property-test campaigns.
    """
    from .model_io import parse_model  # pylint: disable=import-outside-toplevel
    from .dynkin_core import GameSpec  # pylint: disable=import-outside-toplevel

    model = parse_model(generate_model(seed, **kwargs))
    return GameSpec(model.tree, model.xi, model.zeta)


def random_family(tree: EventTree, rng: np.random.Generator, low: float = -5.0, high: float = 5.0, zero_terminal: bool = False) -> Family:
    values = rng.uniform(low, high, size=len(tree))
    if zero_terminal:
        values[tree.leaves] = 0.0
    return Family(tree, values)


def dominating_supermartingale(phi: Family, rng: np.random.Generator, slack: float = 1.0, floor: Optional[float] = None) -> Family:
    """
    Random supermartingale h with h >= phi (and h >= floor when given),
    built backward: h(n) = max(phi(n), E[h(child) | n]) + U(0, slack).
    """
    tree = phi.tree
    h = np.array(phi.values, copy=True)
    if floor is not None:
        h = np.maximum(h, floor)
    h[tree.leaves] += rng.uniform(0.0, slack, size=len(tree.leaves))
    for t in range(tree.horizon - 1, -1, -1):
        lo, hi = tree.level_bounds(t)
        h[lo:hi] = np.maximum(h[lo:hi], tree.expect_children(h, t)) + rng.uniform(0.0, slack, size=hi - lo)
    return Family(tree, h)

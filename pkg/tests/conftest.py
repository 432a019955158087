import json

from typing import Any, Callable, Dict, List

import pytest

from dynkin_tools.filtration import EventTree, build_tree
from dynkin_tools.dynkin_core import GameSpec
from dynkin_tools.model_io import parse_model


def chain_document(xi: List[float], zeta: List[float]) -> Dict[str, Any]:
    return {
        "horizon": 2,
        "nodes": [
            {"id": "t0", "time": 0, "parent": None, "cond_prob": 1.0, "xi": xi[0], "zeta": zeta[0]},
            {"id": "t1", "time": 1, "parent": "t0", "cond_prob": 1.0, "xi": xi[1], "zeta": zeta[1]},
            {"id": "t2", "time": 2, "parent": "t1", "cond_prob": 1.0, "xi": xi[2], "zeta": zeta[2]},
        ],
    }


def binomial_document(xi: Dict[str, float], zeta: Dict[str, float]) -> Dict[str, Any]:
    parents = {"r": None, "u": "r", "d": "r", "uu": "u", "ud": "u", "du": "d", "dd": "d"}
    return {
        "horizon": 2,
        "nodes": [
            {
                "id": node,
                "time": len(node) if parent else 0,
                "parent": parent,
                "cond_prob": 1.0 if parent is None else 0.5,
                "xi": xi.get(node, 0.0),
                "zeta": zeta.get(node, 0.0),
            }
            for node, parent in parents.items()
        ],
    }


@pytest.fixture
def chain_tree() -> EventTree:
    return build_tree(chain_document([0, 0, 0], [0, 0, 0]))


@pytest.fixture
def binomial_tree() -> EventTree:
    return build_tree(binomial_document({}, {}))


@pytest.fixture
def chain_spec() -> GameSpec:
    """xi = (0, 1, 0), zeta = (2, 2, 0): value 1, tau* = {t1}, sigma* = {t2}"""
    model = parse_model(chain_document([0, 1, 0], [2, 2, 0]))
    return GameSpec(model.tree, model.xi, model.zeta)


@pytest.fixture
def binomial_spec() -> GameSpec:
    """xi = 1 at u, zeta = (3, 2, 1) at (r, u, d): value 0.5"""
    model = parse_model(binomial_document({"u": 1.0}, {"r": 3.0, "u": 2.0, "d": 1.0}))
    return GameSpec(model.tree, model.xi, model.zeta)


@pytest.fixture
def diverging_spec() -> GameSpec:
    """xi = (3, 2, 0) above zeta = (1, 1, 0) at t0 and t1"""
    model = parse_model(chain_document([3, 2, 0], [1, 1, 0]))
    return GameSpec(model.tree, model.xi, model.zeta)


@pytest.fixture
def quiet_spec() -> GameSpec:
    """xi < 0 < zeta before the horizon"""
    model = parse_model(binomial_document({"r": -1.0, "u": -2.0, "d": -0.5}, {"r": 1.0, "u": 0.5, "d": 2.0}))
    return GameSpec(model.tree, model.xi, model.zeta)


@pytest.fixture
def write_model(tmp_path) -> Callable[[Dict[str, Any]], str]:
    counter = iter(range(1000))

    def _write(document: Dict[str, Any]) -> str:
        path = tmp_path / f"model-{next(counter)}.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture(name="chain_document")
def chain_document_fixture() -> Callable[[List[float], List[float]], Dict[str, Any]]:
    return chain_document


@pytest.fixture(name="binomial_document")
def binomial_document_fixture() -> Callable[[Dict[str, float], Dict[str, float]], Dict[str, Any]]:
    return binomial_document

# JSON model files and report documents.

import sys
import json
import logging
import pathlib

from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Union

from .common import InvalidModel
from .filtration import EventTree, build_tree
from .families import Family, StoppingTime
from .dynkin_core import DynkinSolution, EpsilonSaddle
from .oracle import OracleReport

logger = logging.getLogger("dynkin-tools.model-io")

__all__ = ["GameModel", "parse_model", "load_model", "write_json", "solution_report", "oracle_report", "epsilon_report"]


@dataclass(frozen=True)
class GameModel:
    """A validated tree with the payoff families as read, before normalization."""

    tree: EventTree
    xi: Family
    zeta: Family

    @property
    def needs_normalization(self) -> bool:
        leaves = self.tree.leaves
        return bool((self.xi.values[leaves] != 0.0).any() or (self.zeta.values[leaves] != 0.0).any())


def _payoffs(tree: EventTree, nodes: List[Mapping[str, Any]], key: str) -> Family:
    values = [0.0] * len(tree)
    for raw in nodes:
        try:
            values[tree.by_label(raw["id"])] = float(raw[key])
        except KeyError:
            raise InvalidModel(f"node {raw.get('id')!r}: missing '{key}'") from None
        except (TypeError, ValueError):
            raise InvalidModel(f"node {raw.get('id')!r}: '{key}' is not a number: {raw[key]!r}") from None
    return Family(tree, values)


def parse_model(document: Mapping[str, Any]) -> GameModel:
    if not isinstance(document, Mapping):
        raise InvalidModel("model document must be a JSON object")
    tree = build_tree(document)
    nodes = list(document["nodes"])
    return GameModel(tree=tree, xi=_payoffs(tree, nodes, "xi"), zeta=_payoffs(tree, nodes, "zeta"))


def load_model(path: Union[str, pathlib.Path]) -> GameModel:
    path = pathlib.Path(path)
    logger.debug("Reading model from %s", path)
    try:
        text = path.read_text(encoding="utf-8")
    except (FileNotFoundError, PermissionError, IsADirectoryError, UnicodeDecodeError) as ex:
        raise InvalidModel(f"{path}: {ex}") from None
    try:
        document = json.loads(text)
    except json.JSONDecodeError as ex:
        raise InvalidModel(f"{path}:{ex.lineno}:{ex.colno}: {ex.msg}") from None
    return parse_model(document)


def write_json(document: Any, output: Optional[str] = None) -> None:
    """
    Write to `output`, or to stdout when it's None or "-".
    """
    text = json.dumps(document, indent=2) + "\n"
    if output in (None, "-"):
        sys.stdout.write(text)
        return
    pathlib.Path(output).write_text(text, encoding="utf-8")  # type: ignore[arg-type]
    logger.debug("Wrote %s", output)


# ---------------------------------------------------------


def _labels(time: Optional[StoppingTime]) -> List[Any]:
    return [] if time is None else time.labels()


def solution_report(sol: DynkinSolution) -> Dict[str, Any]:
    tree = sol.spec.tree
    report: Dict[str, Any] = {
        "value": None,
        "raw_value": None,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "mokobodski": str(sol.mokobodski),
        "fails_at": [tree.label(n) for n in sol.mokobodski.fails_at],
        "J": sol.J.as_dict(),
        "Jp": sol.Jp.as_dict(),
        "Y": None if sol.Y is None else sol.Y.as_dict(),
        "tau_star": _labels(sol.tau_star),
        "sigma_star": _labels(sol.sigma_star),
    }
    if sol.solved and sol.Y is not None:
        report["value"] = sol.Y[tree.root]
        report["raw_value"] = sol.Y[tree.root] + sol.spec.offset[tree.root]  # type: ignore[index]
    return report


def oracle_report(report: OracleReport) -> Dict[str, Any]:
    return {
        "lower": report.lower,
        "upper": report.upper,
        "count": report.strategy_count,
        "table": None if report.pair_table is None else report.pair_table.tolist(),
    }


def epsilon_report(eps: EpsilonSaddle, bounds_hold: Optional[bool]) -> Dict[str, Any]:
    return {
        "lambda": eps.lam,
        "tau_lambda": eps.tau_lambda.labels(),
        "sigma_lambda": eps.sigma_lambda.labels(),
        "lower_slack": eps.lower_slack,
        "upper_slack": eps.upper_slack,
        "bounds_hold": bounds_hold,
    }

import json

import pytest

from dynkin_tools import __version__
from dynkin_tools.dynkin_cli import main, parse_args, RunConfig, EXIT_OK, EXIT_INVALID, EXIT_FAILS, EXIT_TOO_MANY


def run(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    out = capsys.readouterr().out
    return info.value.code, out


def run_json(argv, capsys):
    code, out = run(argv, capsys)
    return code, json.loads(out)


@pytest.fixture
def chain_model(write_model, chain_document):
    return write_model(chain_document([0, 1, 0], [2, 2, 0]))


@pytest.fixture
def diverging_model(write_model, chain_document):
    return write_model(chain_document([3, 2, 0], [1, 1, 0]))


@pytest.fixture
def binomial_model(write_model, binomial_document):
    return write_model(binomial_document({"u": 1.0}, {"r": 3.0, "u": 2.0, "d": 1.0}))


def test_version(capsys):
    code, out = run(["--version"], capsys)
    assert code == 0
    assert out.startswith(f"dynkin-tools/{__version__} python/")
    assert "numpy/" in out


def test_subcommand_required(capsys):
    code, _ = run([], capsys)
    assert code == 2


def test_run_config_defaults():
    config = RunConfig.from_args(parse_args(["solve", "--input", "model.json"]))
    assert config.subcommand == "solve"
    assert config.tol == 1e-12
    assert config.max_iter is None
    assert not config.human

    config = RunConfig.from_args(parse_args(["gen", "--seed", "7", "--force-sandwich", "false", "--human"]))
    assert config.seed == 7
    assert config.force_sandwich is False
    assert config.human is True


# ---------------------------------------------------------
# validate


def test_validate(binomial_model, capsys):
    code, summary = run_json(["validate", "-i", binomial_model], capsys)
    assert code == EXIT_OK
    assert summary == {"nodes": 7, "horizon": 2, "normalization": "ok", "sandwich": "ok", "fails_at": []}

    code, out = run(["validate", "-i", binomial_model, "--human"], capsys)
    assert code == EXIT_OK
    assert "7 nodes, T=2, sandwich: ok" in out


def test_validate_bad_probabilities(write_model, binomial_document, capsys, caplog):
    document = binomial_document({}, {})
    document["nodes"][1]["cond_prob"] = 0.6
    code, _ = run(["validate", "-i", write_model(document)], capsys)
    assert code == EXIT_INVALID
    assert "BadProbabilities" in caplog.text


def test_validate_normalization_note(write_model, chain_document, capsys):
    code, summary = run_json(["validate", "-i", write_model(chain_document([0, 1, 2], [3, 3, 2]))], capsys)
    assert code == EXIT_OK
    assert summary["normalization"] == "required"


def test_validate_and_solve_share_the_sandwich_margin(write_model, chain_document, capsys):
    model = write_model(chain_document([0, 1, 0], [2, 1 - 1e-10, 0]))
    code, summary = run_json(["validate", "-i", model], capsys)
    assert code == EXIT_OK
    assert summary["sandwich"] == "fails"
    assert summary["fails_at"] == ["t1"]

    code, report = run_json(["solve", "-i", model], capsys)
    assert code == EXIT_FAILS
    assert report["fails_at"] == ["t1"]

    code, summary = run_json(["validate", "-i", model, "--tol", "1e-9"], capsys)
    assert summary["sandwich"] == "ok"


@pytest.mark.parametrize("field, value", [("id", [0]), ("parent", [0]), ("parent", {"a": 1})])
def test_validate_unhashable_ids(write_model, chain_document, capsys, caplog, field, value):
    document = chain_document([0, 1, 0], [2, 2, 0])
    document["nodes"][1][field] = value
    code, _ = run(["validate", "-i", write_model(document)], capsys)
    assert code == EXIT_INVALID
    assert "MalformedTree" in caplog.text


def test_validate_bad_files(tmp_path, capsys, caplog):
    code, _ = run(["validate", "-i", str(tmp_path / "missing.json")], capsys)
    assert code == EXIT_INVALID

    broken = tmp_path / "broken.json"
    broken.write_text('{"horizon": 2,\n "nodes": [}', encoding="utf-8")
    code, _ = run(["validate", "-i", str(broken)], capsys)
    assert code == EXIT_INVALID
    assert "broken.json:2:" in caplog.text


# ---------------------------------------------------------
# solve


def test_solve_chain(chain_model, capsys):
    code, report = run_json(["solve", "-i", chain_model], capsys)
    assert code == EXIT_OK
    assert report["value"] == 1.0
    assert report["tau_star"] == ["t1"]
    assert report["sigma_star"] == ["t2"]
    assert report["mokobodski"] == "holds"
    assert report["Y"] == {"t0": 1.0, "t1": 1.0, "t2": 0.0}


def test_solve_to_file(chain_model, tmp_path, capsys):
    output = tmp_path / "report.json"
    code, out = run(["solve", "-i", chain_model, "-o", str(output)], capsys)
    assert code == EXIT_OK
    assert out == ""
    assert json.loads(output.read_text())["value"] == 1.0


def test_solve_mokobodski_fails(diverging_model, capsys):
    code, report = run_json(["solve", "-i", diverging_model], capsys)
    assert code == EXIT_FAILS
    assert report["fails_at"] == ["t0", "t1"]
    assert report["value"] is None
    assert report["converged"] is False


def test_solve_quiet_game(write_model, binomial_document, capsys):
    model = write_model(binomial_document({"r": -1.0, "u": -2.0, "d": -0.5}, {"r": 1.0, "u": 0.5, "d": 2.0}))
    code, report = run_json(["solve", "-i", model], capsys)
    assert code == EXIT_OK
    assert report["value"] == 0.0
    assert report["iterations"] == 1


def test_solve_normalizes_terminal_values(write_model, chain_document, capsys):
    code, report = run_json(["solve", "-i", write_model(chain_document([0, 1, 2], [3, 3, 2]))], capsys)
    assert code == EXIT_OK
    assert report["value"] == pytest.approx(0.0)
    assert report["raw_value"] == pytest.approx(2.0)


def test_solve_human(binomial_model, capsys):
    code, out = run(["solve", "-i", binomial_model, "--human"], capsys)
    assert code == EXIT_OK
    assert out.splitlines()[0].split() == ["node", "time", "prob", "xi", "zeta", "J", "Jp", "Y", "stop"]
    assert "value: 0.5" in out


# ---------------------------------------------------------
# oracle


def test_oracle_binomial(binomial_model, capsys):
    code, report = run_json(["oracle", "-i", binomial_model], capsys)
    assert code == EXIT_OK
    assert report["count"] == 5
    assert report["lower"] == pytest.approx(0.5)
    assert report["upper"] == pytest.approx(0.5)
    assert report["solver"] == pytest.approx(0.5)
    assert report["fair"] is True
    assert report["saddle_verified"] is True
    assert len(report["table"]) == 5

    code, out = run(["oracle", "-i", binomial_model, "--human"], capsys)
    assert code == EXIT_OK
    assert "FAIR: yes" in out


def test_oracle_cap(binomial_model, capsys):
    code, _ = run(["oracle", "-i", binomial_model, "--cap", "4"], capsys)
    assert code == EXIT_TOO_MANY


def test_oracle_supermartingale_shortcut(diverging_model, capsys):
    code, report = run_json(["oracle", "-i", diverging_model], capsys)
    assert code == EXIT_FAILS
    assert report["solver"] is None
    assert report["shortcut"] == {"tau": ["t0"], "sigma": ["t2"], "value": 3.0, "verified": True}


# ---------------------------------------------------------
# epsilon


def test_epsilon_chain(chain_model, capsys):
    code, report = run_json(["epsilon", "-i", chain_model, "--lambda", "0.5"], capsys)
    assert code == EXIT_OK
    assert report["tau_lambda"] == ["t1"]
    assert report["sigma_lambda"] == ["t2"]
    assert report["bounds_hold"] is True
    assert report["upper_slack"] == pytest.approx(0.5)


def test_epsilon_bad_lambda(chain_model, capsys):
    with pytest.raises(SystemExit) as info:
        main(["epsilon", "-i", chain_model, "--lambda", "1.5"])
    assert info.value.code == 2
    assert "BadLambda" in capsys.readouterr().err


def test_epsilon_needs_a_solution(diverging_model, capsys):
    code, _ = run(["epsilon", "-i", diverging_model], capsys)
    assert code == EXIT_FAILS


# ---------------------------------------------------------
# gen


def test_gen_is_deterministic(tmp_path, capsys):
    first, second = tmp_path / "first.json", tmp_path / "second.json"
    for path in (first, second):
        code, _ = run(["gen", "--seed", "1", "--horizon", "2", "--branching", "2", "-o", str(path)], capsys)
        assert code == EXIT_OK
    assert first.read_bytes() == second.read_bytes()

    code, summary = run_json(["validate", "-i", str(first)], capsys)
    assert code == EXIT_OK
    assert summary["nodes"] == 7
    assert summary["horizon"] == 2
    assert summary["sandwich"] == "ok"
    assert summary["normalization"] == "ok"


@pytest.mark.parametrize("seed", range(10))
def test_gen_round_trip(seed, tmp_path, capsys):
    path = tmp_path / "model.json"
    code, _ = run(["gen", "--seed", str(seed), "--horizon", "3", "--branching", "3", "-o", str(path)], capsys)
    assert code == EXIT_OK
    code, _ = run(["validate", "-i", str(path)], capsys)
    assert code == EXIT_OK


def test_gen_violations(capsys):
    code, document = run_json(["gen", "--seed", "3", "--violations", "2"], capsys)
    assert code == EXIT_OK
    assert any(node["xi"] > node["zeta"] for node in document["nodes"])


def test_gen_bad_shape(capsys):
    code, _ = run(["gen", "--horizon", "0"], capsys)
    assert code == EXIT_INVALID


def test_gen_ragged(capsys):
    code, document = run_json(["gen", "--seed", "1", "--horizon", "3", "--branching", "3", "--ragged"], capsys)
    assert code == EXIT_OK
    children = {}
    for node in document["nodes"]:
        children.setdefault(node["parent"], []).append(node["id"])
    assert all(1 <= len(ids) <= 3 for parent, ids in children.items() if parent is not None)

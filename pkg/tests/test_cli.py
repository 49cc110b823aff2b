import csv
import json

import pytest

from favardlab.cli import build_parser, config_from_args, main, set_threads
from favardlab.experiments import EXPERIMENTS, ConfigError, ExperimentConfig, load_schema, run


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_generate_writes_csv_and_json(tmp_path):
    assert main(["generate", "--n", "0..2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "generate.csv")
    assert rows[0] == ["n", "cells", "side", "measure"]
    assert [r[1] for r in rows[1:]] == ["1", "4", "16"]
    report = json.loads((tmp_path / "generate.json").read_text())
    assert report["sets"]["1"]["anchors"][1] == [0.75, 0.0]


def test_energy_subcommand_columns(tmp_path):
    assert main(["energy", "--n", "1..3", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "energy-law.csv")
    assert rows[0] == ["n", "s", "I_s", "quadrature_order"]
    assert len(rows) == 4


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 5, "params": {"lines": 10}}))
    argv = ["counterexample", "coplanar-tube", "--seed", "1", "--param", "lines=20",
            "--param", "deltas=[0.1,0.01]", "--config", str(cfg), "--out", str(tmp_path)]
    args = build_parser().parse_args(argv)
    merged = config_from_args(args)
    assert merged["seed"] == 5
    assert merged["params"] == {"lines": 10, "deltas": [0.1, 0.01]}
    assert main(argv) == 0
    report = json.loads((tmp_path / "coplanar-tube.json").read_text())
    assert report["coplanar"]["seed"] == 5 and report["coplanar"]["lines"] == 10


def test_invalid_config_gives_error_json(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"seed": -3}))
    assert main(["decay", "energy-law", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "ConfigError"
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_missing_config_file(tmp_path):
    assert main(["decay", "marstrand", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert (tmp_path / "error.json").exists()


def test_resource_error_is_reported(tmp_path):
    assert main(["generate", "--n", "9", "--out", str(tmp_path)]) == 1
    assert json.loads((tmp_path / "error.json").read_text())["error"] == "ResourceLimitError"


def test_bad_param_syntax(tmp_path):
    assert main(["counterexample", "slope-half-shadow", "--param", "oops", "--out", str(tmp_path)]) == 2


def test_schema_validation():
    schema = load_schema()
    assert set(schema["properties"]["experiment"]["enum"]) == set(EXPERIMENTS)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "energy-law"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "energy-law", "seed": 0, "set": {"n": {"from": 5, "to": 2}}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "nope", "seed": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "energy-law", "seed": 0, "colour": "red"})


def test_set_threads_clamps():
    assert set_threads(1) == 1
    assert set_threads(10_000) >= 1
    with pytest.raises(ValueError):
        set_threads(0)


QUICK = {
    "generate": {},
    "favard-curve-decay": {"set": {"n": {"from": 1, "to": 3}}},
    "mattila-neighborhood": {"scales": {"base": 4, "k": {"from": 2, "to": 4}}},
    "non-transversal-line": {"scales": {"base": 2, "k": {"from": 4, "to": 6}}},
    "energy-law": {"set": {"n": {"from": 1, "to": 3}}},
    "lemma-product": {"set": {"n": {"from": 1, "to": 3}}},
    "transversality": {"family": {"type": "curve"}, "params": {"pairs": 50, "psi_samples": 200}},
    "visibility-decay": {"set": {"n": {"from": 1, "to": 3}}, "params": {"quad_points": 32}},
    "slope-half-shadow": {"set": {"n": {"from": 0, "to": 3}}},
    "coplanar-tube": {"params": {"lines": 20}},
    "cross-estimators": {"set": {"n": {"from": 1, "to": 1}}, "params": {"drops": 20000}},
    "marstrand": {"set": {"ratio": "1/5", "n": {"from": 4, "to": 4}}, "params": {"alphas": 4}},
}


@pytest.mark.parametrize("name", sorted(EXPERIMENTS))
def test_every_experiment_runs_and_names_its_target(name, tmp_path):
    res = run({"experiment": name, "seed": 3, **QUICK[name]}, tmp_path)
    assert (tmp_path / f"{name}.csv").read_text() == res.csv
    report = json.loads((tmp_path / f"{name}.json").read_text())
    target = report.get("target") or report.get("metadata", {}).get("target")
    assert isinstance(target, str) and target
    again = run({"experiment": name, "seed": 3, **QUICK[name]})
    assert again.csv == res.csv

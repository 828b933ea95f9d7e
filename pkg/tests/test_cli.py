import json
import sys
from pathlib import Path

import pytest

# Ensure project root is on sys.path so tests can import package
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from diffusive_transport_lab.cli import build_parser, load_config, main
from diffusive_transport_lab.errors import ConfigurationError


def write_config(tmp_path, document):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return str(path)


def test_parser_knows_every_study():
    parser = build_parser()
    args = parser.parse_args(["--log-level", "DEBUG", "kernel-check", "--threads", "3"])
    assert args.command == "kernel-check"
    assert args.threads == 3
    assert args.log_level == "DEBUG"
    with pytest.raises(SystemExit):
        parser.parse_args(["plot"])


def test_load_config_overrides_the_study_list(tmp_path):
    path = write_config(tmp_path, {"eps": [0.2, 0.1], "studies": ["milne", "oracle"]})
    assert load_config(path, "run").studies == ["milne", "oracle"]
    assert load_config(path, "characteristics").studies == ["characteristics"]
    # a rate study now needs three eps values
    with pytest.raises(ConfigurationError):
        load_config(path, "converge")


def test_bad_config_exits_with_2(tmp_path):
    path = write_config(tmp_path, {"grid": {"n_polar": 5}})
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2


def test_bad_thread_count_exits_with_2(tmp_path):
    path = write_config(tmp_path, {"studies": ["characteristics"]})
    assert main(["run", "--config", path, "--threads", "0", "--out", str(tmp_path / "out")]) == 2
    assert not (tmp_path / "out").exists()


def test_study_error_exits_with_2(tmp_path):
    path = write_config(tmp_path, {"oracle": {"max_unknowns": 10}})
    assert main(["oracle", "--config", path, "--out", str(tmp_path / "out")]) == 2


def test_passing_study_exits_with_0(tmp_path):
    path = write_config(tmp_path, {
        "characteristics": {"eta_max": 10.0, "n_eta": 11, "n_phi": 13, "n_paths_eta": 2, "n_paths_phi": 3, "n_samples": 0},
    })
    out = tmp_path / "out"
    assert main(["characteristics", "--config", path, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert report["config"]["studies"] == ["characteristics"]
    assert (out / "hollow_nonconvex.csv").exists()


def test_failing_band_exits_with_1(tmp_path):
    path = write_config(tmp_path, {
        "characteristics": {"eta_max": 10.0, "n_eta": 11, "n_phi": 13, "n_paths_eta": 2, "n_paths_phi": 3, "n_samples": 0},
        "bands": {"characteristics.hollow_points": {"kind": "value", "high": 0.0}},
    })
    assert main(["characteristics", "--config", path, "--out", str(tmp_path / "out")]) == 1

import csv
import io
import json

import pytest

from ncgeo.cli import main
from ncgeo.experiments import (
    REGISTRY,
    SCHEMAS,
    ConfigError,
    ExperimentConfig,
    closed_form_shift,
    emit_report,
    replay_mismatch,
    run_experiment,
)


def test_every_experiment_has_default_config():
    assert set(REGISTRY) == set(SCHEMAS)
    for name in SCHEMAS:
        cfg = ExperimentConfig.build(name)
        assert set(cfg.as_dict()) == set(SCHEMAS[name])


def test_config_parsing():
    cfg = ExperimentConfig.build("volume", {"theta": "0.21", "N": "40"})
    assert cfg["theta"] == 0.21 and cfg["N"] == 40
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg and back.hash == cfg.hash
    with pytest.raises(ConfigError, match="unknown key"):
        ExperimentConfig.build("volume", {"M": "10"})
    with pytest.raises(ConfigError, match="unknown experiment"):
        ExperimentConfig.build("nope")
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.build("volume", {"N": "many"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("experiment=volume\nN=4\n", "cocycle")


def test_list_values():
    cfg = ExperimentConfig.build("torus-dixmier", {"eps_values": "1,2"})
    assert cfg["eps_values"] == (1.0, 2.0)
    assert "eps_values=1.0,2.0" in cfg.to_text()


@pytest.fixture(scope="module")
def volume_report():
    return run_experiment(ExperimentConfig.build("volume"))


def test_report_json_roundtrip(volume_report):
    data = emit_report(volume_report, "json")
    assert emit_report(volume_report, "json") == data
    assert ExperimentConfig.from_report_json(data.decode()) == volume_report.config
    parsed = json.loads(data)
    assert list(parsed)[:3] == ["config", "config_hash", "headline"]
    assert parsed["passed"] is True


def test_report_csv(volume_report):
    text = emit_report(volume_report, "csv").decode()
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == len(volume_report.config.grid().times) + 1
    assert rows[0] == ["t", "tTr_L0", "tTr_L"]
    assert rows[1][0] == "0.64000000000000001"


def test_report_text(volume_report):
    text = emit_report(volume_report, "text").decode()
    assert "[PASS] V0_equals_2pi" in text
    with pytest.raises(ConfigError):
        emit_report(volume_report, "xml")


def test_replay_is_bit_identical():
    cfg = ExperimentConfig.build("flow-mc", {"M": "20000"})
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.headline == b.headline and a.records == b.records
    stored = emit_report(a, "json").decode()
    assert replay_mismatch(stored, b) == []
    other = run_experiment(ExperimentConfig.build("flow-mc", {"M": "20000", "seed": "8"}))
    issues = replay_mismatch(stored, other)
    assert "config hash differs" in issues and any(i.startswith("headline") for i in issues)


def test_closed_form_shift_oracle():
    import math

    res = closed_form_shift(0.37, [1e-4, 5e-5, 2.5e-5, 1.25e-5])
    assert res.value == pytest.approx(math.pi / 3, rel=1e-3)


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("NCGEO_OUT", raising=False)
    assert main(["equidistribution"]) == 0
    assert "[PASS]" in capsys.readouterr().out
    assert main(["equidistribution", "tol=1e-9"]) == 1
    assert main(["equidistribution", "bogus=1"]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert main(["nope"]) == 2
    assert main(["equidistribution", "theta"]) == 2
    assert main(["--format", "yaml", "equidistribution"]) == 2
    assert main(["list"]) == 0
    assert "volume" in capsys.readouterr().out.split()


def test_cli_invalid_numeric_parameters(capsys):
    # z = -10 is an eigenvalue of L0 = -(m^2+n^2)/2 at (m, n) = (2, 4)
    assert main(["resolvent-trend", "z_re=-10"]) == 2
    assert "spectrum" in capsys.readouterr().err


def test_cli_writes_reports(tmp_path, monkeypatch):
    monkeypatch.setenv("NCGEO_OUT", str(tmp_path / "env"))
    assert main(["connes-limit", "--format", "json"]) == 0
    rep = json.loads((tmp_path / "env" / "connes-limit" / "report.json").read_text())
    assert rep["config"]["experiment"] == "connes-limit"
    cfg_file = tmp_path / "env" / "connes-limit" / "config.cfg"
    assert main(["connes-limit", "--config", str(cfg_file), "--out", str(tmp_path / "o"), "--format", "csv"]) == 0
    assert (tmp_path / "o" / "connes-limit" / "report.csv").exists()

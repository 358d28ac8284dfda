import csv
import io
import json

import numpy as np
import pytest

from rivermamba.cli import main
from rivermamba.config import RunConfig
from rivermamba.hydrology import FloodThresholds

TINY = {
    "model": {"T": 2, "L": 2, "K": 8, "K_hres": 4, "hindcast_depths": [1, 1], "d_state": 2,
              "emb_era5": 4, "emb_glofas": 2, "emb_cpc": 2, "head_hidden": 8},
    "optimizer": {"epochs": 2, "samples_per_epoch": 6, "val_samples": 4, "log_every": 3},
    "data": {"points": 16, "days": 420, "width": 6, "height": 6, "history_years": 6},
    "seed": 7,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.json"
    cfg.write_text(json.dumps(TINY))
    data = root / "data.rsds"
    assert main(["gen-data", "--config", str(cfg), "--out", str(data), "--threads", "1"]) == 0
    return root, cfg, data


def run_train(root, cfg, data, name):
    out = root / name
    assert main(["train", "--config", str(cfg), "--data", str(data), "--out", str(out), "--threads", "1",
                 "--quiet"]) == 0
    return out


def test_config_roundtrip_and_unknown_keys(tmp_path):
    cfg = RunConfig.from_dict(TINY)
    assert RunConfig.from_dict(json.loads(cfg.to_json())).to_dict() == cfg.to_dict()
    with pytest.raises(ValueError, match="unknown run config keys: colour"):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(ValueError, match="unknown optimizer keys"):
        RunConfig.from_dict({"optimizer": {"momentum": 0.9}})
    with pytest.raises(ValueError, match="alpha"):
        RunConfig.from_dict({"loss": {"alpha": -1}})


def test_example_config_is_valid():
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "desk.json"
    cfg = RunConfig.load(path)
    assert cfg.model.K == 32 and cfg.model.T == 4 and cfg.model.L == 7 and cfg.model.d_state == 8
    assert cfg.data.points == 256 and cfg.data.days == 2000


def test_gen_data_is_deterministic(workspace, tmp_path):
    root, cfg, data = workspace
    again = tmp_path / "again.rsds"
    assert main(["gen-data", "--config", str(cfg), "--out", str(again)]) == 0
    assert again.read_bytes() == data.read_bytes()


def test_train_and_forecast_are_byte_identical(workspace, capsys):
    root, cfg, data = workspace
    a, b = run_train(root, cfg, data, "a"), run_train(root, cfg, data, "b")
    for name in ("checkpoint.rsnn", "model.json", "loss_trace.csv", "thresholds.csv", "resolved_config.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for tag, ckpt in (("fa", a), ("fb", a)):
        assert main(["forecast", "--config", str(cfg), "--data", str(data), "--checkpoint", str(ckpt),
                     "--out", str(root / tag), "--threads", "1"]) == 0
    assert (root / "fa" / "forecast.csv").read_bytes() == (root / "fb" / "forecast.csv").read_bytes()
    out = capsys.readouterr().out
    assert '"seed": 7' in out  # resolved config echoed


def test_forecast_rows_and_severity(workspace):
    root, cfg, data = workspace
    ckpt = root / "a" if (root / "a").exists() else run_train(root, cfg, data, "a")
    out = root / "sev"
    assert main(["forecast", "--config", str(cfg), "--data", str(data), "--checkpoint", str(ckpt),
                 "--out", str(out), "--split", "val"]) == 0
    th = FloodThresholds.from_csv((ckpt / "thresholds.csv").read_text())
    theta = dict(zip(th.point_ids, th.theta))
    rows = list(csv.DictReader(io.StringIO((out / "forecast.csv").read_text())))
    assert list(rows[0]) == ["point_id", "issuance", "lead", "discharge", "severity_rp"]
    assert {r["lead"] for r in rows} == {"1", "2"}
    for r in rows:
        q, sev, t = float(r["discharge"]), float(r["severity_rp"]), theta[r["point_id"]]
        assert q >= 0
        if q < t[0]:
            assert sev == 0
        else:
            assert sev == max(rp for rp, v in zip(th.return_periods, t) if q >= v)


def test_evaluate_oracle_rows(workspace, capsys):
    root, cfg, data = workspace
    out = root / "ev"
    assert main(["evaluate", "--config", str(cfg), "--data", str(data), "--oracle", "--split", "train",
                 "--out", str(out)]) == 0
    summary = list(csv.DictReader(io.StringIO((out / "summary.csv").read_text())))
    oracle = [r for r in summary if r["method"] == "oracle"]
    assert oracle and all(r["KGE"] == "100.00" and r["R2"] == "100.00" for r in oracle)
    assert all(r["F1"] in ("100.00", "nan") for r in oracle) and oracle[0]["F1"] == "100.00"
    assert {r["method"] for r in summary} == {"oracle", "persistence", "climatology"}
    assert (out / "metrics_persistence_KGE.csv").read_text().startswith("point_id,lead,rp,value\n")
    first = (out / "summary.csv").read_bytes()
    assert main(["evaluate", "--config", str(cfg), "--data", str(data), "--oracle", "--split", "train",
                 "--out", str(out)]) == 0
    assert (out / "summary.csv").read_bytes() == first


def test_evaluate_with_model(workspace):
    root, cfg, data = workspace
    ckpt = root / "a" if (root / "a").exists() else run_train(root, cfg, data, "a")
    out = root / "evm"
    assert main(["evaluate", "--config", str(cfg), "--data", str(data), "--checkpoint", str(ckpt),
                 "--out", str(out)]) == 0
    methods = {r["method"] for r in csv.DictReader(io.StringIO((out / "summary.csv").read_text()))}
    assert methods == {"rivermamba", "persistence", "climatology"}


def test_fit_thresholds_command(workspace):
    root, cfg, data = workspace
    out = root / "th"
    assert main(["fit-thresholds", "--config", str(cfg), "--data", str(data), "--out", str(out)]) == 0
    th = FloodThresholds.from_csv((out / "thresholds.csv").read_text())
    assert len(th) == 16 and np.all(np.diff(th.theta, axis=1) >= 0)


def test_failure_exits_nonzero_and_cleans_up(workspace, tmp_path, capsys):
    root, cfg, data = workspace
    out = tmp_path / "broken"
    code = main(["evaluate", "--config", str(cfg), "--data", str(tmp_path / "missing.rsds"), "--out", str(out)])
    err = capsys.readouterr().err
    assert code == 1
    assert err.startswith("error: evaluate: ") and err.count("\n") == 1
    assert not out.exists() or not any(out.iterdir())
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"K": 32, "colour": 1}}')
    assert main(["train", "--config", str(bad), "--data", str(data), "--out", str(tmp_path / "t")]) == 1
    assert "unknown model config keys" in capsys.readouterr().err
    corrupt = tmp_path / "c.rsds"
    corrupt.write_bytes(b"NOPE" + data.read_bytes()[4:])
    assert main(["fit-thresholds", "--data", str(corrupt), "--out", str(tmp_path / "c")]) == 1
    assert "bad magic" in capsys.readouterr().err
    assert not (tmp_path / "c" / "resolved_config.json").exists()


def test_curve_command(capsys):
    assert main(["curve", "--kind", "gilbert", "--width", "3", "--height", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "position,x,y,code" and len(lines) == 7
    cells = [tuple(map(int, l.split(",")[1:3])) for l in lines[1:]]
    assert sorted(cells) == [(x, y) for x in range(3) for y in range(2)]
    assert main(["curve", "--kind", "gilbert", "--width", "0", "--height", "2"]) == 1

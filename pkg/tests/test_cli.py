import csv
import json

import numpy as np
import pytest

from ppslmobo.cli import load_config, main, parse_t_values, read_csv, sha256
from ppslmobo.runner import ConfigError

STATIC = {
    "problem": "synth-P1", "seed": 0, "budget": 60, "n_init": 20,
    "train": {"n_steps": 3, "optimizer": "adam"},
    "model": {"hidden": [16, 16], "hyper_hidden": [16]},
    "surrogate": {"steps": 20, "restarts": 1},
    "heldout": {"n": 2, "front_size": 20},
}

DYNAMIC = {
    "problem": "synth-D1", "mode": "dynamic", "seed": 1, "n_init": 20, "pool_size": 40,
    "train": {"n_steps": 3},
    "model": {"hidden": [16, 16], "hyper_hidden": [16]},
    "surrogate": {"steps": 20, "restarts": 1},
    "dynamic": {"T_max": 4, "reference_size": 100},
}


def write_config(path, cfg):
    path.write_text(json.dumps(cfg, indent=2))
    return path


@pytest.fixture
def static_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("static")
    out = root / "run"
    assert main(["run", str(write_config(root / "c.json", STATIC)), "--out", str(out)]) == 0
    return out


def test_run_writes_all_artifacts(static_run):
    names = {"archive.csv", "trace.csv", "checkpoint.json", "manifest.json"}
    assert names <= {p.name for p in static_run.iterdir()}
    assert len(list((static_run / "fronts").glob("*.csv"))) == 2
    header, data = read_csv(static_run / "archive.csv")
    assert header == ["x1", "x2", "t1", "y1", "y2", "iteration", "counter"]
    assert data.shape == (60, 7)
    manifest = json.loads((static_run / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["summary"]["iterations"] == 8
    for name, digest in manifest["files"].items():
        assert sha256(static_run / name) == digest
    json.loads((static_run / "checkpoint.json").read_text())
    read_csv(static_run / "trace.csv")


def test_rerun_is_byte_identical(static_run, tmp_path):
    out = tmp_path / "again"
    assert main(["run", str(write_config(tmp_path / "c.json", STATIC)), "--out", str(out)]) == 0
    for name in ("archive.csv", "checkpoint.json"):
        assert (out / name).read_bytes() == (static_run / name).read_bytes()


def test_existing_directory_needs_force(static_run, tmp_path):
    cfg = write_config(tmp_path / "c.json", {**STATIC, "budget": 20})
    assert main(["run", str(cfg), "--out", str(static_run)]) == 2
    assert main(["run", str(cfg), "--out", str(static_run), "--force"]) == 0


def test_malformed_json_creates_nothing(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "problem": "synth-P1",\n  "budget": 60,,\n}\n')
    assert main(["run", str(bad)]) == 2
    assert f"{bad}:3:" in capsys.readouterr().err
    assert not (tmp_path / "runs").exists()


def test_invalid_value_is_line_anchored(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", {**STATIC, "batch_size": 0})
    assert main(["run", str(bad), "--out", str(tmp_path / "out")]) == 2
    err = capsys.readouterr().err
    line = next(i for i, s in enumerate(bad.read_text().splitlines(), 1) if '"batch_size"' in s)
    assert f"{bad}:{line}:" in err
    assert not (tmp_path / "out").exists()


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path / "c.json", {**STATIC, "bugdet": 10}))


def test_infer_writes_one_file_per_task(static_run, tmp_path, capsys):
    out = tmp_path / "inf"
    assert main(["infer", str(static_run / "checkpoint.json"), "--t", "0.1,0.5,0.9", "--k", "7",
                 "--out", str(out)]) == 0
    files = sorted(out.glob("*.csv"))
    assert len(files) == 3
    for f in files:
        header, data = read_csv(f)
        assert header == ["lam1", "lam2", "x1", "x2", "y1", "y2", "extrapolated"]
        assert data.shape == (7, 7)
        assert np.all(data[:, -1] == 0)


def test_infer_outside_box_flags_extrapolation(static_run, tmp_path, caplog):
    out = tmp_path / "inf"
    assert main(["infer", str(static_run / "checkpoint.json"), "--t", "1.5", "--k", "4", "--out", str(out)]) == 0
    _, data = read_csv(next(out.glob("*.csv")))
    assert np.all(data[:, -1] == 1) and np.all(np.isnan(data[:, 4:6]))
    assert any("outside the trained box" in r.message for r in caplog.records)


def test_infer_logs_wall_time(static_run, tmp_path, caplog):
    caplog.set_level("INFO", logger="ppslmobo.cli")
    main(["infer", str(static_run / "checkpoint.json"), "--t", "0.3", "--k", "5", "--out", str(tmp_path / "i")])
    assert any(" ms" in r.message for r in caplog.records)


def test_parse_t_values():
    assert [t.tolist() for t in parse_t_values("0.1, 0.5", 1)] == [[0.1], [0.5]]
    assert [t.tolist() for t in parse_t_values("0.1 0.2;0.3,0.4", 2)] == [[0.1, 0.2], [0.3, 0.4]]
    with pytest.raises(ValueError):
        parse_t_values("0.1", 2)


def test_eval_static_emits_hv_rows(static_run):
    assert main(["eval", str(static_run)]) == 0
    with open(static_run / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["front", "t1", "norm_hv", "optimum_hv"]
    assert len(rows) == 3


def test_eval_dynamic_matches_logged_migd(tmp_path):
    out = tmp_path / "dyn"
    assert main(["run", str(write_config(tmp_path / "d.json", DYNAMIC)), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert main(["eval", str(out)]) == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert float(rows[-1]["migd"]) == pytest.approx(manifest["summary"]["migd"], abs=1e-12)
    assert float(rows[-1]["mhv"]) == pytest.approx(manifest["summary"]["mhv"], abs=1e-12)
    _, data = read_csv(out / "archive.csv")
    assert data.shape[0] == 20 + 4 * 5


def test_eval_without_fronts_fails(static_run, capsys):
    for f in (static_run / "fronts").iterdir():
        f.unlink()
    assert main(["eval", str(static_run)]) == 1
    assert "no front files" in capsys.readouterr().err


def test_eval_missing_files_listed(tmp_path, capsys):
    assert main(["eval", str(tmp_path)]) == 1
    assert "manifest.json" in capsys.readouterr().err

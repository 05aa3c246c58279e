import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from randers_src.cli import CONFIG_SCHEMA, REPORT_SCHEMA, main
from randers_src.io import read_trajectory_csv


def job(tmp_path, cfg, name="job.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def report(out, command):
    data = json.loads((out / f"{command}.json").read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    return data


SCHW_SHELL = {"model": {"name": "schwarzschild", "params": {"m": 1.0}}, "command": "convexity",
              "command_params": {"boundary": "shell", "boundary_params": {"epsilon": 0.5}}}
KERR_TIME = {"model": {"name": "kerr", "params": {"m": 1.0, "a": 0.5}}, "command": "timeconvexity",
             "command_params": {"boundary": "sphere", "boundary_params": {"radius": 50}}}
NECK_LENS = {"model": {"name": "neck_annulus", "params": {"epsilon": 0.0}}, "command": "lens",
             "command_params": {"p": [2.0, 0.0], "q": [2.0, 3.0], "winding_range": 2}}


def test_convexity_schwarzschild_shell(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, SCHW_SHELL), "--out", str(out), "--expect-convex"]) == 0
    assert report(out, "convexity")["result"]["classification"] == "strongly_convex"
    assert "strongly_convex" in capsys.readouterr().out


def test_timeconvexity_kerr_violated(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, KERR_TIME), "--out", str(out)]) == 0
    res = report(out, "timeconvexity")["result"]
    assert res["classification"] == "violated"
    assert res["worst_witness"]["margin"] > res["tolerance"]  # positive margins violate
    assert "worst margin" in capsys.readouterr().out
    # CI mode turns the violation into exit status 2
    assert main(["--config", job(tmp_path, KERR_TIME), "--out", str(out), "--expect-convex"]) == 2


def test_lens_neck_census(tmp_path):
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, NECK_LENS), "--out", str(out)]) == 0
    res = report(out, "lens")["result"]
    assert len(res["solutions"]) >= 3
    assert {s["winding"] for s in res["solutions"]} >= {-1, 0, 1}
    for s in res["solutions"]:
        cols, table = read_trajectory_csv(out / s["csv_path"])
        assert cols == ["s", "x1", "x2", "t"]
        assert table[-1, 3] == pytest.approx(s["arrival_time"], rel=1e-12)


def test_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = dict(KERR_TIME, seed=7, command_params=dict(KERR_TIME["command_params"], random_samples=20))
    path = job(tmp_path, cfg)
    assert main(["--config", path, "--out", str(a)]) == 0
    assert main(["--config", path, "--out", str(b)]) == 0
    assert (a / "timeconvexity.json").read_bytes() == (b / "timeconvexity.json").read_bytes()


def test_seed_changes_random_samples(tmp_path):
    cfg = dict(KERR_TIME, command_params=dict(KERR_TIME["command_params"], random_samples=20))
    path = job(tmp_path, cfg)
    main(["--config", path, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["--config", path, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "timeconvexity.json").read_bytes() != (tmp_path / "b" / "timeconvexity.json").read_bytes()


@pytest.mark.parametrize("text,where", [
    ('{\n  "model": {"name": "kerr"},\n  "command": "convexity",\n  "colour": 1\n}', "line 4"),
    ('{\n  "model": {"name": "kerr"},\n  "command": "fly"\n}', "line 3"),
    ('{\n  "model": {"name": "kerr"},\n  "command": "geodesic",\n  "command_params": {"x0": [1, 2]}\n}', "line 4"),
    ('{\n  "model": {"name": "kerr"},\n  "command": \n}', "line 4"),
])
def test_config_errors_report_position(tmp_path, capsys, text, where):
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("config error")
    assert where in err


def test_unknown_command_param_rejected():
    cfg = dict(SCHW_SHELL, command_params={"boundary": "shell", "radius": 3})
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(cfg, CONFIG_SCHEMA)


def test_library_error_names_operation(tmp_path, capsys):
    cfg = {"model": {"name": "kerr", "params": {"a": 2.0}}, "command": "convexity"}
    assert main(["--config", job(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("convexity failed: ParamOutOfRange")


def test_thread_variable_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RANDERS_SRC_THREADS", "zero")
    assert main(["--config", job(tmp_path, SCHW_SHELL), "--out", str(tmp_path / "o")]) == 1
    assert "RANDERS_SRC_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("RANDERS_SRC_THREADS", "2")
    assert main(["--config", job(tmp_path, SCHW_SHELL), "--out", str(tmp_path / "o")]) == 0


def test_geodesic_csv_round_trip(tmp_path):
    cfg = {"model": {"name": "minkowski", "params": {"dim": 2}}, "command": "geodesic",
           "command_params": {"x0": [0.0, 0.0], "v0": [0.6, 0.8], "max_s": 5.0, "lift": "lightlike"}}
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, cfg), "--out", str(out)]) == 0
    res = report(out, "geodesic")["result"]
    cols, table = read_trajectory_csv(out / "trajectory.csv")
    assert cols == ["s", "x1", "x2", "t"]
    assert np.all(np.diff(table[:, 0]) > 0)
    assert np.allclose(table[-1, 1:3], [3.0, 4.0], atol=1e-9)
    assert table[-1, 3] == pytest.approx(res["arrival_time"], rel=1e-15)
    assert res["randers_length"] == pytest.approx(5.0, rel=1e-10)
    # values are written with full precision
    line = (out / "trajectory.csv").read_text().splitlines()[-1]
    assert [float(v) for v in line.split(",")] == list(table[-1])


def test_timelike_connect_product_csv(tmp_path):
    cfg = {"model": {"name": "minkowski", "params": {"dim": 2}}, "command": "connect",
           "command_params": {"p": [0.0, 0.0], "q": [1.0, 0.0], "mode": "timelike", "ell": 1.0}}
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, cfg), "--out", str(out)]) == 0
    sol = report(out, "connect")["result"]["solutions"][0]
    assert sol["arrival_time"] == pytest.approx(np.sqrt(2.0), rel=1e-9)
    cols, table = read_trajectory_csv(out / sol["csv_path"])
    assert cols == ["s", "x1", "x2", "u", "t"]
    assert table[-1, 3] == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("command,params", [
    ("fermat", {"points": [[10.0, 1.0, 0.0]], "vectors": [[1.0, 0.0, 0.0]]}),
    ("scan-sphere", {"radii": [20.0, 40.0]}),
    ("decay", {"classify": True}),
])
def test_remaining_commands_emit_valid_reports(tmp_path, command, params):
    cfg = {"model": {"name": "kerr", "params": {"m": 1.0, "a": 0.5}}, "command": command, "command_params": params}
    out = tmp_path / "out"
    assert main(["--config", job(tmp_path, cfg), "--out", str(out)]) == 0
    report(out, command)


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "randers_src.cli", "--config", job(tmp_path, SCHW_SHELL),
                           "--out", str(tmp_path / "o"), "--expect-convex"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

import csv
import io
import json
import math

import numpy as np
import pytest

from umbrella_billiards import cli
from umbrella_billiards.cli import parse_range, parse_seeds


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: "):])
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    return config, rows[0], rows[1:]


def test_classify_parabolic(capsys):
    code, out, _ = run(capsys, "classify", "--orbit", "axial2", "--R", "1", "--B", "1")
    assert code == 0
    record = json.loads(out)
    assert record["class"] == "parabolic"
    assert record["period"] == 2
    assert len(record["cycle"]) == 2


def test_classify_elliptic(capsys):
    code, out, _ = run(capsys, "classify", "--orbit", "axial2", "--R", "1", "--B", "1.35")
    assert code == 0
    assert json.loads(out)["class"] == "elliptic"


def test_classify_invalid_table(capsys):
    code, _, err = run(capsys, "classify", "--orbit", "axial2", "--R", "1", "--B", "2.5")
    assert code == 2
    assert "error" in err


def test_classify_not_periodic_exit_3(capsys):
    code, _, _ = run(capsys, "classify", "--family", "moon", "--R", "1.2", "--B", "1.5", "--orbit", "0.7,1.1,3")
    assert code == 3


def test_split_polyline_csv(capsys):
    code, out, _ = run(capsys, "classify", "--family", "umbrella_lemon", "--B", "1.35", "--B1", "0.01",
                       "--orbit", "split", "--format", "csv")
    assert code == 0
    _, header, rows = read_csv(out)
    assert header == ["orbit", "x", "y"]
    assert {r[0] for r in rows} == {"0", "1"}
    # each polyline closes on itself
    for k in "01":
        pts = [r[1:] for r in rows if r[0] == k]
        assert pts[0] == pts[-1]


def test_orbit_csv(capsys):
    code, out, _ = run(capsys, "orbit", "--family", "circle", "--start", "0,1.5707963267948966", "--steps", "4")
    assert code == 0
    config, header, rows = read_csv(out)
    assert header == ["step", "s", "theta", "arc_index"]
    assert config["command"] == "orbit"
    s = [float(r[1]) for r in rows]
    np.testing.assert_allclose(np.abs(np.remainder(s, 2 * math.pi) - math.pi), [math.pi, 0, math.pi, 0, math.pi],
                               atol=1e-9)


def test_orbit_normalized(capsys):
    code, out, _ = run(capsys, "orbit", "--family", "moon", "--R", "1.2", "--B", "1.5", "--start", "1,1",
                       "--steps", "50", "--normalized")
    assert code == 0
    _, _, rows = read_csv(out)
    vals = np.array([[float(r[1]), float(r[2])] for r in rows])
    assert np.all((vals >= 0) & (vals <= 1))


def test_orbit_bad_start(capsys):
    code, _, _ = run(capsys, "orbit", "--family", "circle", "--start", "0,4")
    assert code == 2


def test_portrait_csv_and_pgm(capsys, tmp_path):
    density = tmp_path / "d.pgm"
    code, out, _ = run(capsys, "portrait", "--family", "lemon", "--R", "1", "--B", "0.75",
                       "--seeds", "random:5:42", "--steps", "100", "--density", str(density), "--bins", "20")
    assert code == 0
    config, header, rows = read_csv(out)
    assert header == ["s_norm", "theta_norm", "seed_index"]
    assert "density" not in config["params"]
    vals = np.array([[float(a), float(b)] for a, b, _ in rows])
    assert np.all((vals[:, 0] >= 0) & (vals[:, 0] < 1))
    assert np.all((vals[:, 1] >= 0) & (vals[:, 1] <= 1))
    assert {int(r[2]) for r in rows} == set(range(5))
    lines = density.read_text().split("\n")
    assert lines[0] == "P2" and lines[1] == "20 20" and lines[2] == "255"


def test_portrait_random_seeds_reproducible(capsys):
    args = ["portrait", "--family", "moon", "--R", "1.2", "--B", "1.5", "--seeds", "random:4:7", "--steps", "30"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args, "--threads", "3")
    assert a == b


def test_portrait_islands_raster(capsys, tmp_path):
    path = tmp_path / "i.pgm"
    code, _, _ = run(capsys, "portrait", "--family", "circle", "--seeds", "grid:2", "--steps", "2",
                     "--islands", str(path), "--grid", "4", "--theta-grid", "6", "--n-long", "1000")
    assert code == 0
    text = path.read_text().split("\n")
    assert text[:3] == ["P2", "4 6", "1"]
    # the circle is regular everywhere: all white
    assert set(" ".join(text[3:]).split()) == {"1"}


def test_lyapunov_csv(capsys):
    code, out, _ = run(capsys, "lyapunov", "--family", "moon1", "--R", "1", "--B-range", "0.6:1.0:0.2",
                       "--B1", "0.4", "--k", "6")
    assert code == 0
    config, header, rows = read_csv(out)
    assert header == ["B", "B1", "lambda_bar", "skipped_seeds"]
    assert [float(r[0]) for r in rows] == [0.6, 0.8, 1.0]
    assert config["params"]["k"] == 6
    assert "threads" not in json.dumps(config)


def test_lyapunov_threads_byte_identical(capsys, tmp_path, monkeypatch):
    base = ["lyapunov", "--family", "moon", "--R", "1", "--B-range", "1.45:1.6:0.15", "--k", "10"]
    outputs = []
    for threads in ("1", "4"):
        path = tmp_path / f"t{threads}.csv"
        assert cli.main(base + ["--threads", threads, "--output", str(path)]) == 0
        outputs.append(path.read_bytes())
    monkeypatch.setenv("UMBRELLA_THREADS", "2")
    path = tmp_path / "env.csv"
    assert cli.main(base + ["--output", str(path)]) == 0
    outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_sweep_empty_range(capsys):
    code, _, err = run(capsys, "sweep", "--family", "moon1", "--B-range", "1.0:0.5:0.1", "--B1-range", "0:0.1:0.1")
    assert code == 2
    assert "empty" in err


def test_sweep_grid(capsys):
    code, out, _ = run(capsys, "sweep", "--family", "moon1", "--R", "1", "--B-range", "0.8:1.0:0.2",
                       "--B1-range", "0:0.4:0.4", "--k", "4")
    assert code == 0
    _, _, rows = read_csv(out)
    assert [(float(r[0]), float(r[1])) for r in rows] == [(0.8, 0.0), (1.0, 0.0), (0.8, 0.4), (1.0, 0.4)]


def test_scan_no_transition_exit_3(capsys):
    code, _, err = run(capsys, "scan", "--theta2", "2.1", "--theta1-range", "0.2:0.25", "--grid", "2",
                       "--theta-grid", "24", "--n-long", "1000", "--step", "0.01")
    assert code == 3
    assert "NoTransition" in err


def test_scan_rejects_lemon(capsys):
    code, _, _ = run(capsys, "scan", "--theta2", "2.1", "--family", "lemon")
    assert code == 2


def test_validate(capsys):
    code, out, _ = run(capsys, "validate", "--family", "umbrella_moon2", "--R", "1.2", "--B", "1.3", "--B1", "1.8")
    assert code == 0
    info = json.loads(out)
    assert len(info["corners"]) == 3
    assert info["max_offset"] > 1.8


def test_validate_theta_pair(capsys):
    code, out, _ = run(capsys, "validate", "--theta1", "0.4", "--theta2", "2.0")
    assert code == 0
    info = json.loads(out)
    assert info["spec"]["family"] == "moon"
    assert info["theta"] == pytest.approx([0.4, 2.0], abs=1e-9)


def test_validate_invalid(capsys):
    code, _, _ = run(capsys, "validate", "--family", "lemon", "--B", "3")
    assert code == 2


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"table": {"family": "lemon", "R": 1, "B": 1.35}, "orbit": "axial2"}))
    code, out, _ = run(capsys, "classify", "--config", str(cfg))
    assert code == 0 and json.loads(out)["class"] == "elliptic"
    code, out, _ = run(capsys, "classify", "--config", str(cfg), "--B", "1")
    assert code == 0 and json.loads(out)["class"] == "parabolic"


def test_config_file_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"colour": "blue"}))
    code, _, err = run(capsys, "validate", "--config", str(cfg))
    assert code == 2 and "colour" in err


def test_bad_format(capsys):
    code, _, _ = run(capsys, "orbit", "--family", "circle", "--start", "0,1", "--format", "pgm")
    assert code == 2


def test_bad_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("UMBRELLA_THREADS", "many")
    code, _, _ = run(capsys, "validate", "--family", "circle")
    assert code == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2


@pytest.mark.parametrize("text,expected", [
    ("0.2:0.6:0.2", [0.2, 0.4, 0.6]),
    ("1:1:0.5", [1.0]),
])
def test_parse_range(text, expected):
    assert parse_range(text, "B") == expected


@pytest.mark.parametrize("text", ["1:0:0.1", "0:1:0", "0:1", "a:b:c"])
def test_parse_range_rejects(text):
    with pytest.raises(ValueError):
        parse_range(text, "B")


def test_parse_seeds():
    assert parse_seeds("random:10:3") == ("random", 10, 3)
    assert parse_seeds("grid:8") == ("grid", 8)
    assert parse_seeds("0.1,1.0;0.2,2.0") == ("explicit", [(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(ValueError):
        parse_seeds("random:x:1")

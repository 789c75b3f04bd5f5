import json
import math
import shutil
import subprocess
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import pytest

from bautin_dde.cli import main, parse_grid
from bautin_dde.errors import ConfigError

SYSTEMS = Path(__file__).resolve().parent.parent / "systems"
WRIGHT = str(SYSTEMS / "wright.json")
GOLDEN = str(SYSTEMS / "golden.json")
FAMILY = str(SYSTEMS / "cubic_quintic.json")


@pytest.fixture(scope="module")
def schema():
    text = resources.files("bautin_dde").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def run_cli(capsys, *argv):
    code = main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_spectrum_mode(capsys, schema):
    code, out, _ = run_cli(capsys, "spectrum", "--system", WRIGHT, "--alpha", f"{math.pi / 2},0")
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    sec = rep["spectrum"]
    assert sec["h1"]["holds"]
    assert sec["h1"]["lambda1"]["im"] == pytest.approx(math.pi / 2, abs=1e-10)


def test_analyze_mode(capsys, schema):
    code, out, _ = run_cli(capsys, "analyze", "--system", GOLDEN, "--alpha", "0.01,-0.25", "--alpha0", "0,0")
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert rep["bautin"]["bautin"] is True
    cls = rep["classification"]
    assert cls["region"] == "TwoCycles"
    assert cls["beta"] == pytest.approx([0.01, -0.25], abs=1e-8)
    assert cls["z_amplitudes"] == pytest.approx([math.sqrt(0.05), math.sqrt(0.2)], abs=1e-8)
    assert rep["hopf"]["l2"] == pytest.approx(1.0, abs=1e-8)


def test_analyze_locates_alpha0(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--system", GOLDEN, "--alpha", "0.01,-0.25")
    assert code == 0
    rep = json.loads(out)
    assert rep["bautin"]["alpha0"] == pytest.approx([0, 0], abs=1e-8)


def test_bautin_search(capsys, schema):
    code, out, _ = run_cli(capsys, "bautin-search", "--system", FAMILY, "--alpha", "0.05,0.3")
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    b = rep["bautin"]
    assert b["alpha0"] == pytest.approx([0, 0.38876], abs=1e-4)
    assert b["H1"] and b["H2"] and b["H3"]
    assert b["search_iterations"] >= 1


def test_bautin_search_failure_exit_code(capsys):
    code, out, err = run_cli(capsys, "bautin-search", "--system", WRIGHT, "--alpha", "1.6,0")
    assert code == 3
    assert "numerical failure in stage 'normalform'" in err
    assert out == ""


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "--system", "/nonexistent.json", "--alpha", "1,0"],
        ["spectrum", "--system", WRIGHT, "--alpha", "1"],
        ["spectrum", "--system", WRIGHT],
        ["simulate", "--system", WRIGHT, "--alpha", "1,0", "--sim-h", "0.5"],
        ["analyze", "--system", WRIGHT, "--grid", "0:1:3"],
        ["spectrum", "--system", WRIGHT, "--alpha", "1,0", "--h1-delta", "-1"],
    ],
)
def test_configuration_errors(capsys, argv):
    code, _, err = run_cli(capsys, *argv)
    assert code == 2
    assert "configuration error" in err


def test_malformed_system_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1, "r": -1, "A": [[0]], "B": [[0]]}')
    code, _, err = run_cli(capsys, "spectrum", "--system", str(bad), "--alpha", "0,0")
    assert code == 2 and "r must be" in err


def test_parse_grid():
    pts = parse_grid("0:1:3,-1:1:2")
    assert pts == [(0.0, -1.0), (0.0, 1.0), (0.5, -1.0), (0.5, 1.0), (1.0, -1.0), (1.0, 1.0)]
    with pytest.raises(ConfigError):
        parse_grid("0:1,0:1:2")


def test_grid_order_with_workers(capsys, schema):
    argv = ["analyze", "--system", GOLDEN, "--alpha0", "0,0", "--grid=-0.01:0.02:3,-0.3:0.3:3"]
    code, serial, _ = run_cli(capsys, *argv)
    assert code == 0
    code, parallel, _ = run_cli(capsys, *argv, "--workers", "3")
    assert code == 0
    assert serial == parallel
    lines = [json.loads(x) for x in serial.splitlines()]
    assert len(lines) == 9
    for rec, (a1, a2) in zip(lines, parse_grid("-0.01:0.02:3,-0.3:0.3:3")):
        jsonschema.validate(rec, schema)
        assert rec["alpha"] == pytest.approx([a1, a2])
    assert lines[0]["region"] == "OutOfScope"


def test_deterministic_output(capsys, tmp_path):
    outs = []
    for i in range(2):
        dest = tmp_path / f"r{i}.json"
        code, _, _ = run_cli(capsys, "analyze", "--system", FAMILY, "--alpha", "0.01,0.3", "--alpha0", "0,0.388760464924107", "--out", str(dest))
        assert code == 0
        outs.append(dest.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_csv(capsys, tmp_path):
    dest = tmp_path / "traj.csv"
    code, _, _ = run_cli(capsys, "simulate", "--system", GOLDEN, "--alpha", "0.01,-0.25", "--sim-T", "5", "--out", str(dest))
    assert code == 0
    lines = dest.read_text().splitlines()
    assert lines[0] == "t,x1,x2,re_z,im_z"
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == 0 and first[3] == pytest.approx(0.05, abs=1e-10)
    assert len(lines) == 101 + 1


def test_simulate_constant_history(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--system", WRIGHT, "--alpha", "1,0", "--sim-T", "1", "--constant-history", "0.2")
    assert code == 0
    assert out.splitlines()[1].split(",")[1] == "0.2"


def test_verify_agreement(capsys, schema):
    code, out, _ = run_cli(capsys, "verify", "--system", GOLDEN, "--alpha", "0.01,-0.25", "--alpha0", "0,0")
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    sim = rep["simulation"]
    assert sim["status"] == "completed"
    assert sim["expected_cycles"] == sim["observed_cycles"] == 2
    assert sim["agreement"] is True
    assert max(sim["amplitude_rel_errors"]) < 0.05


def test_verify_inconclusive(capsys, schema):
    code, out, _ = run_cli(capsys, "verify", "--system", GOLDEN, "--alpha", "0.01,-0.25", "--alpha0", "0,0", "--sim-T", "0.5")
    assert code == 0
    rep = json.loads(out)
    jsonschema.validate(rep, schema)
    assert rep["simulation"]["status"] == "inconclusive"
    assert rep["simulation"]["agreement"] is None


@pytest.mark.skipif(shutil.which("bautin-dde") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(
        ["bautin-dde", "spectrum", "--system", WRIGHT, "--alpha", "1,0"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["mode"] == "spectrum"


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "bautin_dde.cli", "spectrum", "--system", "/nonexistent"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 2

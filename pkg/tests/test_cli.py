import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from rlfalsify.cli import main
from rlfalsify.oracle import oracle_rob
from rlfalsify.parser import parse_formula
from rlfalsify.robustness import Trace, write_trace_csv
from rlfalsify.system import SurrogateAT


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_falsify_json(capsys, tmp_path):
    code, out, _ = run(capsys, "falsify", "--preset", "unsat", "--agent", "random", "--seed", "3",
                       "--episodes", "5", "--dt", "5", "--t-end", "20",
                       "--trace-out", str(tmp_path / "tr.csv"))
    d = json.loads(out)
    assert code == 0 and d["outcome"] == "falsified" and d["episode_index"] == 1
    assert (tmp_path / "tr.csv").read_text().startswith("time,v,w,g")


def test_falsify_csv_counterexample(capsys):
    code, out, _ = run(capsys, "falsify", "--preset", "unsat", "--agent", "ce", "--seed", "1",
                       "--episodes", "3", "--t-end", "15", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "time,throttle,brake" and len(lines) == 4


def test_falsify_param_override(capsys):
    # a ceiling no plant speed can reach below the idle value is impossible to keep
    code, out, _ = run(capsys, "falsify", "--preset", "phi7", "--param", "vbar=-5", "--agent",
                       "random", "--episodes", "2", "--t-end", "10")
    assert json.loads(out)["outcome"] == "falsified"


def test_external_echo_model(capsys, tmp_path):
    spec = tmp_path / "e.stl"
    spec.write_text("real y1, y2\nG (y1 <= 0.5)\n")
    cmd = f"external:{sys.executable} -m rlfalsify.echo_child"
    code, out, _ = run(capsys, "falsify", "--spec", str(spec), "--model", cmd,
                       "--inputs", "u1=0:1,u2=0:1", "--agent", "random", "--seed", "0",
                       "--dt", "1", "--t-end", "5", "--episodes", "5")
    d = json.loads(out)
    assert code == 0 and d["outcome"] == "falsified"


def test_external_crash_exit_code(capsys, tmp_path):
    spec = tmp_path / "e.stl"
    spec.write_text("real y1, y2\nG (y1 <= 5)\n")
    cmd = f"external:{sys.executable} -m rlfalsify.echo_child --die-at 3"
    code, out, _ = run(capsys, "falsify", "--spec", str(spec), "--model", cmd,
                       "--inputs", "u1=0:1,u2=0:1", "--agent", "random", "--dt", "1",
                       "--t-end", "5", "--episodes", "5")
    assert code == 1 and json.loads(out)["outcome"] == "aborted"


def _trace_file(tmp_path, n=12, dt=1.0, seed=0):
    rng = np.random.default_rng(seed)
    st = rng.uniform([0, 800, 1], [120, 5000, 4], size=(n, 3))
    st[:, 2] = np.round(st[:, 2])
    gears = np.eye(4)[st[:, 2].astype(int) - 1]
    tr = Trace(np.arange(n) * dt, np.hstack([st, gears]), SurrogateAT.output_schema)
    write_trace_csv(tr, tmp_path / "tr.csv")
    return tr


def _col(out, name):
    return [float(r[name]) if r[name] else None for r in csv.DictReader(io.StringIO(out))]


def test_monitor_life_long(capsys, tmp_path):
    tr = _trace_file(tmp_path)
    code, out, _ = run(capsys, "monitor", "--preset", "phi7", "--param", "vbar=60",
                       "--trace", str(tmp_path / "tr.csv"))
    rho = _col(out, "rho")
    assert code == 0 and rho == [60.0 - v for v in tr.states[:, 0]]
    assert _col(out, "min_rho") == list(np.minimum.accumulate(rho))


def test_oracle_matches_library(capsys, tmp_path):
    tr = _trace_file(tmp_path)
    spec = tmp_path / "f.stl"
    spec.write_text("real v, w, g\nbool g1, g2, g3, g4\nF[0,3] (v >= 60 & w <= 4000)\n")
    code, out, _ = run(capsys, "oracle", "--spec", str(spec), "--trace", str(tmp_path / "tr.csv"))
    f = parse_formula("F[0,3] (v >= 60 & w <= 4000)", SurrogateAT.output_schema)
    expect = oracle_rob(f, tr)
    got = _col(out, "rho")
    assert code == 0 and len(got) == len(expect)
    for g, e in zip(got, expect):
        assert (g is None and e is None) or g == e


def test_bench_cli(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[experiment]\ndts = [5.0]\nt_end = 10\n[property]\npreset = "unsat"\n'
                   '[[agents]]\nkind = "random"\n')
    code, out, _ = run(capsys, "bench", "--config", str(cfg), "--trials", "2", "--episodes", "3",
                       "--raw-out", str(tmp_path / "raw.json"))
    assert code == 0 and out.splitlines()[1].startswith("unsat,random,5.0,1.0,1.0")
    assert len(json.loads((tmp_path / "raw.json").read_text())["cells"][0]["trials"]) == 2


@pytest.mark.parametrize("argv", [
    ["falsify"],  # neither --spec nor --preset
    ["falsify", "--preset", "phi7", "--param", "vbar"],
    ["falsify", "--preset", "phi7", "--episodes", "0"],
    ["falsify", "--preset", "phi7", "--model", "external:true"],
    ["bench", "--config", "no-such-config"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "error" in err


def test_argparse_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["falsify", "--agent", "a3c"])
    assert e.value.code == 2


@pytest.mark.parametrize("argv", [
    ["falsify", "--preset", "nope"],
    ["falsify", "--spec", "/no/such/file.stl"],
    ["falsify", "--preset", "phi7", "--param", "undeclared=1"],
])
def test_runtime_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and err.strip()


def test_syntax_error_position(capsys, tmp_path):
    spec = tmp_path / "bad.stl"
    spec.write_text("real v\nG (v <= )\n")
    code, _, err = run(capsys, "falsify", "--spec", str(spec))
    assert code == 1 and "2" in err


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "rlfalsify", "--help"], capture_output=True, text=True)
    assert p.returncode == 0 and "falsify" in p.stdout


def test_monitor_json_encodes_infinities(capsys, tmp_path):
    _trace_file(tmp_path)
    code, out, _ = run(capsys, "monitor", "--preset", "phi8", "--trace", str(tmp_path / "tr.csv"),
                       "--format", "json")
    data = json.loads(out)
    assert code == 0 and len(data) == 12
    # the past-dependent body looks back 25 s: no verdict before then
    assert [r["rho"] for r in data] == ["inf"] * 12
    code, out, _ = run(capsys, "monitor", "--preset", "phi7", "--trace", str(tmp_path / "tr.csv"),
                       "--format", "json")
    assert all(math.isfinite(r["rho"]) for r in json.loads(out))

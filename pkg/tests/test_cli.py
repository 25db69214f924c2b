import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from adsqnm.cli import main
from adsqnm.io import CSV_SCHEMAS, read_csv

ROOT = Path(__file__).resolve().parents[1]
QUICK = ROOT / "configs" / "quick.json"


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _quick():
    return json.loads(QUICK.read_text())


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    outs = []
    for i in range(2):
        out = base / f"run{i}"
        assert main(["run", str(QUICK), "--out", str(out)]) == 0
        outs.append(out)
    return outs


def test_validate_ok(capsys):
    assert main(["validate", str(QUICK)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["valid"] and len(doc["config_hash"]) == 64


@pytest.mark.parametrize("patch, needle", [
    ({"params": {"M": 1.0, "a": 1.2}}, "|a| < 1"),
    ({"params": {"M": -1.0, "a": 0.1}}, "params"),
    ({"params": {"M": 0.05, "a": 0.9}}, "naked singularity"),
    ({"bc": {"kind": "robin"}}, "beta"),
    ({"grid": {"n_radial": 4, "n_angular": 8}}, "grid"),
    ({"surprise": 1}, "surprise"),
    ({"params": {"M": 1.0, "a": 0.1, "nu": 1.01}}, "nu"),
])
def test_validate_rejects(tmp_path, capsys, patch, needle):
    cfg = _quick()
    cfg.update(patch)
    assert main(["validate", str(_write(tmp_path, cfg))]) == 2
    assert needle in capsys.readouterr().err


def test_robin_needs_light_field(tmp_path, capsys):
    cfg = _quick()
    cfg["bc"] = {"kind": "robin", "beta": 0.5}
    assert main(["validate", str(_write(tmp_path, cfg))]) == 2
    cfg["params"]["nu"] = 0.75
    assert main(["validate", str(_write(tmp_path, cfg))]) == 0


def test_missing_and_malformed_config(tmp_path):
    assert main(["validate", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2


def test_minimal_config_runs_horizon(tmp_path):
    cfg = _write(tmp_path, {"params": {"M": 1.0, "a": 0.0}})
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "success"
    assert man["summary"]["r_plus"] == pytest.approx(1.0, abs=1e-12)


def test_outputs_are_deterministic(two_runs):
    a, b = two_runs
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()
                   and p.suffix in (".csv", ".svg"))
    assert files
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_headers_match_schemas(two_runs):
    out = two_runs[0]
    for p in out.rglob("*.csv"):
        name = "trajectory" if p.parent.name == "trajectories" else p.stem
        assert p.read_text().split("\n", 1)[0] == ",".join(CSV_SCHEMAS[name])


def test_manifest_contents(two_runs):
    man = json.loads((two_runs[0] / "manifest.json").read_text())
    assert man["status"] == "success" and not man["partial_success"]
    assert all(s["status"] == "ok" for s in man["stages"].values())
    for rel in man["outputs"]:
        assert (two_runs[0] / rel).stat().st_size > 0
    assert {"numpy", "scipy", "adsqnm"} <= set(man["versions"])


def test_spectrum_figure_marks_every_converged_qnf(two_runs):
    out = two_runs[0]
    n_conv = sum(1 for r in read_csv(out / "qnf.csv") if r["converged"])
    svg = (out / "spectrum.svg").read_text()
    start = svg.index('id="qnf-markers"')
    block = svg[start:svg.index("</g>", start)]
    assert block.count("<use") == n_conv


def test_export_csv_and_json(two_runs, tmp_path, capsys):
    man = two_runs[0] / "manifest.json"
    assert main(["export", str(man)]) == 0
    listed = capsys.readouterr().out.split()
    assert any(p.endswith("qnf.csv") for p in listed)
    target = tmp_path / "results.json"
    assert main(["export", str(man), "--format", "json", "--out", str(target)]) == 0
    doc = json.loads(target.read_text())
    qnf = doc["tables"]["qnf.csv"]
    assert qnf["columns"] == list(CSV_SCHEMAS["qnf"])
    assert len(qnf["rows"]) == len(read_csv(two_runs[0] / "qnf.csv"))


@pytest.mark.parametrize("kind", ["spectrum", "scan_heatmap", "flow_portrait"])
def test_plot_kinds(two_runs, tmp_path, kind):
    target = tmp_path / f"{kind}.svg"
    assert main(["plot", str(two_runs[0] / "manifest.json"), "--kind", kind,
                 "--out", str(target)]) == 0
    assert target.read_bytes() == (two_runs[0] / f"{kind}.svg").read_bytes()


def test_plot_missing_table(two_runs):
    assert main(["plot", str(two_runs[0] / "manifest.json"), "--kind", "residual_trend"]) == 1


def test_export_missing_manifest(tmp_path):
    assert main(["export", str(tmp_path / "manifest.json")]) == 1


def _failing_config():
    cfg = _quick()
    cfg["pipeline"] = ["quasimodes"]
    cfg["quasimodes"] = {"ell_min": 40, "ell_max": 45, "n_radial": 16, "n_angular": 8}
    return cfg


def test_stage_failure_exit_code(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(_write(tmp_path, _failing_config())), "--out", str(out)]) == 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed" and man["failed_stage"] == "quasimodes"


def test_optional_stage_gives_partial_success(tmp_path):
    cfg = _failing_config()
    cfg["pipeline"] = ["quasimodes", "indicial"]
    cfg["optional_stages"] = ["quasimodes"]
    out = tmp_path / "o"
    assert main(["run", str(_write(tmp_path, cfg)), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "partial" and man["partial_success"]
    assert man["stages"]["indicial"]["status"] == "ok"


def test_env_var_and_flag_precedence(tmp_path):
    cfg = _write(tmp_path, {"params": {"M": 1.0, "a": 0.0}, "output_dir": str(tmp_path / "c")})
    env = dict(os.environ, ADSQNM_OUT=str(tmp_path / "env"))
    cmd = [sys.executable, "-m", "adsqnm", "run", str(cfg)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    assert Path(res.stdout.strip()) == tmp_path / "env" / "manifest.json"
    res = subprocess.run(cmd + ["--out", str(tmp_path / "flag")], env=env,
                         capture_output=True, text=True, check=True)
    assert Path(res.stdout.strip()) == tmp_path / "flag" / "manifest.json"
    env.pop("ADSQNM_OUT")
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    assert Path(res.stdout.strip()) == tmp_path / "c" / "manifest.json"


def test_workers_do_not_change_results(tmp_path):
    cfg = _quick()
    cfg["pipeline"] = ["flow"]
    path = _write(tmp_path, cfg)
    assert main(["run", str(path), "--out", str(tmp_path / "w1"), "--no-figures"]) == 0
    assert main(["run", str(path), "--out", str(tmp_path / "w2"), "--workers", "2",
                 "--no-figures"]) == 0
    for p in (tmp_path / "w1").rglob("*.csv"):
        rel = p.relative_to(tmp_path / "w1")
        assert p.read_bytes() == (tmp_path / "w2" / rel).read_bytes()

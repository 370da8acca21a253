import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fpinpaint.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, run
from fpinpaint.data.io import load_map, save_map
from fpinpaint.core import FingerprintMap


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = {"width": 30.0, "height": 15.0, "ap_positions": 6, "grid_pitch": 3.0, "samples_per_point": 3}
    (d / "cfg.json").write_text(json.dumps(cfg))
    assert run(["synth", str(d / "cfg.json"), "--seed", "0", "--out", str(d / "map.csv")]) == EXIT_OK
    return d


def files(d):
    return sorted(p.name for p in d.iterdir())


def test_synth_writes_map_and_oracle(workdir):
    fmap = load_map(workdir / "map.csv")
    oracle = load_map(workdir / "map.oracle.csv")
    assert len(fmap) == 11 * 6 * 3 and fmap.n_aps == 6
    assert len(oracle) == 66


def test_gpr_end_to_end(workdir):
    d = workdir
    assert run(["fit", "--model", "gpr", "--map", str(d / "map.csv"), "--pattern", "interior-A", "--seed", "1",
                "--out", str(d / "gpr.json")]) == EXIT_OK
    assert run(["eval-inpaint", "--model", str(d / "gpr.json"), "--map", str(d / "map.csv"),
                "--pattern", "interior-A", "--out", str(d / "rep.json")]) == EXIT_OK
    doc = json.loads((d / "rep.json").read_text())
    assert np.isfinite(doc["reports"][0]["l1"])
    assert doc["run_config"]["model_kind"] == "gpr"
    assert doc["run_config"]["pattern"] == "interior-A"


def test_fit_twice_is_byte_identical_and_logs_epochs(workdir):
    d = workdir
    base = ["fit", "--model", "i2ap", "--map", str(d / "map.csv"), "--pattern", "exterior-C", "--seed", "4",
            "--epochs", "3", "--k", "4", "--dim-v", "30"]
    assert run(base + ["--out", str(d / "a.json"), "--log", str(d / "a_log.csv")]) == EXIT_OK
    assert run(base + ["--out", str(d / "b.json"), "--log", str(d / "b_log.csv")]) == EXIT_OK
    assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()
    with open(d / "a_log.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "L_gen", "L_l1", "L_adv", "L_condition", "L_position"]
    assert [r[0] for r in rows[1:]] == ["0", "1", "2"]


def test_iap_fit_log_columns(workdir):
    d = workdir / "iap"
    d.mkdir()
    assert run(["fit", "--model", "iap", "--map", str(workdir / "map.csv"), "--seed", "2", "--epochs", "2",
                "--out", str(d / "iap.json")]) == EXIT_OK
    header = (d / "train_log.csv").read_text().splitlines()
    assert header[0] == "epoch,L_rec,L_KL,loss" and len(header) == 3


def test_inpaint_and_positioning_and_report(workdir):
    d = workdir
    (d / "pts.csv").write_text("x,y\n10.0,5.0\n12.5,7.5\n")
    assert run(["inpaint", "--model", str(d / "a.json"), "--points", str(d / "pts.csv"), "--seed", "0",
                "--out", str(d / "fp.csv")]) == EXIT_OK
    fp = load_map(d / "fp.csv")
    assert fp.rss.shape == (2, 6)
    assert run(["eval-position", "--map", str(d / "map.csv"), "--pattern", "exterior-C", "--model", str(d / "a.json"),
                "--seed", "0", "--out", str(d / "pos.json")]) == EXIT_OK
    doc = json.loads((d / "pos.json").read_text())
    assert [r["method"] for r in doc["reports"]] == ["baseline", "i2ap"]
    assert doc["seed"] == 0 and doc["run_config"]["model_config"]["k"] == 4
    assert run(["report", "--in", str(d / "pos.json"), "--in", str(d / "rep.json"), "--plot-data",
                "--out", str(d / "series.csv")]) == EXIT_OK
    lines = (d / "series.csv").read_text().splitlines()
    assert lines[0] == "method,pattern,l1,cep68,cep95" and len(lines) == 4


def test_usage_errors(workdir, capsys):
    d = workdir
    assert run(["fit", "--model", "gpr", "--map", str(d / "map.csv"), "--out", str(d / "x.json")]) == EXIT_USAGE
    assert "--seed" in capsys.readouterr().err
    assert run(["synth", "--bogus"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert run([]) == EXIT_USAGE
    # stochastic inpainting without a seed
    assert run(["inpaint", "--model", str(d / "a.json"), "--points", str(d / "pts.csv"),
                "--out", str(d / "x.csv")]) == EXIT_USAGE
    # dim_v must exceed the AP count
    assert run(["fit", "--model", "i2ap", "--map", str(d / "map.csv"), "--seed", "0", "--dim-v", "5",
                "--out", str(d / "x.json")]) == EXIT_USAGE
    assert "x.json" not in files(d) and "x.csv" not in files(d)


def test_data_errors(workdir, capsys):
    d = workdir
    narrow = FingerprintMap(np.array([[0.0, 0.0], [1.0, 1.0]]), np.full((2, 2), -50.0))
    save_map(narrow, d / "narrow.csv")
    assert run(["inpaint", "--model", str(d / "gpr.json"), "--points", str(d / "pts.csv"), "--map",
                str(d / "narrow.csv"), "--out", str(d / "y.csv")]) == EXIT_DATA
    assert "shape" in capsys.readouterr().err
    assert run(["fit", "--model", "gpr", "--map", str(d / "missing.csv"), "--seed", "0",
                "--out", str(d / "y.json")]) == EXIT_DATA
    (d / "junk.json").write_text("{")
    assert run(["eval-inpaint", "--model", str(d / "junk.json"), "--map", str(d / "map.csv"),
                "--pattern", "interior-A", "--out", str(d / "y.json")]) == EXIT_DATA
    assert not any(n.startswith("y.") for n in files(d))


def test_numeric_failure_exit_code(workdir, monkeypatch):
    import fpinpaint.cli as cli
    from fpinpaint.mlpnet import NonFiniteError

    def boom(*a, **k):
        raise NonFiniteError("I2AP D phase, epoch 0, batch 0: non-finite")

    monkeypatch.setattr(cli, "train_i2ap", boom)
    out = workdir / "z.json"
    assert run(["fit", "--model", "i2ap", "--map", str(workdir / "map.csv"), "--seed", "0",
                "--out", str(out)]) == EXIT_NUMERIC
    assert not out.exists()


def test_console_entry_point(workdir):
    proc = subprocess.run([sys.executable, "-m", "fpinpaint", "report", "--in", str(workdir / "rep.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gpr" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "fpinpaint", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage" in proc.stderr

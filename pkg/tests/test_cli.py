import json
import math

import jsonschema
import numpy as np
import pytest

from phasednn import cli, report
from phasednn.data import Dataset, load_csv, save_csv
from phasednn.kernels import parse_band_table

from conftest import SEC4_CONFIG

SEC4_INTERVALS = [[-205, -200], [-140, -135], [-25, -20], [-5, 0],
                  [0, 5], [20, 25], [135, 140], [200, 205]]

SMALL = """
seed = {seed}
[target]
kind = "sum-of-sines"
terms = [[1.0, 1.0], [1.0, 23.0]]
[sampling]
train_count = 1200
test_count = 200
[base]
widths = [1, 8, 1]
epochs = {base_epochs}
[band_network]
widths = [1, 16, 16, 1]
epochs = 2
[optimizer]
batch_size = 64
[bands]
intervals = {intervals}
[convolution]
boundary = "periodic"
[baseline]
widths = [1, 16, 16, 1]
epochs = "match"
[probe]
epochs = 15
seeds = [0, 1]
grid_points = 64
widths = [1, 8, 8, 1]
"""


def small_config(tmp_path, name="c.toml", seed=1, base_epochs=0,
                 intervals="[[-25, -20], [-5, 0], [0, 5], [20, 25]]", extra=""):
    p = tmp_path / name
    p.write_text(SMALL.format(seed=seed, base_epochs=base_epochs, intervals=intervals) + extra)
    return p


def run_cli(*args):
    return cli.main([str(a) for a in args])


def read_report(out):
    return json.loads((out / "report.json").read_text())


def check_totals(d):
    for key in ("convolution_seconds", "training_seconds", "final_loss", "sparse_points"):
        assert d["totals"][key] == pytest.approx(sum(r[key] for r in d["bands"]), rel=1e-12)


def test_sec4_report(sec4_run):
    out, d = sec4_run
    jsonschema.validate(d, report.schema())
    assert [r["support"] for r in d["bands"]] == SEC4_INTERVALS
    assert [r["omega"] for r in d["bands"]] == [-202.5, -137.5, -22.5, -2.5, 2.5, 22.5, 137.5, 202.5]
    check_totals(d)
    assert d["seed"] == d["config"]["seed"] == 0
    assert d["config"]["band_network"]["widths"] == [1, 40, 40, 40, 40, 1]
    assert d["config"]["optimizer"]["lr"] == 2e-4
    for name in ("report.txt", "report.csv", "train.csv", "test.csv", "fit.png",
                 "fit_detail.png", "spectrum.png", "model/model.json", "model/bands.txt"):
        assert (out / name).exists(), name
    text = (out / "report.txt").read_text()
    assert "Total" in text and "[200,205]" in text
    assert len(load_csv(out / "train.csv")) == 10000 and len(load_csv(out / "test.csv")) == 500


def test_zero_band_config_is_base_only(tmp_path):
    cfg = small_config(tmp_path, base_epochs=3, intervals="[]")
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "o", "--workers", 1,
                   "--no-figures") == 0
    d = read_report(tmp_path / "o")
    jsonschema.validate(d, report.schema())
    assert d["bands"] == [] and d["base"]["trained"]
    assert d["totals"]["training_seconds"] == 0 and d["totals"]["convolution_seconds"] == 0
    assert "base" in (tmp_path / "o" / "report.txt").read_text()


def test_train_deterministic_reports(tmp_path):
    cfg = small_config(tmp_path)
    for name in ("a", "b"):
        assert run_cli("train", "--config", cfg, "--out", tmp_path / name, "--workers", 1,
                       "--no-figures") == 0
    a = report.dumps(report.strip_timing(read_report(tmp_path / "a")))
    b = report.dumps(report.strip_timing(read_report(tmp_path / "b")))
    assert a == b
    assert (tmp_path / "a" / "train.csv").read_bytes() == (tmp_path / "b" / "train.csv").read_bytes()
    for f in sorted((tmp_path / "a" / "model" / "nets").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / "model" / "nets" / f.name).read_bytes()


def test_parallel_cli_matches_serial(tmp_path):
    cfg = small_config(tmp_path)
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "s", "--workers", 1,
                   "--no-figures") == 0
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "p", "--workers", 3,
                   "--no-figures") == 0
    s, p = read_report(tmp_path / "s"), read_report(tmp_path / "p")
    assert p["execution"]["workers"] == 3
    assert report.strip_timing(s) == report.strip_timing(p)


def test_seed_flag_overrides_config(tmp_path):
    cfg = small_config(tmp_path, seed=1)
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "o", "--seed", 7,
                   "--workers", 1, "--no-figures") == 0
    d = read_report(tmp_path / "o")
    assert d["seed"] == 7 and d["config"]["seed"] == 7


def test_workers_precedence(monkeypatch):
    ns = cli.build_parser().parse_args(["detect", "x.csv"])
    monkeypatch.setenv("PHASEDNN_WORKERS", "5")
    assert cli._workers(ns) == 5
    ns.workers = 2
    assert cli._workers(ns) == 2
    monkeypatch.delenv("PHASEDNN_WORKERS")
    ns.workers = None
    assert cli._workers(ns) >= 1


def test_invalid_config_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[bands]\nmode = 'spiral'\n")
    assert run_cli("train", "--config", bad, "--out", tmp_path / "o") == 2
    assert "spiral" in capsys.readouterr().err
    bad.write_text("this is = = not toml")
    assert run_cli("train", "--config", bad, "--out", tmp_path / "o") == 2
    assert run_cli("train", "--config", tmp_path / "missing.toml") == 2
    assert run_cli("frobnicate") == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_failure_exit_3(tmp_path):
    cfg = small_config(tmp_path, extra="")
    text = cfg.read_text().replace("[optimizer]\n", "[optimizer]\nlr = 1e300\n")
    cfg.write_text(text)
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "o", "--workers", 1,
                   "--no-figures") == 3
    d = read_report(tmp_path / "o")
    assert d["failed"]
    jsonschema.validate(d, report.schema())


def test_eval_matches_training_error(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert run_cli("train", "--config", cfg, "--out", out, "--workers", 1, "--no-figures") == 0
    d = read_report(out)
    capsys.readouterr()
    assert run_cli("eval", out / "model", out / "train.csv", "--out", tmp_path / "p1.csv") == 0
    summary = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert summary["rel_l2"] == pytest.approx(d["errors"]["train"]["rel_l2"], rel=0, abs=1e-12)
    assert summary["mse"] == pytest.approx(d["errors"]["train"]["mse"], rel=1e-12)
    assert run_cli("eval", out, out / "train.csv", "--out", tmp_path / "p2.csv") == 0
    assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()
    lines = (tmp_path / "p1.csv").read_text().splitlines()
    assert lines[0] == "x,prediction,truth,error" and len(lines) == 1201
    x, p, t, e = map(float, lines[1].split(","))
    assert e == p - t


def test_eval_without_truth(tmp_path, capsys):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    run_cli("train", "--config", cfg, "--out", out, "--workers", 1, "--no-figures")
    xs = tmp_path / "xs.csv"
    xs.write_text("x\n0.0\n0.5\n")
    capsys.readouterr()
    assert run_cli("eval", out, xs) == 0
    assert capsys.readouterr().out.splitlines()[0] == "x,prediction"


def test_eval_errors(tmp_path, sec4_run):
    out, _ = sec4_run
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run_cli("eval", out / "model", empty) == 2
    empty.write_text("x,y\n")
    assert run_cli("eval", out / "model", empty) == 2
    assert run_cli("eval", tmp_path / "nope", out / "test.csv") == 2


def test_baseline_report_shape(tmp_path):
    cfg = small_config(tmp_path)
    assert run_cli("baseline", "--config", cfg, "--out", tmp_path / "b", "--workers", 1,
                   "--no-figures") == 0
    d = read_report(tmp_path / "b")
    jsonschema.validate(d, report.schema())
    assert d["command"] == "baseline" and d["bands"] == []
    assert "equal-epoch" in d["notes"][0] and "16 epochs" in d["notes"][0]
    assert (tmp_path / "b" / "model" / "nets" / "base.json").exists()


def test_baseline_low_frequency_target(tmp_path):
    cfg = tmp_path / "sin.toml"
    cfg.write_text("""
[target]
kind = "sum-of-sines"
terms = [[1.0, 1.0]]
[sampling]
train_count = 2000
[optimizer]
batch_size = 32
[baseline]
widths = [1, 40, 40, 40, 40, 1]
epochs = 60
""")
    assert run_cli("baseline", "--config", cfg, "--out", tmp_path / "b", "--workers", 1,
                   "--no-figures") == 0
    assert read_report(tmp_path / "b")["errors"]["test"]["rel_l2"] < 0.05


def test_probe_command(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "p"
    assert run_cli("probe", "--config", cfg, "--out", out) == 0
    lines = (out / "probe_seed0.csv").read_text().splitlines()
    assert lines[0] == "epoch,k=1.0,k=5.0" and len(lines) == 17
    summary = json.loads((out / "probe_summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [0, 1]
    assert (out / "probe.png").exists()


def test_probe_zero_magnitude_exit_2(tmp_path):
    cfg = small_config(tmp_path, extra="")
    cfg.write_text(cfg.read_text().replace("epochs = 15", "epochs = 15\nfrequencies = [1.0, 7.0]"))
    assert run_cli("probe", "--config", cfg, "--out", tmp_path / "p") == 2


def test_detect_feeds_train(tmp_path, capsys, sec4_run):
    out, _ = sec4_run
    table = tmp_path / "bands.txt"
    assert run_cli("detect", out / "train.csv", "--clusters", 8, "--out", table) == 0
    bands = parse_band_table(table.read_text())
    for k in (1, 3, 23, 137, 203):
        assert any(b.support[0] <= k <= b.support[1] + 8 for b in bands), k
    cfg = small_config(tmp_path)
    text = cfg.read_text().replace('intervals = [[-25, -20], [-5, 0], [0, 5], [20, 25]]',
                                   f'mode = "table"\npath = "{table.name}"')
    cfg.write_text(text)
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "o", "--workers", 1,
                   "--no-figures") == 0
    assert len(read_report(tmp_path / "o")["bands"]) == len(bands)


def test_detect_sparse_clusters_warn(tmp_path, capsys):
    xs = np.concatenate([np.linspace(-3, -0.1, 400), [2.0, 2.5, 3.0]])
    path = tmp_path / "d.csv"
    save_csv(Dataset(xs, np.sin(10 * xs)), path)
    assert run_cli("detect", path, "--clusters", 2) == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err and captured.out.startswith("# index")


def test_detect_bad_input(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,zz\n")
    assert run_cli("detect", p) == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "phasednn", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "detect" in res.stdout

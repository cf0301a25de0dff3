"""Run reports: JSON, a per-band text table, CSV rows and figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import __version__
from .model import RunReport

REPORT_FORMAT = "phasednn-run-report"
REPORT_FORMAT_VERSION = 1


def report_dict(report: RunReport, resolved: dict, command: str, workers: int,
                notes: list[str] | None = None) -> dict:
    rows = [dict(r) for r in report.rows]
    totals = {
        "convolution_seconds": sum(r["convolution_seconds"] for r in rows),
        "training_seconds": sum(r["training_seconds"] for r in rows),
        "final_loss": sum(r["final_loss"] for r in rows),
        "sparse_points": sum(r["sparse_points"] for r in rows),
    }
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_FORMAT_VERSION,
        "package_version": __version__,
        "command": command,
        "seed": resolved["seed"],
        "config": resolved,
        "base": {"trained": report.base_loss is not None,
                 "final_loss": report.base_loss,
                 "training_seconds": report.base_seconds},
        "bands": rows,
        "totals": totals,
        "errors": {
            "train": {"mse": report.train_mse, "rel_l2": report.train_rel_l2},
            "test": {"mse": report.test_mse, "rel_l2": report.test_rel_l2},
        },
        "round_residual_l2": list(report.round_residual_l2),
        "failed": report.failed,
        "execution": {"workers": workers},
        "notes": list(notes or []),
    }


def schema() -> dict:
    """The JSON schema every run report validates against."""
    from importlib import resources
    text = resources.files("phasednn").joinpath("schemas/run_report.schema.json").read_text()
    return json.loads(text)


def strip_timing(d):
    """Copy of a report dict without wall-clock and execution fields."""
    if isinstance(d, dict):
        return {k: strip_timing(v) for k, v in d.items()
                if not k.endswith("_seconds") and k != "execution"}
    if isinstance(d, list):
        return [strip_timing(v) for v in d]
    return d


def dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _fmt(v, spec=".5f"):
    return "-" if v is None else format(v, spec)


def text_table(d: dict) -> str:
    """Per-band convolution and training seconds, with error totals on the last row."""
    head = f"{'band':>18} {'round':>5} {'conv time(s)':>13} {'train time(s)':>14} " \
           f"{'train err':>10} {'test err':>10}"
    lines = [head, "-" * len(head)]
    if d["base"]["trained"]:
        lines.append(f"{'base':>18} {'':>5} {'-':>13} {d['base']['training_seconds']:14.2f} "
                     f"{'-':>10} {'-':>10}")
    for r in d["bands"]:
        lo, hi = r["support"]
        label = f"[{lo:g},{hi:g}]"
        lines.append(f"{label:>18} {r['round']:>5} {r['convolution_seconds']:13.2f} "
                     f"{r['training_seconds']:14.2f} {'-':>10} {'-':>10}")
    t = d["totals"]
    e = d["errors"]
    lines.append(f"{'Total':>18} {'':>5} {t['convolution_seconds']:13.2f} "
                 f"{t['training_seconds'] + d['base']['training_seconds']:14.2f} "
                 f"{_fmt(e['train']['rel_l2']):>10} {_fmt(e['test']['rel_l2']):>10}")
    lines.append("")
    lines.append("errors are relative L2 (||pred - f|| / ||f||); "
                 f"MSE train={_fmt(e['train']['mse'], '.6g')} test={_fmt(e['test']['mse'], '.6g')}")
    for note in d.get("notes", []):
        lines.append(note)
    return "\n".join(lines) + "\n"


def csv_rows(d: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "band", "lo", "hi", "omega", "convolution_seconds",
                "training_seconds", "final_loss", "sparse_points"])
    for r in d["bands"]:
        w.writerow([r["round"], r["band"], repr(r["support"][0]), repr(r["support"][1]),
                    repr(r["omega"]), repr(r["convolution_seconds"]),
                    repr(r["training_seconds"]), repr(r["final_loss"]), r["sparse_points"]])
    t = d["totals"]
    w.writerow(["total", "", "", "", "", repr(t["convolution_seconds"]),
                repr(t["training_seconds"]), repr(t["final_loss"]), t["sparse_points"]])
    return buf.getvalue()


def write_report(d: dict, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"json": out / "report.json", "text": out / "report.txt", "csv": out / "report.csv"}
    paths["json"].write_text(dumps(d), encoding="utf-8")
    paths["text"].write_text(text_table(d), encoding="utf-8")
    paths["csv"].write_text(csv_rows(d), encoding="utf-8")
    return paths


# figures -----------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_fit(xs, truth, pred, path, title="test set"):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    ax.plot(xs, truth, "-", color="tab:blue", lw=0.8, label="f(x)")
    ax.plot(xs, pred, "+", color="tab:red", ms=4, label="prediction")
    ax.set_xlabel("x")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    ax.set_xlim(xs.min(), xs.max())
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fit_detail(xs, truth_fn, pred_fn, path):
    """Zoomed windows across the domain: the left half, then short windows."""
    plt = _pyplot()
    lo, hi = float(xs.min()), float(xs.max())
    pi = np.pi
    windows = [(lo, 0.0), (-pi / 10, pi / 10)]
    windows += [(c - pi / 10, c + pi / 10) for c in (pi / 3, pi / 2, 2 * pi / 3)]
    windows.append((pi - pi / 10, hi))
    fig, axes = plt.subplots(3, 2, figsize=(9, 8))
    for ax, (a, b) in zip(axes.ravel(), windows):
        a, b = max(a, lo), min(b, hi)
        fine = np.linspace(a, b, 1500)
        pts = xs[(xs >= a) & (xs <= b)]
        ax.plot(fine, truth_fn(fine), "-", color="tab:blue", lw=0.8)
        ax.plot(pts, pred_fn(pts), "+", color="tab:red", ms=4)
        ax.set_title(f"[{a:.2f}, {b:.2f}]", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_spectra(freqs, truth_mag, pred_mag, path, kmax=None):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    if kmax is not None:
        keep = np.abs(freqs) <= kmax
        freqs, truth_mag, pred_mag = freqs[keep], truth_mag[keep], pred_mag[keep]
    ax.plot(freqs, truth_mag, "-", lw=0.8, label="|F[f]|")
    ax.plot(freqs, pred_mag, "--", lw=0.8, label="|F[prediction]|")
    ax.set_xlabel("k")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_probe(table, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    rows = np.array(table.rows)
    for j, k in enumerate(table.frequencies):
        ax.semilogy(table.epochs, rows[:, j], label=f"k={k:g}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("|D(k)| / |F[f](k)|")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

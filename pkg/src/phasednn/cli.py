"""Command-line entry point: ``phasednn {train,eval,baseline,probe,detect}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
during training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import net as nn
from . import report as rep
from .config import ConfigError
from .data import DataFormatError, Dataset, load_csv, read_table, sample, save_csv
from .model import PhaseDnnModel, RunError, RunReport, default_workers, errors, evaluate, run
from .spectral import convergence_probe, detect_frequencies, dft

logger = logging.getLogger("phasednn")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _workers(args, exp=None) -> int:
    if getattr(args, "workers", None):
        return max(1, args.workers)
    if exp is not None and "workers" in exp.resolved:
        import os
        if not os.environ.get("PHASEDNN_WORKERS"):
            return max(1, int(exp.resolved["workers"]))
    return default_workers()


def _load(args):
    try:
        return config_mod.load(args.config, seed=args.seed)
    except ConfigError as exc:
        raise CliError(str(exc)) from None


def _datasets(exp):
    train = sample(exp.target, exp.train_sampling)
    test = sample(exp.target, exp.test_sampling)
    return train, test


def _figures(out: Path, exp, predict, test: Dataset):
    rep.plot_fit(test.xs, test.ys, predict(test.xs), out / "fit.png")
    rep.plot_fit_detail(test.xs, exp.target, predict, out / "fit_detail.png")
    # spectra on a fine grid so the highest target frequency is resolved
    lo, hi = exp.target.domain
    grid = np.linspace(lo, hi, 4096, endpoint=False)
    truth = dft(Dataset(grid, exp.target(grid)))
    pred = dft(Dataset(grid, predict(grid)))
    freqs = exp.target.frequencies
    kmax = 1.25 * max(freqs) if freqs else None
    rep.plot_spectra(truth.frequencies, truth.magnitudes, pred.magnitudes, out / "spectrum.png",
                     kmax=kmax)


def cmd_train(args) -> int:
    exp = _load(args)
    workers = _workers(args, exp)
    exp.run.workers = workers
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = _datasets(exp)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    try:
        model, report = run(train, exp.run, test)
    except RunError as exc:
        model, report = exc.partial
        d = rep.report_dict(report, exp.resolved, "train", workers)
        rep.write_report(d, out)
        model.save(out / "model")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except nn.TrainingError as exc:
        d = rep.report_dict(RunReport(failed=str(exc)), exp.resolved, "train", workers)
        rep.write_report(d, out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    model.save(out / "model")
    d = rep.report_dict(report, exp.resolved, "train", workers)
    rep.write_report(d, out)
    if not args.no_figures:
        _figures(out, exp, model, test)
    print(rep.text_table(d), end="")
    return EXIT_OK


def cmd_baseline(args) -> int:
    exp = _load(args)
    workers = _workers(args, exp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = _datasets(exp)
    widths = tuple(exp.resolved["baseline"]["widths"])
    epochs = config_mod.baseline_epochs(exp)
    try:
        spec = nn.LayerSpec(widths)
    except ValueError as exc:
        raise CliError(f"invalid baseline widths: {exc}") from None
    from .model import derive_seed
    init = nn.Network.initialize(spec, derive_seed(exp.seed, 900, 0, 0))
    report = RunReport()
    t0 = time.perf_counter()
    try:
        trained, tr = nn.train(init, train, epochs, seed=derive_seed(exp.seed, 900, 0, 1),
                               **exp.run.train_kwargs())
    except nn.TrainingError as exc:
        report.failed = str(exc)
        rep.write_report(rep.report_dict(report, exp.resolved, "baseline", workers), out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report.base_seconds = time.perf_counter() - t0
    report.base_loss = tr.final_loss if tr.losses else nn.mse_loss(trained, train)
    model = PhaseDnnModel(base=trained)
    report.train_mse, report.train_rel_l2 = errors(model, train)
    report.test_mse, report.test_rel_l2 = errors(model, test)
    notes = [f"baseline: one {'-'.join(map(str, widths))} network, {spec.n_params} parameters, "
             f"{epochs} epochs (equal-epoch budget, not equal wall-clock)"]
    d = rep.report_dict(report, exp.resolved, "baseline", workers, notes)
    rep.write_report(d, out)
    model.save(out / "model")
    if not args.no_figures:
        _figures(out, exp, model, test)
    print(rep.text_table(d), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = Path(args.bundle)
    if (bundle / "model").is_dir() and not (bundle / "model.json").exists():
        bundle = bundle / "model"
    try:
        model = PhaseDnnModel.load(bundle)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load model bundle {args.bundle}: {exc}") from None
    try:
        header, rows = read_table(args.input)
    except (OSError, DataFormatError) as exc:
        raise CliError(str(exc)) from None
    if rows.shape[0] == 0:
        raise CliError(f"{args.input}: no data rows")
    if header[0] != "x":
        raise CliError(f"{args.input}:1: first column must be 'x'")
    xs = rows[:, 0]
    pred = evaluate(model, xs)
    has_truth = len(header) >= 2 and header[1] == "y"
    lines = ["x,prediction,truth,error" if has_truth else "x,prediction"]
    for i, (x, p) in enumerate(zip(xs, pred)):
        if has_truth:
            y = rows[i, 1]
            lines.append(f"{float(x)!r},{float(p)!r},{float(y)!r},{float(p - y)!r}")
        else:
            lines.append(f"{float(x)!r},{float(p)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if has_truth:
        mse, rel = errors(model, Dataset(xs, rows[:, 1]))
        print(json.dumps({"n": int(xs.size), "mse": mse, "rel_l2": rel}), file=sys.stderr)
    return EXIT_OK


def cmd_probe(args) -> int:
    exp = _load(args)
    p = exp.resolved["probe"]
    try:
        from .data import target_from_dict
        target = target_from_dict(p["target"])
        lo, hi = target.domain
        grid = np.linspace(lo, hi, int(p["grid_points"]), endpoint=False)
        data = Dataset(grid, target(grid))
        seeds = [int(s) for s in p.get("seeds", [exp.seed])]
        tables = [convergence_probe(data, p["frequencies"], tuple(p["widths"]),
                                    epochs=int(p["epochs"]), lr=float(p["lr"]), seed=s,
                                    batch_size=int(p.get("batch_size", 0)) or None)
                  for s in seeds]
    except (KeyError, TypeError) as exc:
        raise CliError(f"invalid probe config: {exc}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    except nn.TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"frequencies": [float(k) for k in p["frequencies"]], "runs": []}
    for s, t in zip(seeds, tables):
        (out / f"probe_seed{s}.csv").write_text(t.to_csv(), encoding="utf-8")
        halving = [t.halving_epoch(j) for j in range(len(t.frequencies))]
        summary["runs"].append({"seed": s, "halving_epochs": halving})
        print(f"seed {s}: halving epochs " +
              ", ".join(f"k={k:g}: {h}" for k, h in zip(t.frequencies, halving)))
    (out / "probe_summary.json").write_text(rep.dumps(summary), encoding="utf-8")
    if not args.no_figures:
        rep.plot_probe(tables[0], out / "probe.png")
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        data = load_csv(args.input)
    except (OSError, DataFormatError) as exc:
        raise CliError(str(exc)) from None
    if data.is_complex:
        raise CliError("frequency detection needs real data (x,y)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            found = detect_frequencies(data, args.clusters, threshold=args.threshold,
                                       width=args.width)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    table = found.band_table()
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    else:
        sys.stdout.write(table)
    for k, mag in found.peaks:
        print(f"peak k={k:.3f} magnitude={mag:.4g}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasednn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML run configuration")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None if not needs_config else "runs/latest",
                       help="output directory (or file for eval/detect)")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $PHASEDNN_WORKERS or CPU count)")
        return p

    p = common(sub.add_parser("train", help="run PhaseDNN and write a model bundle + report"))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = common(sub.add_parser("baseline", help="train one monolithic network for comparison"))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = common(sub.add_parser("probe", help="per-epoch spectral error at probe frequencies"))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_probe)

    p = common(sub.add_parser("eval", help="evaluate a model bundle on a CSV"), needs_config=False)
    p.add_argument("bundle")
    p.add_argument("input")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("detect", help="suggest bands from data"), needs_config=False)
    p.add_argument("input")
    p.add_argument("--clusters", type=int, default=8)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--width", type=float, default=5.0)
    p.set_defaults(func=cmd_detect)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

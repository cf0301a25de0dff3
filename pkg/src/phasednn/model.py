"""PhaseDNN: a base network plus phase-shifted band networks fitted to residuals."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import net as nn
from .bands import ConvolutionPlan, extract_band, split_complex, window_counts
from .data import Dataset
from .kernels import Band, format_band_table, parse_band_table

logger = logging.getLogger(__name__)

MODEL_FORMAT = "phasednn-model"
MODEL_FORMAT_VERSION = 1


class RunError(RuntimeError):
    """A band failed to train; ``partial`` holds what finished."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed from ``seed`` and integer keys."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) + 2**16 for k in keys]])
               .generate_state(1)[0])


@dataclass
class RunConfig:
    base_widths: tuple[int, ...] = (1, 40, 40, 40, 40, 1)
    base_epochs: int = 0
    band_widths: tuple[int, ...] = (1, 40, 40, 40, 40, 1)
    band_epochs: int = 10
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = None
    bands: list[Band] = field(default_factory=list)
    plan: ConvolutionPlan = field(default_factory=ConvolutionPlan)
    rounds: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.base_epochs < 0 or self.band_epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.base_widths = tuple(self.base_widths)
        self.band_widths = tuple(self.band_widths)

    def train_kwargs(self) -> dict:
        return dict(lr=self.lr, batch_size=self.batch_size, beta1=self.beta1,
                    beta2=self.beta2, eps=self.eps)


@dataclass
class BandTerm:
    """One phase-shifted pair: contributes ``exp(i omega x) (re(x) + i im(x))``."""

    band: Band
    real: nn.Network
    imag: nn.Network
    round: int = 1

    def __post_init__(self):
        if self.real.spec != self.imag.spec:
            raise ValueError("real and imaginary networks must share a layer spec")

    def contribution(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        z = nn.forward(self.real, x) + 1j * nn.forward(self.imag, x)
        return np.exp(1j * self.band.omega * x) * z


@dataclass
class PhaseDnnModel:
    base: nn.Network | None = None
    terms: list[BandTerm] = field(default_factory=list)
    rounds: int = 0

    def complex_value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape, dtype=np.complex128)
        if self.base is not None:
            out += nn.forward(self.base, x)
        for t in self.terms:
            out += t.contribution(x)
        return out

    def __call__(self, x):
        return evaluate(self, x)

    # bundle I/O -----------------------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "nets").mkdir(exist_ok=True)
        bands, seen = [], {}
        for t in self.terms:
            key = (t.band.index, t.band.omega, t.band.support, t.band.kernel)
            if key not in seen:
                seen[key] = len(bands)
                bands.append(t.band)
        (d / "bands.txt").write_text(format_band_table(bands), encoding="utf-8")
        manifest = {"format": MODEL_FORMAT, "version": MODEL_FORMAT_VERSION,
                    "rounds": self.rounds, "base": None, "terms": []}
        if self.base is not None:
            self.base.save(d / "nets" / "base.json")
            manifest["base"] = "nets/base.json"
        for i, t in enumerate(self.terms):
            key = (t.band.index, t.band.omega, t.band.support, t.band.kernel)
            re_name, im_name = f"nets/term{i:03d}_re.json", f"nets/term{i:03d}_im.json"
            t.real.save(d / re_name)
            t.imag.save(d / im_name)
            manifest["terms"].append({"band_row": seen[key], "round": t.round,
                                      "real": re_name, "imag": im_name})
        (d / "model.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "PhaseDnnModel":
        d = Path(directory)
        manifest = json.loads((d / "model.json").read_text(encoding="utf-8"))
        if manifest.get("format") != MODEL_FORMAT:
            raise ValueError(f"{d}: not a model bundle")
        if manifest.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"{d}: unsupported bundle version {manifest.get('version')}")
        bands = parse_band_table((d / "bands.txt").read_text(encoding="utf-8"))
        base = nn.Network.load(d / manifest["base"]) if manifest["base"] else None
        terms = [BandTerm(bands[e["band_row"]], nn.Network.load(d / e["real"]),
                          nn.Network.load(d / e["imag"]), e["round"])
                 for e in manifest["terms"]]
        return cls(base, terms, manifest["rounds"])


def evaluate(model: PhaseDnnModel, x):
    """Real part of ``base(x) + sum_j exp(i omega_j x) T_j(x)``."""
    xa = np.asarray(x, dtype=np.float64)
    out = model.complex_value(xa).real
    return float(out) if xa.ndim == 0 else out


def imaginary_residue(model: PhaseDnnModel, x) -> np.ndarray:
    """The imaginary part that :func:`evaluate` discards."""
    return model.complex_value(x).imag


def residual(data: Dataset, model: PhaseDnnModel) -> Dataset:
    return Dataset(data.xs, data.ys - evaluate(model, data.xs))


def train_base(data: Dataset, cfg: RunConfig) -> nn.Network:
    init = nn.Network.initialize(cfg.base_widths, derive_seed(cfg.seed, 0, 0, 0))
    trained, _ = nn.train(init, data, cfg.base_epochs, seed=derive_seed(cfg.seed, 0, 0, 1),
                          **cfg.train_kwargs())
    return trained


@dataclass
class BandResult:
    term: BandTerm
    convolution_seconds: float
    training_seconds: float
    real_loss: float
    imag_loss: float
    sparse_points: int

    @property
    def final_loss(self) -> float:
        return self.real_loss + self.imag_loss


def train_band(res: Dataset, band: Band, cfg: RunConfig, round: int = 1,
               position: int = 0) -> BandResult:
    """Extract ``band`` from ``res``, shift it to baseband and fit both parts.

    ``position`` is the band's slot in ``cfg.bands``; with ``round`` it keys
    the network seeds, so results do not depend on scheduling.
    """
    t0 = time.perf_counter()
    shifted = extract_band(res, band, cfg.plan, shifted=True)
    t1 = time.perf_counter()
    periodic = cfg.plan.period if cfg.plan.boundary == "periodic" else None
    sparse = int(np.sum(window_counts(res.xs, cfg.plan.delta_for(band), periodic)
                        < cfg.plan.min_points))
    nets, losses = [], []
    for part, d in enumerate(split_complex(shifted)):
        init = nn.Network.initialize(cfg.band_widths, derive_seed(cfg.seed, round, position, 2 * part))
        trained, rep = nn.train(init, d, cfg.band_epochs,
                                seed=derive_seed(cfg.seed, round, position, 2 * part + 1),
                                **cfg.train_kwargs())
        nets.append(trained)
        losses.append(rep.final_loss if rep.losses else nn.mse_loss(trained, d))
    t2 = time.perf_counter()
    return BandResult(BandTerm(band, nets[0], nets[1], round), t1 - t0, t2 - t1,
                      losses[0], losses[1], sparse)


def _band_task(args):
    res, band, cfg, round, position = args
    try:
        return train_band(res, band, cfg, round, position)
    except nn.TrainingError as exc:
        return exc


@dataclass
class RunReport:
    """Timing and error statistics of one run, one row per band and round."""

    rows: list[dict] = field(default_factory=list)
    base_seconds: float = 0.0
    base_loss: float | None = None
    train_mse: float | None = None
    train_rel_l2: float | None = None
    test_mse: float | None = None
    test_rel_l2: float | None = None
    round_residual_l2: list[float] = field(default_factory=list)
    failed: str | None = None

    @property
    def total_convolution_seconds(self) -> float:
        return sum(r["convolution_seconds"] for r in self.rows)

    @property
    def total_training_seconds(self) -> float:
        return sum(r["training_seconds"] for r in self.rows)


def errors(model_or_fn, data: Dataset) -> tuple[float, float]:
    """``(mse, relative L2)`` of a model or callable against ``data``."""
    pred = evaluate(model_or_fn, data.xs) if isinstance(model_or_fn, PhaseDnnModel) \
        else np.asarray(model_or_fn(data.xs))
    diff = pred - data.ys
    mse = float(np.mean(diff * diff))
    norm = float(np.linalg.norm(data.ys))
    rel = float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff))
    return mse, rel


def run(data: Dataset, cfg: RunConfig, test: Dataset | None = None):
    """Base fit, then ``cfg.rounds`` sweeps of residual band fitting.

    Returns ``(model, report)``. A band failure raises :class:`RunError`
    whose ``partial`` is ``(model_so_far, report)``.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if not data.is_sorted:
        raise ValueError("training data must be sorted by x with distinct nodes")
    report = RunReport()
    model = PhaseDnnModel()
    if cfg.base_epochs > 0:
        t0 = time.perf_counter()
        model.base = train_base(data, cfg)
        report.base_seconds = time.perf_counter() - t0
        report.base_loss = nn.mse_loss(model.base, data)

    workers = max(1, int(cfg.workers))
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 and len(cfg.bands) > 1 else None
    try:
        for rnd in range(1, cfg.rounds + 1):
            res = residual(data, model)
            tasks = [(res, band, cfg, rnd, pos) for pos, band in enumerate(cfg.bands)]
            results = list(pool.map(_band_task, tasks)) if pool else [_band_task(t) for t in tasks]
            failures = [(t[1], r) for t, r in zip(tasks, results) if isinstance(r, Exception)]
            if failures:
                band, exc = failures[0]
                report.failed = f"round {rnd}, band {band.index} {band.support}: {exc}"
                raise RunError(report.failed, (model, report))
            for r in results:
                model.terms.append(r.term)
                report.rows.append({
                    "round": rnd,
                    "band": r.term.band.index,
                    "support": list(r.term.band.support),
                    "omega": r.term.band.omega,
                    "convolution_seconds": r.convolution_seconds,
                    "training_seconds": r.training_seconds,
                    "final_loss": r.final_loss,
                    "sparse_points": r.sparse_points,
                })
            model.rounds = rnd
            report.round_residual_l2.append(float(np.linalg.norm(residual(data, model).ys)))
    finally:
        if pool:
            pool.shutdown()

    report.train_mse, report.train_rel_l2 = errors(model, data)
    if test is not None:
        report.test_mse, report.test_rel_l2 = errors(model, test)
    return model, report


def default_workers() -> int:
    env = os.environ.get("PHASEDNN_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1

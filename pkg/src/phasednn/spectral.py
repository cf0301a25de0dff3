"""Discrete Fourier analysis: spectra, the frequency-principle probe, and
frequency detection for choosing bands.

Transforms follow the unitary convention used throughout the package,
``F[f](k) = 1/sqrt(2 pi) int f(x) exp(-i k x) dx``, discretized on a
uniform grid with the rectangle rule, so that Parseval reads
``sum |f|^2 dx == sum |F|^2 dk`` exactly.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_lsq_spline

from . import net as nn
from .data import Dataset
from .kernels import format_band_table, make_bands

logger = logging.getLogger(__name__)


class NonUniformGridError(ValueError):
    """The transform needs uniformly spaced samples; resample first."""


@dataclass
class Spectrum:
    """``amplitudes[i]`` approximates ``F[f](frequencies[i])``; frequencies ascend."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    dx: float
    x0: float
    n: int
    convention: str = "unitary: 1/sqrt(2pi) int f(x) exp(-ikx) dx"

    @property
    def dk(self) -> float:
        return 2 * math.pi / (self.n * self.dx)

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.amplitudes)

    def index_of(self, k: float) -> int:
        return int(np.argmin(np.abs(self.frequencies - k)))

    def at(self, k: float) -> complex:
        """Amplitude at the bin nearest ``k``."""
        return complex(self.amplitudes[self.index_of(k)])

    def energy(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.dk)

    def energy_fraction(self, kmax: float) -> float:
        """Share of the energy in ``|k| <= kmax``."""
        p = np.abs(self.amplitudes) ** 2
        total = p.sum()
        return float(p[np.abs(self.frequencies) <= kmax].sum() / total) if total > 0 else 0.0


def _uniform_step(xs: np.ndarray) -> float:
    if xs.size < 2:
        raise NonUniformGridError("need at least two samples")
    gaps = np.diff(xs)
    h = float(np.mean(gaps))
    if not h > 0 or np.max(np.abs(gaps - h)) > 1e-9 * abs(h) + 1e-12:
        raise NonUniformGridError("samples are not uniformly spaced; resample onto a grid first")
    return h


def _taper(n: int, window: str | None) -> np.ndarray | None:
    if window is None:
        return None
    if window == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    raise ValueError(f"unknown window {window!r}")


def dft(data: Dataset, window: str | None = None) -> Spectrum:
    """Transform uniformly spaced samples. ``window="hann"`` tapers them first
    (Parseval then no longer holds)."""
    xs = data.xs
    h = _uniform_step(xs)
    ys = np.asarray(data.ys, dtype=np.complex128)
    taper = _taper(xs.size, window)
    if taper is not None:
        ys = ys * taper
    k = 2 * np.pi * np.fft.fftfreq(xs.size, h)
    amp = h / math.sqrt(2 * math.pi) * np.exp(-1j * k * xs[0]) * np.fft.fft(ys)
    order = np.argsort(k, kind="stable")
    return Spectrum(k[order], amp[order], h, float(xs[0]), xs.size)


def idft(spec: Spectrum) -> Dataset:
    """Inverse of :func:`dft` (untapered)."""
    k = spec.frequencies
    # back to numpy's FFT bin order
    fft_k = 2 * np.pi * np.fft.fftfreq(spec.n, spec.dx)
    order = np.argsort(fft_k, kind="stable")
    amp = np.empty_like(spec.amplitudes)
    amp[order] = spec.amplitudes
    kk = np.empty_like(k)
    kk[order] = k
    coeffs = amp * math.sqrt(2 * math.pi) / spec.dx * np.exp(1j * kk * spec.x0)
    xs = spec.x0 + spec.dx * np.arange(spec.n)
    return Dataset(xs, np.fft.ifft(coeffs))


def loss_spectrum(net: nn.Network, target: Dataset) -> Spectrum:
    """Spectrum ``D(k)`` of ``net(x) - f(x)``; ``L(k) = |D(k)|^2``."""
    return dft(Dataset(target.xs, nn.forward(net, target.xs) - target.ys))


# frequency-principle probe --------------------------------------------------------

@dataclass
class ProbeTable:
    """``rows[e][p]``: ``|D(k_p)| / |F[f](k_p)|`` after epoch ``e`` (row 0 = initial)."""

    frequencies: list[float]
    epochs: list[int] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)

    def halving_epoch(self, column: int) -> int | None:
        """First epoch whose relative error is at most half the initial one."""
        start = self.rows[0][column]
        for e, row in zip(self.epochs, self.rows):
            if row[column] <= 0.5 * start:
                return e
        return None

    def to_csv(self) -> str:
        head = "epoch," + ",".join(f"k={k!r}" for k in self.frequencies)
        lines = [head] + [f"{e}," + ",".join(repr(float(v)) for v in row)
                          for e, row in zip(self.epochs, self.rows)]
        return "\n".join(lines) + "\n"


def convergence_probe(target: Dataset, probe_freqs, widths=(1, 40, 40, 40, 40, 1),
                      epochs: int = 1000, lr: float = 1e-3, seed: int = 0,
                      batch_size: int | None = None) -> ProbeTable:
    """Train a plain network on ``target``, tracking spectral error at ``probe_freqs``.

    ``target`` must be on a uniform grid and each probe frequency must carry
    nonzero target amplitude.
    """
    ref = dft(target)
    scale = float(np.max(ref.magnitudes)) or 1.0
    idx = []
    for k in probe_freqs:
        i = ref.index_of(k)
        if abs(ref.frequencies[i] - k) > ref.dk / 2 or abs(ref.amplitudes[i]) <= 1e-8 * scale:
            raise ValueError(f"probe frequency {k} has zero target magnitude")
        idx.append(i)
    ref_mag = np.abs(ref.amplitudes[idx])
    table = ProbeTable([float(k) for k in probe_freqs])

    def record(epoch, net):
        d = loss_spectrum(net, target)
        table.epochs.append(epoch)
        table.rows.append([float(v) for v in np.abs(d.amplitudes[idx]) / ref_mag])

    init = nn.Network.initialize(widths, seed)
    record(0, init)
    nn.train(init, target, epochs, lr=lr, seed=seed, batch_size=batch_size, callback=record)
    return table


# frequency detection ---------------------------------------------------------------

@dataclass
class FrequencyReport:
    peaks: list[tuple[float, float]] = field(default_factory=list)
    bands: list[tuple[float, float]] = field(default_factory=list)
    skipped_clusters: list[int] = field(default_factory=list)
    bin_width: float = 0.0

    def band_table(self) -> str:
        return format_band_table(make_bands("explicit", intervals=self.bands) if self.bands else [])


def _local_grid_fit(xs: np.ndarray, ys: np.ndarray, lo: float, hi: float, n: int):
    """Least-squares cubic spline through the cluster, sampled on ``n`` grid points."""
    grid = lo + (hi - lo) * (np.arange(n) + 0.5) / n
    interior = xs[4:-4:4]
    knots = np.concatenate([[xs[0]] * 4, interior, [xs[-1]] * 4])
    try:
        spl = make_lsq_spline(xs, ys, knots, k=3)
        vals = spl(np.clip(grid, xs[0], xs[-1]))
    except (ValueError, np.linalg.LinAlgError):
        vals = np.interp(grid, xs, ys)
    return grid, vals


def detect_frequencies(data: Dataset, n_clusters: int, threshold: float = 0.05,
                       width: float = 5.0, min_points: int = 16, pad: int = 8) -> FrequencyReport:
    """Find significant frequencies cluster by cluster.

    The x-range is cut into ``n_clusters`` equal contiguous windows. Each is
    fitted by a local least-squares spline sampled on a uniform grid, mean
    removed, Hann tapered and zero padded ``pad`` times; local maxima of the
    magnitude above ``threshold`` times the cluster maximum are peaks. Peaks
    closer than ``width / 2`` merge, and each merged peak ``p`` yields bands
    ``[p - width/2, p + width/2]`` and its mirror image.
    """
    if n_clusters < 1:
        raise ValueError("n_clusters must be positive")
    if np.iscomplexobj(data.ys):
        raise ValueError("frequency detection expects real data")
    order = np.argsort(data.xs)
    xs, ys = data.xs[order], data.ys[order]
    edges = np.linspace(xs[0], xs[-1], n_clusters + 1)
    scale = float(np.sqrt(np.mean(ys * ys))) if ys.size else 0.0
    found: list[tuple[float, float]] = []
    skipped = []
    bin_width = 0.0
    for c in range(n_clusters):
        lo, hi = edges[c], edges[c + 1]
        sel = (xs >= lo) & ((xs < hi) if c < n_clusters - 1 else (xs <= hi))
        if sel.sum() < min_points:
            warnings.warn(f"cluster {c} has {int(sel.sum())} points (< {min_points}); skipped",
                          stacklevel=2)
            skipped.append(c)
            continue
        cx, cy = xs[sel], ys[sel]
        m = int(sel.sum())
        grid, vals = _local_grid_fit(cx, cy, lo, hi, m)
        vals = vals - vals.mean()
        h = (hi - lo) / m
        bin_width = max(bin_width, 2 * np.pi / (hi - lo))
        spec = np.abs(np.fft.rfft(vals * _taper(m, "hann"), n=pad * m))
        k = 2 * np.pi * np.fft.rfftfreq(pad * m, h)
        peak = float(spec.max())
        if peak <= 1e-9 * scale * m:
            continue
        is_max = np.r_[spec[0] > spec[1],
                       (spec[1:-1] > spec[:-2]) & (spec[1:-1] >= spec[2:]),
                       spec[-1] > spec[-2]]
        for i in np.flatnonzero(is_max & (spec >= threshold * peak)):
            found.append((float(k[i]), float(spec[i]) / m))
    found.sort()
    merged: list[list[tuple[float, float]]] = []
    for k, mag in found:
        if merged and k - merged[-1][-1][0] <= width / 2:
            merged[-1].append((k, mag))
        else:
            merged.append([(k, mag)])
    peaks = []
    for group in merged:
        mags = np.array([g[1] for g in group])
        ks = np.array([g[0] for g in group])
        peaks.append((float(np.sum(ks * mags) / np.sum(mags)), float(mags.max())))
    bands = []
    for p, _ in sorted(peaks):
        bands.append((p - width / 2, p + width / 2))
    bands = sorted(set(bands + [(-b, -a) for a, b in bands]))
    # merge overlapping mirrored bands near zero
    out: list[tuple[float, float]] = []
    for a, b in bands:
        if out and a < out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    peaks.sort(key=lambda p: -p[1])
    return FrequencyReport(peaks, out, skipped, bin_width)

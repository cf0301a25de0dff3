"""Band extraction by windowed convolution, and phase shifts to baseband."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .kernels import Band

logger = logging.getLogger(__name__)

# rows of the (points x samples) kernel matrix evaluated at once
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class ConvolutionPlan:
    """Convolution window, quadrature and boundary settings.

    ``delta=None`` picks each band's :meth:`Band.default_delta` at
    ``tolerance``. ``boundary="zero"`` treats the data as zero outside its
    span; ``boundary="periodic"`` treats it as ``period``-periodic and, when
    the window reaches half a period, convolves with the exactly periodized
    kernel.
    """

    delta: float | None = None
    quadrature: str = "trapezoid"
    min_points: int = 8
    tolerance: float = 1e-3
    boundary: str = "zero"
    period: float | None = None

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.quadrature not in ("trapezoid", "monte-carlo"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.min_points < 2:
            raise ValueError("min_points must be >= 2")
        if self.boundary not in ("zero", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.boundary == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic boundary needs a positive period")

    def delta_for(self, band: Band) -> float:
        return self.delta if self.delta is not None else band.default_delta(self.tolerance)


def window_counts(xs: np.ndarray, delta: float, period: float | None = None) -> np.ndarray:
    """Number of samples strictly inside ``(x - delta, x + delta)`` for each node."""
    xs = np.asarray(xs, dtype=np.float64)
    if period is None:
        lo = np.searchsorted(xs, xs - delta, side="right")
        hi = np.searchsorted(xs, xs + delta, side="left")
        return hi - lo
    if delta >= period / 2:
        return np.full(xs.size, xs.size)
    ext = np.concatenate([xs - period, xs, xs + period])
    lo = np.searchsorted(ext, xs - delta, side="right")
    hi = np.searchsorted(ext, xs + delta, side="left")
    return hi - lo


def quadrature_weights(xs: np.ndarray, plan: ConvolutionPlan, delta: float) -> np.ndarray:
    """Per-node weights; trapezoid on the sorted nodes (wrapping if periodic)."""
    n = xs.size
    if plan.quadrature == "monte-carlo":
        counts = np.maximum(window_counts(xs, delta, plan.period if plan.boundary == "periodic" else None), 1)
        if plan.boundary == "periodic":
            span = np.full(n, min(2 * delta, plan.period))
        else:
            span = np.minimum(xs + delta, xs[-1]) - np.maximum(xs - delta, xs[0])
        # one weight per evaluation point, applied row-wise by the caller
        return span / counts
    gaps = np.diff(xs)
    w = np.zeros_like(xs)
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    if plan.boundary == "periodic":
        wrap = max(plan.period - (xs[-1] - xs[0]), 0.0)
        w[0] += wrap / 2
        w[-1] += wrap / 2
    return w


def _lattice_extract(xs, ys, band: Band, plan: ConvolutionPlan, w: np.ndarray, row_scale):
    # image sum of the kernel = (1/L) sum_n phi(k_n) exp(i k_n d), k_n = 2 pi n / L
    L = plan.period
    step = 2 * np.pi / L
    lo, hi = band.support
    n = np.arange(int(np.ceil(lo / step - 1e-9)), int(np.floor(hi / step + 1e-9)) + 1)
    k = n * step
    phi = np.asarray(band.phi_k(k), dtype=np.float64)
    if band.kernel.kind == "characteristic":
        # Poisson summation takes the mean value at a jump
        edge = np.isclose(k, lo, rtol=0, atol=1e-9 * step) | np.isclose(k, hi, rtol=0, atol=1e-9 * step)
        phi = np.where(edge, 0.5, phi)
    keep = phi != 0
    k, phi = k[keep], phi[keep]
    out = np.zeros(xs.size, dtype=np.complex128)
    if k.size == 0:
        return out
    wy = ys * (w if row_scale is None else 1.0)
    for kn, pn in zip(k, phi):
        coef = pn / L * np.sum(wy * np.exp(-1j * kn * xs))
        out += coef * np.exp(1j * kn * xs)
    if row_scale is not None:
        out *= row_scale
    return out


def extract_band(residual: Dataset, band: Band, plan: ConvolutionPlan | None = None,
                 *, shifted: bool = False) -> Dataset:
    """Band-pass ``residual`` through ``band`` by quadrature of the convolution.

    Returns complex samples of ``r_j`` at the residual's own nodes. With
    ``shifted=True`` the result is already multiplied by ``exp(-i omega x)``
    (the same as a following ``phase_shift(..., "to-baseband")``).
    Points whose window holds fewer than ``plan.min_points`` samples get 0.
    """
    plan = plan or ConvolutionPlan()
    if not residual.is_sorted:
        raise ValueError("residual must be sorted by x with distinct nodes")
    xs = residual.xs
    n = xs.size
    periodic = plan.boundary == "periodic"
    delta = plan.delta_for(band)
    counts = window_counts(xs, delta, plan.period if periodic else None)
    sparse = counts < plan.min_points
    if sparse.any():
        logger.warning("band %d: %d of %d points have sparse windows (< %d samples)",
                       band.index, int(sparse.sum()), n, plan.min_points)

    w = quadrature_weights(xs, plan, delta)
    # monte-carlo weights depend on the evaluation point, trapezoid on the node
    row_scale = w if plan.quadrature == "monte-carlo" else None
    ys = residual.ys.astype(np.complex128)

    if periodic and delta >= plan.period / 2:
        out = _lattice_extract(xs, ys, band, plan, w, row_scale)
    else:
        # kernel_x(d) = envelope(d) * exp(i c d); factor the phase so the
        # matrix part is real
        centre = (band.support[0] + band.support[1]) / 2
        g = ys * np.exp(-1j * centre * xs)
        if row_scale is None:
            g = g * w
        if periodic:
            # images of the nodes one period either side; the phase factor
            # above already follows each image's own coordinate
            L = plan.period
            ext = np.concatenate([xs - L, xs, xs + L])
            gext = np.concatenate([g * np.exp(1j * centre * L), g, g * np.exp(-1j * centre * L)])
        else:
            ext, gext = xs, g
        lo = np.searchsorted(ext, xs - delta, side="right")
        hi = np.searchsorted(ext, xs + delta, side="left")
        out = np.zeros(n, dtype=np.complex128)
        width = int((hi - lo).max()) if n else 0
        rows = max(1, _CHUNK_ELEMENTS // max(width, 1))
        for start in range(0, n, rows):
            stop = min(n, start + rows)
            c0, c1 = int(lo[start:stop].min()), int(hi[start:stop].max())
            if c1 <= c0:
                continue
            cols = np.arange(c0, c1)
            d = xs[start:stop, None] - ext[None, c0:c1]
            inside = (cols >= lo[start:stop, None]) & (cols < hi[start:stop, None])
            mat = band.envelope(d) * inside
            out[start:stop] = mat @ gext[c0:c1]
        out *= np.exp(1j * centre * xs)
        if row_scale is not None:
            out *= row_scale

    out[sparse] = 0.0
    if shifted:
        out *= np.exp(-1j * band.omega * xs)
    return Dataset(xs, out)


def phase_shift(data: Dataset, omega: float, direction: str = "to-baseband") -> Dataset:
    """Multiply samples by ``exp(-i omega x)`` (to baseband) or ``exp(+i omega x)``."""
    if direction == "to-baseband":
        factor = np.exp(-1j * omega * data.xs)
    elif direction == "from-baseband":
        factor = np.exp(1j * omega * data.xs)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return Dataset(data.xs, data.ys * factor)


def split_complex(d: Dataset) -> tuple[Dataset, Dataset]:
    ys = np.asarray(d.ys)
    if np.iscomplexobj(ys):
        return Dataset(d.xs, ys.real.copy()), Dataset(d.xs, ys.imag.copy())
    return Dataset(d.xs, ys.copy()), Dataset(d.xs, np.zeros_like(ys, dtype=np.float64))


def combine_complex(re: Dataset, im: Dataset) -> Dataset:
    if not np.array_equal(re.xs, im.xs):
        raise ValueError("real and imaginary parts sampled at different points")
    ys = np.empty(re.xs.size, dtype=np.complex128)
    ys.real, ys.imag = re.ys, im.ys
    return Dataset(re.xs, ys)

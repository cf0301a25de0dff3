"""Frequency windows and their x-space selection kernels.

Fourier convention (unitary)::

    F[f](k) = 1/sqrt(2 pi) * int f(x) exp(-i k x) dx
    F^-1[g](x) = 1/sqrt(2 pi) * int g(k) exp(+i k x) dk

so a window centred on ``omega`` selects content behaving like
``exp(+i omega x)``. Convolving data with :meth:`Band.kernel_x` (which is
``phi_x / sqrt(2 pi)``) applies the window ``phi_k`` to the data's spectrum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)

# below this |width * x| the sinc factor is replaced by its series
_SINC_SERIES_CUTOFF = 1e-8


def bspline(m: int, k):
    """Cardinal B-spline ``B_m``: ``B_1 = chi_[0,1)``, ``B_m = B_{m-1} * chi_[0,1]``.

    Evaluated with the Cox-de Boor recursion
    ``B_m(k) = (k B_{m-1}(k) + (m - k) B_{m-1}(k - 1)) / (m - 1)``.
    Support is ``[0, m]``.
    """
    if m < 1:
        raise ValueError("B-spline order must be >= 1")
    k = np.asarray(k, dtype=np.float64)
    # B_1 evaluated at k, k-1, ..., k-(m-1)
    shifts = k[..., None] - np.arange(m)
    vals = ((shifts >= 0.0) & (shifts < 1.0)).astype(np.float64)
    for order in range(2, m + 1):
        t = shifts[..., : m - order + 1]
        vals = (t * vals[..., :-1] + (order - t) * vals[..., 1:]) / (order - 1)
    out = vals[..., 0]
    return float(out) if out.ndim == 0 else out


def _sinc(t):
    """``sin(t) / t`` with the removable singularity filled in."""
    t = np.asarray(t, dtype=np.float64)
    small = np.abs(t) < _SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, t)
    return np.where(small, 1.0 - t * t / 6.0, np.sin(safe) / safe)


@dataclass(frozen=True)
class SelectionKernel:
    """Window family: ``characteristic`` (boxes) or ``bspline`` of ``order``."""

    kind: str
    width: float
    order: int = 4

    def __post_init__(self):
        if self.kind not in ("characteristic", "bspline"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not self.width > 0:
            raise ValueError("kernel width must be positive")
        if self.kind == "bspline" and self.order < 1:
            raise ValueError("B-spline order must be >= 1")

    @property
    def power(self) -> int:
        return 1 if self.kind == "characteristic" else self.order


def phi_k(kernel: SelectionKernel, j: int, k):
    """Mesh window ``j`` of ``kernel`` at frequency ``k``.

    Characteristic: indicator of ``[j dk, (j+1) dk]``. B-spline:
    ``B_m(k/dk - j + m/2)``, i.e. centred on ``j dk``.
    """
    k = np.asarray(k, dtype=np.float64)
    dk = kernel.width
    if kernel.kind == "characteristic":
        out = ((k >= j * dk) & (k <= (j + 1) * dk)).astype(np.float64)
        return float(out) if out.ndim == 0 else out
    return bspline(kernel.order, k / dk - j + kernel.order / 2)


def _phi_x(height: float, omega: float, half_width: float, power: int, x):
    x = np.asarray(x, dtype=np.float64)
    env = _sinc(half_width * x) ** power
    out = (height / SQRT_2PI) * np.exp(1j * omega * x) * env
    return complex(out) if out.ndim == 0 else out


def phi_x(kernel: SelectionKernel, j: int, x):
    """Inverse transform of ``phi_k(kernel, j, .)`` at ``x`` (complex)."""
    dk = kernel.width
    if kernel.kind == "characteristic":
        return _phi_x(dk, (j + 0.5) * dk, dk / 2, 1, x)
    return _phi_x(dk, j * dk, dk / 2, kernel.order, x)


@dataclass(frozen=True)
class Band:
    """One frequency window with its shift frequency ``omega``.

    ``support`` is the closed interval where ``phi_k`` may be nonzero.
    """

    index: int
    omega: float
    kernel: SelectionKernel
    support: tuple[float, float]
    overlaps: bool = False

    @property
    def _height(self) -> float:
        # integral of the window over k
        if self.kernel.kind == "characteristic":
            return self.support[1] - self.support[0]
        return self.kernel.width

    @property
    def _half_width(self) -> float:
        if self.kernel.kind == "characteristic":
            return (self.support[1] - self.support[0]) / 2
        return self.kernel.width / 2

    @property
    def _centre(self) -> float:
        return (self.support[0] + self.support[1]) / 2

    def phi_k(self, k):
        k = np.asarray(k, dtype=np.float64)
        if self.kernel.kind == "characteristic":
            lo, hi = self.support
            out = ((k >= lo) & (k <= hi)).astype(np.float64)
            return float(out) if out.ndim == 0 else out
        dk = self.kernel.width
        return bspline(self.kernel.order, (k - self._centre) / dk + self.kernel.order / 2)

    def phi_x(self, x):
        """Analytic inverse transform of :meth:`phi_k`."""
        return _phi_x(self._height, self._centre, self._half_width, self.kernel.power, x)

    def kernel_x(self, x):
        """Convolution kernel: ``(phi_x * r)(x) / sqrt(2 pi)`` band-passes ``r``."""
        return self.phi_x(x) / SQRT_2PI

    def envelope(self, x):
        """Real, non-oscillating factor of :meth:`kernel_x` (``|kernel_x|`` up to sign)."""
        env = _sinc(self._half_width * np.asarray(x, dtype=np.float64)) ** self.kernel.power
        return (self._height / (2.0 * math.pi)) * env

    def default_delta(self, tol: float = 1e-3) -> float:
        """Half-width where the kernel's decay envelope drops to ``tol`` of its peak.

        Uses ``|sinc(t)|^p <= t^-p``, so ``delta = tol^(-1/p) / half_width``.
        """
        return tol ** (-1.0 / self.kernel.power) / self._half_width


def _overlapping(intervals) -> bool:
    ivs = sorted(intervals)
    return any(b0 > a1 for (_, b0), (a1, _) in zip(ivs[:-1], ivs[1:]))


def make_bands(mode: str = "explicit", *, intervals=None, m: int | None = None,
               width: float | None = None, kind: str = "characteristic",
               order: int = 4) -> list[Band]:
    """Build the band list.

    ``mode="explicit"``: one characteristic band per ``[a, b]`` interval,
    shifted by the interval centre. ``mode="mesh"``: a uniform mesh of
    spacing ``width`` over ``[-m width, m width]``. Spline meshes use
    ``j = -m-1 .. m+1`` so the windows sum to one on the whole range; box
    meshes use ``j = -m .. m-1`` with band ``j`` on ``[j dk, (j+1) dk]``
    shifted by ``j dk``.
    """
    if mode == "explicit":
        if not intervals:
            return []
        ivs = [(float(a), float(b)) for a, b in intervals]
        for a, b in ivs:
            if not a < b:
                raise ValueError(f"degenerate interval [{a}, {b}]")
        overlap = _overlapping(ivs)
        if overlap:
            warnings.warn("explicit band intervals overlap; windows no longer sum to one",
                          stacklevel=2)
        bands = []
        for i, (a, b) in enumerate(ivs):
            kern = SelectionKernel("characteristic", b - a)
            bands.append(Band(i, (a + b) / 2, kern, (a, b), overlap))
        return bands
    if mode == "mesh":
        if m is None or m < 1:
            raise ValueError("mesh mode needs m >= 1")
        if width is None or not width > 0:
            raise ValueError("mesh mode needs width > 0")
        kern = SelectionKernel(kind, float(width), order)
        dk = kern.width
        if kind == "characteristic":
            return [Band(j, j * dk, kern, (j * dk, (j + 1) * dk)) for j in range(-m, m)]
        half = order / 2
        reach = math.ceil(half) - 1
        return [Band(j, j * dk, kern, ((j - half) * dk, (j + half) * dk))
                for j in range(-m - reach, m + reach + 1)]
    raise ValueError(f"unknown band mode {mode!r}")


# band tables ----------------------------------------------------------------------

BAND_TABLE_HEADER = "# index kind order width omega lo hi"


def format_band_table(bands: list[Band]) -> str:
    lines = [BAND_TABLE_HEADER]
    for b in bands:
        lines.append(f"{b.index} {b.kernel.kind} {b.kernel.order} {b.kernel.width!r} "
                     f"{b.omega!r} {b.support[0]!r} {b.support[1]!r}")
    return "\n".join(lines) + "\n"


def parse_band_table(text: str) -> list[Band]:
    bands = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"band table line {lineno}: expected 7 fields, got {len(parts)}")
        try:
            idx, kind, order = int(parts[0]), parts[1], int(parts[2])
            width, omega, lo, hi = (float(p) for p in parts[3:])
        except ValueError as exc:
            raise ValueError(f"band table line {lineno}: {exc}") from None
        bands.append(Band(idx, omega, SelectionKernel(kind, width, order), (lo, hi)))
    if bands and all(b.kernel.kind == "characteristic" for b in bands):
        overlap = _overlapping([b.support for b in bands])
        bands = [Band(b.index, b.omega, b.kernel, b.support, overlap) for b in bands]
    return bands

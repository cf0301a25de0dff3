"""Datasets, target functions, sampling and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset file."""


@dataclass
class Dataset:
    """Paired samples ``(xs[i], ys[i])``; ``ys`` may be complex."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=np.float64).reshape(-1)
        ys = np.asarray(self.ys)
        ys = ys.astype(np.complex128 if np.iscomplexobj(ys) else np.float64)
        self.ys = ys.reshape(-1)
        if self.xs.shape != self.ys.shape:
            raise ValueError(f"xs and ys differ in length: {self.xs.size} vs {self.ys.size}")

    def __len__(self):
        return self.xs.size

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.ys)

    @property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.xs) > 0))

    def with_ys(self, ys) -> "Dataset":
        return Dataset(self.xs, ys)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.is_complex == other.is_complex
                and np.array_equal(self.xs, other.xs)
                and np.array_equal(self.ys, other.ys))


# targets ---------------------------------------------------------------------

@dataclass(frozen=True)
class SumOfSines:
    """``sum(a * sin(w * x))`` over ``terms = ((a, w), ...)``."""

    terms: tuple[tuple[float, float], ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for a, w in self.terms:
            out = out + a * np.sin(w * x)
        return out

    @property
    def frequencies(self) -> list[float]:
        return [w for _, w in self.terms]


@dataclass(frozen=True)
class TargetSpec:
    """A piecewise sum of sines on ``domain``.

    Pieces are half-open ``[a, b)`` except the last, which is closed, so a
    shared endpoint belongs to the left piece.
    """

    kind: str
    domain: tuple[float, float]
    pieces: tuple[tuple[tuple[float, float], SumOfSines], ...] = field(default=())

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise ValueError(f"degenerate domain {self.domain}")
        edges = [iv for iv, _ in self.pieces]
        if not edges:
            raise ValueError("target needs at least one piece")
        if not (math.isclose(edges[0][0], lo) and math.isclose(edges[-1][1], hi)):
            raise ValueError("pieces must tile the domain")
        for (a0, b0), (a1, b1) in zip(edges[:-1], edges[1:]):
            if not math.isclose(b0, a1):
                raise ValueError("pieces must tile the domain without gaps or overlap")
        if any(a >= b for a, b in edges):
            raise ValueError("degenerate piece interval")

    @property
    def frequencies(self) -> list[float]:
        return sorted({abs(w) for _, s in self.pieces for w in s.frequencies})

    def __call__(self, x):
        return eval_target(self, x)

    def to_dict(self) -> dict:
        if self.kind == "sum-of-sines":
            return {"kind": self.kind, "domain": list(self.domain),
                    "terms": [list(t) for t in self.pieces[0][1].terms]}
        return {
            "kind": self.kind,
            "domain": list(self.domain),
            "pieces": [{"interval": list(iv), "terms": [list(t) for t in s.terms]}
                       for iv, s in self.pieces],
        }


def four_scale_target() -> TargetSpec:
    """10(sin x + sin 3x) on [-pi, 0], 10(sin 23x + sin 137x + sin 203x) on [0, pi]."""
    pi = math.pi
    return TargetSpec(
        kind="paper-target",
        domain=(-pi, pi),
        pieces=(
            ((-pi, 0.0), SumOfSines(((10.0, 1.0), (10.0, 3.0)))),
            ((0.0, pi), SumOfSines(((10.0, 23.0), (10.0, 137.0), (10.0, 203.0)))),
        ),
    )


def sum_of_sines(terms, domain=(-math.pi, math.pi)) -> TargetSpec:
    terms = tuple((float(a), float(w)) for a, w in terms)
    return TargetSpec("sum-of-sines", tuple(domain), ((tuple(domain), SumOfSines(terms)),))


def piecewise(pieces) -> TargetSpec:
    """``pieces`` is a sequence of ``((a, b), [(amp, freq), ...])``."""
    built = tuple(((float(a), float(b)), SumOfSines(tuple((float(p), float(q)) for p, q in terms)))
                  for (a, b), terms in pieces)
    return TargetSpec("piecewise", (built[0][0][0], built[-1][0][1]), built)


def target_from_dict(d: dict) -> TargetSpec:
    kind = d.get("kind", "paper-target")
    if kind in ("paper-target", "paper"):
        return four_scale_target()
    if kind == "sum-of-sines":
        return sum_of_sines(d["terms"], tuple(d.get("domain", (-math.pi, math.pi))))
    if kind == "piecewise":
        return piecewise([(p["interval"], p["terms"]) for p in d["pieces"]])
    raise ValueError(f"unknown target kind {kind!r}")


def eval_target(spec: TargetSpec, x):
    xa = np.asarray(x, dtype=np.float64)
    lo, hi = spec.domain
    if np.any((xa < lo) | (xa > hi)) or np.any(~np.isfinite(xa)):
        raise ValueError(f"x outside target domain [{lo}, {hi}]")
    out = np.zeros_like(xa)
    n = len(spec.pieces)
    for i, ((a, b), s) in enumerate(spec.pieces):
        mask = (xa >= a) & ((xa < b) if i < n - 1 else (xa <= b))
        out = np.where(mask, s(xa), out)
    return float(out) if xa.ndim == 0 else out


# sampling ----------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingSpec:
    count: int
    scheme: str = "uniform-random"
    seed: int = 0

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least 2 samples")
        if self.scheme not in ("uniform-random", "uniform-grid"):
            raise ValueError(f"unknown sampling scheme {self.scheme!r}")


def sample_points(domain, s: SamplingSpec) -> np.ndarray:
    lo, hi = domain
    if s.scheme == "uniform-grid":
        return np.linspace(lo, hi, s.count)
    rng = np.random.default_rng(s.seed)
    xs = np.unique(rng.uniform(lo, hi, s.count))
    # redraw duplicates so nodes stay distinct
    while xs.size < s.count:
        xs = np.unique(np.concatenate([xs, rng.uniform(lo, hi, s.count - xs.size)]))
    return xs


def sample(spec: TargetSpec, s: SamplingSpec) -> Dataset:
    xs = sample_points(spec.domain, s)
    return Dataset(xs, eval_target(spec, xs))


# CSV -------------------------------------------------------------------------------

def save_csv(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if d.is_complex:
            fh.write("x,re,im\n")
            for x, y in zip(d.xs, d.ys):
                fh.write(f"{float(x)!r},{float(y.real)!r},{float(y.imag)!r}\n")
        else:
            fh.write("x,y\n")
            for x, y in zip(d.xs, d.ys):
                fh.write(f"{float(x)!r},{float(y)!r}\n")


def _parse_float(cell: str, lineno: int, path) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: non-numeric value {cell!r}") from None


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a headed numeric CSV into ``(header, rows)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append([_parse_float(c, lineno, path) for c in row])
    return header, np.array(rows, dtype=np.float64).reshape(-1, len(header))


def load_csv(path) -> Dataset:
    header, rows = read_table(path)
    if rows.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")
    if header[:3] == ["x", "re", "im"]:
        ys = np.empty(rows.shape[0], dtype=np.complex128)
        ys.real, ys.imag = rows[:, 1], rows[:, 2]
        return Dataset(rows[:, 0], ys)
    if header[:2] == ["x", "y"]:
        return Dataset(rows[:, 0], rows[:, 1])
    raise DataFormatError(f"{path}:1: header must be 'x,y' or 'x,re,im', got {','.join(header)}")

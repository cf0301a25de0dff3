"""TOML run configuration.

A config file describes one experiment completely: target, sampling, the
networks, optimizer, bands, convolution plan, rounds and seed. ``load``
returns an :class:`Experiment` whose ``resolved`` dict is the fully
defaulted config, echoed into every report.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bands import ConvolutionPlan
from .data import SamplingSpec, TargetSpec, target_from_dict
from .kernels import Band, make_bands, parse_band_table
from .model import RunConfig, derive_seed
from .net import LayerSpec


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


DEFAULTS = {
    "seed": 0,
    "target": {"kind": "paper-target"},
    "sampling": {"train_count": 10000, "train_scheme": "uniform-random",
                 "test_count": 500, "test_scheme": "uniform-grid"},
    "base": {"widths": [1, 40, 40, 40, 40, 1], "epochs": 0},
    "band_network": {"widths": [1, 40, 40, 40, 40, 1], "epochs": 10},
    "optimizer": {"lr": 2e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8, "batch_size": 0},
    "bands": {"mode": "explicit", "intervals": []},
    "convolution": {"delta": "auto", "tolerance": 1e-3, "quadrature": "trapezoid",
                    "min_points": 8, "boundary": "zero", "period": "domain"},
    "run": {"rounds": 1},
    "baseline": {"widths": [1, 100, 100, 100, 100, 100, 100, 100, 100, 100, 1],
                 "epochs": "match"},
    "probe": {"target": {"kind": "sum-of-sines", "terms": [[1.0, 1.0], [1.0, 5.0]]},
              "frequencies": [1.0, 5.0], "grid_points": 256, "widths": [1, 40, 40, 40, 40, 1],
              "epochs": 3000, "lr": 1e-3, "batch_size": 0, "seeds": [0, 1, 2, 3, 4]},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class Experiment:
    resolved: dict
    target: TargetSpec
    train_sampling: SamplingSpec
    test_sampling: SamplingSpec
    run: RunConfig
    source: Path | None = None

    @property
    def seed(self) -> int:
        return self.run.seed


def _bands(section: dict, base_dir: Path | None) -> list[Band]:
    mode = section.get("mode", "explicit")
    if mode == "explicit":
        return make_bands("explicit", intervals=section.get("intervals", []))
    if mode == "mesh":
        return make_bands("mesh", m=int(section["m"]), width=float(section["width"]),
                          kind=section.get("kind", "bspline"), order=int(section.get("order", 4)))
    if mode == "table":
        path = Path(section["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            return parse_band_table(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read band table {path}: {exc}") from None
    raise ConfigError(f"unknown bands.mode {mode!r}")


def build(raw: dict, source: Path | None = None, seed: int | None = None) -> Experiment:
    cfg = _merge(DEFAULTS, raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    base_dir = source.parent if source else None
    try:
        target = target_from_dict(cfg["target"])
        s = cfg["sampling"]
        train_s = SamplingSpec(int(s["train_count"]), s["train_scheme"],
                               int(s.get("train_seed", derive_seed(cfg["seed"], 100))))
        test_s = SamplingSpec(int(s["test_count"]), s["test_scheme"],
                              int(s.get("test_seed", derive_seed(cfg["seed"], 101))))
        bands = _bands(cfg["bands"], base_dir)
        c = cfg["convolution"]
        period = c.get("period", "domain")
        if period == "domain":
            period = target.domain[1] - target.domain[0]
        delta = c.get("delta", "auto")
        plan = ConvolutionPlan(
            delta=None if delta == "auto" else float(delta),
            quadrature=c["quadrature"], min_points=int(c["min_points"]),
            tolerance=float(c["tolerance"]), boundary=c["boundary"],
            period=float(period) if c["boundary"] == "periodic" else None)
        o = cfg["optimizer"]
        batch = int(o.get("batch_size", 0)) or None
        run = RunConfig(
            base_widths=tuple(cfg["base"]["widths"]), base_epochs=int(cfg["base"]["epochs"]),
            band_widths=tuple(cfg["band_network"]["widths"]),
            band_epochs=int(cfg["band_network"]["epochs"]),
            lr=float(o["lr"]), beta1=float(o["beta1"]), beta2=float(o["beta2"]),
            eps=float(o["eps"]), batch_size=batch, bands=bands, plan=plan,
            rounds=int(cfg["run"]["rounds"]), seed=int(cfg["seed"]))
        LayerSpec(run.base_widths)
        LayerSpec(run.band_widths)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    cfg["target"] = target.to_dict()
    cfg["sampling"].update(train_seed=train_s.seed, test_seed=test_s.seed)
    cfg["convolution"]["period"] = plan.period
    cfg["bands"]["resolved"] = [{"index": b.index, "kind": b.kernel.kind, "order": b.kernel.order,
                                  "width": b.kernel.width, "omega": b.omega,
                                  "support": list(b.support)} for b in bands]
    return Experiment(cfg, target, train_s, test_s, run, source)


def load(path, seed: int | None = None) -> Experiment:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return build(raw, path, seed)


def baseline_epochs(exp: Experiment) -> int:
    """Total epochs spent by the PhaseDNN run the baseline is compared with."""
    spec = exp.resolved["baseline"].get("epochs", "match")
    if spec != "match":
        return int(spec)
    r = exp.run
    return r.base_epochs + r.rounds * len(r.bands) * 2 * r.band_epochs


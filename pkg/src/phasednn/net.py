"""Dense tanh networks trained with backpropagation and Adam.

Parameters live in one flat float64 vector; the per-layer weight matrices
and bias vectors are views into it, so the Adam update is a single
vectorized operation over every parameter at once.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NETWORK_FORMAT = "phasednn-network"
NETWORK_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when training produces a non-finite loss."""


@dataclass(frozen=True)
class LayerSpec:
    """Layer widths ``(1, n1, ..., nL, 1)`` of a scalar-to-scalar network."""

    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        if len(widths) < 3:
            raise ValueError("need at least one hidden layer")
        if widths[0] != 1 or widths[-1] != 1:
            raise ValueError(f"input and output widths must be 1, got {widths}")
        if any(w < 1 for w in widths):
            raise ValueError(f"widths must be positive, got {widths}")

    @property
    def shapes(self) -> list[tuple[tuple[int, int], tuple[int]]]:
        return [((a, b), (b,)) for a, b in zip(self.widths[:-1], self.widths[1:])]

    @property
    def n_params(self) -> int:
        return sum((a + 1) * b for a, b in zip(self.widths[:-1], self.widths[1:]))


def _views(spec: LayerSpec, theta: np.ndarray):
    weights, biases = [], []
    pos = 0
    for (wshape, bshape) in spec.shapes:
        n = wshape[0] * wshape[1]
        weights.append(theta[pos:pos + n].reshape(wshape))
        pos += n
        biases.append(theta[pos:pos + bshape[0]])
        pos += bshape[0]
    return weights, biases


class Network:
    """A tanh network ``x -> W_L tanh(... tanh(W_0 x + b_0) ...) + b_L``.

    ``weights[l]`` has shape ``(n_l, n_{l+1})`` and acts on row vectors.
    """

    def __init__(self, spec: LayerSpec, theta: np.ndarray | None = None):
        if not isinstance(spec, LayerSpec):
            spec = LayerSpec(tuple(spec))
        self.spec = spec
        if theta is None:
            theta = np.zeros(spec.n_params)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (spec.n_params,):
            raise ValueError(
                f"expected {spec.n_params} parameters, got shape {theta.shape}")
        self.theta = theta
        self.weights, self.biases = _views(spec, self.theta)

    @classmethod
    def initialize(cls, spec: LayerSpec | tuple[int, ...], seed: int) -> "Network":
        """Glorot-uniform weights, zero biases."""
        net = cls(spec)
        rng = np.random.default_rng(seed)
        for w in net.weights:
            fan_in, fan_out = w.shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w[...] = rng.uniform(-limit, limit, size=w.shape)
        return net

    def copy(self) -> "Network":
        return Network(self.spec, self.theta.copy())

    def __call__(self, x):
        return forward(self, x)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.theta, other.theta)

    def __repr__(self):
        return f"Network(widths={self.spec.widths})"

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": NETWORK_FORMAT,
            "version": NETWORK_FORMAT_VERSION,
            "widths": list(self.spec.widths),
            "layout": "per layer: W row-major (n_in x n_out), then b",
            "params": [float(v) for v in self.theta],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != NETWORK_FORMAT:
            raise ValueError(f"not a network file: format={d.get('format')!r}")
        if d.get("version") != NETWORK_FORMAT_VERSION:
            raise ValueError(f"unsupported network format version {d.get('version')}")
        return cls(LayerSpec(tuple(d["widths"])), np.array(d["params"], dtype=np.float64))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def forward(net: Network, x):
    """Evaluate the network at a scalar or an array of points."""
    xa = np.asarray(x, dtype=np.float64)
    h = xa.reshape(-1, 1)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if l < last:
            h = np.tanh(h)
    out = h[:, 0]
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def _xy(data):
    xs = np.asarray(data.xs, dtype=np.float64)
    ys = np.asarray(data.ys)
    if np.iscomplexobj(ys):
        raise ValueError("networks train on real data; split complex data first")
    if xs.size == 0:
        raise ValueError("empty dataset")
    return xs, ys.astype(np.float64)


def mse_loss(net: Network, data) -> float:
    xs, ys = _xy(data)
    r = forward(net, xs) - ys
    return float(np.mean(r * r))


def _loss_and_grad(net: Network, xs: np.ndarray, ys: np.ndarray):
    # forward pass keeping activations
    acts = [xs.reshape(-1, 1)]
    h = acts[0]
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if l < last:
            h = np.tanh(h)
        acts.append(h)
    resid = acts[-1][:, 0] - ys
    n = xs.size
    loss = float(resid @ resid) / n
    if not np.isfinite(loss):
        return loss, np.full_like(net.theta, np.nan)

    grad = np.empty_like(net.theta)
    gw, gb = _views(net.spec, grad)
    delta = (2.0 / n) * resid.reshape(-1, 1)
    for l in range(last, -1, -1):
        gw[l][...] = acts[l].T @ delta
        gb[l][...] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l].T) * (1.0 - acts[l] ** 2)
    return loss, grad


def gradient(net: Network, batch) -> np.ndarray:
    """Exact gradient of the batch MSE, flat in the layout of ``net.theta``.

    Use :func:`unflatten` to get per-layer ``(dW, db)`` views.
    """
    xs, ys = _xy(batch)
    return _loss_and_grad(net, xs, ys)[1]


def unflatten(spec: LayerSpec, flat: np.ndarray):
    return _views(spec, flat)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, net: Network, lr: float = 2e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        z = np.zeros_like(net.theta)
        return cls(z, z.copy(), 0, lr, beta1, beta2, eps)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step,
                         self.lr, self.beta1, self.beta2, self.eps)


def _adam_inplace(theta: np.ndarray, s: AdamState, g: np.ndarray) -> None:
    s.step += 1
    s.m *= s.beta1
    s.m += (1.0 - s.beta1) * g
    s.v *= s.beta2
    s.v += (1.0 - s.beta2) * (g * g)
    mhat = s.m / (1.0 - s.beta1 ** s.step)
    vhat = s.v / (1.0 - s.beta2 ** s.step)
    theta -= s.lr * mhat / (np.sqrt(vhat) + s.eps)


def adam_step(net: Network, state: AdamState, grad: np.ndarray):
    """One bias-corrected Adam update. Returns new ``(net, state)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != net.theta.shape or state.m.shape != net.theta.shape:
        raise ValueError(
            f"gradient shape {grad.shape} does not match parameters {net.theta.shape}")
    new_net, new_state = net.copy(), state.copy()
    _adam_inplace(new_net.theta, new_state, grad)
    return new_net, new_state


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    seconds: float = 0.0
    epochs: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def train(net: Network, data, epochs: int, lr: float = 2e-4, seed: int = 0,
          batch_size: int | None = None, beta1: float = 0.9, beta2: float = 0.999,
          eps: float = 1e-8, callback=None) -> tuple[Network, TrainReport]:
    """Train a copy of ``net`` on ``data`` with Adam.

    ``batch_size=None`` means one full-batch step per epoch; otherwise each
    epoch is a seeded shuffle split into mini-batches. ``losses[e]`` is the
    full-data MSE after epoch ``e``. ``callback(epoch, net)`` runs after
    each epoch on the network being trained (do not mutate it).
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    xs, ys = _xy(data)
    net = net.copy()
    state = AdamState.fresh(net, lr, beta1, beta2, eps)
    rng = np.random.default_rng(seed)
    n = xs.size
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(epochs):
        if batch_size is None or batch_size >= n:
            loss, g = _loss_and_grad(net, xs, ys)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            _adam_inplace(net.theta, state, g)
        else:
            order = rng.permutation(n)
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                loss, g = _loss_and_grad(net, xs[idx], ys[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                _adam_inplace(net.theta, state, g)
        r = forward(net, xs) - ys
        epoch_loss = float(r @ r) / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss after epoch {epoch}")
        report.losses.append(epoch_loss)
        report.epochs = epoch + 1
        if callback is not None:
            callback(epoch + 1, net)
    report.seconds = time.perf_counter() - t0
    logger.debug("trained %s for %d epochs, final loss %.3e",
                 net.spec.widths, epochs, report.final_loss)
    return net, report

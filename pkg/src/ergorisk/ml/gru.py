"""Stacked GRU regressor with a small dense head, in plain numpy.

Cell (per layer, row-vector convention)::

    r = sigmoid(x W_ir + h W_hr + b_r)
    z = sigmoid(x W_iz + h W_hz + b_z)
    n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    h' = (1 - z) * n + z * h

Gate matrices are stored fused along the last axis in r, z, n order:
``W_i`` is (in, 3H), ``W_h`` is (H, 3H), ``b`` holds b_r, b_z, b_in and
``b_hn`` sits apart because it lives inside the reset product.

The last hidden state of the top layer feeds Dense(H->90) + ReLU, dropout,
Dense(90->90) + ReLU, Linear(90->1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ModelError

SCHEMA = "ergorisk-gru/1"
HEAD = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass(frozen=True)
class GruConfig:
    input_width: int = 6
    hidden: int = 10
    layers: int = 3
    head_width: int = 90
    dropout: float = 0.5
    sequence_length: int = 250
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.input_width, self.hidden, self.layers, self.head_width,
               self.sequence_length, self.batch_size) < 1:
            raise ModelError("GRU sizes must be positive")
        if not 0 <= self.dropout < 1:
            raise ModelError("dropout must lie in [0, 1)")
        if self.learning_rate <= 0 or self.epochs < 0:
            raise ModelError("learning_rate must be positive and epochs non-negative")
        if self.clip_norm < 0:
            raise ModelError("clip_norm must be non-negative (0 disables clipping)")


@dataclass(frozen=True, eq=False)
class GruParams:
    """Named weight arrays: ``gru{l}.W_i``, ``gru{l}.W_h``, ``gru{l}.b``, ``gru{l}.b_hn``, ``head.*``."""

    arrays: dict[str, np.ndarray]
    layers: int
    hidden: int

    def names(self) -> list[str]:
        return list(self.arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "GruParams":
        return replace(self, arrays={k: v.copy() for k, v in self.arrays.items()})

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def init_params(cfg: GruConfig, rng: np.random.Generator | None = None) -> GruParams:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    H = cfg.hidden
    k = 1.0 / np.sqrt(H)
    arrays = {}
    for layer in range(cfg.layers):
        width = cfg.input_width if layer == 0 else H
        arrays[f"gru{layer}.W_i"] = rng.uniform(-k, k, (width, 3 * H))
        arrays[f"gru{layer}.W_h"] = rng.uniform(-k, k, (H, 3 * H))
        arrays[f"gru{layer}.b"] = rng.uniform(-k, k, 3 * H)
        arrays[f"gru{layer}.b_hn"] = rng.uniform(-k, k, H)
    for i, (a, b) in enumerate([(H, cfg.head_width), (cfg.head_width, cfg.head_width),
                                (cfg.head_width, 1)], start=1):
        s = 1.0 / np.sqrt(a)
        arrays[f"head.W{i}"] = rng.uniform(-s, s, (a, b))
        arrays[f"head.b{i}"] = rng.uniform(-s, s, b)
    return GruParams(arrays, cfg.layers, H)


def zero_params(cfg: GruConfig) -> GruParams:
    p = init_params(cfg, np.random.default_rng(0))
    return replace(p, arrays={k: np.zeros_like(v) for k, v in p.arrays.items()})


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _layer_forward(p: GruParams, layer: int, xs: np.ndarray, h0: np.ndarray | None = None):
    """Run one layer over (B, T, in); returns hidden states (B, T+1, H) and a cache."""
    B, T, _ = xs.shape
    H = p.hidden
    W_h = p[f"gru{layer}.W_h"]
    b_hn = p[f"gru{layer}.b_hn"]
    xi = xs @ p[f"gru{layer}.W_i"] + p[f"gru{layer}.b"]
    hs = np.empty((B, T + 1, H))
    hs[:, 0] = 0.0 if h0 is None else h0
    r = np.empty((B, T, H)); z = np.empty((B, T, H))
    n = np.empty((B, T, H)); hn = np.empty((B, T, H))
    for t in range(T):
        h = hs[:, t]
        hh = h @ W_h
        r[:, t] = sigmoid(xi[:, t, :H] + hh[:, :H])
        z[:, t] = sigmoid(xi[:, t, H:2 * H] + hh[:, H:2 * H])
        hn[:, t] = hh[:, 2 * H:] + b_hn
        n[:, t] = np.tanh(xi[:, t, 2 * H:] + r[:, t] * hn[:, t])
        hs[:, t + 1] = (1.0 - z[:, t]) * n[:, t] + z[:, t] * h
    return hs, (xs, hs, r, z, n, hn)


def _layer_backward(p: GruParams, layer: int, cache, dhs: np.ndarray, grads: dict):
    """Backprop through time; ``dhs`` is dL/dh_t for t = 1..T (B, T, H). Returns dL/dx."""
    xs, hs, r, z, n, hn = cache
    B, T, H = r.shape
    W_h = p[f"gru{layer}.W_h"]
    da = np.empty((B, T, 3 * H))
    dhh_all = np.empty((B, T, 3 * H))
    dh = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[:, t]
        h = hs[:, t]
        dn = dh * (1.0 - z[:, t])
        dz = dh * (h - n[:, t])
        dan = dn * (1.0 - n[:, t] ** 2)
        dr = dan * hn[:, t]
        dar = dr * r[:, t] * (1.0 - r[:, t])
        daz = dz * z[:, t] * (1.0 - z[:, t])
        da[:, t, :H] = dar
        da[:, t, H:2 * H] = daz
        da[:, t, 2 * H:] = dan
        dhh = dhh_all[:, t]
        dhh[:, :H] = dar
        dhh[:, H:2 * H] = daz
        dhh[:, 2 * H:] = dan * r[:, t]
        dh = dh * z[:, t] + dhh @ W_h.T
    flat_x = xs.reshape(B * T, -1)
    flat_h = hs[:, :T].reshape(B * T, H)
    grads[f"gru{layer}.W_i"] += flat_x.T @ da.reshape(B * T, -1)
    grads[f"gru{layer}.b"] += da.sum(axis=(0, 1))
    grads[f"gru{layer}.W_h"] += flat_h.T @ dhh_all.reshape(B * T, -1)
    grads[f"gru{layer}.b_hn"] += dhh_all[:, :, 2 * H:].sum(axis=(0, 1))
    return da @ p[f"gru{layer}.W_i"].T


def _masks(p: GruParams, shape_seq, rng, rate):
    if rng is None or rate <= 0:
        return None
    keep = 1.0 - rate
    B, T = shape_seq
    layer_masks = [(rng.random((B, T, p.hidden)) < keep) / keep for _ in range(p.layers - 1)]
    head_mask = (rng.random((B, p["head.W1"].shape[1])) < keep) / keep
    return layer_masks, head_mask


def forward(p: GruParams, X: np.ndarray, masks=None, keep_cache: bool = False):
    """Raw (unclamped) outputs for a batch (B, T, in); optional dropout masks."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != p["gru0.W_i"].shape[0]:
        raise ModelError(f"expected windows of shape (B, T, {p['gru0.W_i'].shape[0]}), got {X.shape}")
    caches = []
    seq = X
    for layer in range(p.layers):
        hs, cache = _layer_forward(p, layer, seq)
        caches.append(cache)
        seq = hs[:, 1:]
        if masks is not None and layer < p.layers - 1:
            seq = seq * masks[0][layer]
    h_last = seq[:, -1]
    a1 = h_last @ p["head.W1"] + p["head.b1"]
    u1 = np.maximum(a1, 0.0)
    d1 = u1 * masks[1] if masks is not None else u1
    a2 = d1 @ p["head.W2"] + p["head.b2"]
    u2 = np.maximum(a2, 0.0)
    y = (u2 @ p["head.W3"] + p["head.b3"])[:, 0]
    if keep_cache:
        return y, (caches, h_last, a1, d1, a2, u2)
    return y


def mse(p: GruParams, X: np.ndarray, target: np.ndarray) -> float:
    err = forward(p, X) - np.asarray(target, dtype=float).reshape(-1)
    return float(np.mean(err ** 2))


def loss_and_grad(p: GruParams, X: np.ndarray, target: np.ndarray, masks=None):
    """Mean squared error over the batch and its gradient for every parameter."""
    target = np.asarray(target, dtype=float).reshape(-1)
    y, (caches, h_last, a1, d1, a2, u2) = forward(p, X, masks, keep_cache=True)
    B = y.size
    err = y - target
    loss = float(np.mean(err ** 2))
    grads = {k: np.zeros_like(v) for k, v in p.arrays.items()}
    dy = (2.0 / B) * err[:, None]
    grads["head.W3"] = u2.T @ dy
    grads["head.b3"] = dy.sum(axis=0)
    da2 = (dy @ p["head.W3"].T) * (a2 > 0)
    grads["head.W2"] = d1.T @ da2
    grads["head.b2"] = da2.sum(axis=0)
    dd1 = da2 @ p["head.W2"].T
    if masks is not None:
        dd1 = dd1 * masks[1]
    da1 = dd1 * (a1 > 0)
    grads["head.W1"] = h_last.T @ da1
    grads["head.b1"] = da1.sum(axis=0)
    dh_last = da1 @ p["head.W1"].T
    T = caches[-1][2].shape[1]
    dseq = np.zeros((B, T, p.hidden))
    dseq[:, -1] = dh_last
    for layer in range(p.layers - 1, -1, -1):
        if masks is not None and layer < p.layers - 1:
            dseq = dseq * masks[0][layer]
        dseq = _layer_backward(p, layer, caches[layer], dseq, grads)
    return loss, grads


@dataclass(frozen=True, eq=False)
class GruModel:
    """Trained weights plus the input/target normalisation learned on the training split."""

    params: GruParams
    config: GruConfig
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    clamp: tuple[float, float] = (0.0, 10.0)
    loss_trace: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def normalize(self, windows: np.ndarray) -> np.ndarray:
        return (np.asarray(windows, dtype=float) - self.x_mean) / self.x_std

    def predict(self, windows: np.ndarray, batch: int = 2048) -> np.ndarray:
        """Clamped estimates for raw (un-normalised) windows (B, T, in)."""
        windows = np.asarray(windows, dtype=float)
        if windows.ndim != 3 or windows.shape[1:] != (self.config.sequence_length,
                                                      self.config.input_width):
            raise ModelError(f"expected windows of shape (B, {self.config.sequence_length}, "
                             f"{self.config.input_width}), got {windows.shape}")
        out = [forward(self.params, self.normalize(windows[i:i + batch]))
               for i in range(0, windows.shape[0], batch)]
        y = np.concatenate(out) if out else np.zeros(0)
        return np.clip(y * self.y_std + self.y_mean, *self.clamp)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "config": self.config.__dict__,
            "x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean, "y_std": self.y_std, "clamp": list(self.clamp),
            "loss_trace": list(self.loss_trace), "meta": self.meta,
            "weights": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                        for k, v in self.params.arrays.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GruModel":
        if d.get("schema") != SCHEMA:
            raise ModelError(f"not a {SCHEMA} model file")
        cfg = GruConfig(**d["config"])
        arrays = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in d["weights"].items()}
        return cls(GruParams(arrays, cfg.layers, cfg.hidden), cfg,
                   np.array(d["x_mean"]), np.array(d["x_std"]), float(d["y_mean"]),
                   float(d["y_std"]), tuple(d["clamp"]), list(d["loss_trace"]), d["meta"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GruModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


class Adam:
    def __init__(self, params: GruParams, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: GruParams, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params.arrays[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the raw norm."""
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def channel_stats(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    flat = windows.reshape(-1, windows.shape[-1])
    std = flat.std(axis=0)
    return flat.mean(axis=0), np.where(std > 1e-8, std, 1.0)


def train_gru(windows: np.ndarray, targets: np.ndarray, cfg: GruConfig | None = None,
              standardize_targets: bool = True, clamp=(0.0, 10.0)) -> GruModel:
    """Adam on mean squared error, minibatches reshuffled each epoch from ``cfg.seed``.

    Gradients are clipped to ``cfg.clip_norm`` before each step; a rare exploding
    batch otherwise knocks the ReLU head into a constant output.
    """
    cfg = cfg or GruConfig()
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise ModelError("train_gru needs a non-empty (N, T, C) window array")
    if windows.shape[0] != targets.size:
        raise ModelError("one target per window required")
    if windows.shape[2] != cfg.input_width:
        raise ModelError(f"window width {windows.shape[2]} != input_width {cfg.input_width}")
    if windows.shape[1] != cfg.sequence_length:
        cfg = replace(cfg, sequence_length=windows.shape[1])
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    x_mean, x_std = channel_stats(windows)
    y_mean, y_std = 0.0, 1.0
    if standardize_targets:
        y_mean = float(targets.mean())
        s = float(targets.std())
        y_std = s if s > 1e-8 else 1.0
    Xn = (windows - x_mean) / x_std
    yn = (targets - y_mean) / y_std
    opt = Adam(params, cfg.learning_rate)
    trace = []
    N = Xn.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(N)
        total = 0.0
        for i in range(0, N, cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            masks = _masks(params, (idx.size, Xn.shape[1]), rng, cfg.dropout)
            loss, grads = loss_and_grad(params, Xn[idx], yn[idx], masks)
            clip_global_norm(grads, cfg.clip_norm)
            opt.step(params, grads)
            total += loss * idx.size
        trace.append(total / N)
    return GruModel(params, cfg, x_mean, x_std, y_mean, y_std, tuple(clamp), trace)


def gradient_check(p: GruParams, X: np.ndarray, target: np.ndarray, n_samples: int = 200,
                   step: float = 1e-5, seed: int = 0, grads: dict | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples ``n_samples`` parameter entries spread over every array. ``grads``
    may be supplied to check a (possibly tampered) analytic gradient.
    """
    if grads is None:
        _, grads = loss_and_grad(p, X, target)
    rng = np.random.default_rng(seed)
    names = p.names()
    q = p.copy()
    worst = 0.0
    for i in range(n_samples):
        name = names[i % len(names)]
        arr = q.arrays[name]
        j = int(rng.integers(arr.size))
        old = arr.flat[j]
        arr.flat[j] = old + step
        lp = mse(q, X, target)
        arr.flat[j] = old - step
        lm = mse(q, X, target)
        arr.flat[j] = old
        num = (lp - lm) / (2 * step)
        ana = grads[name].flat[j]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-7))
    return worst

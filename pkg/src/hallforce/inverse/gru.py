"""Stacked GRU with a Gaussian head, trained by truncated BPTT in numpy.

Gate layout follows the reset-after form:

    r = sig(x Wx_r + bx_r + h Wh_r + bh_r)
    z = sig(x Wx_z + bx_z + h Wh_z + bh_z)
    n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n))
    h' = (1 - z) * n + z * h

The head maps the top hidden state to (mu_x, mu_z, log sigma_x, log sigma_z)
in normalized force units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import DomainError, SolverError

MODEL_FORMAT = "hallforce-gru"
MODEL_VERSION = 1
HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)
AXES_BY_WIDTH = {2: (0, 2), 3: (0, 1, 2)}


@dataclass(frozen=True)
class GRUConfig:
    layers: int = 2
    hidden: int = 32
    window: int = 100
    epochs: int = 30
    learning_rate: float = 3e-3
    batch: int = 32
    seed: int = 0
    input_axes: int = 3
    clip: float = 5.0
    lr_decay: float = 0.97

    def __post_init__(self):
        if self.input_axes not in AXES_BY_WIDTH:
            raise DomainError("input_axes must be 2 or 3")
        if self.layers < 1 or self.hidden < 1 or self.window < 1 or self.batch < 1:
            raise DomainError("layers, hidden, window and batch must be positive")
        if self.epochs < 0 or not self.learning_rate > 0:
            raise DomainError("epochs must be >= 0 and learning_rate > 0")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class GRUModel:
    params: dict  # name -> ndarray
    layers: int
    hidden: int
    input_axes: tuple[int, ...]
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray
    seed: int = 0
    train_dataset: str = ""
    train_split: str = ""
    history: list = dc_field(default_factory=list)

    @property
    def width(self) -> int:
        return len(self.input_axes)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layers": self.layers,
            "hidden": self.hidden,
            "input_axes": list(self.input_axes),
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
            "in_mean": self.in_mean.tolist(),
            "in_scale": self.in_scale.tolist(),
            "out_mean": self.out_mean.tolist(),
            "out_scale": self.out_scale.tolist(),
            "seed": self.seed,
            "train_dataset": self.train_dataset,
            "train_split": self.train_split,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GRUModel":
        if d.get("format") != MODEL_FORMAT:
            raise DomainError("not a GRU model file")
        if d.get("version") != MODEL_VERSION:
            raise DomainError(f"unsupported GRU model version {d.get('version')!r}")
        params = {k: np.asarray(v, dtype=float) for k, v in d["params"].items()}
        if not all(np.all(np.isfinite(v)) for v in params.values()):
            raise DomainError("model parameters must be finite")
        return cls(
            params,
            int(d["layers"]),
            int(d["hidden"]),
            tuple(int(a) for a in d["input_axes"]),
            np.asarray(d["in_mean"], dtype=float),
            np.asarray(d["in_scale"], dtype=float),
            np.asarray(d["out_mean"], dtype=float),
            np.asarray(d["out_scale"], dtype=float),
            int(d.get("seed", 0)),
            d.get("train_dataset", ""),
            d.get("train_split", ""),
            list(d.get("history", [])),
        )


def init_params(width: int, hidden: int, layers: int, rng) -> dict:
    p = {}
    k = 1.0 / math.sqrt(hidden)
    for layer in range(layers):
        n_in = width if layer == 0 else hidden
        p[f"Wx{layer}"] = rng.uniform(-k, k, (n_in, 3 * hidden))
        p[f"Wh{layer}"] = rng.uniform(-k, k, (hidden, 3 * hidden))
        p[f"bx{layer}"] = np.zeros(3 * hidden)
        p[f"bh{layer}"] = np.zeros(3 * hidden)
    p["Wo"] = rng.uniform(-k, k, (hidden, 4))
    p["bo"] = np.zeros(4)
    return p


# ---------------------------------------------------------------------------
# forward / backward on normalized arrays


def _layer_forward(x, h0, Wx, Wh, bx, bh, keep):
    """x: (T, B, n_in). Returns hidden states (T, B, H) and an optional cache."""
    T = x.shape[0]
    H = h0.shape[1]
    a = (x.reshape(-1, x.shape[2]) @ Wx + bx).reshape(T, -1, 3 * H)
    hs = np.empty((T,) + h0.shape)
    h = h0
    if keep:
        rs, zs, ns, hns = (np.empty_like(hs) for _ in range(4))
    for t in range(T):
        hh = h @ Wh + bh
        rz = _sigmoid(a[t, :, : 2 * H] + hh[:, : 2 * H])
        r, z = rz[:, :H], rz[:, H:]
        hn = hh[:, 2 * H :]
        n = np.tanh(a[t, :, 2 * H :] + r * hn)
        h = n + z * (h - n)
        hs[t] = h
        if keep:
            rs[t], zs[t], ns[t], hns[t] = r, z, n, hn
    cache = (x, h0, hs, rs, zs, ns, hns) if keep else None
    return hs, cache


def _layer_backward(dhs, cache, Wx, Wh):
    x, h0, hs, rs, zs, ns, hns = cache
    T, B, H = hs.shape
    dA = np.empty((T, B, 3 * H))
    dWh = np.zeros_like(Wh)
    dbh = np.zeros(3 * H)
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else h0
        r, z, n, hn = rs[t], zs[t], ns[t], hns[t]
        dh = dhs[t] + dh_next
        dn = dh * (1 - z)
        dz = dh * (h_prev - n)
        dan = dn * (1 - n * n)
        dar = dan * hn * r * (1 - r)
        daz = dz * z * (1 - z)
        dhh = np.concatenate([dar, daz, dan * r], axis=1)
        dA[t] = np.concatenate([dar, daz, dan], axis=1)
        dWh += h_prev.T @ dhh
        dbh += dhh.sum(axis=0)
        dh_next = dh * z + dhh @ Wh.T
    flat = dA.reshape(T * B, 3 * H)
    dWx = x.reshape(T * B, -1).T @ flat
    dbx = flat.sum(axis=0)
    dx = (flat @ Wx.T).reshape(T, B, -1)
    return dx, dWx, dWh, dbx, dbh


def forward_normalized(params, layers, x, h0=None, keep=False):
    """x: (T, B, width) normalized. Returns head outputs (T, B, 4), final
    hidden states and caches."""
    T, B, _ = x.shape
    H = params["Wh0"].shape[0]
    if h0 is None:
        h0 = np.zeros((layers, B, H))
    caches = []
    states = []
    inp = x
    for layer in range(layers):
        hs, cache = _layer_forward(
            inp, h0[layer], params[f"Wx{layer}"], params[f"Wh{layer}"], params[f"bx{layer}"], params[f"bh{layer}"], keep
        )
        caches.append(cache)
        states.append(hs[-1])
        inp = hs
    out = (inp.reshape(T * B, H) @ params["Wo"] + params["bo"]).reshape(T, B, 4)
    return out, np.stack(states), (caches, inp)


def nll(out, y):
    """Mean Gaussian negative log-likelihood over time, batch and axes."""
    mu, s = out[..., :2], out[..., 2:]
    e = (y - mu) * np.exp(-s)
    return float(np.mean(0.5 * e * e + s) + HALF_LOG_2PI)


def loss_and_grad(params, layers, x, y, h0=None):
    out, hT, (caches, top) = forward_normalized(params, layers, x, h0, keep=True)
    mu, s = out[..., :2], out[..., 2:]
    inv = np.exp(-s)
    e = (y - mu) * inv
    count = y.size
    loss = float(np.mean(0.5 * e * e + s) + HALF_LOG_2PI)
    dout = np.concatenate([-e * inv, 1.0 - e * e], axis=-1) / count
    T, B, H = top.shape
    flat = dout.reshape(T * B, 4)
    grads = {"Wo": top.reshape(T * B, H).T @ flat, "bo": flat.sum(axis=0)}
    dh = (flat @ params["Wo"].T).reshape(T, B, H)
    for layer in range(layers - 1, -1, -1):
        dx, dWx, dWh, dbx, dbh = _layer_backward(dh, caches[layer], params[f"Wx{layer}"], params[f"Wh{layer}"])
        grads[f"Wx{layer}"], grads[f"Wh{layer}"] = dWx, dWh
        grads[f"bx{layer}"], grads[f"bh{layer}"] = dbx, dbh
        dh = dx
    return loss, grads, hT


def gradient_check(params, layers, x, y, h0=None, eps: float = 1e-6, floor: float = 1e-8) -> float:
    """Worst elementwise relative gap between analytic gradients and central
    differences of :func:`nll`: ``|fd - g| / max(|fd| + |g|, floor)``."""
    params = {k: v.copy() for k, v in params.items()}
    _, grads, _ = loss_and_grad(params, layers, x, y, h0)
    worst = 0.0
    for k in sorted(params):
        p = params[k]
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            lp = nll(forward_normalized(params, layers, x, h0)[0], y)
            p[i] = old - eps
            lm = nll(forward_normalized(params, layers, x, h0)[0], y)
            p[i] = old
            fd = (lp - lm) / (2 * eps)
            g = grads[k][i]
            worst = max(worst, abs(fd - g) / max(abs(fd) + abs(g), floor))
    return worst


# ---------------------------------------------------------------------------
# training


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def _clip(grads, limit):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if limit > 0 and total > limit:
        for k in grads:
            grads[k] *= limit / total
    return total


def _norm(x):
    m = x.mean(axis=0)
    s = x.std(axis=0)
    return m, np.where(s > 0, s, 1.0)


def gru_train_arrays(readings: np.ndarray, forces: np.ndarray, cfg: GRUConfig = GRUConfig()) -> GRUModel:
    """Train on one contiguous record (readings in gauss, forces in newtons).

    The record is cut into ``cfg.batch`` contiguous streams that are walked
    in windows of ``cfg.window`` samples, carrying the hidden state between
    windows without backpropagating across them. Each epoch starts the
    streams at a fresh random offset.
    """
    axes = AXES_BY_WIDTH[cfg.input_axes]
    x = np.asarray(readings, dtype=float)[:, list(axes)]
    y = np.asarray(forces, dtype=float)
    if len(x) != len(y) or y.ndim != 2 or y.shape[1] != 2:
        raise DomainError("forces must be (n, 2) and aligned with readings")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("training data must be finite")
    if np.any(y.std(axis=0) == 0) and not np.all(y == 0):
        raise DomainError("targets have zero variance on an axis")
    in_mean, in_scale = _norm(x)
    out_mean, out_scale = _norm(y)
    xn = (x - in_mean) / in_scale
    yn = (y - out_mean) / out_scale

    rng = np.random.default_rng(cfg.seed)
    params = init_params(len(axes), cfg.hidden, cfg.layers, rng)
    opt = Adam(params, cfg.learning_rate)
    B, W = cfg.batch, cfg.window
    usable = len(x) - W
    stream_len = (usable // B) // W * W
    if stream_len < W:
        B = max(1, usable // W)
        stream_len = (usable // B) // W * W
        if stream_len < W:
            raise DomainError("record is shorter than one training window")
    history = []
    for epoch in range(cfg.epochs):
        offset = int(rng.integers(0, W))
        starts = offset + np.arange(B) * stream_len
        h = None
        total = 0.0
        steps = stream_len // W
        opt.lr = cfg.learning_rate * cfg.lr_decay**epoch
        for k in range(steps):
            idx = starts[None, :] + k * W + np.arange(W)[:, None]  # (W, B)
            loss, grads, h = loss_and_grad(params, cfg.layers, xn[idx], yn[idx], h)
            if not math.isfinite(loss):
                raise SolverError(f"non-finite loss at epoch {epoch}, window {k}")
            _clip(grads, cfg.clip)
            opt.step(params, grads)
            total += loss
        history.append(total / steps)
    return GRUModel(
        params, cfg.layers, cfg.hidden, axes, in_mean, in_scale, out_mean, out_scale, cfg.seed, history=history
    )


def gru_train(dataset, cfg: GRUConfig = GRUConfig(), split: str = "train") -> GRUModel:
    ds = dataset.subset(split)
    if len(ds) == 0:
        raise DomainError(f"dataset has no {split!r} rows")
    model = gru_train_arrays(ds.readings, ds.force, cfg)
    model.train_dataset = dataset.id
    model.train_split = split
    return model


# ---------------------------------------------------------------------------
# inference


def gru_forward(model: GRUModel, readings, state=None):
    """Means and standard deviations (newtons) for a reading sequence.

    ``readings`` is ``(T, 3)`` gauss (the model picks its axes) or already
    ``(T, width)``. Returns ``(mu, sigma, state)``; pass ``state`` back in to
    continue a stream.
    """
    r = np.asarray(readings, dtype=float)
    if r.ndim != 2 or len(r) < 1:
        raise DomainError("readings must be a non-empty (T, channels) array")
    if r.shape[1] == 3:
        r = r[:, list(model.input_axes)]
    elif r.shape[1] != model.width:
        raise DomainError(f"model expects {model.width} input channels, got {r.shape[1]}")
    x = ((r - model.in_mean) / model.in_scale)[:, None, :]
    out, hT, _ = forward_normalized(model.params, model.layers, x, state)
    out = out[:, 0, :]
    mu = out[:, :2] * model.out_scale + model.out_mean
    sigma = np.exp(out[:, 2:]) * model.out_scale
    return mu, sigma, hT

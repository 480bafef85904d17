"""LSTM encoder-decoder that learns unit-norm window representations.

The encoder runs over a window in forward order and its final hidden state,
L2-normalized onto the unit sphere, is the window's representation. The
decoder starts from that representation (initial hidden state; cell state
zero), receives a zero vector as its first input, and autoregressively
feeds each emitted reading into the next step. It is trained to output the
window in reverse order.

Everything is plain numpy in float64: forward passes, backpropagation
through time (including the Jacobian of the normalization), and Adam-style
training. Gradients are checked against central finite differences in the
test suite.

Gate layout: weight matrices hold the input, forget, candidate and output
gate blocks side by side, each ``d_h`` columns wide, in that order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit as sigmoid

__all__ = [
    "ModelParams",
    "Grads",
    "TrainConfig",
    "TrainResult",
    "init_params",
    "lstm_step",
    "encode",
    "encode_batch",
    "unit_normalize",
    "normalize_rows",
    "decode",
    "loss",
    "backward",
    "reconstruction_error",
    "reconstruction_errors",
    "train",
    "save_model",
    "load_model",
    "MODEL_MAGIC",
]

MODEL_MAGIC = b"NHEP-AE v1"

_TENSOR_NAMES = ("enc_wx", "enc_wh", "enc_b", "dec_wx", "dec_wh", "dec_b", "out_w", "out_b")


@dataclass
class ModelParams:
    enc_wx: np.ndarray  # (d_in, 4*d_h)
    enc_wh: np.ndarray  # (d_h, 4*d_h)
    enc_b: np.ndarray  # (4*d_h,)
    dec_wx: np.ndarray
    dec_wh: np.ndarray
    dec_b: np.ndarray
    out_w: np.ndarray  # (d_h, d_in)
    out_b: np.ndarray  # (d_in,)

    @property
    def d_in(self) -> int:
        return int(self.enc_wx.shape[0])

    @property
    def d_h(self) -> int:
        return int(self.enc_wh.shape[0])

    def tensors(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.tensors()})


@dataclass
class Grads:
    enc_wx: np.ndarray
    enc_wh: np.ndarray
    enc_b: np.ndarray
    dec_wx: np.ndarray
    dec_wh: np.ndarray
    dec_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def tensors(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 1e-4  # on the output linear layer only
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0 or self.clip_norm <= 0:
            raise ValueError("invalid regularization settings")


@dataclass
class TrainResult:
    params: ModelParams
    epoch_losses: list[float]


def init_params(d_in: int, d_h: int, seed: int = 0) -> ModelParams:
    """Uniform init in [-1/sqrt(d_h), 1/sqrt(d_h)]; forget-gate bias 1."""
    if d_in < 1 or d_h < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    k = 1.0 / np.sqrt(d_h)

    def u(*shape):
        return rng.uniform(-k, k, size=shape)

    p = ModelParams(
        enc_wx=u(d_in, 4 * d_h),
        enc_wh=u(d_h, 4 * d_h),
        enc_b=u(4 * d_h),
        dec_wx=u(d_in, 4 * d_h),
        dec_wh=u(d_h, 4 * d_h),
        dec_b=u(4 * d_h),
        out_w=u(d_h, d_in),
        out_b=u(d_in),
    )
    p.enc_b[d_h : 2 * d_h] = 1.0
    p.dec_b[d_h : 2 * d_h] = 1.0
    return p


def lstm_step(x, h, c, wx, wh, b):
    """One LSTM cell update. Accepts 1-D or batched 2-D ``x, h, c``."""
    d_h = wh.shape[0]
    z = x @ wx + h @ wh + b
    i = sigmoid(z[..., :d_h])
    f = sigmoid(z[..., d_h : 2 * d_h])
    g = np.tanh(z[..., 2 * d_h : 3 * d_h])
    o = sigmoid(z[..., 3 * d_h :])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


class _StepCache:
    __slots__ = ("x", "h_prev", "c_prev", "i", "f", "g", "o", "c", "tc")

    def __init__(self, x, h_prev, c_prev, i, f, g, o, c, tc):
        self.x = x
        self.h_prev = h_prev
        self.c_prev = c_prev
        self.i = i
        self.f = f
        self.g = g
        self.o = o
        self.c = c
        self.tc = tc


def _lstm_run(X_steps, wx, wh, b, h0, c0):
    """Run the cell over a sequence of (B, d_in) inputs; keep caches."""
    d_h = wh.shape[0]
    h, c = h0, c0
    caches = []
    for x in X_steps:
        z = x @ wx + h @ wh + b
        i = sigmoid(z[:, :d_h])
        f = sigmoid(z[:, d_h : 2 * d_h])
        g = np.tanh(z[:, 2 * d_h : 3 * d_h])
        o = sigmoid(z[:, 3 * d_h :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        caches.append(_StepCache(x, h, c, i, f, g, o, c_new, tc))
        h, c = h_new, c_new
    return h, c, caches


def _lstm_backprop(caches, wx, wh, dh_last, dc_last, d_wx, d_wh, d_b, want_dx=False):
    """Reverse pass over cached steps.

    Accumulates weight gradients in place and returns (dh0, dc0, dxs) where
    dxs (per-step input gradients, reverse order) is only built on request.
    """
    dh, dc = dh_last, dc_last
    dxs = [] if want_dx else None
    for cache in reversed(caches):
        dc = dc + dh * cache.o * (1.0 - cache.tc**2)
        do = dh * cache.tc
        di = dc * cache.g
        df = dc * cache.c_prev
        dg = dc * cache.i
        dz = np.concatenate(
            [
                di * cache.i * (1.0 - cache.i),
                df * cache.f * (1.0 - cache.f),
                dg * (1.0 - cache.g**2),
                do * cache.o * (1.0 - cache.o),
            ],
            axis=1,
        )
        d_wx += cache.x.T @ dz
        d_wh += cache.h_prev.T @ dz
        d_b += dz.sum(axis=0)
        if want_dx:
            dxs.append(dz @ wx.T)
        dh = dz @ wh.T
        dc = dc * cache.f
    return dh, dc, dxs


def _as_features(window) -> np.ndarray:
    feats = getattr(window, "features", window)
    feats = np.asarray(feats, dtype=float)
    if feats.ndim != 2:
        raise ValueError("window must be a (length, d_in) matrix")
    return feats


def encode_batch(X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Encode (B, l, d_in) windows to (B, d_h) final hidden states."""
    X = np.asarray(X, dtype=float)
    if X.shape[2] != params.d_in:
        raise ValueError("feature dimension mismatch")
    B = X.shape[0]
    h0 = np.zeros((B, params.d_h))
    c0 = np.zeros((B, params.d_h))
    steps = [X[:, t, :] for t in range(X.shape[1])]
    h, _, _ = _lstm_run(steps, params.enc_wx, params.enc_wh, params.enc_b, h0, c0)
    return h


def encode(window, params: ModelParams) -> np.ndarray:
    """Unnormalized representation: the encoder's final hidden state."""
    feats = _as_features(window)
    return encode_batch(feats[None, :, :], params)[0]


def unit_normalize(r: np.ndarray) -> np.ndarray:
    """Project onto the unit sphere; rejects the zero vector."""
    r = np.asarray(r, dtype=float)
    n = np.linalg.norm(r)
    if n == 0.0:
        raise ValueError("degenerate representation")
    return r / n


def normalize_rows(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    n = np.linalg.norm(R, axis=1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("degenerate representation")
    return R / n


def _decode_batch(R_star: np.ndarray, length: int, params: ModelParams, keep_cache=False):
    B = R_star.shape[0]
    d_h, d_in = params.d_h, params.d_in
    h = R_star
    c = np.zeros((B, d_h))
    x = np.zeros((B, d_in))
    Y = np.empty((B, length, d_in))
    caches = [] if keep_cache else None
    hs = [] if keep_cache else None
    for t in range(length):
        z = x @ params.dec_wx + h @ params.dec_wh + params.dec_b
        i = sigmoid(z[:, :d_h])
        f = sigmoid(z[:, d_h : 2 * d_h])
        g = np.tanh(z[:, 2 * d_h : 3 * d_h])
        o = sigmoid(z[:, 3 * d_h :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        if keep_cache:
            caches.append(_StepCache(x, h, c, i, f, g, o, c_new, tc))
            hs.append(h_new)
        h, c = h_new, c_new
        y = h @ params.out_w + params.out_b
        Y[:, t, :] = y
        x = y
    return Y, caches, hs


def decode(r_star: np.ndarray, length: int, params: ModelParams) -> np.ndarray:
    """Autoregressive reconstruction from a unit representation.

    Row t is the prediction of the window's (length-1-t)-th reading, i.e.
    the output is in reverse order relative to the encoded window.
    """
    r_star = np.asarray(r_star, dtype=float)
    if length < 1:
        raise ValueError("length must be >= 1")
    if abs(np.linalg.norm(r_star) - 1.0) > 1e-6:
        raise ValueError("expected unit representation")
    Y, _, _ = _decode_batch(r_star[None, :], length, params)
    return Y[0]


def _forward_batch(X: np.ndarray, params: ModelParams, keep_cache=False):
    """Full model pass on (B, l, d_in); returns reconstructions plus the
    intermediates needed for backprop."""
    B, l, d_in = X.shape
    if d_in != params.d_in:
        raise ValueError("feature dimension mismatch")
    h0 = np.zeros((B, params.d_h))
    c0 = np.zeros((B, params.d_h))
    steps = [X[:, t, :] for t in range(l)]
    r, _, enc_caches = _lstm_run(steps, params.enc_wx, params.enc_wh, params.enc_b, h0, c0)
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("degenerate representation")
    r_star = r / norms
    Y, dec_caches, dec_hs = _decode_batch(r_star, l, params, keep_cache=keep_cache)
    return {
        "Y": Y,
        "r": r,
        "r_star": r_star,
        "norms": norms,
        "enc_caches": enc_caches if keep_cache else None,
        "dec_caches": dec_caches,
        "dec_hs": dec_hs,
    }


def _loss_batch(X: np.ndarray, params: ModelParams, weight_decay: float):
    fwd = _forward_batch(X, params)
    target = X[:, ::-1, :]
    err = fwd["Y"] - target
    rec = float(np.mean(err**2))
    return rec + weight_decay * float(np.sum(params.out_w**2)), fwd


def loss(window, params: ModelParams, weight_decay: float = 0.0) -> float:
    """Mean squared error against the reversed window, plus
    ``weight_decay * ||out_w||_F^2``."""
    feats = _as_features(window)
    value, _ = _loss_batch(feats[None, :, :], params, weight_decay)
    return value


def _zero_grads(params: ModelParams) -> Grads:
    return Grads(**{name: np.zeros_like(arr) for name, arr in params.tensors()})


def _backward_batch(X: np.ndarray, params: ModelParams, weight_decay: float):
    """Loss and exact parameter gradients for a batch (mean over windows)."""
    X = np.asarray(X, dtype=float)
    B, l, d_in = X.shape
    fwd = _forward_batch(X, params, keep_cache=True)
    target = X[:, ::-1, :]
    err = fwd["Y"] - target
    rec = float(np.mean(err**2))
    total = rec + weight_decay * float(np.sum(params.out_w**2))

    g = _zero_grads(params)
    dY = (2.0 / err.size) * err

    # Decoder: walk back through time; each emitted reading feeds the loss
    # directly and the next step's input.
    dh_carry = np.zeros((B, params.d_h))
    dc_carry = np.zeros((B, params.d_h))
    dx_carry = np.zeros((B, d_in))
    dec_caches = fwd["dec_caches"]
    dec_hs = fwd["dec_hs"]
    for t in range(l - 1, -1, -1):
        dy = dY[:, t, :] + dx_carry
        g.out_w += dec_hs[t].T @ dy
        g.out_b += dy.sum(axis=0)
        dh = dy @ params.out_w.T + dh_carry
        cache = dec_caches[t]
        dc = dc_carry + dh * cache.o * (1.0 - cache.tc**2)
        do = dh * cache.tc
        di = dc * cache.g
        df = dc * cache.c_prev
        dg = dc * cache.i
        dz = np.concatenate(
            [
                di * cache.i * (1.0 - cache.i),
                df * cache.f * (1.0 - cache.f),
                dg * (1.0 - cache.g**2),
                do * cache.o * (1.0 - cache.o),
            ],
            axis=1,
        )
        g.dec_wx += cache.x.T @ dz
        g.dec_wh += cache.h_prev.T @ dz
        g.dec_b += dz.sum(axis=0)
        dx_carry = dz @ params.dec_wx.T
        dh_carry = dz @ params.dec_wh.T
        dc_carry = dc * cache.f
    # dx_carry at t=0 hits the constant zero first input; dc_carry the zero
    # initial cell state. dh_carry is the gradient at r_star.
    d_rstar = dh_carry

    # Jacobian of r / ||r||: (I - r* r*^T) / ||r|| applied row-wise.
    r_star, norms = fwd["r_star"], fwd["norms"]
    dr = (d_rstar - r_star * np.sum(r_star * d_rstar, axis=1, keepdims=True)) / norms

    _lstm_backprop(
        fwd["enc_caches"],
        params.enc_wx,
        params.enc_wh,
        dr,
        np.zeros((B, params.d_h)),
        g.enc_wx,
        g.enc_wh,
        g.enc_b,
    )

    g.out_w += 2.0 * weight_decay * params.out_w
    return total, g


def backward(window, params: ModelParams, weight_decay: float = 0.0) -> Grads:
    """Gradients of ``loss`` w.r.t. every parameter tensor (exact BPTT)."""
    feats = _as_features(window)
    _, g = _backward_batch(feats[None, :, :], params, weight_decay)
    return g


def reconstruction_error(window, params: ModelParams) -> float:
    """Mean squared reconstruction error (no weight-decay term)."""
    feats = _as_features(window)
    fwd = _forward_batch(feats[None, :, :], params)
    return float(np.mean((fwd["Y"] - feats[None, ::-1, :]) ** 2))


def reconstruction_errors(X: np.ndarray, params: ModelParams) -> np.ndarray:
    """Per-window mean squared reconstruction errors for (B, l, d_in)."""
    X = np.asarray(X, dtype=float)
    fwd = _forward_batch(X, params)
    err = fwd["Y"] - X[:, ::-1, :]
    return np.mean(err**2, axis=(1, 2))


def train(windows, cfg: TrainConfig, d_hidden: int = 32) -> TrainResult:
    """Mini-batch Adam training with gradient-norm clipping.

    ``windows`` may be FeatureWindow objects or raw (l, d_in) arrays; all
    must share the feature dimension. Windows of equal length are batched
    together. Fixed seed means bit-reproducible results on one machine.
    """
    feats = [_as_features(w) for w in windows]
    if not feats:
        raise ValueError("no training data")
    d_in = feats[0].shape[1]
    if any(f.shape[1] != d_in for f in feats):
        raise ValueError("feature dimension mismatch")

    params = init_params(d_in, d_hidden, cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    by_len: dict[int, list[int]] = {}
    for idx, f in enumerate(feats):
        by_len.setdefault(f.shape[0], []).append(idx)

    m = {name: np.zeros_like(arr) for name, arr in params.tensors()}
    v = {name: np.zeros_like(arr) for name, arr in params.tensors()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        total = 0.0
        for length in sorted(by_len):
            order = rng.permutation(by_len[length])
            for s in range(0, order.size, cfg.batch_size):
                idxs = order[s : s + cfg.batch_size]
                X = np.stack([feats[i] for i in idxs])
                batch_loss, g = _backward_batch(X, params, cfg.weight_decay)
                if not np.isfinite(batch_loss):
                    raise ValueError("training diverged")
                total += batch_loss * idxs.size

                gnorm = np.sqrt(sum(float(np.sum(arr**2)) for _, arr in g.tensors()))
                scale = cfg.clip_norm / gnorm if gnorm > cfg.clip_norm else 1.0

                step += 1
                for name, p_arr in params.tensors():
                    g_arr = getattr(g, name) * scale
                    m[name] = b1 * m[name] + (1 - b1) * g_arr
                    v[name] = b2 * v[name] + (1 - b2) * g_arr**2
                    mh = m[name] / (1 - b1**step)
                    vh = v[name] / (1 - b2**step)
                    p_arr -= cfg.learning_rate * mh / (np.sqrt(vh) + eps)
        epoch_losses.append(total / len(feats))
    return TrainResult(params=params, epoch_losses=epoch_losses)


# ---------------------------------------------------------------------------
# Model file: magic, dims header, then tensors as little-endian f64
# ---------------------------------------------------------------------------


def save_model(params: ModelParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", params.d_in, params.d_h))
        for _, arr in params.tensors():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _tensor_shapes(d_in: int, d_h: int) -> dict[str, tuple[int, ...]]:
    return {
        "enc_wx": (d_in, 4 * d_h),
        "enc_wh": (d_h, 4 * d_h),
        "enc_b": (4 * d_h,),
        "dec_wx": (d_in, 4 * d_h),
        "dec_wh": (d_h, 4 * d_h),
        "dec_b": (4 * d_h,),
        "out_w": (d_h, d_in),
        "out_b": (d_in,),
    }


def load_model(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ValueError("incompatible model")
        d_in, d_h = struct.unpack("<II", fh.read(8))
        shapes = _tensor_shapes(d_in, d_h)
        arrays = {}
        for name in _TENSOR_NAMES:
            shape = shapes[name]
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("incompatible model")
            arrays[name] = np.frombuffer(buf, dtype="<f8").astype(float).reshape(shape)
        if fh.read(1):
            raise ValueError("incompatible model")
    return ModelParams(**arrays)

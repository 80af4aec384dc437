"""Stacked bidirectional GRU with a linear head, written out by hand.

Shapes follow one convention throughout: a batch of feature windows is
``(B, I, T)`` (features by time, as produced by ``framing.to_features``);
internally sequences are time-major ``(T, B, I)``.

Each GRU direction keeps its three gates in one matrix ``W`` of shape
``(3H, H + I)``; rows are the update gate, reset gate and candidate, and
columns are ``[h_{t-1}, x_t]``. One bias vector per gate lives in ``b``.
"""

import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, rng

DIRECTIONS = ("fwd", "bwd")
FNN_VERSION = 1


def _sigmoid(a):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-a))


@dataclass
class ModelParams:
    """All learnable tensors, keyed ``l{layer}.{fwd|bwd}.{W|b}`` and ``head.{W|b}``."""

    tensors: dict
    input_size: int
    hidden_size: int
    num_layers: int
    version: int = FNN_VERSION

    def names(self):
        return list(self.tensors)

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()},
                           self.input_size, self.hidden_size, self.num_layers, self.version)

    def num_parameters(self):
        return sum(v.size for v in self.tensors.values())

    def __getitem__(self, key):
        return self.tensors[key]


def tensor_names(num_layers):
    names = []
    for layer in range(num_layers):
        for d in DIRECTIONS:
            names += [f"l{layer}.{d}.W", f"l{layer}.{d}.b"]
    return names + ["head.W", "head.b"]


def parameter_count(input_size=4, hidden_size=40, num_layers=2, outputs=2):
    """Closed-form size of :func:`init_params`' output."""
    H = hidden_size
    total = 0
    width = input_size
    for _ in range(num_layers):
        total += 2 * (3 * H * (H + width) + 3 * H)
        width = 2 * H
    return total + outputs * 2 * H + outputs


def init_params(seed, input_size=4, hidden_size=40, num_layers=2):
    """Uniform(-1/sqrt(H), 1/sqrt(H)) for every weight and bias."""
    gen = rng.stream(seed, rng.INIT)
    bound = 1.0 / math.sqrt(hidden_size)
    H = hidden_size
    shapes = {}
    width = input_size
    for layer in range(num_layers):
        for d in DIRECTIONS:
            shapes[f"l{layer}.{d}.W"] = (3 * H, H + width)
            shapes[f"l{layer}.{d}.b"] = (3 * H,)
        width = 2 * H
    shapes["head.W"] = (2, 2 * H)
    shapes["head.b"] = (2,)
    tensors = {k: gen.uniform(-bound, bound, size=s) for k, s in shapes.items()}
    return ModelParams(tensors, input_size, hidden_size, num_layers)


# ---------------------------------------------------------------- single cell

def gru_cell_forward(x_t, h_prev, W, b):
    """One GRU step. Works on vectors or on ``(B, .)`` batches.

    Returns ``(h_t, cache)`` with ``cache = (x_t, h_prev, z, r, hbar)``.
    """
    x_t = np.asarray(x_t, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    H = h_prev.shape[-1]
    if W.shape != (3 * H, H + x_t.shape[-1]) or b.shape != (3 * H,):
        raise ValueError(f"weights {W.shape}/{b.shape} do not fit input {x_t.shape[-1]}, hidden {H}")
    Wh, Wx = W[:, :H], W[:, H:]
    a = x_t @ Wx.T + b
    zr = a[..., : 2 * H] + h_prev @ Wh[: 2 * H].T
    z = _sigmoid(zr[..., :H])
    r = _sigmoid(zr[..., H:])
    hbar = np.tanh(a[..., 2 * H:] + (r * h_prev) @ Wh[2 * H:].T)
    h = (1.0 - z) * h_prev + z * hbar
    return h, (x_t, h_prev, z, r, hbar)


def gru_cell_backward(grad_h, cache, W):
    """Reverse of :func:`gru_cell_forward`: ``(grad_x, grad_h_prev, grad_W, grad_b)``."""
    x_t, h_prev, z, r, hbar = cache
    grad_h = np.asarray(grad_h, dtype=float)
    if grad_h.shape != h_prev.shape:
        raise ValueError("gradient does not match the cached step")
    H = h_prev.shape[-1]
    Wh, Wx = W[:, :H], W[:, H:]
    da_h = grad_h * z * (1.0 - hbar ** 2)
    dz = grad_h * (hbar - h_prev)
    dh_prev = grad_h * (1.0 - z)
    drh = da_h @ Wh[2 * H:]
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    da = np.concatenate([da_z, da_r, da_h], axis=-1)
    dh_prev = dh_prev + da[..., : 2 * H] @ Wh[: 2 * H]
    dx = da @ Wx
    da2 = np.atleast_2d(da)
    gW = np.empty_like(W)
    gW[: 2 * H, :H] = da2[:, : 2 * H].T @ np.atleast_2d(h_prev)
    gW[2 * H:, :H] = da2[:, 2 * H:].T @ np.atleast_2d(r * h_prev)
    gW[:, H:] = da2.T @ np.atleast_2d(x_t)
    gb = da2.sum(axis=0)
    return dx, dh_prev, gW, gb


# ------------------------------------------------------------ stacked network

@dataclass
class _DirCache:
    inp: np.ndarray  # (T, B, I), already time-reversed for the backward direction
    hs: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hbar: np.ndarray


@dataclass
class ForwardCache:
    layer_inputs: list = field(default_factory=list)
    dirs: dict = field(default_factory=dict)
    top: np.ndarray = None  # (T, B, 2H)


def _direction_forward(inp, W, b, H):
    T, B, I = inp.shape
    gx = (inp.reshape(T * B, I) @ W[:, H:].T + b).reshape(T, B, 3 * H)
    hs, z, r, hbar = kernels.gru_recur_forward(gx, np.ascontiguousarray(W[:, :H]))
    return hs, z, r, hbar


def _direction_backward(dout, cache, W, H):
    T, B, I = cache.inp.shape
    dgx, dU = kernels.gru_recur_backward(np.ascontiguousarray(dout), np.ascontiguousarray(W[:, :H]),
                                         cache.hs, cache.z, cache.r, cache.hbar)
    dgx2 = dgx.reshape(T * B, 3 * H)
    gW = np.empty_like(W)
    gW[:, :H] = dU
    gW[:, H:] = dgx2.T @ cache.inp.reshape(T * B, I)
    gb = dgx2.sum(axis=0)
    dinp = (dgx2 @ W[:, H:]).reshape(T, B, I)
    return dinp, gW, gb


def _as_batch(X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[2] < 1:
        raise ValueError(f"expected (B, I, T) features with T >= 1, got {X.shape}")
    return X, single


def bgru_forward(X, params):
    """Hidden states of the top bidirectional layer.

    ``X`` is ``(I, T)`` or ``(B, I, T)``. Returns ``(out, cache)`` with ``out``
    of shape ``(2H, T)`` or ``(B, 2H, T)``: forward-direction states on the
    first ``H`` rows, backward-direction states on the last ``H``.
    """
    X, single = _as_batch(X)
    if X.shape[1] != params.input_size:
        raise ValueError(f"expected {params.input_size} input rows, got {X.shape[1]}")
    H = params.hidden_size
    seq = np.ascontiguousarray(X.transpose(2, 0, 1))
    cache = ForwardCache()
    for layer in range(params.num_layers):
        cache.layer_inputs.append(seq)
        outs = []
        for d in DIRECTIONS:
            W, b = params[f"l{layer}.{d}.W"], params[f"l{layer}.{d}.b"]
            inp = seq if d == "fwd" else np.ascontiguousarray(seq[::-1])
            hs, z, r, hbar = _direction_forward(inp, W, b, H)
            cache.dirs[(layer, d)] = _DirCache(inp, hs, z, r, hbar)
            h = hs[1:]
            outs.append(h if d == "fwd" else h[::-1])
        seq = np.ascontiguousarray(np.concatenate(outs, axis=2))
    cache.top = seq
    out = seq.transpose(1, 2, 0)
    return (out[0] if single else out), cache


def linear_head(Hs, W, b):
    """``W @ h_t + b`` at every step; ``Hs`` is ``(2H, T)`` or ``(B, 2H, T)``."""
    Hs = np.asarray(Hs)
    if Hs.shape[-2] != W.shape[1]:
        raise ValueError(f"head expects {W.shape[1]} rows, got {Hs.shape[-2]}")
    return np.einsum("oh,...ht->...ot", W, Hs) + b[:, None]


def forward(X, params):
    """Network output ``(2, T)`` / ``(B, 2, T)``: rows are Re and Im of the estimate."""
    Hs, cache = bgru_forward(X, params)
    return linear_head(Hs, params["head.W"], params["head.b"]), cache


def predict(X, params):
    """Complex channel estimate for each window, ``(T,)`` or ``(B, T)``."""
    out, _ = forward(X, params)
    return out[..., 0, :] + 1j * out[..., 1, :]


def backward(dpred, cache, params):
    """Gradients of every tensor given ``dL/dpred`` shaped ``(B, 2, T)``."""
    H = params.hidden_size
    grads = {}
    top = cache.top  # (T, B, 2H)
    T, B, _ = top.shape
    dp = np.ascontiguousarray(np.asarray(dpred).reshape(B, 2, T).transpose(2, 0, 1))  # (T, B, 2)
    grads["head.W"] = dp.reshape(T * B, 2).T @ top.reshape(T * B, 2 * H)
    grads["head.b"] = dp.reshape(T * B, 2).sum(axis=0)
    dseq = dp @ params["head.W"]  # (T, B, 2H)
    for layer in range(params.num_layers - 1, -1, -1):
        dinp_total = None
        for d in DIRECTIONS:
            W = params[f"l{layer}.{d}.W"]
            c = cache.dirs[(layer, d)]
            if d == "fwd":
                dout = dseq[:, :, :H]
            else:
                dout = dseq[::-1, :, H:]
            dinp, gW, gb = _direction_backward(dout, c, W, H)
            if d == "bwd":
                dinp = dinp[::-1]
            grads[f"l{layer}.{d}.W"] = gW
            grads[f"l{layer}.{d}.b"] = gb
            dinp_total = dinp if dinp_total is None else dinp_total + dinp
        dseq = dinp_total
    return {k: grads[k] for k in params.tensors}


def mse_loss_and_grad(pred, truth):
    """Mean of ``|pred - truth|^2`` over all steps (and batch rows).

    ``pred`` is ``(2, T)`` or ``(B, 2, T)`` (Re/Im rows); ``truth`` is complex
    ``(T,)`` or ``(B, T)``. Returns ``(loss, dloss/dpred)``.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth)
    if pred.shape[:-2] + pred.shape[-1:] != truth.shape or pred.shape[-2] != 2:
        raise ValueError(f"prediction {pred.shape} does not match truth {truth.shape}")
    target = np.stack([truth.real, truth.imag], axis=-2)
    diff = pred - target
    count = truth.size
    loss = float(np.sum(diff * diff) / count)
    return loss, (2.0 / count) * diff


def loss_and_grads(params, X, truth):
    pred, cache = forward(X, params)
    loss, dpred = mse_loss_and_grad(pred, truth)
    if dpred.ndim == 2:
        dpred = dpred[None]
    return loss, backward(dpred, cache, params)


# ------------------------------------------------------------------ optimizer

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, learning_rate=1e-3):
        return cls({k: np.zeros_like(t) for k, t in params.tensors.items()},
                   {k: np.zeros_like(t) for k, t in params.tensors.items()},
                   0, learning_rate)


def adam_step(params, grads, state):
    """In-place bias-corrected Adam update of ``params`` and ``state``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in params.tensors.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ------------------------------------------------------------ gradient check

def grad_check(params, X, truth, step=1e-5, floor=None, grads=None):
    """Largest relative error between analytic and central-difference gradients.

    Relative error per entry is ``|a - n| / max(|a| + |n|, floor)``; every
    entry of every tensor is perturbed. A central difference in f64 carries
    round-off of about ``eps * |loss| / step``, so by default ``floor`` is
    ``1e6`` times that bound: gradients smaller than the floor are held to
    an absolute error of ``floor`` times the reported tolerance instead of a
    relative one they cannot resolve. ``grads`` overrides the analytic
    gradients (used to test the checker itself).
    """
    loss, analytic = loss_and_grads(params, X, truth)
    if grads is None:
        grads = analytic
    if floor is None:
        floor = 1e6 * np.finfo(np.float64).eps * max(abs(loss), 1e-3) / step
    worst = 0.0
    for k, t in params.tensors.items():
        flat = t.reshape(-1)
        g = grads[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = mse_loss_and_grad(forward(X, params)[0], truth)[0]
            flat[i] = orig - step
            lm = mse_loss_and_grad(forward(X, params)[0], truth)[0]
            flat[i] = orig
            num = (lp - lm) / (2.0 * step)
            err = abs(g[i] - num) / max(abs(g[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------- checkpoint

def write_fnn(path, params):
    """``FNN1``, u32 layer count, tensors (u32 rank, u32 dims, f32 data), CRC32."""
    parts = [b"FNN1", struct.pack("<I", params.num_layers)]
    for name in tensor_names(params.num_layers):
        t = np.asarray(params[name])
        parts.append(struct.pack("<I", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(t.astype("<f4").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def read_fnn(path):
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"FNN1":
        raise ValueError(f"{path}: not an FNN1 checkpoint")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError(f"{path}: CRC mismatch")
    (num_layers,) = struct.unpack_from("<I", body, 4)
    off = 8
    tensors = {}
    for name in tensor_names(num_layers):
        (rank,) = struct.unpack_from("<I", body, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", body, off)
        off += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(body, dtype="<f4", count=n, offset=off).astype(np.float64).reshape(shape)
        off += 4 * n
    if off != len(body):
        raise ValueError(f"{path}: trailing bytes after tensors")
    hidden = tensors["head.W"].shape[1] // 2
    input_size = tensors["l0.fwd.W"].shape[1] - hidden
    return ModelParams(tensors, input_size, hidden, num_layers)

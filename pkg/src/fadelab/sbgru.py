"""Sliding bidirectional GRU channel estimator.

A window of ``window_length`` symbols slides one symbol at a time over the
received sequence; each window is run through the network and the estimate
at position ``t`` is the mean over every window covering ``t``.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import baselines, nn, rng
from .baselines import EstimateReport, NumericalError
from .channel import NoiseSpec
from .framing import build_layout, random_frame, pilot_bits, to_features

log = logging.getLogger(__name__)

# Sequences per evaluation chunk; fixed so results do not depend on --threads.
EVAL_CHUNK = 8
_VAL_KEY = 1 << 20
_EVAL_KEY = 1 << 21

ESTIMATORS = ("SBGRU", "BGRU-block", "LS", "MMSE-theory", "MMSE-sim")


@dataclass(frozen=True)
class SlidingConfig:
    window_length: int = 40
    sequence_length: int = 160
    stride: int = 1

    def __post_init__(self):
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        if not 1 <= self.window_length <= self.sequence_length:
            raise ValueError(f"window length {self.window_length} outside [1, {self.sequence_length}]")

    @property
    def num_windows(self):
        return self.sequence_length - self.window_length + 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    train_snr_db: float = 20.0
    epochs: int = 10
    seed: int = 1
    hidden_size: int = 40
    num_layers: int = 2
    windows_per_sequence: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning rate and batch size must be positive, epochs >= 0")
        if self.windows_per_sequence < 1:
            raise ValueError("windows_per_sequence must be >= 1")


@dataclass
class SequenceSet:
    """Frames plus the channel each one is sent through."""

    channels: np.ndarray  # complex, (C, L)
    symbols: np.ndarray  # complex, (S, L)
    pilot_ref: np.ndarray  # complex, (S, L)
    channel_index: np.ndarray  # int, (S,)

    def __len__(self):
        return len(self.channel_index)

    @property
    def sequence_length(self):
        return self.symbols.shape[1]

    def truth(self, idx=slice(None)):
        return self.channels[self.channel_index[idx]]

    @classmethod
    def from_dataset(cls, dataset, channels):
        ch = np.asarray(channels, dtype=np.complex128)
        idx = np.asarray(dataset.channel_index, dtype=np.int64)
        if len(idx) and idx.max() >= len(ch):
            raise ValueError(f"channel index {idx.max()} outside pool of {len(ch)}")
        return cls(ch, np.asarray(dataset.symbols, dtype=np.complex128),
                   np.asarray(dataset.pilot_ref, dtype=np.complex128), idx)


# ------------------------------------------------------------------ windows

def window_starts(t, cfg):
    """Starts ``j`` of every scheduled window that covers position ``t``."""
    L, W = cfg.sequence_length, cfg.window_length
    if not 0 <= t < L:
        raise ValueError(f"position {t} outside [0, {L})")
    lo = max(0, t - W + 1)
    hi = min(t, L - 1, L - W)
    return list(range(lo, hi + 1))


def coverage_counts(cfg):
    """``|window_starts(t)|`` for every ``t``."""
    L, W = cfg.sequence_length, cfg.window_length
    counts = np.zeros(L)
    for j in range(cfg.num_windows):
        counts[j:j + W] += 1
    return counts


def _windows(X, W):
    """``(S, I, L)`` -> ``(S * (L-W+1), I, W)`` in (sequence, start) order."""
    S, I, L = X.shape
    view = np.lib.stride_tricks.sliding_window_view(X, W, axis=2)  # (S, I, n, W)
    return np.ascontiguousarray(view.transpose(0, 2, 1, 3)).reshape(S * (L - W + 1), I, W)


def _sliding_batch(X, model, W):
    S, _, L = X.shape
    n = L - W + 1
    pred, _ = nn.forward(_windows(X, W), model)  # (S*n, 2, W)
    pred = pred.reshape(S, n, 2, W)
    acc = np.zeros((S, 2, L))
    for k in range(W):
        acc[:, :, k:k + n] += pred[:, :, :, k].transpose(0, 2, 1)
    counts = coverage_counts(SlidingConfig(W, L))
    est = acc / counts
    return est[:, 0] + 1j * est[:, 1]


def sliding_estimate(X, model, cfg):
    """Slide-and-average estimate; ``X`` is ``(4, L)`` or ``(S, 4, L)``."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    Xb = X[None] if single else X
    L = Xb.shape[2]
    if L < cfg.window_length:
        raise ValueError(f"sequence of {L} shorter than window {cfg.window_length}")
    out = _sliding_batch(Xb, model, cfg.window_length)
    return out[0] if single else out


def block_estimate(X, model, block):
    """Disjoint length-``block`` segments estimated independently."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 2
    Xb = X[None] if single else X
    S, I, L = Xb.shape
    if block < 1 or L % block:
        raise ValueError(f"block {block} does not divide sequence length {L}")
    nb = L // block
    segs = Xb.reshape(S, I, nb, block).transpose(0, 2, 1, 3).reshape(S * nb, I, block)
    est = nn.predict(segs, model).reshape(S, L)
    return est[0] if single else est


# ----------------------------------------------------------------- training

def _noise(gen, shape, var):
    w = gen.standard_normal(shape + (2,))
    return math.sqrt(var / 2.0) * (w[..., 0] + 1j * w[..., 1])


def _window_batch(data, seq_idx, starts, W, noise):
    cols = starts[:, None] + np.arange(W)[None, :]
    rows = seq_idx[:, None]
    x = data.symbols[rows, cols]
    p = data.pilot_ref[rows, cols]
    h = data.channels[data.channel_index[seq_idx]][np.arange(len(seq_idx))[:, None], cols]
    y = h * x + noise
    return to_features(y, p), h


def validation_windows(data, W, snr_db, seed):
    """Fixed windows (one per sequence) and noise used to score validation loss."""
    n = len(data)
    L = data.sequence_length
    starts = rng.stream(seed, rng.WINDOW, _VAL_KEY).integers(0, L - W + 1, size=n)
    noise = _noise(rng.stream(seed, rng.NOISE, _VAL_KEY), (n, W), NoiseSpec(snr_db).noise_variance)
    return _window_batch(data, np.arange(n), starts, W, noise)


def window_loss(model, X, h, chunk=1024):
    total = 0.0
    for s in range(0, len(X), chunk):
        pred, _ = nn.forward(X[s:s + chunk], model)
        loss, _ = nn.mse_loss_and_grad(pred, h[s:s + chunk])
        total += loss * len(X[s:s + chunk])
    return total / len(X)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float


def train(train_data, val_data, cfg, sliding, init=None, on_epoch=None):
    """Fit the network with Adam on random windows; returns ``(best_params, log)``.

    Each epoch visits every training sequence ``windows_per_sequence`` times
    in a seeded random order, each time with a random window start and
    fresh noise at ``train_snr_db``. The returned parameters are those with
    the lowest validation loss (the initial parameters when ``epochs == 0``).
    """
    if len(train_data) == 0:
        raise ValueError("training set is empty")
    if len(val_data) == 0:
        raise ValueError("validation set is empty")
    W = sliding.window_length
    L = train_data.sequence_length
    if L < W:
        raise ValueError(f"sequences of {L} are shorter than the window {W}")
    params = init.copy() if init is not None else nn.init_params(
        cfg.seed, input_size=4, hidden_size=cfg.hidden_size, num_layers=cfg.num_layers)
    state = nn.AdamState.zeros_like(params, cfg.learning_rate)
    var = NoiseSpec(cfg.train_snr_db).noise_variance
    Xv, hv = validation_windows(val_data, W, cfg.train_snr_db, cfg.seed)

    best = params.copy()
    best_val = window_loss(params, Xv, hv)
    history = []
    n = len(train_data)
    for epoch in range(1, cfg.epochs + 1):
        order = np.concatenate([rng.stream(cfg.seed, rng.BATCH, epoch, r).permutation(n)
                                for r in range(cfg.windows_per_sequence)])
        starts_all = rng.stream(cfg.seed, rng.WINDOW, epoch).integers(0, L - W + 1, size=len(order))
        noise_gen = rng.stream(cfg.seed, rng.NOISE, epoch)
        losses = []
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            noise = _noise(noise_gen, (len(idx), W), var)
            X, h = _window_batch(train_data, idx, starts_all[s:s + cfg.batch_size], W, noise)
            loss, grads = nn.loss_and_grads(params, X, h)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {s // cfg.batch_size}")
            nn.adam_step(params, grads, state)
            losses.append(loss)
        val = window_loss(params, Xv, hv)
        if not math.isfinite(val):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        entry = EpochLog(epoch, float(np.mean(losses)), val)
        history.append(entry)
        log.info("epoch %d train %.6g val %.6g", epoch, entry.train_loss, val)
        if on_epoch is not None:
            on_epoch(entry)
        if val < best_val:
            best_val = val
            best = params.copy()
    return best, history


def write_train_log(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for e in history:
            w.writerow([e.epoch, baselines.format_float(e.train_loss), baselines.format_float(e.val_loss)])


# --------------------------------------------------------------- evaluation

def _snr_key(snr_db):
    return int(round((snr_db + 1000.0) * 1000.0))


def observe(data, snr_db, seed):
    """Noisy received sequences for ``data`` at ``snr_db`` (seeded per SNR)."""
    gen = rng.stream(seed, rng.NOISE, _EVAL_KEY, _snr_key(snr_db))
    noise = _noise(gen, data.symbols.shape, NoiseSpec(snr_db).noise_variance)
    return data.truth() * data.symbols + noise


def _map_chunks(fn, n, threads):
    chunks = [(s, min(s + EVAL_CHUNK, n)) for s in range(0, n, EVAL_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: fn(*c), chunks))
    else:
        parts = [fn(*c) for c in chunks]
    return np.concatenate(parts) if parts else np.empty(0)


def estimate_all(name, model, y, data, sliding, spec=None, snr_db=None, threads=1, block=None):
    """Estimates from one estimator for every sequence, shape ``(S, L)``."""
    S = len(data)
    if name in ("SBGRU", "BGRU-block"):
        X = to_features(y, data.pilot_ref)
        if name == "SBGRU":
            return _map_chunks(lambda a, b: sliding_estimate(X[a:b], model, sliding), S, threads)
        blk = block or sliding.window_length
        return _map_chunks(lambda a, b: block_estimate(X[a:b], model, blk), S, threads)

    mask = data.pilot_ref != 0
    ls = np.stack([baselines.ls_estimate(y[i], (mask[i], data.symbols[i])) for i in range(S)])
    if name == "LS":
        return ls
    noise = NoiseSpec(snr_db)
    if name == "MMSE-theory":
        R = baselines.build_rhh_theory(data.sequence_length, spec)
        return baselines.mmse_estimate(ls, R, noise)
    if name == "MMSE-sim":
        return np.stack([baselines.mmse_sim_estimate(ls[i], noise) for i in range(S)])
    raise ValueError(f"unknown estimator {name!r}")


def evaluate(model, data, snr_list, sliding, spec, seed, estimators=ESTIMATORS, threads=1, block=None):
    """Mean per-sequence MSE of each estimator at each SNR, on shared noisy data."""
    reports = []
    truth = data.truth()
    for snr in snr_list:
        y = observe(data, snr, seed)
        for name in estimators:
            est = estimate_all(name, model, y, data, sliding, spec, snr, threads, block)
            d = est - truth
            per_seq = np.mean(d.real ** 2 + d.imag ** 2, axis=1)
            reports.append(EstimateReport(name, float(snr), float(np.mean(per_seq)), len(data)))
    return reports


# -------------------------------------------------------------------- trace

TRACE_COLUMNS = ("n", "h_re", "h_im", "h_abs", "sbgru_re", "sbgru_im", "sbgru_abs", "ls_abs", "mmse_sim_abs")


def trace_frame(length, block_length, pilots_per_block, pilot_seed, data_seed):
    """Pilot-structured frame tiled to ``length`` symbols."""
    if length % block_length:
        raise ValueError(f"trace length {length} is not a multiple of block length {block_length}")
    layout = build_layout(block_length, pilots_per_block, length // block_length)
    return random_frame(layout, pilot_bits(layout, pilot_seed), data_seed)


def trace_export(model, channel, frame, snr_db, path, sliding_window=40, seed=0):
    """Write a per-symbol channel-tracking table; returns the per-estimator MSEs."""
    h = channel.gains if hasattr(channel, "gains") else np.asarray(channel)
    x = frame.symbols
    if len(h) != len(x):
        raise ValueError(f"channel length {len(h)} != frame length {len(x)}")
    noise = _noise(rng.stream(seed, rng.NOISE, _EVAL_KEY, _snr_key(snr_db), 1), x.shape,
                   NoiseSpec(snr_db).noise_variance)
    y = h * x + noise
    cfg = SlidingConfig(sliding_window, len(h))
    sb = sliding_estimate(to_features(y, frame.pilot_ref), model, cfg)
    ls = baselines.ls_estimate(y, frame)
    sim = baselines.mmse_sim_estimate(ls, NoiseSpec(snr_db))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        f = baselines.format_float
        for n in range(len(h)):
            w.writerow([n, f(h[n].real), f(h[n].imag), f(abs(h[n])), f(sb[n].real), f(sb[n].imag),
                        f(abs(sb[n])), f(abs(ls[n])), f(abs(sim[n]))])
    return {"SBGRU": baselines.mse(sb, h), "LS": baselines.mse(ls, h), "MMSE-sim": baselines.mse(sim, h)}

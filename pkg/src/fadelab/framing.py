"""Bits, QPSK symbols, pilot-interleaved frames and network features."""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class FrameLayout:
    """``block_count`` blocks of ``block_length`` symbols, ``pilots_per_block`` of them pilots."""

    block_length: int
    pilots_per_block: int
    block_count: int
    pilot_positions: tuple = field(default=())

    @property
    def total_length(self):
        return self.block_length * self.block_count

    @property
    def data_per_block(self):
        return self.block_length - self.pilots_per_block

    @property
    def pilot_density(self):
        return self.pilots_per_block / self.block_length

    def pilot_mask(self):
        """Boolean mask over the whole frame, True at pilot symbols."""
        block = np.zeros(self.block_length, dtype=bool)
        block[list(self.pilot_positions)] = True
        return np.tile(block, self.block_count)

    def pilot_indices(self):
        return np.flatnonzero(self.pilot_mask())


def build_layout(N, Np, K):
    """Uniform layout: pilots at in-block positions ``0, N/Np, 2N/Np, ...``."""
    if N < 1 or K < 1:
        raise ValueError(f"block length and block count must be >= 1, got N={N}, K={K}")
    if not 1 <= Np <= N:
        raise ValueError(f"pilots per block must be in [1, {N}], got {Np}")
    if N % Np:
        raise ValueError(f"unsupported layout: {Np} pilots do not divide a block of {N}")
    step = N // Np
    return FrameLayout(N, Np, K, tuple(range(0, N, step)))


@dataclass(frozen=True)
class Frame:
    symbols: np.ndarray
    pilot_ref: np.ndarray
    layout: FrameLayout
    data_bits: np.ndarray


def random_bits(count, seed):
    if count < 0:
        raise ValueError(f"bit count must be >= 0, got {count}")
    return rng.stream(seed, rng.BITS).integers(0, 2, size=count, dtype=np.uint8)


def qpsk_modulate(bits):
    """Gray-mapped QPSK: 00 -> (1+j)/sqrt2, 01 -> (1-j)/sqrt2, 11 -> (-1-j)/sqrt2, 10 -> (-1+j)/sqrt2."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % 2:
        raise ValueError(f"QPSK needs an even number of bits, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    re = 1.0 - 2.0 * pairs[:, 0]
    im = 1.0 - 2.0 * pairs[:, 1]
    return _INV_SQRT2 * (re + 1j * im)


def qpsk_demodulate(symbols):
    """Nearest-point inverse of :func:`qpsk_modulate`."""
    symbols = np.asarray(symbols)
    bits = np.empty((symbols.size, 2), dtype=np.uint8)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.ravel()


def pilot_bits(layout, seed):
    """The fixed pilot bit pattern shared by every frame of a dataset."""
    return rng.stream(seed, rng.PILOT).integers(0, 2, size=2 * layout.pilots_per_block, dtype=np.uint8)


def assemble_frame(layout, pilot_bits, data_bits):
    pilot_bits = np.asarray(pilot_bits, dtype=np.uint8)
    data_bits = np.asarray(data_bits, dtype=np.uint8)
    if pilot_bits.size != 2 * layout.pilots_per_block:
        raise ValueError(f"expected {2 * layout.pilots_per_block} pilot bits, got {pilot_bits.size}")
    n_data = layout.block_count * layout.data_per_block
    if data_bits.size != 2 * n_data:
        raise ValueError(f"expected {2 * n_data} data bits, got {data_bits.size}")

    mask = layout.pilot_mask()
    pilots = np.tile(qpsk_modulate(pilot_bits), layout.block_count)
    symbols = np.empty(layout.total_length, dtype=np.complex128)
    symbols[mask] = pilots
    symbols[~mask] = qpsk_modulate(data_bits)
    pilot_ref = np.where(mask, symbols, 0.0 + 0.0j)
    return Frame(symbols=symbols, pilot_ref=pilot_ref, layout=layout, data_bits=data_bits)


def random_frame(layout, pilots, seed):
    """Frame with the given pilot bits and fresh random data bits."""
    n_data = layout.block_count * layout.data_per_block
    return assemble_frame(layout, pilots, random_bits(2 * n_data, seed))


def to_features(y, p):
    """Real network input with rows ``re(y), re(p), im(y), im(p)``.

    Works on a single sequence (``(L,)`` -> ``(4, L)``) or a stack
    (``(S, L)`` -> ``(S, 4, L)``).
    """
    y = np.asarray(y)
    p = np.asarray(p)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: y {y.shape} vs p {p.shape}")
    return np.stack([y.real, p.real, y.imag, p.imag], axis=-2).astype(np.float64)


# .fds: b"FDS1", u32 count, L, N, Np, K; per record u32 channel index, x[L], p[L] as complex f32.
_FDS_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class Dataset:
    layout: FrameLayout
    channel_index: np.ndarray  # uint32, (count,)
    symbols: np.ndarray  # complex64, (count, L)
    pilot_ref: np.ndarray  # complex64, (count, L)

    def __len__(self):
        return len(self.channel_index)


def write_fds(path, dataset):
    layout = dataset.layout
    L = layout.total_length
    count = len(dataset.channel_index)
    rec = np.zeros(count, dtype=np.dtype([("ch", "<u4"), ("x", "<c8", (L,)), ("p", "<c8", (L,))]))
    rec["ch"] = dataset.channel_index
    rec["x"] = dataset.symbols
    rec["p"] = dataset.pilot_ref
    with open(path, "wb") as fh:
        fh.write(_FDS_HEADER.pack(b"FDS1", count, L, layout.block_length,
                                  layout.pilots_per_block, layout.block_count))
        fh.write(rec.tobytes())


def read_fds(path):
    data = Path(path).read_bytes()
    if len(data) < _FDS_HEADER.size:
        raise ValueError(f"{path}: truncated dataset file")
    magic, count, L, N, Np, K = _FDS_HEADER.unpack_from(data)
    if magic != b"FDS1":
        raise ValueError(f"{path}: bad magic {magic!r}")
    layout = build_layout(N, Np, K)
    if layout.total_length != L:
        raise ValueError(f"{path}: L={L} inconsistent with N*K={N * K}")
    dt = np.dtype([("ch", "<u4"), ("x", "<c8", (L,)), ("p", "<c8", (L,))])
    if len(data) != _FDS_HEADER.size + count * dt.itemsize:
        raise ValueError(f"{path}: size does not match header")
    rec = np.frombuffer(data, dtype=dt, offset=_FDS_HEADER.size)
    return Dataset(layout=layout, channel_index=rec["ch"].astype(np.uint32),
                   symbols=rec["x"].astype(np.complex64), pilot_ref=rec["p"].astype(np.complex64))

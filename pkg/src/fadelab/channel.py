"""Time-selective Rayleigh fading with a Jakes Doppler autocorrelation.

Channel gains are synthesized as a sum of ``NUM_PATHS`` equal-power
sinusoids with random angles of arrival and random phases::

    h[n] = 1/sqrt(M) * sum_m exp(j*(2*pi*phi_d*n*cos(theta_m) + psi_m))

Averaged over the random angles, the autocorrelation of this process is
exactly ``J0(2*pi*phi_d*|d|)`` and the average power is one.
"""

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels, rng

SPEED_OF_LIGHT = 3.0e8
NUM_PATHS = 64

_SERIES_LIMIT = 12.0


@dataclass(frozen=True)
class DopplerSpec:
    """Physical parameters that fix the normalized Doppler frequency."""

    carrier_frequency: float
    receiver_speed: float
    sampling_rate: float

    def __post_init__(self):
        phi = self.normalized_doppler
        if not (0.0 < phi < 0.5):
            raise ValueError(f"normalized Doppler must lie in (0, 0.5), got {phi!r}")

    @property
    def max_doppler(self):
        return self.receiver_speed * self.carrier_frequency / SPEED_OF_LIGHT

    @property
    def normalized_doppler(self):
        return self.max_doppler / self.sampling_rate

    @classmethod
    def from_normalized(cls, phi):
        """Build a spec whose normalized Doppler is exactly ``phi``."""
        return cls(carrier_frequency=SPEED_OF_LIGHT, receiver_speed=float(phi), sampling_rate=1.0)


TABLE1_DOPPLER = DopplerSpec(carrier_frequency=5.2e9, receiver_speed=10.0, sampling_rate=0.25e6)


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray
    spec: DopplerSpec
    seed: int

    def __len__(self):
        return len(self.gains)


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN level for unit-power symbols; ``snr_db=inf`` means noiseless."""

    snr_db: float

    @property
    def noise_variance(self):
        return 10.0 ** (-self.snr_db / 10.0)


def _j0_series(x):
    q = -0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 80):
        term = term * q / (k * k)
        total = total + term
    return total


def _hankel_coefficients(n):
    a = [1.0]
    for k in range(1, n):
        a.append(a[-1] * (-((2 * k - 1) ** 2)) / (k * 8.0))
    return a


_HANKEL = _hankel_coefficients(64)


def _j0_asymptotic(x):
    # Truncate each expansion at its smallest term (x >= 12 keeps that below 1e-12).
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    inv = 1.0 / x
    active = np.ones(x.shape, dtype=bool)
    prev = np.full(x.shape, np.inf)
    for k in range(len(_HANKEL) // 2 - 1):
        sign = -1.0 if k % 2 else 1.0
        tp = sign * _HANKEL[2 * k] * inv ** (2 * k)
        tq = sign * _HANKEL[2 * k + 1] * inv ** (2 * k + 1)
        active &= np.abs(tp) <= prev
        if not active.any():
            break
        p = np.where(active, p + tp, p)
        q = np.where(active, q + tq, q)
        prev = np.abs(tp)
    chi = x - 0.25 * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j0(x):
    """Bessel function of the first kind, order zero.

    Power series below ``|x| = 12``, Hankel asymptotic expansion above.
    Absolute error is below 1e-12 on ``|x| <= 50``. Accepts scalars or arrays;
    returns a float for scalar input.
    """
    arr = np.abs(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite input")
    out = np.empty_like(arr)
    small = arr < _SERIES_LIMIT
    if small.any():
        out[small] = _j0_series(arr[small])
    if (~small).any():
        out[~small] = _j0_asymptotic(arr[~small])
    if np.ndim(x) == 0:
        return float(out)
    return out


def jakes_autocorr(lag, spec):
    """``J0(2*pi*phi_d*|lag|)``; ``lag`` may be an integer array."""
    lag = np.abs(np.asarray(lag))
    return bessel_j0(2.0 * math.pi * spec.normalized_doppler * lag)


def _path_parameters(seed):
    gen = rng.stream(seed, rng.CHANNEL)
    theta = gen.uniform(0.0, 2.0 * math.pi, NUM_PATHS)
    psi = gen.uniform(0.0, 2.0 * math.pi, NUM_PATHS)
    return np.cos(theta), psi


def generate_channels(length, spec, seeds):
    """Gains for several seeds at once, shape ``(len(seeds), length)``.

    Row ``i`` is identical to ``generate_channel(length, spec, seeds[i]).gains``.
    """
    if length < 1:
        raise ValueError(f"channel length must be >= 1, got {length}")
    seeds = [int(s) for s in seeds]
    cos_theta = np.empty((len(seeds), NUM_PATHS))
    psi = np.empty((len(seeds), NUM_PATHS))
    for i, s in enumerate(seeds):
        cos_theta[i], psi[i] = _path_parameters(s)
    return kernels.sos_channel(cos_theta, psi, spec.normalized_doppler, int(length))


def generate_channel(length, spec, seed):
    gains = generate_channels(length, spec, [seed])[0]
    return ChannelRealization(gains=gains, spec=spec, seed=int(seed))


def empirical_autocorr(realizations, max_lag):
    """Ensemble- and time-averaged autocorrelation, normalized to 1 at lag 0.

    ``realizations`` is an iterable of :class:`ChannelRealization` or a 2-D
    complex array with one realization per row. Lag ``d`` averages
    ``h[n+d] * conj(h[n])`` over all ``n`` and all rows.
    """
    if isinstance(realizations, np.ndarray):
        gains = np.atleast_2d(realizations)
    else:
        rows = [r.gains if isinstance(r, ChannelRealization) else np.asarray(r) for r in realizations]
        if not rows:
            raise ValueError("empirical_autocorr needs at least one realization")
        if len({len(r) for r in rows}) != 1:
            raise ValueError("all realizations must have the same length")
        gains = np.vstack(rows)
    if gains.shape[0] == 0:
        raise ValueError("empirical_autocorr needs at least one realization")
    length = gains.shape[1]
    if max_lag < 0 or max_lag >= length:
        raise ValueError(f"max_lag must be in [0, {length - 1}], got {max_lag}")

    nfft = 1 << int(math.ceil(math.log2(2 * length)))
    acc = np.zeros(max_lag + 1, dtype=complex)
    for start in range(0, gains.shape[0], 1024):
        spec = np.fft.fft(gains[start:start + 1024], nfft, axis=1)
        corr = np.fft.ifft(np.abs(spec) ** 2, axis=1)[:, : max_lag + 1]
        acc += corr.sum(axis=0)
    # ifft of |H|^2 gives sum_n h[n+d] conj(h[n]) at index d.
    counts = gains.shape[0] * (length - np.arange(max_lag + 1))
    r = (acc / counts).real
    return r / r[0]


def apply_channel(x, h, noise, seed):
    """``y = h*x + w`` with circular complex Gaussian ``w`` of variance sigma_n^2."""
    gains = h.gains if isinstance(h, ChannelRealization) else np.asarray(h)
    x = np.asarray(x)
    if x.shape != gains.shape:
        raise ValueError(f"length mismatch: x has {x.shape}, channel has {gains.shape}")
    y = gains * x
    var = noise.noise_variance
    if var > 0.0:
        gen = rng.stream(seed, rng.NOISE)
        w = gen.standard_normal(x.shape + (2,))
        y = y + math.sqrt(var / 2.0) * (w[..., 0] + 1j * w[..., 1])
    return y


# .fch: b"FCH1", u32 count, u32 length, f64 phi_d, then count*length (re, im) f32 pairs.
_FCH_HEADER = struct.Struct("<4sIId")


@dataclass(frozen=True)
class ChannelSet:
    gains: np.ndarray  # complex64, (count, length)
    normalized_doppler: float

    def realization(self, index):
        return self.gains[index].astype(np.complex128)


def write_fch(path, gains, normalized_doppler):
    gains = np.atleast_2d(np.asarray(gains)).astype(np.complex64)
    count, length = gains.shape
    with open(path, "wb") as fh:
        fh.write(_FCH_HEADER.pack(b"FCH1", count, length, float(normalized_doppler)))
        fh.write(gains.astype("<c8").tobytes())


def read_fch(path):
    data = Path(path).read_bytes()
    if len(data) < _FCH_HEADER.size:
        raise ValueError(f"{path}: truncated channel file")
    magic, count, length, phi = _FCH_HEADER.unpack_from(data)
    if magic != b"FCH1":
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _FCH_HEADER.size + 8 * count * length
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(data)}")
    gains = np.frombuffer(data, dtype="<c8", offset=_FCH_HEADER.size).reshape(count, length)
    return ChannelSet(gains=gains.astype(np.complex64), normalized_doppler=phi)

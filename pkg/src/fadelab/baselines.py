"""Classical pilot-aided estimators: LS with linear interpolation and MMSE.

Correlation matrices are plain ``(L, L)`` numpy arrays (real symmetric
Toeplitz here, Hermitian in general).
"""

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .channel import jakes_autocorr

DIAGONAL_LOADING = 1e-10


class NumericalError(ArithmeticError):
    """A factorization failed or produced an unusable result."""


class PilotEstimates(NamedTuple):
    positions: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class EstimateReport:
    estimator_name: str
    snr_db: float
    mse: float
    sample_count: int

    def __post_init__(self):
        if not self.mse >= 0.0:
            raise ValueError(f"mse must be >= 0, got {self.mse}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")


def _pilot_mask(frame):
    if hasattr(frame, "layout"):
        return frame.layout.pilot_mask(), np.asarray(frame.symbols)
    mask, symbols = frame
    return np.asarray(mask, dtype=bool), np.asarray(symbols)


def ls_pilot_estimate(y, frame):
    """``y/x`` at every pilot position of ``frame``.

    ``frame`` is a :class:`~fadelab.framing.Frame` or a ``(pilot_mask, symbols)`` pair.
    """
    mask, x = _pilot_mask(frame)
    y = np.asarray(y)
    if y.shape != x.shape:
        raise ValueError(f"length mismatch: y {y.shape} vs frame {x.shape}")
    pos = np.flatnonzero(mask)
    xp = x[pos]
    if np.any(xp == 0):
        raise ZeroDivisionError("pilot symbol is zero")
    return PilotEstimates(pos, y[pos] / xp)


def linear_interpolate(pilot_estimates, L):
    """Fill a length-``L`` sequence from sparse estimates.

    Between two pilots the value is the straight line joining them; before
    the first and after the last pilot the nearest pilot value is held.
    """
    pos, values = pilot_estimates
    pos = np.asarray(pos, dtype=float)
    values = np.asarray(values)
    if pos.size == 0:
        raise ValueError("need at least one pilot estimate")
    n = np.arange(L, dtype=float)
    return np.interp(n, pos, values.real) + 1j * np.interp(n, pos, values.imag)


def ls_estimate(y, frame):
    est = ls_pilot_estimate(y, frame)
    return linear_interpolate(est, len(np.asarray(y)))


def toeplitz_from_lags(r):
    """Symmetric Toeplitz matrix with first row ``r``."""
    return scipy.linalg.toeplitz(np.asarray(r))


def build_rhh_theory(L, spec):
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    return toeplitz_from_lags(jakes_autocorr(np.arange(L), spec))


def empirical_lags(h_ls):
    """Unnormalized ``R[d] = (1/L) sum_{n>=d} h[n] conj(h[n-d])`` for ``d = 0..L-1``.

    The biased (``1/L``) normalization keeps the resulting Toeplitz matrix
    positive semidefinite.
    """
    h = np.asarray(h_ls)
    L = h.size
    if L < 1:
        raise ValueError("empty sequence")
    full = np.correlate(h, h, mode="full")
    return full[L - 1:] / L


def build_rhh_empirical(h_ls):
    r = empirical_lags(h_ls).real
    if r[0] <= 0.0:
        raise NumericalError("LS estimate has zero power; correlation undefined")
    return toeplitz_from_lags(r / r[0])


def solve_hermitian(A, b, loading=DIAGONAL_LOADING):
    """Solve ``(A + loading*I) x = b`` by Cholesky factorization.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    One refinement step follows the triangular solves. Raises
    :class:`NumericalError` when the loaded matrix is not positive
    definite or the relative residual exceeds 1e-8.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    b = np.asarray(b)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"rhs has {b.shape[0]} rows, A has order {A.shape[0]}")
    loaded = A + loading * np.eye(A.shape[0])
    try:
        factor = scipy.linalg.cho_factor(loaded, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"matrix is not positive definite after loading: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b)
    # one step of iterative refinement; cheap and recovers digits lost to
    # the near-singular correlation matrices of slow fading
    x = x + scipy.linalg.cho_solve(factor, b - loaded @ x)
    bnorm = np.linalg.norm(b)
    if bnorm > 0.0:
        res = np.linalg.norm(loaded @ x - b) / bnorm
        if not res < 1e-8:
            raise NumericalError(f"solve residual {res:.3e} exceeds 1e-8")
    return x


def mmse_estimate(h_ls, R, noise):
    """``R (R + sigma_n^2 I)^-1 h_ls`` for unit symbol power.

    ``h_ls`` may be one sequence or a ``(S, L)`` stack sharing ``R``.
    Evaluated as ``h_ls - sigma_n^2 z`` with ``(R + sigma_n^2 I) z = h_ls``,
    which equals ``R z`` but keeps the solver's diagonal loading from acting
    as extra noise: at ``sigma_n^2 = 0`` the estimator is exactly the identity.
    """
    h_ls = np.asarray(h_ls)
    R = np.asarray(R)
    if h_ls.shape[-1] != R.shape[0]:
        raise ValueError(f"h_ls length {h_ls.shape[-1]} != R order {R.shape[0]}")
    var = noise.noise_variance if hasattr(noise, "noise_variance") else float(noise)
    if var < 0.0:
        raise ValueError(f"noise variance must be >= 0, got {var}")
    if var == 0.0:
        return h_ls.astype(np.result_type(h_ls, R, np.complex128), copy=True)
    z = solve_hermitian(R + var * np.eye(R.shape[0]), h_ls.T)
    return h_ls - var * z.T


def mmse_sim_estimate(h_ls, noise):
    """MMSE with the correlation estimated from the LS output itself."""
    return mmse_estimate(h_ls, build_rhh_empirical(h_ls), noise)


def mse(estimate, truth):
    """Mean of ``|estimate - truth|^2``."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    d = estimate - truth
    return float(np.mean(d.real ** 2 + d.imag ** 2))


REPORT_COLUMNS = ("estimator", "snr_db", "mse", "sample_count")


def format_float(x):
    """Locale-independent shortest round-trip representation."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_reports(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.estimator_name, format_float(r.snr_db), format_float(r.mse), r.sample_count])


def read_reports(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != REPORT_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    out = []
    for row in rows[1:]:
        if len(row) != len(REPORT_COLUMNS):
            raise ValueError(f"{path}: bad row {row}")
        out.append(EstimateReport(row[0], float(row[1]), float(row[2]), int(row[3])))
    return out

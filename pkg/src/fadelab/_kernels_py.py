"""Pure numpy versions of the hot loops; reference for the compiled core."""

import math

import numpy as np


def _sigmoid(a):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-a))


def sos_channel(cos_theta, psi, phi, length):
    cos_theta = np.ascontiguousarray(cos_theta, dtype=np.float64)
    psi = np.ascontiguousarray(psi, dtype=np.float64)
    rows, paths = cos_theta.shape
    n = np.arange(length, dtype=np.float64)
    out = np.empty((rows, length), dtype=np.complex128)
    scale = 1.0 / math.sqrt(paths)
    for i in range(rows):
        w = 2.0 * math.pi * phi * cos_theta[i]
        phase = n[:, None] * w[None, :] + psi[i][None, :]
        out[i] = scale * np.exp(1j * phase).sum(axis=1)
    return out


def gru_recur_forward(gx, U):
    """Run the hidden-state recurrence of one GRU direction.

    ``gx`` is ``(T, B, 3H)``: the input projections plus biases for the
    update gate, reset gate and candidate, in that order. ``U`` is ``(3H, H)``,
    the hidden-state columns of the gate weights.
    Returns ``hs`` of shape ``(T+1, B, H)`` with ``hs[0] = 0``, and the
    ``z``, ``r``, ``hbar`` activations of shape ``(T, B, H)``.
    """
    T, B, G = gx.shape
    H = G // 3
    hs = np.zeros((T + 1, B, H))
    z = np.empty((T, B, H))
    r = np.empty((T, B, H))
    hbar = np.empty((T, B, H))
    Uzr = U[: 2 * H]
    Uh = U[2 * H:]
    for t in range(T):
        hp = hs[t]
        a = gx[t, :, : 2 * H] + hp @ Uzr.T
        z[t] = _sigmoid(a[:, :H])
        r[t] = _sigmoid(a[:, H:])
        hbar[t] = np.tanh(gx[t, :, 2 * H:] + (r[t] * hp) @ Uh.T)
        hs[t + 1] = (1.0 - z[t]) * hp + z[t] * hbar[t]
    return hs, z, r, hbar


def gru_recur_backward(dhs, U, hs, z, r, hbar):
    """Reverse-mode pass through :func:`gru_recur_forward`.

    ``dhs`` is the loss gradient with respect to ``hs[1:]``. Returns
    ``(dgx, dU)``; the initial state is fixed so its gradient is dropped.
    """
    T, B, H = dhs.shape
    dgx = np.empty((T, B, 3 * H))
    dU = np.zeros((3 * H, H))
    Uzr = U[: 2 * H]
    Uh = U[2 * H:]
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        hp = hs[t]
        zt, rt, hb = z[t], r[t], hbar[t]
        dh = dhs[t] + dh_next
        da_h = dh * zt * (1.0 - hb * hb)
        dz = dh * (hb - hp)
        dh_prev = dh * (1.0 - zt)
        rh = rt * hp
        dU[2 * H:] += da_h.T @ rh
        drh = da_h @ Uh
        dr = drh * hp
        dh_prev += drh * rt
        da_z = dz * zt * (1.0 - zt)
        da_r = dr * rt * (1.0 - rt)
        dgx[t, :, :H] = da_z
        dgx[t, :, H: 2 * H] = da_r
        dgx[t, :, 2 * H:] = da_h
        da_zr = dgx[t, :, : 2 * H]
        dU[: 2 * H] += da_zr.T @ hp
        dh_prev += da_zr @ Uzr
        dh_next = dh_prev
    return dgx, dU

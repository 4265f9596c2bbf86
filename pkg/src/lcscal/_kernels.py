"""Batched LSTM forward/backward kernels.

Two interchangeable implementations: numba ``@njit`` loops and plain numpy.
``LCSCAL_BACKEND=numpy`` (or a missing numba) selects the numpy path; the
default is numba. Both take inputs laid out time-major, ``x[t, b, f]``.

Gate order along the 4H axis is [input, forget, candidate, output].
"""

import math
import os

import numpy as np

_requested = os.environ.get("LCSCAL_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"LCSCAL_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def lstm_forward_numpy(x, w_input, w_hidden, bias):
    """Returns (gates[W,B,4H], c[W+1,B,H], h[W+1,B,H], tanh_c[W,B,H])."""
    W, B, _ = x.shape
    H = w_hidden.shape[1]
    zx = x @ w_input.T + bias  # (W, B, 4H)
    gates = np.empty((W, B, 4 * H))
    c = np.zeros((W + 1, B, H))
    h = np.zeros((W + 1, B, H))
    tanh_c = np.empty((W, B, H))
    for t in range(W):
        z = zx[t] + h[t] @ w_hidden.T
        gates[t, :, : 2 * H] = _sigmoid(z[:, : 2 * H])
        gates[t, :, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        gates[t, :, 3 * H :] = _sigmoid(z[:, 3 * H :])
        i, f, g, o = (gates[t, :, k * H : (k + 1) * H] for k in range(4))
        c[t + 1] = f * c[t] + i * g
        tanh_c[t] = np.tanh(c[t + 1])
        h[t + 1] = o * tanh_c[t]
    return gates, c, h, tanh_c


def lstm_backward_numpy(x, w_hidden, gates, c, h, tanh_c, dh_last):
    """Backprop-through-time from a gradient on the final hidden state.

    Returns (d_w_input, d_w_hidden, d_bias).
    """
    W, B, F = x.shape
    H = w_hidden.shape[1]
    dz_all = np.empty((W, B, 4 * H))
    dh = dh_last.copy()
    dc = np.zeros((B, H))
    for t in range(W - 1, -1, -1):
        i, f, g, o = (gates[t, :, k * H : (k + 1) * H] for k in range(4))
        tc = tanh_c[t]
        dc = dc + dh * o * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H : 2 * H] = dc * c[t] * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
        dh = dz @ w_hidden
        dc = dc * f
    flat_dz = dz_all.reshape(W * B, 4 * H)
    d_w_input = flat_dz.T @ x.reshape(W * B, F)
    d_w_hidden = flat_dz.T @ h[:-1].reshape(W * B, H)
    d_bias = flat_dz.sum(axis=0)
    return d_w_input, d_w_hidden, d_bias


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _lstm_forward_nb(x, w_input, w_hidden, bias):
        W, B, F = x.shape
        H = w_hidden.shape[1]
        G = 4 * H
        gates = np.empty((W, B, G))
        c = np.zeros((W + 1, B, H))
        h = np.zeros((W + 1, B, H))
        tanh_c = np.empty((W, B, H))
        wh_t = np.ascontiguousarray(w_hidden.T)
        zx = np.dot(x.reshape(W * B, F), np.ascontiguousarray(w_input.T)).reshape(W, B, G)
        for t in range(W):
            z = np.dot(h[t], wh_t)
            for bb in range(B):
                for k in range(H):
                    zi = z[bb, k] + zx[t, bb, k] + bias[k]
                    zf = z[bb, H + k] + zx[t, bb, H + k] + bias[H + k]
                    zg = z[bb, 2 * H + k] + zx[t, bb, 2 * H + k] + bias[2 * H + k]
                    zo = z[bb, 3 * H + k] + zx[t, bb, 3 * H + k] + bias[3 * H + k]
                    ig = 1.0 / (1.0 + math.exp(-zi))
                    fg = 1.0 / (1.0 + math.exp(-zf))
                    gg = math.tanh(zg)
                    og = 1.0 / (1.0 + math.exp(-zo))
                    gates[t, bb, k] = ig
                    gates[t, bb, H + k] = fg
                    gates[t, bb, 2 * H + k] = gg
                    gates[t, bb, 3 * H + k] = og
                    cn = fg * c[t, bb, k] + ig * gg
                    c[t + 1, bb, k] = cn
                    tc = math.tanh(cn)
                    tanh_c[t, bb, k] = tc
                    h[t + 1, bb, k] = og * tc
        return gates, c, h, tanh_c

    @njit(cache=True)
    def _lstm_backward_nb(x, w_hidden, gates, c, h, tanh_c, dh_last):
        W, B, F = x.shape
        H = w_hidden.shape[1]
        G = 4 * H
        d_bias = np.zeros(G)
        dh = dh_last.copy()
        dc = np.zeros((B, H))
        dz_all = np.empty((W, B, G))
        for t in range(W - 1, -1, -1):
            dz = dz_all[t]
            for bb in range(B):
                for k in range(H):
                    ig = gates[t, bb, k]
                    fg = gates[t, bb, H + k]
                    gg = gates[t, bb, 2 * H + k]
                    og = gates[t, bb, 3 * H + k]
                    tc = tanh_c[t, bb, k]
                    d = dc[bb, k] + dh[bb, k] * og * (1.0 - tc * tc)
                    dz[bb, k] = d * gg * ig * (1.0 - ig)
                    dz[bb, H + k] = d * c[t, bb, k] * fg * (1.0 - fg)
                    dz[bb, 2 * H + k] = d * ig * (1.0 - gg * gg)
                    dz[bb, 3 * H + k] = dh[bb, k] * tc * og * (1.0 - og)
                    dc[bb, k] = d * fg
            for bb in range(B):
                for g in range(G):
                    d_bias[g] += dz[bb, g]
            dh = np.dot(dz, w_hidden)
        flat_dz_t = np.ascontiguousarray(dz_all.reshape(W * B, G).T)
        d_w_input = np.dot(flat_dz_t, x.reshape(W * B, F))
        d_w_hidden = np.dot(flat_dz_t, np.ascontiguousarray(h[:W]).reshape(W * B, H))
        return d_w_input, d_w_hidden, d_bias

    def lstm_forward_numba(x, w_input, w_hidden, bias):
        return _lstm_forward_nb(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w_input),
            np.ascontiguousarray(w_hidden),
            np.ascontiguousarray(bias),
        )

    def lstm_backward_numba(x, w_hidden, gates, c, h, tanh_c, dh_last):
        return _lstm_backward_nb(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(w_hidden),
            gates,
            c,
            h,
            tanh_c,
            np.ascontiguousarray(dh_last, dtype=np.float64),
        )

    lstm_forward = lstm_forward_numba
    lstm_backward = lstm_backward_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy

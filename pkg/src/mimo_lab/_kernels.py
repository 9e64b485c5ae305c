"""Compiled inner loops for the finite-alphabet mutual information estimators.

All kernels work on split real/imaginary float64 arrays. Reductions run in
an order fixed at compile time, so results are bit-reproducible for equal
inputs on a given build.
"""

import math

import numpy as np
from numba import njit



# Cody-Waite split of ln 2; the high part has trailing zero bits, so k * _LN2_HI is exact
_LN2_HI = 6.93147180369123816490e-01
_LN2_LO = 1.90821492927058770002e-10
_INV_LN2 = 1.4426950408889634
# 2**-k for the exponent range reachable after clamping at _EXP_FLOOR
_EXP_FLOOR = -700.0
_POW2_NEG = np.array([2.0 ** -k for k in range(1011)])


@njit(cache=True, fastmath=True, nogil=True, inline="always")
def _exp_nonpos(x):
    """``exp(x)`` for ``x <= 0`` without a libm call, so loops around it vectorize.

    Range reduction ``x = k ln2 + r`` with ``|r| <= ln2 / 2`` and a degree-13
    Taylor polynomial; relative error stays within a few ulp.
    """
    x = max(x, _EXP_FLOOR)
    k = math.floor(x * _INV_LN2 + 0.5)
    r = (x - k * _LN2_HI) - k * _LN2_LO
    p = 1.6059043836821613e-10
    p = p * r + 2.08767569878681e-09
    p = p * r + 2.505210838544172e-08
    p = p * r + 2.755731922398589e-07
    p = p * r + 2.7557319223985893e-06
    p = p * r + 2.48015873015873e-05
    p = p * r + 0.0001984126984126984
    p = p * r + 0.001388888888888889
    p = p * r + 0.008333333333333333
    p = p * r + 0.041666666666666664
    p = p * r + 0.16666666666666666
    p = p * r + 0.5
    p = p * r + 1.0
    p = p * r + 1.0
    return p * _POW2_NEG[int(-k)]


@njit(cache=True, fastmath=True, nogil=True)
def _logsumexp_neg(buf):
    """``log sum_k exp(-buf[k])``, shifted by the smallest entry."""
    best = np.inf
    for k in range(buf.shape[0]):
        best = min(best, buf[k])
    s = 0.0
    for k in range(buf.shape[0]):
        s += _exp_nonpos(best - buf[k])
    return math.log(s) - best


@njit(cache=True, fastmath=True, nogil=True)
def _metrics(c_re, c_im, rx_re, rx_im, inv_noise, buf):
    """``buf[k] = |c - rx[:, k]|^2 / s2`` with ``rx`` stored row by row."""
    n_r, n_hyp = rx_re.shape
    for k in range(n_hyp):
        buf[k] = 0.0
    for r in range(n_r):
        cr = c_re[r]
        ci = c_im[r]
        for k in range(n_hyp):
            a = cr - rx_re[r, k]
            b = ci - rx_im[r, k]
            buf[k] += a * a + b * b
    for k in range(n_hyp):
        buf[k] *= inv_noise


@njit(cache=True, fastmath=True, nogil=True)
def quadrature_logsum(tx_re, tx_im, rx_re, rx_im, nodes_re, nodes_im, weights, inv_noise):
    """Weighted sum over (symbol, node) of ``log sum_k exp(-|n + t_m - r_k|^2 / s2)``.

    Parameters
    ----------
    tx_re, tx_im : (R, Nr) arrays
        Noiseless received points ``P x_m`` for the outer symbols.
    rx_re, rx_im : (Nr, K) arrays
        Decoder hypotheses ``P_hat x_k``, one row per output.
    nodes_re, nodes_im : (Q, Nr) arrays
        Noise samples at the quadrature nodes (already scaled by sigma).
    weights : (Q,) array
        Quadrature weights (normalized to sum to one).
    inv_noise : float
        ``1 / noise_var``.

    Returns
    -------
    float
        ``sum_m sum_q weights[q] * logsumexp_k(...)`` in nats.

    The loops over hypotheses are vectorized, so the summation order is fixed
    by the compiled code rather than strictly sequential; results are still
    reproducible run to run.
    """
    n_tx, n_r = tx_re.shape
    n_hyp = rx_re.shape[1]
    n_nodes = weights.shape[0]
    buf = np.empty(n_hyp)
    c_re = np.empty(n_r)
    c_im = np.empty(n_r)
    total = 0.0
    for m in range(n_tx):
        acc_m = 0.0
        for q in range(n_nodes):
            for r in range(n_r):
                c_re[r] = nodes_re[q, r] + tx_re[m, r]
                c_im[r] = nodes_im[q, r] + tx_im[m, r]
            _metrics(c_re, c_im, rx_re, rx_im, inv_noise, buf)
            acc_m += weights[q] * _logsumexp_neg(buf)
        total += acc_m
    return total


@njit(cache=True, fastmath=True, nogil=True)
def sample_logsum(y_re, y_im, rx_re, rx_im, ref, inv_noise, out):
    """Per-sample ``log sum_k exp(-(|y - r_k|^2 - ref) / s2)`` for Monte Carlo.

    ``rx`` is stored row by row as in :func:`quadrature_logsum`. ``ref``
    holds the decoder metric at the sent symbol (``|n|^2`` when matched) so
    the log-ratio against the true symbol's likelihood is returned directly.
    """
    n_samp = y_re.shape[0]
    n_hyp = rx_re.shape[1]
    buf = np.empty(n_hyp)
    for i in range(n_samp):
        _metrics(y_re[i], y_im[i], rx_re, rx_im, inv_noise, buf)
        out[i] = _logsumexp_neg(buf) + ref[i] * inv_noise


@njit(cache=True, fastmath=False, nogil=True)
def triangular_logsum(y_re, y_im, r_re, r_im, pts_re, pts_im, ref, inv_noise, slack, out):
    """Monte Carlo log-sum over all ``M**Nt`` hypotheses of an upper-triangular map.

    The hypothesis tree is walked depth first from the last stream (the only
    one seen by the last output row) to the first. A subtree is skipped when
    its partial metric already exceeds the best full metric found so far by
    more than ``slack``; with ``slack`` set to ``40 + log(M**Nt)`` the dropped
    mass is below 1e-17 of the retained sum.
    """
    n_samp, n_t = y_re.shape
    m_pts = pts_re.shape[0]
    idx = np.zeros(n_t, np.int64)
    partial = np.zeros(n_t + 1)
    # residual of row i after subtracting the contribution of streams > level
    res_re = np.zeros((n_t + 1, n_t))
    res_im = np.zeros((n_t + 1, n_t))
    for s in range(n_samp):
        # initial bound: true metric |n|^2 / s2 is always achievable
        best = ref[s] * inv_noise
        acc = 0.0
        shift = best
        for i in range(n_t):
            res_re[n_t, i] = y_re[s, i]
            res_im[n_t, i] = y_im[s, i]
        level = n_t - 1
        idx[level] = 0
        partial[n_t] = 0.0
        while level < n_t:
            if idx[level] >= m_pts:
                level += 1
                if level < n_t:
                    idx[level] += 1
                continue
            p = idx[level]
            # place stream `level`, update residuals of rows 0..level
            xr = pts_re[p]
            xi = pts_im[p]
            for i in range(level + 1):
                cr = r_re[i, level] * xr - r_im[i, level] * xi
                ci = r_re[i, level] * xi + r_im[i, level] * xr
                res_re[level, i] = res_re[level + 1, i] - cr
                res_im[level, i] = res_im[level + 1, i] - ci
            d = partial[level + 1] + (res_re[level, level] ** 2 + res_im[level, level] ** 2) * inv_noise
            if d - best > slack:
                idx[level] += 1
                continue
            if level == 0:
                if d < best:
                    best = d
                acc += np.exp(shift - d)
                idx[0] += 1
                continue
            partial[level] = d
            level -= 1
            idx[level] = 0
        # acc is relative to exp(-shift)
        out[s] = np.log(acc) - shift + ref[s] * inv_noise

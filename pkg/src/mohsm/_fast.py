"""
Fused loops for the symmetric MOHSM/MOSM training Gram and its gradient.

These visit each unordered pair of training points once, block by block over
channel pairs.  They compute the same quantities as the broadcasting code in
``kernels`` and ``gradients``, which remains the reference implementation.
"""

import math

import numpy as np
from numba import njit


def channel_blocks(channel, m):
    """Point indices of each channel as one flat array plus offsets."""
    order = np.argsort(channel, kind="stable").astype(np.int64)
    counts = np.bincount(channel, minlength=m)
    offsets = np.zeros(m + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(counts)
    return order, offsets


@njit(cache=True, fastmath=True, error_model="numpy")
def gram_group(order, offsets, x, sigma, mu, theta, phi, alpha, ell, center, stationary, K, store, Ec, Es):
    """Add one shift group to ``K`` (upper triangle in sorted order only).

    With ``store`` the unscaled ``env * win * cos`` and ``env * win * sin``
    terms are kept in ``Ec``/``Es`` for ``grad_group``.
    """
    n = x.shape[1]
    m = offsets.shape[0] - 1
    Q = alpha.shape[0]
    for i in range(m):
        for j in range(i, m):
            l2 = ell[i, j] ** 2
            for pa in range(offsets[i], offsets[i + 1]):
                a = order[pa]
                start = pa if i == j else offsets[j]
                for pb in range(start, offsets[j + 1]):
                    b = order[pb]
                    # window and envelope share one exponential
                    wexp = 0.0
                    if not stationary:
                        r2 = 0.0
                        for d in range(n):
                            t = 0.5 * (x[a, d] + x[b, d]) - center[d]
                            r2 += t * t
                        wexp = l2 * r2
                    acc = 0.0
                    for q in range(Q):
                        e = wexp
                        arg = phi[q, i, j]
                        for d in range(n):
                            u = x[a, d] - x[b, d] + theta[q, i, j, d]
                            e += sigma[q, i, j, d] * u * u
                            arg += mu[q, i, j, d] * u
                        env = math.exp(-0.5 * e)
                        cs = math.cos(arg)
                        acc += alpha[q, i, j] * env * cs
                        if store:
                            Ec[q, a, b] = env * cs
                            Es[q, a, b] = env * math.sin(arg)
                    K[a, b] += acc


@njit(cache=True, fastmath=True, error_model="numpy")
def grad_group(order, offsets, x, G, sigma, mu, theta, phi, ell, center, stationary,
               P_c, P_s, P_su, P_cu, P_cuu, P_cr, P_cx, cached, Ec, Es):
    n = x.shape[1]
    m = offsets.shape[0] - 1
    Q = sigma.shape[0]
    rel = np.empty(n)
    u = np.empty(n)
    # accumulators: index 0 sums every visited pair, index 1 only pairs with b != a
    c = np.zeros((2, Q))
    s = np.zeros((2, Q))
    cr = np.zeros((2, Q))
    su = np.zeros((2, Q, n))
    cu = np.zeros((2, Q, n))
    cuu = np.zeros((2, Q, n))
    cx = np.zeros((2, Q, n))
    for i in range(m):
        for j in range(i, m):
            c[:] = 0.0
            s[:] = 0.0
            cr[:] = 0.0
            su[:] = 0.0
            cu[:] = 0.0
            cuu[:] = 0.0
            cx[:] = 0.0
            l2 = ell[i, j] ** 2
            for pa in range(offsets[i], offsets[i + 1]):
                a = order[pa]
                start = pa if i == j else offsets[j]
                for pb in range(start, offsets[j + 1]):
                    b = order[pb]
                    k = 0 if b == a else 1
                    g = G[a, b]
                    r2 = 0.0
                    if not stationary:
                        for d in range(n):
                            rel[d] = 0.5 * (x[a, d] + x[b, d]) - center[d]
                            r2 += rel[d] * rel[d]
                    for q in range(Q):
                        e = l2 * r2
                        arg = phi[q, i, j]
                        for d in range(n):
                            u[d] = x[a, d] - x[b, d] + theta[q, i, j, d]
                            e += sigma[q, i, j, d] * u[d] * u[d]
                            arg += mu[q, i, j, d] * u[d]
                        if cached:
                            gc = g * Ec[q, a, b]
                            gs = -g * Es[q, a, b]
                        else:
                            base = g * math.exp(-0.5 * e)
                            gc = base * math.cos(arg)
                            gs = -base * math.sin(arg)
                        c[k, q] += gc
                        s[k, q] += gs
                        cr[k, q] += gc * r2
                        for d in range(n):
                            su[k, q, d] += gs * u[d]
                            cu[k, q, d] += gc * u[d]
                            cuu[k, q, d] += gc * u[d] * u[d]
                            cx[k, q, d] += gc * rel[d] if not stationary else 0.0
            # the mirrored pair (b, a) sees u -> -u and arg -> -arg
            for q in range(Q):
                P_c[q, i, j] += c[0, q] + c[1, q]
                P_s[q, i, j] += s[0, q] + s[1, q]
                P_c[q, j, i] += c[1, q]
                P_s[q, j, i] -= s[1, q]
                if not stationary:
                    P_cr[q, i, j] += cr[0, q] + cr[1, q]
                    P_cr[q, j, i] += cr[1, q]
                for d in range(n):
                    P_su[q, i, j, d] += su[0, q, d] + su[1, q, d]
                    P_cu[q, i, j, d] += cu[0, q, d] + cu[1, q, d]
                    P_cuu[q, i, j, d] += cuu[0, q, d] + cuu[1, q, d]
                    P_su[q, j, i, d] += su[1, q, d]
                    P_cu[q, j, i, d] -= cu[1, q, d]
                    P_cuu[q, j, i, d] += cuu[1, q, d]
                    if not stationary:
                        P_cx[q, i, j, d] += cx[0, q, d] + cx[1, q, d]
                        P_cx[q, j, i, d] += cx[1, q, d]


@njit(cache=True)
def nll_adjoint(inv_lower, a):
    """Symmetric ``(K^{-1} - a a^T) / 2`` from the lower triangle of ``K^{-1}``."""
    n = a.shape[0]
    G = np.empty((n, n))
    for i in range(n):
        ai = a[i]
        for j in range(i + 1):
            v = 0.5 * (inv_lower[i, j] - ai * a[j])
            G[i, j] = v
            G[j, i] = v
    return G

"""
Hyperparameter gradients of the NLL for every kernel family.

Each function receives the adjoint ``G = dNLL/dK`` over the training inputs
and returns a dict of gradients keyed like ``params.natural_params``.  Kernel
derivatives are formed in closed form and contracted against ``G`` per
channel pair, then pushed through the channel-to-pair parameter maps.
"""

import numpy as np

from . import _fast
from .kernels import TWO_PI, cross_arrays, hsm_kernel_matrix


def _one_hot(channel, m):
    Z = np.zeros((channel.shape[0], m))
    Z[np.arange(channel.shape[0]), channel] = 1.0
    return Z


def _split_pairs(g, d1, d2):
    """Channel gradient from a pair gradient and the two partial derivatives."""
    return np.sum(g * d1, axis=2) + np.sum(g * d2, axis=1)


def _pair_sums(spec, g, cr, G, channel, x, stationary, terms=None):
    """Contractions of ``G`` with the kernel's building blocks, summed per
    channel pair (broadcasting reference implementation)."""
    m, n = spec.n_channels, spec.input_dim
    Q = g.n_components
    Z = _one_hot(channel, m)

    def pairsum(T):
        return Z.T @ T @ Z

    tau = x[:, None, :] - x[None, :, :]
    xbar = 0.5 * (x[:, None, :] + x[None, :, :])
    ia, ib = channel[:, None], channel[None, :]
    P = _empty_sums(Q, m, n)
    P_c, P_s, P_su, P_cu, P_cuu, P_cr, P_cx = P
    if not stationary:
        rel = xbar - g.center
        r2 = np.sum(rel**2, axis=-1)
        win = np.exp(-0.5 * cr.ell[ia, ib] ** 2 * r2)
    for q in range(Q):
        u = tau + cr.theta[q][ia, ib]
        psi = np.sum(cr.mu[q][ia, ib] * u, axis=-1) + cr.phi[q][ia, ib]
        base = G * np.exp(-0.5 * np.sum(cr.sigma[q][ia, ib] * u**2, axis=-1))
        if not stationary:
            base = base * win
        gc = base * np.cos(psi)
        gs = -base * np.sin(psi)
        P_c[q] = pairsum(gc)
        P_s[q] = pairsum(gs)
        for d in range(n):
            ud = u[..., d]
            P_su[q, :, :, d] = pairsum(gs * ud)
            P_cu[q, :, :, d] = pairsum(gc * ud)
            P_cuu[q, :, :, d] = pairsum(gc * ud**2)
            if not stationary:
                P_cx[q, :, :, d] = pairsum(gc * rel[..., d])
        if not stationary:
            P_cr[q] = pairsum(gc * r2)
    return P


def _empty_sums(Q, m, n):
    return (np.zeros((Q, m, m)), np.zeros((Q, m, m)), np.zeros((Q, m, m, n)), np.zeros((Q, m, m, n)),
            np.zeros((Q, m, m, n)), np.zeros((Q, m, m)), np.zeros((Q, m, m, n)))


def _pair_sums_fast(spec, g, cr, G, channel, x, stationary, terms=None):
    P = _empty_sums(g.n_components, spec.n_channels, spec.input_dim)
    order, offsets = _fast.channel_blocks(channel, spec.n_channels)
    Ec, Es = terms if terms is not None else (np.empty((1, 1, 1)), np.empty((1, 1, 1)))
    _fast.grad_group(order, offsets, x, np.ascontiguousarray(G), cr.sigma, cr.mu, cr.theta, cr.phi, cr.ell,
                     np.ascontiguousarray(g.center, dtype=float), stationary, *P, terms is not None, Ec, Es)
    return P


def mohsm_grad(spec, G, channel, x, stationary=False, fast=True, terms=None):
    """Gradients of ``sum(G * K)`` for MOHSM (or MOSM with ``stationary``).

    ``terms`` are the cached oscillatory terms from ``kernels.mohsm_gram``.
    """
    n = spec.input_dim
    channel = np.asarray(channel, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=float)
    sums = _pair_sums_fast if fast else _pair_sums
    out = {}
    for p, g in enumerate(spec.shifts):
        cr = cross_arrays(g, stationary=stationary)
        P_c, P_s, P_su, P_cu, P_cuu, P_cr, P_cx = sums(spec, g, cr, G, channel, x, stationary,
                                                       None if terms is None else terms[p])

        alpha = cr.alpha
        ell = cr.ell
        sqrt_det = np.sqrt(np.prod(cr.sigma, axis=-1))
        if stationary:
            dalpha_dw = TWO_PI ** (n / 2) * sqrt_det
        else:
            dalpha_dw = np.where(ell > 0, TWO_PI**n * sqrt_det * ell**n, TWO_PI ** (n / 2) * sqrt_det)

        # gradients with respect to the pair parameters
        gW = P_c * dalpha_dw
        gS = -0.5 * alpha[..., None] * P_cuu + (P_c * alpha)[..., None] / (2.0 * cr.sigma)
        gMU = alpha[..., None] * P_su
        gTH = alpha[..., None] * (-cr.sigma * P_cu + cr.mu * P_s[..., None])
        gPH = alpha * P_s

        # pair -> channel
        si, sj = g.sigma[:, :, None, :], g.sigma[:, None, :, :]
        mi, mj = g.mu[:, :, None, :], g.mu[:, None, :, :]
        ssum = cr.ssum
        dm = mi - mj
        Wp = cr.w[..., None]

        g_sigma = _split_pairs(gS, 2 * sj**2 / ssum**2, 2 * si**2 / ssum**2)
        g_sigma += _split_pairs(gMU, sj * (mj - mi) / ssum**2, si * (mi - mj) / ssum**2)
        dW_ds = Wp * 0.25 * dm**2 / ssum**2
        g_sigma += _split_pairs(gW[..., None], dW_ds, dW_ds)

        g_mu = _split_pairs(gMU, sj / ssum, si / ssum)
        g_mu += _split_pairs(gW[..., None], -0.5 * Wp * dm / ssum, 0.5 * Wp * dm / ssum)

        wi, wj = g.w[:, :, None], g.w[:, None, :]
        g_w = _split_pairs(gW, wj * cr.decay, wi * cr.decay)
        g_theta = np.sum(gTH, axis=2) - np.sum(gTH, axis=1)
        g_phi = np.sum(gPH, axis=2) - np.sum(gPH, axis=1)

        key = f"s{p}."
        out[key + "w"] = g_w
        out[key + "mu"] = g_mu
        out[key + "sigma"] = g_sigma
        out[key + "theta"] = g_theta
        out[key + "phi"] = g_phi
        if not stationary:
            gL = np.sum(-alpha * ell * P_cr + np.where(ell > 0, P_c * alpha * n / np.where(ell > 0, ell, 1.0), 0.0),
                        axis=0)
            a = g.ell[:, None] ** 2
            b = g.ell[None, :] ** 2
            safe = np.where(ell > 0, ell * (a + b) ** 2, 1.0)
            d1 = np.where(ell > 0, 2 * g.ell[:, None] * b**2 / safe, 0.0)
            d2 = np.where(ell > 0, 2 * g.ell[None, :] * a**2 / safe, 0.0)
            out[key + "ell"] = np.sum(gL * d1, axis=1) + np.sum(gL * d2, axis=0)
            out[key + "center"] = np.sum((alpha * ell**2)[..., None] * P_cx, axis=(0, 1, 2))
    return out


def _hsm_component_grad(comp, G, x):
    tau = x[:, None, :] - x[None, :, :]
    rel = 0.5 * (x[:, None, :] + x[None, :, :]) - comp.c
    r2 = np.sum(rel**2, axis=-1)
    win = np.exp(-r2 / (2.0 * comp.l**2))
    env = np.exp(-0.5 * np.sum(comp.sigma * tau**2, axis=-1))
    arg = np.sum(comp.mu * tau, axis=-1)
    base = G * win * env
    gk = comp.w * base * np.cos(arg)
    gsin = -comp.w * base * np.sin(arg)
    return {
        "w": np.sum(base * np.cos(arg)),
        "l": np.sum(gk * r2) / comp.l**3,
        "c": np.array([np.sum(gk * rel[..., d]) for d in range(x.shape[1])]) / comp.l**2,
        "sigma": np.array([-0.5 * np.sum(gk * tau[..., d] ** 2) for d in range(x.shape[1])]),
        "mu": np.array([np.sum(gsin * tau[..., d]) for d in range(x.shape[1])]),
    }


def hsm_grad(spec, G, channel, x):
    out = {}
    for c, comps in enumerate(spec.channels):
        idx = np.flatnonzero(channel == c)
        Gc = G[np.ix_(idx, idx)]
        for q, comp in enumerate(comps):
            for name, val in _hsm_component_grad(comp, Gc, x[idx]).items():
                out[f"c{c}.{q}.{name}"] = val
    return out


def lmc_grad(spec, G, channel, x):
    m = spec.n_channels
    Z = _one_hot(channel, m)
    A = spec.mixing
    gA = np.zeros_like(A)
    out = {}
    for q, comps in enumerate(spec.latents):
        a = A[channel, q]
        Kq = hsm_kernel_matrix(comps, x, x)
        P = Z.T @ (G * Kq) @ Z
        gA[:, q] = (P + P.T) @ A[:, q]
        Geff = G * np.outer(a, a)
        for r, comp in enumerate(comps):
            for name, val in _hsm_component_grad(comp, Geff, x).items():
                out[f"l{q}.{r}.{name}"] = val
    out["mixing"] = gA
    return out


def noise_grad(spec, G, channel):
    diag = np.bincount(channel, weights=np.diag(G), minlength=spec.n_channels)
    return 2.0 * spec.noise * diag


def kernel_grad(spec, kernel, G, channel, x, terms=None):
    if kernel == "mohsm":
        out = mohsm_grad(spec, G, channel, x, terms=terms)
    elif kernel == "mosm":
        out = mohsm_grad(spec, G, channel, x, stationary=True, terms=terms)
    elif kernel == "hsm":
        out = hsm_grad(spec, G, channel, x)
    elif kernel == "hsm-lmc":
        out = lmc_grad(spec, G, channel, x)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    out["noise"] = noise_grad(spec, G, channel)
    return out

"""
Frequency-domain view of the MOHSM kernel.

The generalized cross-spectral density of channels ``i`` and ``j`` factors as
``conj(R_i) R_j`` where ``R_i`` is the spectral factor of channel ``i``.  The
kernel is recovered as the double inverse Fourier transform

    k_ij(x, x') = Re  iint exp(i (w x - w' x')) S_ij(w, w') dw dw'

which ``spectral_transform_oracle`` evaluates by brute-force quadrature.  None
of this is used for training; it exists so the closed-form kernel can be
checked against its spectral definition.
"""

import numpy as np

from .kernels import InvalidParameterError, cross_arrays


def _split(omega, omega_prime):
    omega = np.asarray(omega, dtype=float)
    omega_prime = np.asarray(omega_prime, dtype=float)
    return omega - omega_prime, 0.5 * (omega + omega_prime)


def spectral_factor(params, ell, omega, omega_prime):
    """Spectral factor ``R_i(w, w')`` of one channel.

    ``omega`` and ``omega_prime`` are ``(..., n)`` arrays (a plain vector is a
    single frequency).  For ``ell == 0`` the frequency-correlation factor is the
    indicator of ``w == w'``.
    """
    dw, wbar = _split(omega, omega_prime)
    dw2 = np.sum(np.atleast_1d(dw) ** 2, axis=-1) if dw.ndim else dw**2
    if ell > 0:
        corr = np.exp(-dw2 / (4.0 * ell**2))
    else:
        corr = (dw2 == 0).astype(float)
    off = np.atleast_1d(wbar) - params.mu
    quad = np.sum(off**2 / params.sigma_diag, axis=-1)
    phase = np.sum(params.theta * np.atleast_1d(wbar), axis=-1) + params.phi
    return params.w * corr * np.exp(-0.25 * quad - 1j * phase)


def _density(cr, center, q, i, j, dw, wbar):
    ell = cr.ell[i, j]
    off = wbar - cr.mu[q, i, j]
    quad = np.sum(off**2 / cr.sigma[q, i, j], axis=-1)
    phase = np.sum(cr.theta[q, i, j] * wbar, axis=-1) + cr.phi[q, i, j]
    shift = np.sum(dw * center, axis=-1)
    return (cr.w[q, i, j]
            * np.exp(-np.sum(dw**2, axis=-1) / (2.0 * ell**2))
            * np.exp(-0.5 * quad)
            * np.exp(1j * phase)
            * np.exp(-1j * shift))


def spectral_density(spec, shift_index, component_index, i, j, omega, omega_prime, symmetrized=False):
    """Generalized cross-spectral density ``S_ij(w, w')`` of one component.

    Frequencies are ``(..., n)`` arrays.  ``symmetrized=True`` returns the
    Hermitian symmetrization ``(S(w, w') + conj(S(-w, -w'))) / 2`` whose
    inverse transform is real.
    """
    group = spec.shifts[shift_index]
    cr = cross_arrays(group)
    if cr.ell[i, j] == 0:
        raise InvalidParameterError("density is singular for ell_ij = 0; use the stationary kernel")
    n = spec.input_dim
    omega = np.asarray(omega, dtype=float)
    omega_prime = np.asarray(omega_prime, dtype=float)
    if n == 1 and (omega.ndim == 0 or omega.shape[-1] != 1):
        omega = omega[..., None]
        omega_prime = omega_prime[..., None]
    dw, wbar = _split(omega, omega_prime)
    s = _density(cr, group.center, component_index, i, j, dw, wbar)
    if symmetrized:
        s = 0.5 * (s + np.conj(_density(cr, group.center, component_index, i, j, -dw, -wbar)))
    return s


def quadrature_grid(spec, i, j, x, x_prime, nodes=None, half_width=None):
    """Symmetric 1-D frequency grid wide enough for every component of (i, j)."""
    reach, finest = 0.0, np.inf
    for g in spec.shifts:
        cr = cross_arrays(g)
        ell = cr.ell[i, j]
        sd = np.sqrt(cr.sigma[:, i, j, 0])
        reach = max(reach, float(np.max(np.abs(cr.mu[:, i, j, 0]) + 5.0 * sd)) + 5.0 * ell)
        finest = min(finest, ell, float(np.min(sd)))
    half_width = reach if half_width is None else half_width
    if nodes is None:
        h = min(finest / 3.0, 1.0 / (abs(x) + abs(x_prime) + 1.0))
        nodes = max(400, int(np.ceil(2.0 * half_width / h)) + 1)
    return np.linspace(-half_width, half_width, nodes)


def spectral_transform_oracle(spec, i, j, x, x_prime, nodes=None, half_width=None):
    """Brute-force inverse transform of the symmetrized density on a tensor
    trapezoid grid.  One-dimensional inputs only.
    """
    if spec.input_dim != 1:
        raise NotImplementedError("the quadrature oracle supports one-dimensional inputs only")
    x = float(np.squeeze(x))
    x_prime = float(np.squeeze(x_prime))
    grid = quadrature_grid(spec, i, j, x, x_prime, nodes=nodes, half_width=half_width)
    w, wp = np.meshgrid(grid, grid, indexing="ij")
    kernel = np.exp(1j * (w * x - wp * x_prime))
    total = 0.0
    for p, g in enumerate(spec.shifts):
        for q in range(g.n_components):
            s = spectral_density(spec, p, q, i, j, w, wp, symmetrized=True)
            total += np.trapezoid(np.trapezoid(kernel * s, grid, axis=1), grid).real
    return float(total)


def spectral_transform_matrix(spec, i, j, xs, xs_prime, nodes=None, half_width=None):
    """``spectral_transform_oracle`` for every pair of ``xs`` and ``xs_prime``.

    One grid, fine enough for the largest inputs, is shared by all pairs, so
    the double integral becomes two matrix products.
    """
    if spec.input_dim != 1:
        raise NotImplementedError("the quadrature oracle supports one-dimensional inputs only")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    xs_prime = np.asarray(xs_prime, dtype=float).reshape(-1)
    grid = quadrature_grid(spec, i, j, np.max(np.abs(xs)), np.max(np.abs(xs_prime)), nodes=nodes,
                           half_width=half_width)
    # trapezoid weights
    tw = np.full(grid.size, grid[1] - grid[0])
    tw[[0, -1]] *= 0.5
    w, wp = np.meshgrid(grid, grid, indexing="ij")
    S = np.zeros(w.shape, dtype=complex)
    for p, g in enumerate(spec.shifts):
        for q in range(g.n_components):
            S += spectral_density(spec, p, q, i, j, w, wp, symmetrized=True)
    E = np.exp(1j * np.outer(xs, grid)) * tw
    F = np.exp(-1j * np.outer(grid, xs_prime)) * tw[:, None]
    return ((E @ S) @ F).real

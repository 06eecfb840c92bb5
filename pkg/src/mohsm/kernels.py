"""
Closed-form multi-output spectral kernels.

Four covariance families live here:

* MOHSM -- multi-output harmonizable spectral mixture.  Each component of each
  input shift is a locally stationary kernel: a multi-output spectral mixture
  term in the lag ``tau = x - x'`` multiplied by a Gaussian window in the
  midpoint ``xbar = (x + x') / 2`` centred on the shift location.
* MOSM -- the stationary multi-output spectral mixture, i.e. MOHSM with every
  window switched off.
* HSM -- a single-output windowed spectral mixture, used independently per
  channel as a benchmark.
* HSM-LMC -- a linear model of coregionalization over HSM latent kernels.

Parameters are stored as small numpy arrays per shift group so that whole
Gram matrices can be assembled with broadcasting.  The scalar ``eval_*``
functions are thin wrappers around the matrix builders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fast

TWO_PI = 2.0 * np.pi


class InvalidParameterError(ValueError):
    """Raised when a kernel parameter violates its domain."""


def _vec(x, n=None):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and x.shape != (n,):
        raise InvalidParameterError(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def _points(x, n):
    """Coerce input locations to an ``(N, n)`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if n == 1 else x.reshape(1, -1)
    if x.shape[1] != n:
        raise InvalidParameterError(f"inputs have dimension {x.shape[1]}, kernel expects {n}")
    return x


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelSpectralParams:
    """Spectral factor parameters of one channel for one mixture component."""

    w: float
    mu: np.ndarray
    sigma_diag: np.ndarray
    theta: np.ndarray
    phi: float


@dataclass
class ShiftGroup:
    """One input shift: a window centre, per-channel frequency lengthscales and
    ``Q`` mixture components.

    Component parameters are stacked as arrays with a leading component axis
    and a channel axis: ``w`` and ``phi`` are ``(Q, M)``; ``mu``, ``sigma`` and
    ``theta`` are ``(Q, M, n)``.  ``ell`` is ``(M,)`` and shared by the
    components of the shift.
    """

    center: np.ndarray
    ell: np.ndarray
    w: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.ell = np.atleast_1d(np.asarray(self.ell, dtype=float))
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        self.phi = np.atleast_2d(np.asarray(self.phi, dtype=float))
        q, m = self.w.shape
        n = self.center.shape[0]
        self.mu = np.asarray(self.mu, dtype=float).reshape(q, m, n)
        self.sigma = np.asarray(self.sigma, dtype=float).reshape(q, m, n)
        self.theta = np.asarray(self.theta, dtype=float).reshape(q, m, n)

    @property
    def n_components(self):
        return self.w.shape[0]

    def channel(self, q, i):
        return ChannelSpectralParams(
            w=float(self.w[q, i]),
            mu=self.mu[q, i].copy(),
            sigma_diag=self.sigma[q, i].copy(),
            theta=self.theta[q, i].copy(),
            phi=float(self.phi[q, i]),
        )

    def copy(self):
        return ShiftGroup(*(np.array(getattr(self, f)) for f in _GROUP_FIELDS))


_GROUP_FIELDS = ("center", "ell", "w", "mu", "sigma", "theta", "phi")


@dataclass
class KernelSpec:
    """Full MOHSM hyperparameter set.

    The same container drives the stationary MOSM kernel, which ignores
    ``center`` and ``ell``.  ``noise`` holds the observation-noise standard
    deviation of each channel.
    """

    shifts: list
    noise: np.ndarray

    def __post_init__(self):
        self.noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        self.validate()

    @property
    def n_channels(self):
        return self.noise.shape[0]

    @property
    def input_dim(self):
        return self.shifts[0].center.shape[0]

    def validate(self):
        if len(self.shifts) < 1:
            raise InvalidParameterError("at least one shift group is required")
        m, n = self.n_channels, self.input_dim
        if np.any(~np.isfinite(self.noise)) or np.any(self.noise <= 0):
            raise InvalidParameterError("noise entries must be positive and finite")
        for p, g in enumerate(self.shifts):
            if g.n_components < 1:
                raise InvalidParameterError(f"shift {p} has no components")
            if g.w.shape[1] != m or g.ell.shape != (m,) or g.center.shape != (n,):
                raise InvalidParameterError(f"shift {p} is inconsistent with {m} channels in {n} dimensions")
            if np.any(g.sigma <= 0):
                raise InvalidParameterError(f"shift {p}: sigma entries must be positive")
            if np.any(g.ell < 0):
                raise InvalidParameterError(f"shift {p}: ell entries must be nonnegative")
            for name in _GROUP_FIELDS:
                if not np.all(np.isfinite(getattr(g, name))):
                    raise InvalidParameterError(f"shift {p}: non-finite {name}")

    def copy(self):
        return KernelSpec([g.copy() for g in self.shifts], self.noise.copy())

    def to_dict(self):
        return {
            "kind": "mohsm",
            "noise": self.noise.tolist(),
            "shifts": [{f: getattr(g, f).tolist() for f in _GROUP_FIELDS} for g in self.shifts],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            shifts = [ShiftGroup(**{f: s[f] for f in _GROUP_FIELDS}) for s in d["shifts"]]
            return cls(shifts, d["noise"])
        except (KeyError, TypeError, ValueError) as err:
            raise InvalidParameterError(f"malformed kernel spec: {err}") from err


@dataclass(frozen=True)
class CrossParams:
    sigma_ij: np.ndarray
    mu_ij: np.ndarray
    w_ij: float
    theta_ij: np.ndarray
    phi_ij: float
    ell_ij: float
    alpha_ij: float


@dataclass
class HSMComponent:
    """Windowed spectral mixture component ``w * window(xbar; c, l) * SM(tau)``."""

    w: float
    l: float
    c: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.w = float(self.w)
        self.l = float(self.l)
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if self.l <= 0 or np.any(self.sigma <= 0):
            raise InvalidParameterError("HSM lengthscale and sigma must be positive")
        if self.w < 0:
            raise InvalidParameterError("HSM weight must be nonnegative")

    def to_dict(self):
        return {"w": self.w, "l": self.l, "c": self.c.tolist(), "sigma": self.sigma.tolist(), "mu": self.mu.tolist()}


@dataclass
class HSMSpec:
    """Independent HSM kernel per channel; cross-channel covariance is zero."""

    channels: list  # list over channels of lists of HSMComponent
    noise: np.ndarray

    def __post_init__(self):
        self.noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if len(self.channels) != self.noise.shape[0]:
            raise InvalidParameterError("one component list per channel is required")
        if np.any(self.noise <= 0):
            raise InvalidParameterError("noise entries must be positive")

    @property
    def n_channels(self):
        return len(self.channels)

    @property
    def input_dim(self):
        return self.channels[0][0].c.shape[0]

    def copy(self):
        return HSMSpec([[HSMComponent(**c.to_dict()) for c in comps] for comps in self.channels], self.noise.copy())

    def to_dict(self):
        return {"kind": "hsm", "noise": self.noise.tolist(),
                "channels": [[c.to_dict() for c in comps] for comps in self.channels]}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls([[HSMComponent(**c) for c in comps] for comps in d["channels"]], d["noise"])
        except (KeyError, TypeError, ValueError) as err:
            raise InvalidParameterError(f"malformed HSM spec: {err}") from err


@dataclass
class LMCSpec:
    """Linear model of coregionalization: ``k_ij = sum_q A[i,q] A[j,q] k_q``.

    ``latents[q]`` is a list of HSM components forming the ``q``-th latent
    kernel.
    """

    mixing: np.ndarray
    latents: list
    noise: np.ndarray

    def __post_init__(self):
        self.mixing = np.atleast_2d(np.asarray(self.mixing, dtype=float))
        self.noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        if self.mixing.shape != (self.noise.shape[0], len(self.latents)):
            raise InvalidParameterError(
                f"mixing matrix shape {self.mixing.shape} does not match "
                f"{self.noise.shape[0]} channels and {len(self.latents)} latents")
        if not np.all(np.isfinite(self.mixing)):
            raise InvalidParameterError("mixing matrix must be finite")
        if np.any(self.noise <= 0):
            raise InvalidParameterError("noise entries must be positive")

    @property
    def n_channels(self):
        return self.mixing.shape[0]

    @property
    def input_dim(self):
        return self.latents[0][0].c.shape[0]

    def copy(self):
        return LMCSpec(self.mixing.copy(), [[HSMComponent(**c.to_dict()) for c in comps] for comps in self.latents],
                       self.noise.copy())

    def to_dict(self):
        return {"kind": "hsm-lmc", "noise": self.noise.tolist(), "mixing": self.mixing.tolist(),
                "latents": [[c.to_dict() for c in comps] for comps in self.latents]}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["mixing"], [[HSMComponent(**c) for c in comps] for comps in d["latents"]], d["noise"])
        except (KeyError, TypeError, ValueError) as err:
            raise InvalidParameterError(f"malformed LMC spec: {err}") from err


def spec_from_dict(d):
    kind = d.get("kind", "mohsm")
    if kind in ("mohsm", "mosm"):
        return KernelSpec.from_dict(d)
    if kind == "hsm":
        return HSMSpec.from_dict(d)
    if kind == "hsm-lmc":
        return LMCSpec.from_dict(d)
    raise InvalidParameterError(f"unknown spec kind {kind!r}")


# ---------------------------------------------------------------------------
# derived cross-channel parameters
# ---------------------------------------------------------------------------


@dataclass
class CrossArrays:
    """Cross parameters of one shift group for every channel pair.

    Shapes: ``sigma``, ``mu``, ``theta`` are ``(Q, M, M, n)``; ``w``, ``phi``,
    ``alpha`` are ``(Q, M, M)``; ``ell`` is ``(M, M)``.
    """

    sigma: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    ell: np.ndarray
    alpha: np.ndarray
    # intermediates reused by the gradient code
    ssum: np.ndarray
    decay: np.ndarray


def pair_ell(ell):
    """``ell_ij = sqrt(2 l_i^2 l_j^2 / (l_i^2 + l_j^2))``, zero when both vanish."""
    a = ell[:, None] ** 2
    b = ell[None, :] ** 2
    den = a + b
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, np.sqrt(2.0 * a * b / safe), 0.0)


def cross_arrays(group, stationary=False):
    if np.any(group.sigma <= 0):
        raise InvalidParameterError("sigma entries must be positive")
    si = group.sigma[:, :, None, :]
    sj = group.sigma[:, None, :, :]
    mi = group.mu[:, :, None, :]
    mj = group.mu[:, None, :, :]
    ssum = si + sj
    sigma = 2.0 * si * sj / ssum
    mu = (si * mj + sj * mi) / ssum
    decay = np.exp(-0.25 * np.sum((mi - mj) ** 2 / ssum, axis=-1))
    w = group.w[:, :, None] * group.w[:, None, :] * decay
    theta = group.theta[:, :, None, :] - group.theta[:, None, :, :]
    phi = group.phi[:, :, None] - group.phi[:, None, :]
    ell = pair_ell(group.ell)
    n = sigma.shape[-1]
    sqrt_det = np.sqrt(np.prod(sigma, axis=-1))
    if stationary:
        alpha = w * TWO_PI ** (n / 2) * sqrt_det
    else:
        alpha = np.where(ell > 0, w * TWO_PI**n * sqrt_det * ell**n, w * TWO_PI ** (n / 2) * sqrt_det)
    return CrossArrays(sigma, mu, w, theta, phi, ell, alpha, ssum, decay)


def cross_params(spec, shift_index, component_index, i, j, stationary=False):
    """Derived (i, j) parameters of one mixture component."""
    ca = cross_arrays(spec.shifts[shift_index], stationary=stationary)
    q = component_index
    return CrossParams(
        sigma_ij=ca.sigma[q, i, j].copy(),
        mu_ij=ca.mu[q, i, j].copy(),
        w_ij=float(ca.w[q, i, j]),
        theta_ij=ca.theta[q, i, j].copy(),
        phi_ij=float(ca.phi[q, i, j]),
        ell_ij=float(ca.ell[i, j]),
        alpha_ij=float(ca.alpha[q, i, j]),
    )


# ---------------------------------------------------------------------------
# Gram blocks
# ---------------------------------------------------------------------------


def _lag_and_mid(xa, xb):
    tau = xa[:, None, :] - xb[None, :, :]
    xbar = 0.5 * (xa[:, None, :] + xb[None, :, :])
    return tau, xbar


def mohsm_matrix(spec, ca, xa, cb, xb, stationary=False):
    """Cross-covariance matrix between ``(ca, xa)`` and ``(cb, xb)``.

    ``ca``/``cb`` are integer channel ids and ``xa``/``xb`` are ``(N, n)``
    input arrays.  With ``stationary=True`` this is the MOSM kernel.
    """
    n = spec.input_dim
    ca = np.asarray(ca, dtype=int)
    cb = np.asarray(cb, dtype=int)
    xa = _points(xa, n)
    xb = _points(xb, n)
    tau, xbar = _lag_and_mid(xa, xb)
    ia = ca[:, None]
    ib = cb[None, :]
    K = np.zeros((xa.shape[0], xb.shape[0]))
    for g in spec.shifts:
        cr = cross_arrays(g, stationary=stationary)
        if stationary:
            win = 1.0
        else:
            d2 = np.sum((xbar - g.center) ** 2, axis=-1)
            win = np.exp(-0.5 * cr.ell[ia, ib] ** 2 * d2)
        for q in range(g.n_components):
            u = tau + cr.theta[q][ia, ib]
            env = np.exp(-0.5 * np.sum(cr.sigma[q][ia, ib] * u**2, axis=-1))
            osc = np.cos(np.sum(cr.mu[q][ia, ib] * u, axis=-1) + cr.phi[q][ia, ib])
            K += cr.alpha[q][ia, ib] * env * osc * win
    return K


def mohsm_gram(spec, channel, x, stationary=False, keep_terms=False):
    """Symmetric training Gram via the compiled pair loop.

    With ``keep_terms`` also returns the per-group oscillatory terms that
    ``gradients.mohsm_grad`` can reuse.
    """
    channel = np.ascontiguousarray(channel, dtype=np.int64)
    x = np.ascontiguousarray(_points(x, spec.input_dim))
    N = x.shape[0]
    K = np.zeros((N, N))
    order, offsets = _fast.channel_blocks(channel, spec.n_channels)
    terms = []
    for g in spec.shifts:
        cr = cross_arrays(g, stationary=stationary)
        shape = (g.n_components, N, N) if keep_terms else (1, 1, 1)
        Ec, Es = np.empty(shape), np.empty(shape)
        _fast.gram_group(order, offsets, x, cr.sigma, cr.mu, cr.theta, cr.phi, cr.alpha, cr.ell,
                         np.ascontiguousarray(g.center, dtype=float), stationary, K, keep_terms, Ec, Es)
        terms.append((Ec, Es))
    K = K + K.T
    K[np.diag_indices(N)] *= 0.5
    return (K, terms) if keep_terms else K


def hsm_component_matrix(comp, xa, xb):
    tau, xbar = _lag_and_mid(xa, xb)
    win = np.exp(-np.sum((xbar - comp.c) ** 2, axis=-1) / (2.0 * comp.l**2))
    env = np.exp(-0.5 * np.sum(comp.sigma * tau**2, axis=-1))
    return comp.w * win * env * np.cos(np.sum(comp.mu * tau, axis=-1))


def hsm_kernel_matrix(components, xa, xb):
    K = np.zeros((xa.shape[0], xb.shape[0]))
    for comp in components:
        K += hsm_component_matrix(comp, xa, xb)
    return K


def hsm_matrix(spec, ca, xa, cb, xb):
    n = spec.input_dim
    ca = np.asarray(ca, dtype=int)
    cb = np.asarray(cb, dtype=int)
    xa = _points(xa, n)
    xb = _points(xb, n)
    K = np.zeros((xa.shape[0], xb.shape[0]))
    for c, comps in enumerate(spec.channels):
        ra = np.flatnonzero(ca == c)
        rb = np.flatnonzero(cb == c)
        if ra.size and rb.size:
            K[np.ix_(ra, rb)] = hsm_kernel_matrix(comps, xa[ra], xb[rb])
    return K


def lmc_matrix(spec, ca, xa, cb, xb):
    n = spec.input_dim
    ca = np.asarray(ca, dtype=int)
    cb = np.asarray(cb, dtype=int)
    xa = _points(xa, n)
    xb = _points(xb, n)
    A = spec.mixing
    K = np.zeros((xa.shape[0], xb.shape[0]))
    for q, comps in enumerate(spec.latents):
        K += np.outer(A[ca, q], A[cb, q]) * hsm_kernel_matrix(comps, xa, xb)
    return K


KERNELS = ("mohsm", "mosm", "hsm", "hsm-lmc")


def kernel_matrix(spec, ca, xa, cb, xb, kernel=None):
    """Dispatch on the kernel family; ``kernel`` defaults from the spec type."""
    kernel = default_kernel(spec) if kernel is None else kernel
    if kernel == "mohsm":
        return mohsm_matrix(spec, ca, xa, cb, xb)
    if kernel == "mosm":
        return mohsm_matrix(spec, ca, xa, cb, xb, stationary=True)
    if kernel == "hsm":
        return hsm_matrix(spec, ca, xa, cb, xb)
    if kernel == "hsm-lmc":
        return lmc_matrix(spec, ca, xa, cb, xb)
    raise InvalidParameterError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def default_kernel(spec):
    if isinstance(spec, KernelSpec):
        return "mohsm"
    if isinstance(spec, HSMSpec):
        return "hsm"
    if isinstance(spec, LMCSpec):
        return "hsm-lmc"
    raise TypeError(f"not a kernel spec: {type(spec).__name__}")


# ---------------------------------------------------------------------------
# scalar evaluation
# ---------------------------------------------------------------------------


def _scalar(spec, x, x_prime, i, j, kernel):
    n = spec.input_dim
    xa = _vec(x, n)[None, :]
    xb = _vec(x_prime, n)[None, :]
    return float(kernel_matrix(spec, [i], xa, [j], xb, kernel=kernel)[0, 0])


def eval_mohsm(spec, x, x_prime, i, j):
    return _scalar(spec, x, x_prime, i, j, "mohsm")


def eval_mosm(spec, x, x_prime, i, j):
    return _scalar(spec, x, x_prime, i, j, "mosm")


def eval_hsm(components, x, x_prime):
    """Single-output HSM kernel; ``components`` is a list of ``HSMComponent``."""
    if isinstance(components, HSMComponent):
        components = [components]
    n = components[0].c.shape[0]
    return float(hsm_kernel_matrix(components, _vec(x, n)[None, :], _vec(x_prime, n)[None, :])[0, 0])


def eval_lmc(mixing, latent_kernels, x, x_prime, i, j):
    mixing = np.atleast_2d(np.asarray(mixing, dtype=float))
    if mixing.shape[1] != len(latent_kernels):
        raise InvalidParameterError(
            f"mixing matrix has {mixing.shape[1]} columns but {len(latent_kernels)} latent kernels were given")
    return float(sum(mixing[i, q] * mixing[j, q] * eval_hsm(k, x, x_prime) for q, k in enumerate(latent_kernels)))

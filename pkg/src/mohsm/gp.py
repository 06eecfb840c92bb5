"""
Exact multi-output GP inference.

Observations from all channels are stacked into one vector and modelled as a
single zero-mean Gaussian whose covariance is the multi-output Gram matrix
plus per-channel observation noise.  Targets are z-scored per channel before
they touch the GP, and predictions are mapped back to data units.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from . import _fast
from .kernels import default_kernel, kernel_matrix, mohsm_gram

LOG_2PI = np.log(2.0 * np.pi)
JITTER_STEPS = 7


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky failed even after the largest jitter on the ladder."""

    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass
class Dataset:
    """Flat multi-output dataset.

    ``channel[k]``, ``x[k]`` and ``y[k]`` describe observation ``k``.  ``y`` is
    always stored in data units; ``mean``/``scale`` hold the per-channel
    normalization used when the data is handed to the GP.
    """

    channel: np.ndarray
    x: np.ndarray
    y: np.ndarray
    channel_names: list
    mean: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=int).reshape(-1)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.channel_names = list(self.channel_names)
        m = len(self.channel_names)
        if not (len(self.channel) == len(self.x) == len(self.y)):
            raise ValueError("channel, x and y must have the same length")
        if self.channel.size and (self.channel.min() < 0 or self.channel.max() >= m):
            raise ValueError(f"channel ids must lie in [0, {m})")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset values must be finite")
        self.mean = np.zeros(m) if self.mean is None else np.asarray(self.mean, dtype=float)
        self.scale = np.ones(m) if self.scale is None else np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("normalization scales must be positive")

    def __len__(self):
        return self.y.shape[0]

    @property
    def n_channels(self):
        return len(self.channel_names)

    @property
    def input_dim(self):
        return self.x.shape[1]

    @property
    def inputs(self):
        return self.channel, self.x

    @property
    def y_normalized(self):
        return self.normalize(self.channel, self.y)

    def normalize(self, channel, values):
        return (values - self.mean[channel]) / self.scale[channel]

    def denormalize(self, channel, values):
        return values * self.scale[channel] + self.mean[channel]

    def subset(self, index):
        index = np.asarray(index)
        return replace(self, channel=self.channel[index], x=self.x[index], y=self.y[index])

    def channel_mask(self, c):
        return self.channel == c

    def fit_normalization(self):
        """Copy with z-score statistics estimated from this dataset."""
        mean = np.zeros(self.n_channels)
        scale = np.ones(self.n_channels)
        for c in range(self.n_channels):
            yc = self.y[self.channel == c]
            if yc.size:
                mean[c] = yc.mean()
            if yc.size > 1 and yc.std() > 0:
                scale[c] = yc.std()
        return replace(self, mean=mean, scale=scale)

    def with_normalization(self, other):
        return replace(self, mean=other.mean.copy(), scale=other.scale.copy())

    def concat(self, other):
        return replace(self, channel=np.concatenate([self.channel, other.channel]),
                       x=np.concatenate([self.x, other.x]), y=np.concatenate([self.y, other.y]))


@dataclass
class CholFactor:
    lower: np.ndarray
    log_det: float
    jitter_used: float

    def solve(self, b):
        return linalg.cho_solve((self.lower, True), b, check_finite=False)


@dataclass
class PosteriorResult:
    mean: np.ndarray
    variance: np.ndarray
    covariance: np.ndarray = None
    clamped: int = 0


def build_gram(spec, rows, cols=None, kernel=None):
    """Multi-output Gram matrix; ``rows``/``cols`` are ``(channels, x)`` pairs."""
    ca, xa = rows
    kernel = default_kernel(spec) if kernel is None else kernel
    if cols is None:
        if kernel in ("mohsm", "mosm"):
            return mohsm_gram(spec, ca, xa, stationary=kernel == "mosm")
        K = kernel_matrix(spec, ca, xa, ca, xa, kernel=kernel)
        return 0.5 * (K + K.T)
    cb, xb = cols
    return kernel_matrix(spec, ca, xa, cb, xb, kernel=kernel)


def factorize(gram, noise_diag=None):
    """Cholesky factor of ``gram + diag(noise_diag**2)`` with a jitter ladder.

    Jitter starts at ``1e-10 * trace / N`` and grows tenfold per failure, for
    at most seven attempts.
    """
    gram = np.asarray(gram, dtype=float)
    n = gram.shape[0]
    A = gram.copy()
    if noise_diag is not None:
        A[np.diag_indices(n)] += np.asarray(noise_diag, dtype=float) ** 2
    base = 1e-10 * max(np.trace(A) / n, np.finfo(float).tiny)
    diag = np.diag_indices(n)
    added = 0.0
    for k in range(JITTER_STEPS):
        jitter = base * 10.0**k
        A[diag] += jitter - added
        added = jitter
        try:
            L = linalg.cholesky(A, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(L)):
            continue
        return CholFactor(L, 2.0 * np.sum(np.log(np.diag(L))), jitter)
    A[diag] -= added
    lam = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0]) if np.all(np.isfinite(A)) else float("nan")
    raise NotPositiveDefiniteError(
        f"matrix not positive definite after jitter {base * 10.0 ** (JITTER_STEPS - 1):.3g} "
        f"(min eigenvalue {lam:.3g})", lam)


def _noise_diag(spec, channels):
    return spec.noise[np.asarray(channels, dtype=int)]


def nll(spec, data, kernel=None):
    """Negative log marginal likelihood of the normalized targets."""
    K = build_gram(spec, data.inputs, kernel=kernel)
    chol = factorize(K, _noise_diag(spec, data.channel))
    y = data.y_normalized
    a = chol.solve(y)
    return 0.5 * y @ a + 0.5 * chol.log_det + 0.5 * len(y) * LOG_2PI


def nll_and_adjoint(K, noise_diag, y):
    """NLL together with ``dNLL/dK = (K_y^{-1} - a a^T) / 2``.

    The adjoint treats every entry of ``K`` as an independent variable, so a
    hyperparameter gradient is ``sum(G * dK/dtheta)``.
    """
    chol = factorize(K, noise_diag)
    a = chol.solve(y)
    value = 0.5 * y @ a + 0.5 * chol.log_det + 0.5 * len(y) * LOG_2PI
    Kinv, info = lapack.dpotri(chol.lower, lower=1)
    if info != 0:
        Kinv = chol.solve(np.eye(len(y)))
    G = _fast.nll_adjoint(Kinv, a)
    return value, G, chol


def posterior(spec, data, queries, kernel=None, full_cov=False):
    """Posterior of the latent function at ``queries`` in data units."""
    qc, qx = queries
    qc = np.asarray(qc, dtype=int)
    K = build_gram(spec, data.inputs, kernel=kernel)
    chol = factorize(K, _noise_diag(spec, data.channel))
    Ks = build_gram(spec, data.inputs, (qc, qx), kernel=kernel)
    a = chol.solve(data.y_normalized)
    mean = Ks.T @ a
    v = linalg.solve_triangular(chol.lower, Ks, lower=True, check_finite=False)
    if full_cov:
        cov = build_gram(spec, (qc, qx), kernel=kernel) - v.T @ v
        var = np.diag(cov).copy()
    else:
        cov = None
        var = _prior_diag(spec, qc, qx, kernel) - np.sum(v**2, axis=0)
    clamped = int(np.sum(var < 0))
    var = np.maximum(var, 0.0)
    scale = data.scale[qc]
    if cov is not None:
        cov = cov * np.outer(scale, scale)
    return PosteriorResult(data.denormalize(qc, mean), var * scale**2, cov, clamped)


def _prior_diag(spec, qc, qx, kernel):
    qx = np.asarray(qx, dtype=float).reshape(len(qc), -1)
    out = np.empty(len(qc))
    for k in range(len(qc)):
        out[k] = build_gram(spec, (qc[k:k + 1], qx[k:k + 1]), kernel=kernel)[0, 0]
    return out


def sample_gaussian(gram, seed):
    """One draw from ``N(0, gram + 1e-8 I)``, deterministic in ``seed``."""
    chol = factorize(gram, np.full(gram.shape[0], 1e-4))
    rng = np.random.default_rng(seed)
    return chol.lower @ rng.standard_normal(gram.shape[0])


def sample_prior(spec, inputs, seed, kernel=None):
    return sample_gaussian(build_gram(spec, inputs, kernel=kernel), seed)

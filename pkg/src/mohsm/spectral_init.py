"""
Data-driven initial values for the spectral kernels.

Windows are placed at equidistant centres across the input range.  In each
window a weighted Lomb-Scargle periodogram of every channel is computed, its
dominant peaks become mixture frequencies, the peak widths become spectral
variances, and the weights are set so that the prior variance at the window
centre matches the data variance.  Delays and phases always start at zero.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .gp import NotPositiveDefiniteError, build_gram, factorize
from .kernels import TWO_PI, HSMComponent, HSMSpec, KernelSpec, LMCSpec, ShiftGroup

log = logging.getLogger(__name__)

PEAK_SEPARATION = 2  # grid bins
PEAK_PROMINENCE = 20.0  # peak power over median power
OVERSAMPLING = 4
MAX_BINS = 20000


@dataclass
class PeriodogramResult:
    freqs: np.ndarray
    power: np.ndarray
    window_id: int = 0
    channel: int = 0


def place_centers(input_range, P):
    """Equidistant window centres and the matching frequency lengthscale.

    ``input_range`` is ``(lo, hi)`` with scalars or per-dimension vectors.
    Returns ``(centers, ell)`` where ``centers`` is ``(P, n)`` and ``1 / ell``
    equals the spacing between neighbouring centres (the half-range when
    ``P == 1``).
    """
    if P < 1:
        raise ValueError(f"P must be at least 1, got {P}")
    lo = np.atleast_1d(np.asarray(input_range[0], dtype=float))
    hi = np.atleast_1d(np.asarray(input_range[1], dtype=float))
    if np.any(hi <= lo):
        raise ValueError("input range must satisfy max > min")
    if P == 1:
        return ((lo + hi) / 2)[None, :], 1.0 / float(np.max(hi - lo) / 2)
    t = np.linspace(0.0, 1.0, P)[:, None]
    spacing = float(np.max(hi - lo)) / (P - 1)
    return lo + t * (hi - lo), 1.0 / spacing


def frequency_grid(x):
    """Angular frequency grid: oversampled by 4 against the record length,
    capped at the Nyquist rate of the median sample spacing."""
    x = np.sort(np.asarray(x, dtype=float).reshape(-1))
    span = x[-1] - x[0]
    if span <= 0:
        raise ValueError("inputs are all equal")
    dx = np.diff(x)
    dx = dx[dx > 0]
    step = TWO_PI / (OVERSAMPLING * span)
    nyquist = np.pi / np.median(dx)
    count = min(MAX_BINS, max(int(nyquist / step), 8))
    return step * np.arange(1, count + 1)


def lomb_scargle(x, y, freq_grid, weights=None, window_id=0, channel=0):
    """Normalized Lomb-Scargle periodogram on an angular frequency grid.

    Values are measured against a zero baseline, so a constant signal puts its
    power at the lowest frequencies.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    freq_grid = np.asarray(freq_grid, dtype=float)
    if x.size < 4:
        raise ValueError(f"periodogram needs at least 4 points, got {x.size}")
    if np.ptp(x) == 0:
        raise ValueError("inputs are all equal")
    if not np.any(y):
        raise ValueError("signal is identically zero")
    power = signal.lombscargle(x, y, freq_grid, normalize=True, weights=weights)
    return PeriodogramResult(freq_grid, np.maximum(power, 0.0), window_id, channel)


def _half_width(pg, k):
    half = pg.power[k] / 2
    f, p = pg.freqs, pg.power

    def walk(direction):
        j = k
        while 0 <= j + direction < len(p) and p[j + direction] > half:
            j += direction
        nxt = j + direction
        if not 0 <= nxt < len(p):
            return abs(f[j] - f[k])
        # linear interpolation of the half-power crossing
        frac = (p[j] - half) / (p[j] - p[nxt])
        return abs(f[j] + frac * (f[nxt] - f[j]) - f[k])

    return 0.5 * (walk(-1) + walk(1))


def pick_peaks(pg, Q):
    """Greedy choice of up to ``Q`` dominant, well-separated peaks.

    Returns ``(indices, half_widths)``; fewer than ``Q`` entries means the
    spectrum has no further distinguishable peaks.
    """
    p = pg.power
    local = np.flatnonzero(np.r_[p[0] > p[1], (p[1:-1] >= p[:-2]) & (p[1:-1] >= p[2:]), p[-1] > p[-2]])
    floor = PEAK_PROMINENCE * max(np.median(p), 1e-300)
    chosen = []
    for k in local[np.argsort(-p[local], kind="stable")]:
        if len(chosen) == Q or p[k] < floor:
            break
        if all(abs(k - c) > PEAK_SEPARATION for c in chosen):
            chosen.append(int(k))
    return chosen, [_half_width(pg, k) for k in chosen]


@dataclass
class _Peaks:
    mu: np.ndarray  # (Q,)
    sigma: np.ndarray  # (Q,)
    share: np.ndarray  # (Q,) fraction of the channel variance
    found: int


def _channel_peaks(x, y, weights, Q, window_id, channel, dump):
    grid = frequency_grid(x)
    nyquist = grid[-1]
    floor = (0.01 * nyquist) ** 2
    mu = np.empty(Q)
    sigma = np.full(Q, floor)
    share = np.zeros(Q)
    try:
        pg = lomb_scargle(x, y, grid, weights=weights, window_id=window_id, channel=channel)
    except ValueError:
        pg = None
    chosen, widths = pick_peaks(pg, Q) if pg is not None else ([], [])
    if dump is not None and pg is not None:
        dump.append(pg)
    if chosen:
        power = pg.power[chosen]
        mu[: len(chosen)] = pg.freqs[chosen]
        sigma[: len(chosen)] = np.maximum(np.square(widths), floor)
        share[: len(chosen)] = power / power.sum()
    for r in range(len(chosen), Q):
        mu[r] = nyquist * (r + 1) / (Q + 1)
    return _Peaks(mu, sigma, share, len(chosen))


def _window_weights(x, center, ell):
    return np.exp(-0.5 * ell**2 * np.sum((x - center) ** 2, axis=-1))


def _channel_data(data, c):
    mask = data.channel == c
    y = data.y_normalized[mask]
    return data.x[mask], y - y.mean() if y.size else y, y.std() if y.size > 1 else 1.0


def _spectral_seeds(data, P, Q, dump):
    """Per-window, per-channel peaks: ``seeds[p][c]`` plus centres and ell."""
    lo, hi = data.x.min(axis=0), data.x.max(axis=0)
    centers, ell = place_centers((lo, hi), P)
    seeds = []
    for p in range(P):
        row = []
        for c in range(data.n_channels):
            x, y, std = _channel_data(data, c)
            if x.shape[0] < 4:
                raise ValueError(f"channel {data.channel_names[c]!r} has fewer than 4 points")
            wts = _window_weights(x, centers[p], ell) if P > 1 else None
            row.append((_channel_peaks(x[:, 0], y, wts, Q, p, c, dump), std))
        seeds.append(row)
    return centers, ell, seeds


def _amplitudes(peaks, std, norm):
    """Weights so the prior variance of the chosen peaks matches ``std**2``."""
    w = np.full(peaks.mu.shape, 0.01 * std)
    k = peaks.found
    if k:
        w[:k] = np.sqrt(std**2 * peaks.share[:k] / norm[:k])
    return w


def init_spec(data, P, Q, kernel="mohsm", periodograms=None):
    """Initial spec for ``kernel`` from the (normalized) training data.

    ``periodograms``, if a list, receives every ``PeriodogramResult`` computed.
    """
    if kernel == "mosm":
        P = 1
    centers, ell, seeds = _spectral_seeds(data, P, Q, periodograms)
    M, n = data.n_channels, data.input_dim
    noise = np.array([0.1 * std for _, std in seeds[0]])
    if kernel in ("mohsm", "mosm"):
        shifts = []
        for p in range(P):
            w = np.empty((Q, M))
            mu = np.empty((Q, M, n))
            sig = np.empty((Q, M, n))
            for c, (pk, std) in enumerate(seeds[p]):
                mu[:, c, :] = pk.mu[:, None]
                sig[:, c, :] = pk.sigma[:, None]
                if kernel == "mosm":
                    norm = TWO_PI ** (n / 2) * np.sqrt(pk.sigma**n)
                else:
                    norm = TWO_PI**n * np.sqrt(pk.sigma**n) * ell**n
                w[:, c] = _amplitudes(pk, std, norm)
            shifts.append(ShiftGroup(
                center=centers[p], ell=np.full(M, 0.0 if kernel == "mosm" else ell), w=w, mu=mu, sigma=sig,
                theta=np.zeros((Q, M, n)), phi=np.zeros((Q, M))))
        return ensure_factorizable(KernelSpec(shifts, noise), data, kernel)
    if kernel == "hsm":
        channels = []
        for c in range(M):
            comps = []
            for p in range(P):
                pk, std = seeds[p][c]
                amp = _amplitudes(pk, std, np.ones(Q)) ** 2
                comps += [HSMComponent(amp[q], 1.0 / ell, centers[p], np.full(n, pk.sigma[q]), np.full(n, pk.mu[q]))
                          for q in range(Q)]
            channels.append(comps)
        return HSMSpec(channels, noise)
    if kernel == "hsm-lmc":
        latents, cols = [], []
        for p in range(P):
            for q in range(Q):
                mus = np.array([seeds[p][c][0].mu[q] for c in range(M)])
                sigs = np.array([seeds[p][c][0].sigma[q] for c in range(M)])
                latents.append([HSMComponent(1.0, 1.0 / ell, centers[p], np.full(n, np.median(sigs)),
                                             np.full(n, np.median(mus)))])
                cols.append([_amplitudes(seeds[p][c][0], seeds[p][c][1], np.ones(Q))[q] for c in range(M)])
        return LMCSpec(np.array(cols).T, latents, noise)
    raise ValueError(f"unknown kernel {kernel!r}")


def ensure_factorizable(spec, data, kernel):
    """Raise the noise of ``spec`` until its training covariance factorizes.

    The multi-output closed form is not positive semidefinite for every
    parameter setting, so a seed can produce an indefinite Gram matrix.  The
    noise is lifted to cover the most negative eigenvalue plus the original
    noise variance; the spec is returned unchanged when no lift is needed.
    """
    K = build_gram(spec, data.inputs, kernel=kernel)
    try:
        factorize(K, spec.noise[data.channel])
        return spec
    except NotPositiveDefiniteError:
        pass
    lam = float(np.linalg.eigvalsh(K)[0])
    out = spec.copy()
    out.noise = np.sqrt(spec.noise**2 + 1.1 * max(-lam, 0.0))
    log.warning("initial Gram matrix is indefinite (min eigenvalue %.3g); noise raised from %s to %s",
                lam, np.round(spec.noise, 4), np.round(out.noise, 4))
    factorize(K, out.noise[data.channel])
    return out

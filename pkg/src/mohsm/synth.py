"""
Synthetic derivative/delay benchmark.

A nonstationary GP sample ``f``, its derivative ``f'`` and a delayed copy
``f(x - d)`` are jointly Gaussian with a covariance that follows from the
generator kernel alone.  Models are trained on a masked, split draw and
scored by the correlation matrix distance between their Gram matrix and the
exact one.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .gp import Dataset, build_gram, sample_gaussian
from .kernels import HSMComponent, hsm_kernel_matrix
from .metrics import MetricReport, cmd
from .spectral_init import init_spec
from .train import optimize

log = logging.getLogger(__name__)

CHANNELS = ("f", "derivative", "delayed")
METHODS = ("mosm", "hsm", "hsm-lmc", "mohsm")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _default_generator():
    return [
        {"w": 1.0, "l": 10.0, "c": [-20.0], "sigma": [0.25], "mu": [1.5]},
        {"w": 1.0, "l": 10.0, "c": [20.0], "sigma": [0.25], "mu": [4.0]},
    ]


@dataclass
class SynthConfig:
    n_points: int = 500
    range: tuple = (-20.0, 20.0)
    generator: list = field(default_factory=_default_generator)
    delay: float = 2.0
    derivative_step: float = None  # defaults to 1e-4 of the range width
    mask_derivative: tuple = (-10.0, -5.0)
    mask_delayed: tuple = (-5.0, 5.0)
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        self.range = tuple(float(v) for v in self.range)
        self.mask_derivative = tuple(float(v) for v in self.mask_derivative)
        self.mask_delayed = tuple(float(v) for v in self.mask_delayed)
        if self.derivative_step is None:
            self.derivative_step = 1e-4 * (self.range[1] - self.range[0])
        self.validate()

    def validate(self):
        lo, hi = self.range
        if not hi > lo:
            raise ConfigError("range", f"expected min < max, got {self.range}")
        if int(self.n_points) < 4:
            raise ConfigError("n_points", "need at least 4 points")
        for name in ("mask_derivative", "mask_delayed"):
            a, b = getattr(self, name)
            if not (lo <= a <= b <= hi):
                raise ConfigError(name, f"interval {(a, b)} must be ordered and inside {self.range}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction", "must lie strictly between 0 and 1")
        if not self.derivative_step > 0:
            raise ConfigError("derivative_step", "must be positive")
        try:
            self.generator_components()
        except (TypeError, ValueError, KeyError) as err:
            raise ConfigError("generator", str(err)) from err

    def generator_components(self):
        return [HSMComponent(**c) for c in self.generator]

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError("config", str(err)) from err

    def to_dict(self):
        return asdict(self)


# per channel: (derivative order, input shift)
def _channel_ops(delay):
    return np.array([0, 1, 0]), np.array([0.0, 0.0, delay])


def ground_truth_gram(components, delay, rows, cols=None, step=4e-3):
    """Joint covariance of ``(f, f', f(. - delay))`` at the given inputs.

    Derivatives are central differences of the closed-form generator kernel.
    """
    ca, xa = rows
    cb, xb = rows if cols is None else cols
    ca = np.asarray(ca, dtype=int)
    cb = np.asarray(cb, dtype=int)
    xa = np.asarray(xa, dtype=float).reshape(len(ca), -1)
    xb = np.asarray(xb, dtype=float).reshape(len(cb), -1)
    order, shift = _channel_ops(delay)

    def stencil(c, x):
        # two-point stencil per input; order-0 rows use two equal halves
        o = order[c][:, None]
        base = x[:, 0] - shift[c]
        off = np.where(o == 1, np.array([[step, -step]]), 0.0)
        coef = np.where(o == 1, np.array([[1.0, -1.0]]) / (2 * step), 0.5)
        return base[:, None] + off, coef

    pa, wa = stencil(ca, xa)
    pb, wb = stencil(cb, xb)
    K = np.zeros((len(ca), len(cb)))
    for u in range(2):
        for v in range(2):
            k = hsm_kernel_matrix(components, pa[:, u:u + 1], pb[:, v:v + 1])
            K += wa[:, u:u + 1] * wb[:, v][None, :] * k
    if cols is None:
        K = 0.5 * (K + K.T)
    return K


@dataclass
class SynthResult:
    train: Dataset
    test: Dataset
    masked: Dataset
    gram: np.ndarray  # exact covariance over all points
    train_index: np.ndarray
    test_index: np.ndarray
    masked_index: np.ndarray

    @property
    def train_gram(self):
        return self.gram[np.ix_(self.train_index, self.train_index)]

    @property
    def evaluation(self):
        """Held-out points including the imputation regions."""
        return self.test.concat(self.masked)


def generate(config):
    config.validate()
    x = np.linspace(config.range[0], config.range[1], int(config.n_points))
    channel = np.repeat(np.arange(3), x.size)
    xs = np.tile(x, 3)
    gram = ground_truth_gram(config.generator_components(), config.delay, (channel, xs[:, None]),
                             step=config.derivative_step)
    y = sample_gaussian(gram, config.seed)

    def inside(c, interval):
        return (channel == c) & (xs >= interval[0]) & (xs <= interval[1])

    masked = inside(1, config.mask_derivative) | inside(2, config.mask_delayed)
    masked_index = np.flatnonzero(masked)
    pool = np.flatnonzero(~masked)
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(pool)
    n_train = int(round(config.train_fraction * pool.size))
    train_index = np.sort(perm[:n_train])
    test_index = np.sort(perm[n_train:])
    full = Dataset(channel, xs[:, None], y, list(CHANNELS))
    return SynthResult(full.subset(train_index), full.subset(test_index), full.subset(masked_index), gram,
                       train_index, test_index, masked_index)


@dataclass
class BenchmarkSettings:
    P: int = 2
    Q: int = 1
    mosm_Q: int = 2
    max_iters: int = 500
    lr: float = 0.02
    algorithm: str = "adam"


def trained_gram(spec, kernel, data):
    """Trained model covariance over the training inputs in data units."""
    K = build_gram(spec, data.inputs, kernel=kernel)
    s = data.scale[data.channel]
    return K * np.outer(s, s)


def fit_method(method, train, settings):
    Q = settings.mosm_Q if method == "mosm" else settings.Q
    P = 1 if method == "mosm" else settings.P
    init = init_spec(train, P, Q, kernel=method)
    return optimize(init, train, kernel=method, max_iters=settings.max_iters, lr=settings.lr,
                    algorithm=settings.algorithm)


def run_trial(config, methods, settings, seed):
    cfg = SynthConfig.from_dict({**config.to_dict(), "seed": seed})
    res = generate(cfg)
    train = res.train.fit_normalization()
    truth = res.train_gram
    out = {}
    for method in methods:
        spec, report = fit_method(method, train, settings)
        out[method] = {"cmd": cmd(trained_gram(spec, method, train), truth), "nll": report.final_nll,
                       "spec": spec, "report": report}
        log.info("seed %d %s: cmd %.3f", seed, method, out[method]["cmd"])
    return res, out


def run_benchmark(config, methods=METHODS, trials=5, settings=None, on_trial=None):
    """CMD of each method against the exact covariance over ``trials`` seeds.

    Failed trials are logged and skipped; the report is then flagged
    incomplete.  ``on_trial(seed, result, fits)`` is called after each
    successful trial.  Returns ``(MetricReport, per_trial)``.
    """
    settings = settings or BenchmarkSettings()
    bad = set(methods) - set(METHODS)
    if bad:
        raise ConfigError("methods", f"unknown methods {sorted(bad)}")
    values = {m: [] for m in methods}
    per_trial = []
    incomplete = False
    for t in range(trials):
        seed = config.seed + t
        try:
            res, out = run_trial(config, methods, settings, seed)
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as err:
            log.warning("trial %d (seed %d) failed: %s", t, seed, err)
            incomplete = True
            per_trial.append({"seed": seed, "error": str(err)})
            continue
        if on_trial is not None:
            on_trial(seed, res, out)
        per_trial.append({"seed": seed, **{m: out[m]["cmd"] for m in methods}})
        for m in methods:
            values[m].append(out[m]["cmd"])
    report = MetricReport(incomplete=incomplete)
    for m in methods:
        report.add(m, "cmd", "overall", values[m])
    return report, per_trial

import numpy as np
import pytest

from mohsm.gp import Dataset
from mohsm.kernels import HSMComponent, HSMSpec, KernelSpec, LMCSpec, ShiftGroup


def random_group(rng, M, Q, n=1, ell=(0.05, 0.5), center=(-3.0, 3.0)):
    return ShiftGroup(
        center=rng.uniform(*center, n),
        ell=rng.uniform(*ell, M),
        w=rng.uniform(0.5, 1.5, (Q, M)),
        mu=rng.uniform(0.0, 3.0, (Q, M, n)),
        sigma=rng.uniform(0.5, 2.0, (Q, M, n)),
        theta=rng.normal(0.0, 0.3, (Q, M, n)),
        phi=rng.uniform(-1.0, 1.0, (Q, M)),
    )


def random_spec(rng, M=2, P=2, Q=2, n=1, **kw):
    return KernelSpec([random_group(rng, M, Q, n, **kw) for _ in range(P)], rng.uniform(0.1, 0.3, M))


def random_component(rng, n=1):
    return HSMComponent(w=rng.uniform(0.5, 1.5), l=rng.uniform(1.0, 4.0), c=rng.uniform(-2, 2, n),
                        sigma=rng.uniform(0.5, 2.0, n), mu=rng.uniform(0.0, 3.0, n))


def random_hsm(rng, M=2, Q=2, n=1):
    return HSMSpec([[random_component(rng, n) for _ in range(Q)] for _ in range(M)], rng.uniform(0.1, 0.3, M))


def random_lmc(rng, M=2, Q=2, R=1, n=1):
    return LMCSpec(rng.normal(size=(M, Q)), [[random_component(rng, n) for _ in range(R)] for _ in range(Q)],
                   rng.uniform(0.1, 0.3, M))


def random_data(rng, M=2, N=20, n=1, lo=-3.0, hi=3.0):
    channel = np.arange(N) % M
    x = rng.uniform(lo, hi, (N, n))
    y = np.sin(x[:, 0] * (1 + channel)) + 0.1 * rng.standard_normal(N)
    return Dataset(channel, x, y, [f"c{k}" for k in range(M)]).fit_normalization()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])

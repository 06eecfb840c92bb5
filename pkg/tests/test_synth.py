import numpy as np
import pytest

from mohsm.gp import sample_gaussian
from mohsm.kernels import HSMComponent
from mohsm.synth import (BenchmarkSettings, ConfigError, SynthConfig, generate, ground_truth_gram,
                         run_benchmark)

FLAT = [HSMComponent(w=1.0, l=1e12, c=[0.0], sigma=[1.0], mu=[0.0])]


def small_config(**kw):
    return SynthConfig(n_points=kw.pop("n_points", 60), **kw)


def _block(components, delay, a, b, xa, xb, step=1e-4):
    return ground_truth_gram(components, delay, (np.full(len(xa), a), np.asarray(xa)[:, None]),
                             (np.full(len(xb), b), np.asarray(xb)[:, None]), step=step)


def test_zero_delay_copies_first_channel():
    x = np.linspace(-3, 3, 7)
    comps = small_config().generator_components()
    np.testing.assert_array_equal(_block(comps, 0.0, 2, 2, x, x), _block(comps, 0.0, 0, 0, x, x))
    np.testing.assert_array_equal(_block(comps, 0.0, 0, 2, x, x), _block(comps, 0.0, 0, 0, x, x))


def test_stationary_slope_zero_at_origin():
    x = np.array([0.3, -1.2])
    d = np.diag(_block(FLAT, 2.0, 0, 1, x, x))
    np.testing.assert_allclose(d, 0.0, atol=1e-10)


def test_second_derivative_unit_gaussian():
    assert _block(FLAT, 2.0, 1, 1, [0.4], [0.4])[0, 0] == pytest.approx(1.0, rel=1e-6)
    tau = 0.7
    ref = (1 - tau**2) * np.exp(-tau**2 / 2)
    assert _block(FLAT, 2.0, 1, 1, [tau], [0.0])[0, 0] == pytest.approx(ref, rel=1e-6)


def test_delay_block_is_shifted_kernel():
    x = np.array([0.0, 1.0, 2.5])
    comps = small_config().generator_components()
    K = _block(comps, 2.0, 0, 2, x, x)
    np.testing.assert_allclose(K, _block(comps, 0.0, 0, 0, x, x - 2.0), rtol=1e-14)


def test_truth_gram_symmetric_psd():
    res = generate(small_config(n_points=200))
    K = res.gram
    assert np.array_equal(K, K.T)
    lam = np.linalg.eigvalsh(K)[0]
    assert lam >= -1e-6 * np.trace(K) / K.shape[0]


def test_generate_deterministic():
    a = generate(small_config(seed=3))
    b = generate(small_config(seed=3))
    for f in ("train", "test", "masked"):
        assert np.array_equal(getattr(a, f).y, getattr(b, f).y)
        assert np.array_equal(getattr(a, f).x, getattr(b, f).x)
    assert not np.array_equal(a.train.y, generate(small_config(seed=4)).train.y)


def test_masks_exclude_training_points():
    cfg = small_config(n_points=200)
    res = generate(cfg)
    for c, (lo, hi) in [(1, cfg.mask_derivative), (2, cfg.mask_delayed)]:
        for d in (res.train, res.test):
            x = d.x[d.channel == c, 0]
            assert not np.any((x >= lo) & (x <= hi))
        xm = res.masked.x[res.masked.channel == c, 0]
        assert np.all((xm >= lo) & (xm <= hi)) and xm.size > 0
    assert len(res.train) + len(res.test) + len(res.masked) == 600
    pool = len(res.train) + len(res.test)
    assert len(res.train) == round(0.7 * pool)


def test_derivative_channel_consistent():
    cfg = small_config(n_points=2001, range=(-20.0, 20.0), mask_derivative=(0.0, 0.0), mask_delayed=(0.0, 0.0))
    res = generate(cfg)
    y = np.empty(res.gram.shape[0])
    for d, idx in [(res.train, res.train_index), (res.test, res.test_index), (res.masked, res.masked_index)]:
        y[idx] = d.y
    f, fp = y[:2001], y[2001:4002]
    x = np.linspace(-20, 20, 2001)
    h = x[1] - x[0]
    fd = (f[2:] - f[:-2]) / (2 * h)
    # tolerance from the third derivative scale of the generator (mu up to 4) and the grid step
    err = np.abs(fd - fp[1:-1])
    assert np.max(err) < 10 * h**2 * 4.0**3 * np.max(np.abs(fp)) + 1e-3


def test_empirical_variance_matches_diagonal():
    # one draw has only a few effective degrees of freedom (spread about 30%), so average 50 seeded draws
    res = generate(small_config(n_points=500))
    K = res.gram
    draws = np.array([sample_gaussian(K, seed) for seed in range(50)])
    for c in range(3):
        sl = slice(c * 500, (c + 1) * 500)
        assert np.mean(draws[:, sl] ** 2) == pytest.approx(np.mean(np.diag(K)[sl]), rel=0.15)


@pytest.mark.parametrize("bad", [{"range": (1.0, 0.0)}, {"mask_delayed": (5.0, -5.0)}, {"train_fraction": 1.5},
                                 {"n_points": 2}, {"generator": [{"w": 1.0}]}, {"mask_derivative": (-30.0, 0.0)}])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        SynthConfig(**bad)


def test_config_unknown_field():
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"n_points": 10, "bogus": 1})
    cfg = SynthConfig.from_dict(SynthConfig().to_dict())
    assert cfg == SynthConfig()


def test_benchmark_single_trial_deterministic():
    cfg = small_config(n_points=40)
    settings = BenchmarkSettings(max_iters=5)
    a, pa = run_benchmark(cfg, methods=["mohsm", "mosm"], trials=1, settings=settings)
    b, pb = run_benchmark(cfg, methods=["mohsm", "mosm"], trials=1, settings=settings)
    assert a.to_json() == b.to_json()
    assert pa == pb
    assert not a.incomplete
    with pytest.raises(ConfigError):
        run_benchmark(cfg, methods=["gpr"], trials=1)

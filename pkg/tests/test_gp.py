import numpy as np
import pytest

from mohsm.gp import (Dataset, NotPositiveDefiniteError, build_gram, factorize, nll, posterior,
                      sample_gaussian, sample_prior)
from mohsm.kernels import KernelSpec, ShiftGroup, eval_mohsm

from conftest import random_data, random_spec


def one_channel_spec(w=1.0, noise=0.1, ell=0.1, center=0.0):
    g = ShiftGroup(center=[center], ell=[ell], w=[[w]], mu=[1.0], sigma=[1.0], theta=[0.0], phi=[[0.0]])
    return KernelSpec([g], [noise])


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset([0, 2], [0.0, 1.0], [1.0, 2.0], ["a", "b"])
    with pytest.raises(ValueError):
        Dataset([0], [np.nan], [1.0], ["a"])
    with pytest.raises(ValueError):
        Dataset([0], [0.0], [1.0], ["a"], mean=[0.0], scale=[0.0])


def test_normalization_round_trip(rng):
    d = random_data(rng, M=3, N=30)
    z = d.normalize(d.channel, d.y)
    np.testing.assert_allclose(d.denormalize(d.channel, z), d.y, rtol=0, atol=1e-12)
    for c in range(3):
        assert z[d.channel == c].mean() == pytest.approx(0.0, abs=1e-12)
        assert z[d.channel == c].std() == pytest.approx(1.0, rel=1e-12)


def test_gram_symmetric_exactly(rng):
    s = random_spec(rng)
    d = random_data(rng, N=25)
    K = build_gram(s, d.inputs)
    assert np.array_equal(K, K.T)


def test_gram_single_point():
    s = one_channel_spec()
    K = build_gram(s, (np.array([0]), np.array([[0.4]])))
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(eval_mohsm(s, 0.4, 0.4, 0, 0), rel=1e-14)


def test_gram_rectangular_matches_pointwise(rng):
    s = random_spec(rng)
    d = random_data(rng, N=8)
    K = build_gram(s, d.inputs, (d.channel[:3], d.x[:3]))
    for a in range(8):
        for b in range(3):
            ref = eval_mohsm(s, d.x[a], d.x[b], d.channel[a], d.channel[b])
            assert K[a, b] == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_gram_shared_window_psd(rng):
    # shared channel windows with sigma above ell^2 / 4 keep the Gram PSD
    s = random_spec(rng, ell=(0.2, 0.2))
    d = random_data(rng, N=30)
    K = build_gram(s, d.inputs)
    lam = np.linalg.eigvalsh(K)[0]
    assert lam >= -1e-8 * np.trace(K) / 30


def test_factorize_identity():
    f = factorize(np.eye(4), np.zeros(4))
    np.testing.assert_allclose(f.lower, np.eye(4), atol=1e-9)
    assert f.log_det == pytest.approx(0.0, abs=1e-8)


def test_factorize_scalar():
    f = factorize(np.array([[4.0]]))
    assert f.lower[0, 0] == pytest.approx(2.0, rel=1e-9)
    assert f.log_det == pytest.approx(np.log(4.0), rel=1e-9)


def test_factorize_reconstruction(rng):
    A = rng.normal(size=(10, 10))
    K = A.T @ A
    noise = rng.uniform(0.1, 0.2, 10)
    f = factorize(K, noise)
    target = K + np.diag(noise**2 + f.jitter_used)
    err = np.linalg.norm(f.lower @ f.lower.T - target) / np.linalg.norm(target)
    assert err < 1e-10
    assert f.log_det == pytest.approx(np.linalg.slogdet(target)[1], rel=1e-10)


def test_factorize_jitter_ladder():
    # rank deficient needs some jitter but succeeds
    v = np.array([1.0, 2.0, 3.0])
    f = factorize(np.outer(v, v))
    assert f.jitter_used > 0
    assert f.jitter_used <= 1e-10 * 14 / 3 * 1e6 * (1 + 1e-12)


def test_factorize_fails_with_eigenvalue():
    K = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        factorize(K)
    assert info.value.min_eigenvalue == pytest.approx(-1.0)


def test_nll_one_point():
    s = one_channel_spec(noise=0.5)
    kxx = eval_mohsm(s, 0.0, 0.0, 0, 0)
    s.noise[:] = np.sqrt(1.0 - kxx)
    d0 = Dataset([0], [0.0], [0.0], ["a"])
    d2 = Dataset([0], [0.0], [2.0], ["a"])
    assert nll(s, d0) == pytest.approx(0.5 * np.log(2 * np.pi), rel=1e-8)
    assert nll(s, d0) == pytest.approx(0.918939, abs=1e-6)
    assert nll(s, d2) == pytest.approx(0.5 * np.log(2 * np.pi) + 2.0, rel=1e-8)


def test_nll_two_points_bivariate():
    s = one_channel_spec(noise=0.3)
    x = np.array([0.0, 0.7])
    y = np.array([0.4, -0.9])
    d = Dataset([0, 0], x, y, ["a"])
    k11, k22 = eval_mohsm(s, x[0], x[0], 0, 0) + 0.09, eval_mohsm(s, x[1], x[1], 0, 0) + 0.09
    k12 = eval_mohsm(s, x[0], x[1], 0, 0)
    det = k11 * k22 - k12**2
    quad = (k22 * y[0] ** 2 - 2 * k12 * y[0] * y[1] + k11 * y[1] ** 2) / det
    ref = np.log(2 * np.pi) + 0.5 * np.log(det) + 0.5 * quad
    assert nll(s, d) == pytest.approx(ref, rel=1e-10)


def test_nll_frozen(rng):
    s = random_spec(rng, ell=(0.2, 0.2))
    d = random_data(rng, N=20)
    assert nll(s, d) == pytest.approx(25.471512419591036, rel=1e-10)


def test_posterior_interpolates():
    s = one_channel_spec(noise=1e-6)
    d = Dataset([0, 0, 0], [-0.5, 0.0, 0.8], [0.3, -0.2, 0.5], ["a"])
    r = posterior(s, d, (np.array([0]), np.array([[0.0]])))
    assert r.mean[0] == pytest.approx(-0.2, abs=1e-4)
    assert r.variance[0] < 1e-4 * eval_mohsm(s, 0.0, 0.0, 0, 0)


def test_posterior_far_query_reverts_to_prior():
    s = one_channel_spec(ell=1.0)
    d = Dataset([0, 0], [-0.5, 0.5], [1.0, 2.0], ["a"]).fit_normalization()
    r = posterior(s, d, (np.array([0]), np.array([[60.0]])))
    assert r.mean[0] == pytest.approx(d.mean[0], abs=1e-12)
    prior = eval_mohsm(s, 60.0, 60.0, 0, 0) * d.scale[0] ** 2
    assert r.variance[0] == pytest.approx(prior, rel=1e-9, abs=1e-300)


def test_posterior_single_point_formula():
    s = one_channel_spec(noise=0.4)
    d = Dataset([0], [0.2], [1.5], ["a"])
    xq = 0.9
    r = posterior(s, d, (np.array([0]), np.array([[xq]])))
    k = eval_mohsm(s, 0.2, 0.2, 0, 0) + 0.16
    ks = eval_mohsm(s, 0.2, xq, 0, 0)
    kss = eval_mohsm(s, xq, xq, 0, 0)
    # the jitter ladder adds 1e-10 relative to the diagonal
    assert r.mean[0] == pytest.approx(ks / k * 1.5, rel=1e-9)
    assert r.variance[0] == pytest.approx(kss - ks**2 / k, rel=1e-9)


def test_posterior_variance_bounded_by_prior(rng):
    s = random_spec(rng, ell=(0.2, 0.2))
    d = random_data(rng, N=30).fit_normalization()
    qc = np.arange(40) % 2
    qx = rng.uniform(-4, 4, (40, 1))
    r = posterior(s, d, (qc, qx))
    prior = np.array([eval_mohsm(s, qx[k], qx[k], qc[k], qc[k]) for k in range(40)]) * d.scale[qc] ** 2
    assert np.all(r.variance <= prior + 1e-8)
    assert np.all(r.variance >= 0)


def test_posterior_full_cov_consistent(rng):
    s = random_spec(rng, ell=(0.2, 0.2))
    d = random_data(rng, N=20)
    q = (np.array([0, 1, 0]), np.array([[0.1], [0.5], [2.0]]))
    a = posterior(s, d, q)
    b = posterior(s, d, q, full_cov=True)
    np.testing.assert_allclose(np.diag(b.covariance), a.variance, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(b.mean, a.mean, rtol=1e-12)


def test_posterior_permutation_invariant(rng):
    s = random_spec(rng, ell=(0.2, 0.2))
    d = random_data(rng, N=25)
    q = (np.array([0, 1]), np.array([[0.3], [-1.2]]))
    a = posterior(s, d, q)
    b = posterior(s, d.subset(rng.permutation(25)), q)
    np.testing.assert_allclose(a.mean, b.mean, rtol=0, atol=1e-8)
    np.testing.assert_allclose(a.variance, b.variance, rtol=0, atol=1e-8)


def test_sample_prior_deterministic(rng):
    s = random_spec(rng, ell=(0.2, 0.2))
    inputs = (np.array([0, 1, 0, 1]), np.array([[0.0], [0.5], [1.0], [1.5]]))
    assert np.array_equal(sample_prior(s, inputs, 7), sample_prior(s, inputs, 7))
    assert not np.array_equal(sample_prior(s, inputs, 7), sample_prior(s, inputs, 8))


def test_sample_prior_zero_kernel():
    s = one_channel_spec(w=0.0)
    z = sample_prior(s, (np.zeros(5, dtype=int), np.linspace(0, 1, 5)[:, None]), 3)
    assert np.max(np.abs(z)) < 1e-3


def test_sample_covariance_monte_carlo(rng):
    # closely spaced inputs keep every retained entry well above the sampling error
    s = one_channel_spec()
    inputs = (np.zeros(5, dtype=int), np.array([[0.0], [0.1], [0.2], [0.3], [0.4]]))
    K = build_gram(s, inputs)
    draws = np.array([sample_gaussian(K, seed) for seed in range(10000)])
    emp = draws.T @ draws / len(draws)
    big = np.abs(K) > 0.1 * np.abs(K).max()
    np.testing.assert_allclose(emp[big], K[big], rtol=0.05)

import math

import numpy as np
import pytest
from scipy import integrate, stats

import quad
from binbayes import kernels
from binbayes.datasets import empty_dataset, load_pima, synthetic_dataset
from binbayes.ep import (cauchy_tilted, ep_fit, ep_update_site, gaussian_log_partition, init_state,
                         logit_site_moments, probit_site_moments)
from binbayes.gaussian import GaussianApprox, prior_gaussian
from binbayes.model import Dataset, PosteriorTarget, Prior, default_prior


def test_log_partition_closed_forms():
    np.testing.assert_allclose(gaussian_log_partition(np.zeros(2), np.eye(2)), math.log(2 * math.pi))
    q, r = 2.5, 0.7
    np.testing.assert_allclose(gaussian_log_partition([r], [[q]]), 0.5 * math.log(2 * math.pi / q) + r * r / (2 * q))


def test_log_partition_numerical():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(2, 2))
    Q = A @ A.T + np.eye(2)
    r = rng.normal(size=2)
    f = lambda b, a: math.exp(-0.5 * np.array([a, b]) @ Q @ np.array([a, b]) + r @ np.array([a, b]))
    val, _ = integrate.dblquad(f, -12, 12, -12, 12, epsabs=1e-12)
    np.testing.assert_allclose(gaussian_log_partition(r, Q), math.log(val), rtol=1e-6)


def cavity_1d(m=0.3, v=1.7):
    return GaussianApprox.from_moments([m], [[v]])


def test_probit_site_matches_quadrature():
    c = cavity_1d()
    x = np.array([1.3])
    h = probit_site_moments(c, 1.0, x)
    dens = lambda b: stats.norm.cdf(1.3 * b) * stats.norm.pdf(b, 0.3, math.sqrt(1.7))
    z = integrate.quad(dens, -40, 40, epsabs=1e-14)[0]
    m = integrate.quad(lambda b: b * dens(b), -40, 40, epsabs=1e-14)[0] / z
    v = integrate.quad(lambda b: (b - m) ** 2 * dens(b), -40, 40, epsabs=1e-14)[0] / z
    np.testing.assert_allclose([h.Z, h.mean[0], h.cov[0, 0]], [z, m, v], rtol=1e-8)


def test_probit_site_zero_covariate_and_symmetry():
    c = GaussianApprox.from_moments([0.2, -0.4], [[1.0, 0.3], [0.3, 2.0]])
    h = probit_site_moments(c, 1.0, np.zeros(2))
    assert h.Z == 0.5
    np.testing.assert_array_equal(h.mean, c.mean)
    x = np.array([0.8, -1.1])
    a = probit_site_moments(c, 1.0, x)
    flipped = GaussianApprox.from_moments(-c.mean, c.cov)
    b = probit_site_moments(flipped, -1.0, x)
    np.testing.assert_allclose(a.Z, b.Z, rtol=1e-12)
    np.testing.assert_allclose(a.mean, -b.mean, rtol=1e-12)


def test_logit_site_node_count_stable():
    rng = np.random.default_rng(1)
    for _ in range(10):
        c = GaussianApprox.from_moments(rng.normal(size=1), [[rng.uniform(0.1, 5.0)]])
        x = rng.normal(size=1)
        a = logit_site_moments(c, 1.0, x, quad=64)
        b = logit_site_moments(c, 1.0, x, quad=256)
        np.testing.assert_allclose([a.Z, a.mean[0], a.cov[0, 0]], [b.Z, b.mean[0], b.cov[0, 0]],
                                   rtol=1e-10, atol=1e-12)


def test_cauchy_tilted_matches_quadrature():
    m, v, s = 1.2, 0.8, 2.5
    logz, mh, vh = cauchy_tilted(np.array([m]), np.array([v]), s)
    dens = lambda b: stats.cauchy.pdf(b, 0, s) * stats.norm.pdf(b, m, math.sqrt(v))
    z = integrate.quad(dens, -50, 50, epsabs=1e-15)[0]
    mean = integrate.quad(lambda b: b * dens(b), -50, 50, epsabs=1e-15)[0] / z
    var = integrate.quad(lambda b: (b - mean) ** 2 * dens(b), -50, 50, epsabs=1e-15)[0] / z
    np.testing.assert_allclose([logz[0], mh[0], vh[0]], [math.log(z), mean, var], rtol=1e-8)


def one_point_target():
    d = Dataset(y=np.array([1.0]), X=np.array([[1.4]]), column_names=["x"], standardized=True)
    return PosteriorTarget(d, Prior("gaussian", [0.5]), "probit")


def test_single_site_exact():
    t = one_point_target()
    state = init_state(t)
    ep_update_site(state, 0)
    g = np.linspace(-10, 10, 200001)
    w = np.exp(t.log_posterior_batch(g[:, None]))
    m = (w @ g) / w.sum()
    v = (w @ (g - m) ** 2) / w.sum()
    np.testing.assert_allclose([state.mean[0], state.cov[0, 0]], [m, v], rtol=1e-8)


def test_site_update_idempotent():
    t = PosteriorTarget(synthetic_dataset(30, 3, seed=2), default_prior(3, "gaussian"), "probit")
    state = init_state(t)
    ep_update_site(state, 4)
    mean, cov, tau = state.mean.copy(), state.cov.copy(), state.tau.copy()
    ep_update_site(state, 4)
    np.testing.assert_allclose(state.mean, mean, atol=1e-10)
    np.testing.assert_allclose(state.cov, cov, atol=1e-10)
    np.testing.assert_allclose(state.tau, tau, atol=1e-10)


def test_zero_covariate_site():
    d = Dataset(y=np.array([1.0, -1.0]), X=np.array([[0.0], [1.0]]), column_names=["x"], standardized=True)
    t = PosteriorTarget(d, Prior("gaussian", [1.0]), "probit")
    q, state = ep_fit(t)
    assert state.tau[0] == 0.0 and state.nu[0] == 0.0
    np.testing.assert_allclose(state.log_z[0], math.log(0.5))


def test_empty_data_returns_prior():
    t = PosteriorTarget(empty_dataset(3), default_prior(3, "gaussian"), "probit")
    q, _ = ep_fit(t)
    np.testing.assert_allclose(q.cov, prior_gaussian(t.prior).cov)
    np.testing.assert_allclose(q.log_evidence, 0.0, atol=1e-12)


@pytest.mark.parametrize("link,prior", [("probit", "gaussian"), ("logit", "gaussian"), ("logit", "cauchy")])
def test_evidence_and_means_near_quadrature(link, prior):
    t = PosteriorTarget(synthetic_dataset(100, 2, seed=5, link=link), default_prior(2, prior), link)
    q, state = ep_fit(t)
    mean, _, log_z = quad.moments(t, q)
    assert state.converged
    assert abs(q.log_evidence - log_z) < 0.05
    np.testing.assert_allclose(q.mean, mean, atol=0.05)


def test_parallel_schedule_agrees():
    t = PosteriorTarget(load_pima(), default_prior(8, "cauchy"), "logit")
    a, _ = ep_fit(t)
    b, sb = ep_fit(t, schedule="parallel")
    assert sb.converged
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-4)
    np.testing.assert_allclose(a.log_evidence, b.log_evidence, atol=1e-3)


def test_ep_sweep_backends_agree():
    t = PosteriorTarget(load_pima(), default_prior(8, "gaussian"), "logit")
    gh_t, gh_lw = kernels.gauss_hermite(64)
    out = []
    for sweep in (kernels._ep_sweep_nb, kernels._ep_sweep_np):
        s = init_state(t)
        cov, mean = np.ascontiguousarray(s.cov), np.ascontiguousarray(s.mean)
        sweep(t.X, t.y, t.link.code, s.tau, s.nu, cov, mean, 1.0, gh_t, gh_lw, np.arange(t.n))
        out.append((s.tau, mean))
    np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-9)
    np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-9)


def test_bad_arguments():
    t = one_point_target()
    with pytest.raises(ValueError):
        ep_fit(t, schedule="random")
    with pytest.raises(ValueError):
        ep_fit(t, damping=0.0)

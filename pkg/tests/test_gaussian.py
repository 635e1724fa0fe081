import numpy as np
import pytest

import quad
from binbayes.bench import marginal_accuracy
from binbayes.datasets import empty_dataset, load_pima, synthetic_dataset
from binbayes.ep import ep_fit
from binbayes.gaussian import (GaussianApprox, improved_laplace_marginal, laplace, laplace_em, laplace_em_mstep,
                               newton_map, prior_gaussian)
from binbayes.model import Dataset, PosteriorTarget, Prior, default_prior


def synthetic(p=2, seed=0, link="probit", prior="gaussian", n=100):
    d = synthetic_dataset(n, p, seed=seed, link=link)
    return PosteriorTarget(d, default_prior(p, prior), link)


def test_gaussian_roundtrip():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    q = GaussianApprox.from_moments(rng.normal(size=4), A @ A.T + np.eye(4), log_evidence=-3.0)
    r = GaussianApprox.from_natural(q.shift, q.precision)
    np.testing.assert_allclose(r.mean, q.mean, rtol=1e-10)
    np.testing.assert_allclose(r.cov, q.cov, rtol=1e-10)
    back = GaussianApprox.from_json(q.to_json())
    np.testing.assert_allclose(back.cov, q.cov)
    assert back.log_evidence == -3.0


def test_newton_quadratic_one_iteration():
    t = PosteriorTarget(empty_dataset(3), default_prior(3, "gaussian"), "probit")
    res = newton_map(t, init=np.array([1.0, -2.0, 0.5]))
    assert res.converged and res.iterations == 1
    np.testing.assert_allclose(res.beta, 0.0, atol=1e-12)


def test_newton_separated_data_finite():
    X = np.array([[1.0, -1.0], [1.0, 1.0]])
    d = Dataset(y=np.array([-1.0, 1.0]), X=X, column_names=["(Intercept)", "x"], standardized=True, intercept=True)
    res = newton_map(PosteriorTarget(d, default_prior(2, "gaussian"), "logit"))
    assert res.converged and np.all(np.isfinite(res.beta))


def test_newton_matches_grid_argmax():
    t = synthetic(p=3, seed=4, n=50)
    res = newton_map(t)
    g = np.linspace(-3, 3, 61)
    mesh = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    best = mesh[np.argmax(t.log_posterior_batch(mesh))]
    np.testing.assert_allclose(res.beta, best, atol=0.1)


def test_laplace_conjugate_empty():
    t = PosteriorTarget(empty_dataset(3), default_prior(3, "gaussian"), "probit")
    q = laplace(t)
    p = prior_gaussian(t.prior)
    np.testing.assert_allclose(q.cov, p.cov, rtol=1e-12)
    np.testing.assert_allclose(q.mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(q.log_evidence, 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_laplace_evidence_near_quadrature(seed):
    t = synthetic(seed=seed)
    q = laplace(t)
    _, _, log_z = quad.moments(t, q)
    assert abs(q.log_evidence - log_z) < 0.05


def test_improved_laplace_exact_on_gaussian():
    t = PosteriorTarget(empty_dataset(3), default_prior(3, "gaussian"), "logit")
    c = improved_laplace_marginal(t, 1, n_grid=33)
    ref = prior_gaussian(t.prior).marginal_density(1, c.grid)
    np.testing.assert_allclose(c.density, ref, atol=1e-6)


def test_improved_laplace_matches_quadrature_marginal():
    t = synthetic(seed=1, link="logit")
    for j in range(2):
        c = improved_laplace_marginal(t, j, n_grid=64)
        g, m = quad.marginal(t, laplace(t), j)
        assert marginal_accuracy(c, (g, m)) >= 0.995


def test_improved_laplace_rejects_tiny_grid():
    with pytest.raises(ValueError):
        improved_laplace_marginal(synthetic(), 0, n_grid=1)


def test_laplace_em_informative_design_point():
    # one design point observed 200 times: a sharp likelihood for a single coefficient
    y = np.where(np.arange(200) < 140, 1.0, -1.0)
    d = Dataset(y=y, X=np.ones((200, 1)), column_names=["x"], standardized=True)
    t = PosteriorTarget(d, Prior("cauchy", [2.5]), "probit")
    res = laplace_em(t)
    g = np.linspace(-3, 3, 60001)
    lp = t.log_posterior_batch(g[:, None])
    w = np.exp(lp - lp.max())
    truth = (w @ g) / w.sum()
    assert res.converged
    assert abs(res.approx.mean[0] - truth) < 0.05


def test_laplace_em_fixed_point():
    t = PosteriorTarget(load_pima(), default_prior(8, "cauchy"), "logit")
    res = laplace_em(t, tol=1e-10)
    q = res.approx
    again = laplace_em_mstep(q.mean**2 + np.diag(q.cov), t.prior.scales**2)
    np.testing.assert_allclose(again, res.variances, rtol=1e-6)


def test_laplace_em_needs_cauchy():
    with pytest.raises(ValueError):
        laplace_em(synthetic())


def test_laplace_ep_close_on_pima():
    t = PosteriorTarget(load_pima(), default_prior(8, "gaussian"), "probit")
    a, b = laplace(t), ep_fit(t)[0]
    np.testing.assert_allclose(a.mean, b.mean, atol=0.05)

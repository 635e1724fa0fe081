import itertools
import math

import numpy as np
import pytest
from scipy import special, stats

import quad
from binbayes import varsel
from binbayes.datasets import empty_dataset, synthetic_dataset
from binbayes.gaussian import laplace
from binbayes.model import Dataset, PosteriorTarget, default_prior, standardize


def target(n=200, p=4, seed=0, beta=None):
    d = synthetic_dataset(n, p, seed=seed, link="logit", beta=beta)
    return PosteriorTarget(d, default_prior(p, "gaussian"), "logit")


def test_no_data_evidence_zero_and_uniform_posterior():
    t = PosteriorTarget(empty_dataset(4), default_prior(4, "gaussian"), "logit")
    for g in varsel.all_models(3):
        assert varsel.model_evidence(g, t) == 0.0
    res = varsel.enumerate_varsel(t)
    np.testing.assert_allclose(res.posterior, 1 / 8)
    np.testing.assert_allclose(res.inclusion, 0.5)


def test_empty_model_uses_intercept():
    t = target()
    le = varsel.model_evidence(np.zeros(3, bool), t)
    np.testing.assert_allclose(le, laplace(t.restrict([0])).log_evidence)


def test_is_evidence_against_restricted_quadrature():
    t = target(n=100, p=3, seed=1)
    for g in varsel.all_models(2):
        cols = varsel.model_columns(g, True)
        tr = t.restrict(cols)
        q = laplace(tr)
        if tr.p == 1:
            grid = np.linspace(q.mean[0] - 10 * q.sd[0], q.mean[0] + 10 * q.sd[0], 20001)
            truth = special.logsumexp(tr.log_posterior_batch(grid[:, None])) + math.log(grid[1] - grid[0])
        else:
            truth = quad.moments(tr, q, n=121, span=8.0)[2]
        est = np.array([varsel.model_evidence(g, t, "is", seed=s, n_inner=4096) for s in range(20)])
        z = np.exp(est - truth)
        assert abs(z.mean() - 1) <= 3 * z.std(ddof=1) / np.sqrt(len(z)) + 1e-4


def test_noise_column_changes_evidence_moderately():
    t = target(n=300, p=4, seed=2, beta=[0.0, 2.0, 0.0, 0.0])
    base = varsel.model_evidence(np.array([True, False, False]), t)
    more = varsel.model_evidence(np.array([True, True, False]), t)
    assert abs(more - base) < 10


def test_strong_signal_inclusion():
    t = target(n=300, p=3, seed=3, beta=[0.0, 3.0, 0.0])
    inc = varsel.enumerate_varsel(t).inclusion
    assert inc[0] > 0.95
    assert 0.05 < inc[1] < 0.6


def test_duplicate_columns_symmetric():
    base = synthetic_dataset(150, 3, seed=4, link="logit")
    X = np.column_stack([base.X, base.X[:, 1]])
    d = Dataset(y=base.y, X=X, column_names=base.column_names + ["dup"], standardized=True, intercept=True)
    inc = varsel.enumerate_varsel(PosteriorTarget(d, default_prior(4, "gaussian"), "logit")).inclusion
    np.testing.assert_allclose(inc[0], inc[2], atol=1e-8)


def test_enumeration_cap():
    d = standardize(synthetic_dataset(30, 22, seed=0))
    with pytest.raises(ValueError, match="binary_smc_varsel"):
        varsel.enumerate_varsel(PosteriorTarget(d, default_prior(22, "gaussian"), "logit"))


def test_nested_logistic_degenerate_particles():
    g = np.array([True, False, True, True, False, False, True, False])
    prop = varsel.fit_nested_logistic(np.tile(g, (200, 1)))
    draws = prop.sample(20000, np.random.default_rng(0))
    frac = np.mean(np.all(draws == g, axis=1))
    assert frac >= (1 - 1e-4) ** 8 - 0.001


def test_nested_logistic_uniform_particles():
    G = np.random.default_rng(1).random((5000, 6)) < 0.5
    prop = varsel.fit_nested_logistic(G)
    probs = np.array([prop._prob(j, G) for j in range(6)])
    kl = probs * np.log(2 * probs) + (1 - probs) * np.log(2 * (1 - probs))
    assert kl.mean(axis=1).max() < 0.01


def test_nested_logistic_pmf_sums_to_one():
    G = np.random.default_rng(2).random((400, 8)) < 0.3
    G[:, 3] = G[:, 1] ^ (np.random.default_rng(3).random(400) < 0.1)
    prop = varsel.fit_nested_logistic(G)
    all_g = np.array(list(itertools.product([False, True], repeat=8)))
    np.testing.assert_allclose(np.exp(special.logsumexp(prop.logpmf(all_g))), 1.0, rtol=1e-12)
    assert np.all(np.isfinite(prop.logpmf(all_g)))


def test_nested_logistic_keeps_strong_dependence():
    rng = np.random.default_rng(4)
    G = rng.random((2000, 3)) < 0.5
    G[:, 2] = G[:, 0]
    prop = varsel.fit_nested_logistic(G)
    assert abs(prop.coefs[2][1]) > 3
    assert prop.coefs[2][2] == 0.0


def test_smc_matches_enumeration_small():
    t = target(n=200, p=7, seed=5)
    exact = varsel.enumerate_varsel(t).inclusion
    ps = varsel.binary_smc_varsel(t, 1000, seed=0, method="laplace")
    assert np.median(np.abs(ps.inclusion - exact)) <= 0.03


def test_first_stage_uniform():
    # constant evidence: tempering ends at once and returns the initial draws
    t = PosteriorTarget(empty_dataset(9), default_prior(9, "gaussian"), "logit")
    ps = varsel.binary_smc_varsel(t, 4000, seed=0, method="laplace")
    assert len(ps.stages) == 1
    counts = ps.models.sum(axis=0)
    chi2 = float((((counts - 2000) ** 2) / 1000).sum())
    assert stats.chi2.sf(chi2, 8) > 0.001


def test_pseudo_marginal_audit():
    t = target(n=80, p=5, seed=7)
    ps = varsel.binary_smc_varsel(t, 200, seed=1, method="is", n_inner=64, audit=True)
    fresh_values = len(ps.audit)
    moves = sum(1 for kind, _, _ in ps.audit if kind == "move")
    assert fresh_values == 200 + moves
    assert ps.evidence_calls == 200 + 3 * 200 * (len(ps.stages) - 1)


def test_gamma_gibbs_budget():
    t = target(n=100, p=5, seed=8)
    gc = varsel.gamma_gibbs(t, 500, seed=0, method="laplace")
    assert gc.evidence_calls == 500
    exact = varsel.enumerate_varsel(t).inclusion
    long = varsel.gamma_gibbs(t, 20000, seed=1, method="laplace")
    np.testing.assert_allclose(long.inclusion, exact, atol=0.05)


def test_smc_deterministic():
    t = target(n=100, p=5, seed=9)
    a = varsel.binary_smc_varsel(t, 100, seed=3, method="is", n_inner=32)
    b = varsel.binary_smc_varsel(t, 100, seed=3, method="is", n_inner=32)
    np.testing.assert_array_equal(a.models, b.models)
    np.testing.assert_array_equal(a.log_evidence, b.log_evidence)

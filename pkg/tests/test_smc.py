import json

import numpy as np
import pytest

import quad
from binbayes import kernels
from binbayes.datasets import empty_dataset, synthetic_dataset
from binbayes.gaussian import GaussianApprox, laplace, prior_gaussian
from binbayes.model import PosteriorTarget, default_prior
from binbayes.samplers import DegenerateWeightsError, importance_sample
from binbayes.smc import ef_at, next_temperature, systematic_resample, temper_smc


def synthetic(seed=0):
    return PosteriorTarget(synthetic_dataset(100, 2, seed=seed), default_prior(2, "gaussian"), "probit")


def test_next_temperature_finishes_on_exact_proposal():
    assert next_temperature(np.zeros(100), 0.0, 0.5) == 1.0


def test_ef_zero_exponent_is_one():
    l = np.random.default_rng(0).normal(size=50)
    assert ef_at(l, 0.3, 0.3) == pytest.approx(1.0)


def test_next_temperature_hits_tau():
    l = np.random.default_rng(1).normal(0, 20, size=5000)
    d = next_temperature(l, 0.0, 0.5)
    assert 0 < d < 1
    assert abs(ef_at(l, d, 0.0) - 0.5) <= 1e-3


def test_next_temperature_arguments():
    with pytest.raises(ValueError):
        next_temperature(np.zeros(3), 1.0, 0.5)
    with pytest.raises(ValueError):
        next_temperature(np.zeros(3), 0.0, 1.0)


def test_systematic_equal_and_point_mass():
    N = 100
    c = systematic_resample(np.full(N, 1.0 / N), N, seed=0)
    assert c.sum() == N and set(np.unique(c)) <= {0, 1, 2}
    np.testing.assert_allclose(c.mean(), 1.0)
    w = np.zeros(10)
    w[0] = 1.0
    np.testing.assert_array_equal(systematic_resample(w, 10, seed=0), [10] + [0] * 9)


def test_systematic_never_picks_zero_weight():
    w = np.array([0.3, 0.7, 0.0, 0.0])
    for u in np.linspace(0, 1, 101, endpoint=False):
        for counts in (kernels._systematic_counts_nb(w, u, 7), kernels._systematic_counts_np(w, u, 7)):
            assert counts[2:].sum() == 0 and counts.sum() == 7


def test_systematic_rejects_bad_weights():
    with pytest.raises(ValueError):
        systematic_resample([0.5, -0.1], 2, seed=0)
    with pytest.raises(DegenerateWeightsError):
        systematic_resample([0.0, 0.0], 2, seed=0)


def test_collapse_to_importance_sampling():
    t, = (PosteriorTarget(empty_dataset(3), default_prior(3, "gaussian"), "probit"),)
    q = prior_gaussian(t.prior)
    ps = temper_smc(q, t, 500, seed=4)
    ws = importance_sample(q, t, 500, seed=4)
    assert ps.n_stages == 1
    np.testing.assert_array_equal(ps.particles, ws.points)
    np.testing.assert_allclose(ps.log_evidence, ws.log_evidence)


def test_poor_proposal_many_stages_and_correct_means():
    t = synthetic(seed=1)
    mean, _, _ = quad.moments(t, laplace(t))
    runs = [temper_smc(prior_gaussian(t.prior), t, 3000, seed=s) for s in range(10)]
    assert all(r.n_stages >= 2 for r in runs)
    for r in runs:
        assert all(abs(e - 0.5) <= 1e-3 for e in r.ef[:-1])
    means = np.array([r.weighted_sample().mean() for r in runs])
    se = means.std(axis=0, ddof=1) / np.sqrt(len(runs))
    assert np.all(np.abs(means.mean(axis=0) - mean) <= 3 * se)


def test_log_evidence_against_quadrature():
    t = synthetic(seed=2)
    q = laplace(t)
    _, _, log_z = quad.moments(t, q)
    wide = GaussianApprox.from_moments(q.mean, 9.0 * q.cov)
    le = np.array([temper_smc(wide, t, 2000, seed=s).log_evidence for s in range(25)])
    assert abs(le.mean() - log_z) <= 3 * le.std(ddof=1) / np.sqrt(len(le)) + 1e-3


def test_stage_log_lines(tmp_path):
    t = synthetic(seed=3)
    ps = temper_smc(prior_gaussian(t.prior), t, 500, seed=0)
    path = tmp_path / "stages.jsonl"
    ps.write_stage_log(str(path))
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(rows) == ps.n_stages
    assert rows[-1]["delta"] == 1.0
    np.testing.assert_allclose(sum(r["log_evidence_increment"] for r in rows), ps.log_evidence)


def test_smc_deterministic():
    t = synthetic(seed=0)
    a = temper_smc(prior_gaussian(t.prior), t, 400, seed=5)
    b = temper_smc(prior_gaussian(t.prior), t, 400, seed=5)
    np.testing.assert_array_equal(a.particles, b.particles)
    assert a.ladder == b.ladder


def test_too_few_particles():
    t = synthetic()
    with pytest.raises(ValueError):
        temper_smc(prior_gaussian(t.prior), t, 1, seed=0)

import json
import math

import numpy as np
import pytest
from scipy import stats

from binbayes import samplers
from binbayes.bench import (GoldenReference, build_golden, iris, kde_marginals, marginal_accuracy,
                            run_benchmark, validate_config, write_report)
from binbayes.datasets import load_pima
from binbayes.ep import ep_fit
from binbayes.model import PosteriorTarget, default_prior
from binbayes.samplers import ConfigurationError, WeightedSample


@pytest.fixture(scope="module")
def golden(tmp_path_factory):
    d = load_pima()
    t = PosteriorTarget(d, default_prior(d.p, "gaussian"), "probit")
    g = build_golden(t, T=50000, seed=1, evidence_N=5000, stability=0.99)
    path = tmp_path_factory.mktemp("golden") / "golden.json"
    g.save(str(path))
    return t, g, str(path)


def normal_curve(mu, grid):
    return grid, stats.norm.pdf(grid, mu, 1.0)


def test_marginal_accuracy_basics():
    g = np.linspace(-10, 10, 4001)
    assert marginal_accuracy(normal_curve(0, g), normal_curve(0, g)) == pytest.approx(1.0)
    a = (g, np.where(np.abs(g + 5) < 1, 0.5, 0.0))
    b = (g, np.where(np.abs(g - 5) < 1, 0.5, 0.0))
    assert marginal_accuracy(a, b) == pytest.approx(0.0, abs=5e-3)
    np.testing.assert_allclose(marginal_accuracy(normal_curve(0, g), normal_curve(0.1, g)),
                               2 * stats.norm.cdf(-0.05), atol=1e-6)


def test_marginal_accuracy_disjoint_grids():
    with pytest.raises(ValueError):
        marginal_accuracy((np.array([0.0, 1.0]), np.ones(2)), (np.array([2.0, 3.0]), np.ones(2)))


def test_iris_arithmetic():
    assert iris(1.0, 2.0, 1.0, 2.0) == 1.0
    assert iris(0.5, 1.0, 1.0, 1.0) == 0.5
    np.testing.assert_allclose(iris([1.0, 2.0], 1.0, [1.0, 1.0], 1.0), [1.0, 2.0])
    with pytest.raises(ValueError):
        iris(0.0, 1.0, 1.0, 1.0)


def test_kde_recovers_gaussian():
    x = np.random.default_rng(0).normal(size=(200000, 1))
    ws = WeightedSample(x, np.zeros(len(x)), 0.0)
    c = kde_marginals(ws)[0]
    assert marginal_accuracy(c, (c.grid, stats.norm.pdf(c.grid))) >= 0.99


def test_kde_concentrated_weights():
    x = np.random.default_rng(0).normal(size=(1000, 1))
    lw = np.full(1000, -np.inf)
    lw[:3] = 0.0
    with pytest.raises(ValueError):
        kde_marginals(WeightedSample(x, lw, 0.0))


def test_golden_roundtrip_and_is_accuracy(golden):
    t, g, path = golden
    back = GoldenReference.load(path)
    np.testing.assert_array_equal(back.densities, g.densities)
    assert math.isfinite(g.log_evidence)
    ws = samplers.importance_sample(ep_fit(t)[0], t, 50000, seed=0)
    ma = [marginal_accuracy(c, g.curve(j)) for j, c in enumerate(kde_marginals(ws, g.grids))]
    assert np.median(ma) >= 0.99


def test_validate_config_errors():
    with pytest.raises(ConfigurationError):
        validate_config({"methods": ["magic"]})
    with pytest.raises(ConfigurationError):
        validate_config({"methods": ["rqmc"], "N": 1000})
    with pytest.raises(ConfigurationError):
        validate_config({"scenarios": ["student/probit"]})
    with pytest.raises(ConfigurationError):
        validate_config({"N": 10**5, "golden": {"T": 10**5}})


def test_single_cell_report(golden, tmp_path):
    _, _, path = golden
    cfg = {"methods": ["is"], "seeds": [0], "N": 2048, "T": 1000,
           "golden_path": {"pima|gaussian/probit": path}}
    rep = run_benchmark(cfg)
    assert len(rep.cells) == 1 and rep.cells[0]["status"] == "ok"
    write_report(rep, str(tmp_path))
    data = json.loads((tmp_path / "report.json").read_text())
    assert len(data["cells"]) == 1
    assert (tmp_path / "timing" / "timing.json").exists()
    assert (tmp_path / "table2.csv").exists()


def test_skipped_and_repeatable(golden, tmp_path):
    _, _, path = golden
    cfg = {"methods": ["laplace", "laplace-em", "ep", "rwmh", "smc"], "seeds": [0, 1], "N": 1024, "T": 1000,
           "golden_path": {"pima|gaussian/probit": path}}
    a, b = run_benchmark(cfg), run_benchmark(cfg)
    status = {c["method"]: c["status"] for c in a.cells}
    assert status["laplace-em"] == "skipped" and status["ep"] == "ok"
    assert json.dumps(a.deterministic_dict(), sort_keys=True) == json.dumps(b.deterministic_dict(), sort_keys=True)
    row = next(r for r in a.summary if r["method"] == "ep")
    assert row["ma_median"] > 0.98

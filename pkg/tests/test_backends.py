import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from binbayes import kernels, samplers
from binbayes.datasets import synthetic_dataset
from binbayes.gaussian import laplace
from binbayes.model import PosteriorTarget, default_prior

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "benchmarks"))
import bench_kernels  # noqa: E402

CASES = bench_kernels.cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_numba_and_numpy_kernels_agree(name):
    nb, npf, call = CASES[name]
    a = np.asarray(call(nb), float)
    b = np.asarray(call(npf), float)
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("x", [-40.0, -8.5, -8.0, -1.0, 0.0, 3.0, 12.0])
def test_scalar_and_vector_log_ndtr_agree(x):
    np.testing.assert_allclose(kernels.log_ndtr_scalar(x), kernels.log_ndtr(np.array([x]))[0], rtol=1e-13)


def run_env(code, disable):
    env = dict(os.environ)
    env.pop("BINBAYES_DISABLE_NUMBA", None)
    if disable:
        env["BINBAYES_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return res.stdout.strip()


def test_environment_flag_selects_numpy():
    code = "from binbayes import kernels; print(kernels.BACKEND)"
    assert run_env(code, True) == "numpy"
    assert run_env(code, False) == "numba"


def test_samplers_identical_across_backends():
    code = ("import numpy as np\n"
            "from binbayes import samplers\n"
            "from binbayes.datasets import synthetic_dataset\n"
            "from binbayes.gaussian import laplace\n"
            "from binbayes.model import PosteriorTarget, default_prior\n"
            "t = PosteriorTarget(synthetic_dataset(80, 3, seed=1, link='logit'), default_prior(3, 'cauchy'), 'logit')\n"
            "q = laplace(t)\n"
            "tr = samplers.rwmh(t, q, 500, seed=2)\n"
            "import json\n"
            "print(json.dumps([tr.acceptance_rate, tr.mean().tolist()]))\n")
    ra, ma = json.loads(run_env(code, True))
    rb, mb = json.loads(run_env(code, False))
    assert ra == rb
    np.testing.assert_allclose(ma, mb, rtol=1e-10)


def test_in_process_sampler_uses_selected_backend():
    t = PosteriorTarget(synthetic_dataset(60, 2, seed=0), default_prior(2, "gaussian"), "probit")
    tr = samplers.rwmh(t, laplace(t), 200, seed=0)
    assert np.all(np.isfinite(tr.states))

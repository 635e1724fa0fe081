"""Bayesian binary regression: approximations, samplers and benchmarks."""
__version__ = "0.1.0"

from .model import Dataset, LinkModel, PosteriorTarget, Prior, default_prior, ingest_csv, standardize
from .gaussian import GaussianApprox, improved_laplace_marginal, laplace, laplace_em, newton_map
from .ep import ep_fit
from .samplers import (ChainTrace, WeightedSample, gibbs_probit, hmc, importance_sample,
                       independent_mh, rqmc_importance_sample, rwmh)
from .smc import ParticleSystem, temper_smc
from .varsel import binary_smc_varsel, enumerate_varsel, gamma_gibbs

__all__ = [
    "Dataset", "LinkModel", "PosteriorTarget", "Prior", "default_prior", "ingest_csv", "standardize",
    "GaussianApprox", "improved_laplace_marginal", "laplace", "laplace_em", "newton_map", "ep_fit",
    "ChainTrace", "WeightedSample", "gibbs_probit", "hmc", "importance_sample", "independent_mh",
    "rqmc_importance_sample", "rwmh", "ParticleSystem", "temper_smc", "binary_smc_varsel",
    "enumerate_varsel", "gamma_gibbs",
]

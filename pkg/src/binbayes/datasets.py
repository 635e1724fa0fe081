"""Bundled and synthetic datasets."""
import math
from importlib import resources

import numpy as np

from .model import Dataset, default_prior, ingest_csv, standardize


def pima_path():
    return resources.files("binbayes") / "data" / "pima.csv"


def load_pima(standardized=True):
    """Pima Indians diabetes data (532 complete cases, 7 covariates + intercept)."""
    with resources.as_file(pima_path()) as path:
        d = ingest_csv(path, label_column="diabetes", intercept=True)
    return standardize(d) if standardized else d


def synthetic_dataset(n, p, seed, link="probit", beta=None, intercept=True, binary_columns=0):
    """Simulate a standardised dataset from the binary regression model.

    ``p`` counts the intercept when ``intercept`` is true. The last
    ``binary_columns`` covariates are Bernoulli(1/2) instead of Gaussian.
    """
    rng = np.random.default_rng(seed)
    k = p - 1 if intercept else p
    Z = rng.standard_normal((n, k))
    if binary_columns:
        Z[:, k - binary_columns:] = rng.integers(0, 2, size=(n, binary_columns))
    X = np.column_stack([np.ones(n), Z]) if intercept else Z
    names = (["(Intercept)"] if intercept else []) + [f"x{j}" for j in range(1, k + 1)]
    d = standardize(Dataset(y=np.ones(n), X=X, column_names=names, intercept=intercept))
    if beta is None:
        beta = rng.normal(0.0, 1.0, size=p)
    eta = d.X @ np.asarray(beta, dtype=float)
    if link == "probit":
        latent = eta + rng.standard_normal(n)
    else:
        latent = eta + rng.logistic(size=n)
    y = np.where(latent > 0, 1.0, -1.0)
    return Dataset(y=y, X=d.X, column_names=names, standardized=True, intercept=intercept,
                   transforms=d.transforms)


def empty_dataset(p, intercept=True):
    """Zero observations; the posterior equals the prior."""
    names = (["(Intercept)"] if intercept else []) + [f"x{j}" for j in range(p - int(intercept))]
    return Dataset(y=np.zeros(0), X=np.zeros((0, p)), column_names=names, standardized=True,
                   intercept=intercept)


def load_dataset(name, standardized=True, label_column=None, intercept=True):
    """Resolve a dataset name used on the command line.

    ``pima`` is the bundled file; ``synthetic:n,p,seed[,link]`` and
    ``correlated:n,p,seed[,link]`` simulate one; anything else is treated as
    a CSV path.
    """
    if name == "pima":
        return load_pima(standardized)
    if name.startswith("correlated:"):
        parts = name.split(":", 1)[1].split(",")
        n, p, seed = (int(v) for v in parts[:3])
        link = parts[3] if len(parts) > 3 else "logit"
        return correlated_dataset(n, p, seed, link=link)
    if name.startswith("synthetic:"):
        parts = name.split(":", 1)[1].split(",")
        n, p, seed = (int(v) for v in parts[:3])
        link = parts[3] if len(parts) > 3 else "probit"
        return synthetic_dataset(n, p, seed, link=link)
    d = ingest_csv(name, label_column=label_column, intercept=intercept)
    return standardize(d) if standardized else d


def correlated_dataset(n, p, seed, n_groups=10, rho=0.8, n_active=8, link="logit", intercept=True):
    """Simulated design with groups of strongly correlated covariates.

    ``p`` counts the intercept when ``intercept`` is true. Covariates in the
    same group share a latent factor, so their inclusion is hard to resolve.
    """
    rng = np.random.default_rng(seed)
    k = p - 1 if intercept else p
    group = np.arange(k) % n_groups
    F = rng.standard_normal((n, n_groups))
    Z = math.sqrt(rho) * F[:, group] + math.sqrt(1.0 - rho) * rng.standard_normal((n, k))
    X = np.column_stack([np.ones(n), Z]) if intercept else Z
    names = (["(Intercept)"] if intercept else []) + [f"x{j}" for j in range(1, k + 1)]
    d = standardize(Dataset(y=np.ones(n), X=X, column_names=names, intercept=intercept))
    beta = np.zeros(p)
    active = rng.choice(k, size=n_active, replace=False) + int(intercept)
    beta[active] = rng.choice([-1.0, 1.0], size=n_active) * rng.uniform(1.0, 2.0, size=n_active)
    eta = d.X @ beta
    noise = rng.standard_normal(n) if link == "probit" else rng.logistic(size=n)
    y = np.where(eta + noise > 0, 1.0, -1.0)
    return Dataset(y=y, X=d.X, column_names=names, standardized=True, intercept=intercept,
                   transforms=d.transforms)


__all__ = ["load_pima", "synthetic_dataset", "correlated_dataset", "empty_dataset", "load_dataset",
           "default_prior"]

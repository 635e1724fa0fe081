"""Datasets, priors, links and the log-posterior of binary regression."""
import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import CAUCHY, GAUSSIAN, LOGIT, PROBIT


class DataError(ValueError):
    """Raised for malformed input files or invalid labels."""


class DegenerateColumnError(ValueError):
    """Raised when a non-intercept column has zero variance."""


@dataclass
class Dataset:
    """Labels in {-1, +1} and an ``n x p`` covariate matrix.

    ``transforms`` holds, per column, the ``(center, scale)`` pair applied by
    :func:`standardize` so that ``x_std = (x - center) * scale``.
    """

    y: np.ndarray
    X: np.ndarray
    column_names: list
    standardized: bool = False
    intercept: bool = False
    transforms: list = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise DataError("X must be a 2-d array")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("X and y have different numbers of rows")
        if self.X.shape[1] < 1:
            raise DataError("need at least one covariate")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise DataError("labels must be -1 or +1")
        if not np.all(np.isfinite(self.X)):
            raise DataError("X contains non-finite entries")
        if len(self.column_names) != self.X.shape[1]:
            raise DataError("column_names does not match X")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset_columns(self, cols):
        cols = list(cols)
        return replace(
            self,
            X=self.X[:, cols],
            column_names=[self.column_names[c] for c in cols],
            intercept=self.intercept and len(cols) > 0 and cols[0] == 0,
            transforms=[self.transforms[c] for c in cols] if self.transforms else [],
        )

    def to_original_scale(self, beta):
        """Map coefficients fitted on standardised columns back to raw units."""
        beta = np.asarray(beta, dtype=float)
        if not self.transforms:
            return beta.copy()
        out = beta.copy()
        shift = 0.0
        for j, (center, scale) in enumerate(self.transforms):
            if self.intercept and j == 0:
                continue
            out[j] = beta[j] * scale
            shift += beta[j] * scale * center
        if self.intercept:
            out[0] = beta[0] - shift
        return out

    def transforms_json(self):
        return json.dumps(
            {
                "columns": self.column_names,
                "intercept": self.intercept,
                "center": [t[0] for t in self.transforms],
                "scale": [t[1] for t in self.transforms],
            },
            indent=2,
        )


def ingest_csv(path, label_column=None, intercept=True):
    """Read a CSV file with a header row into a :class:`Dataset`.

    The label column (default: the first one) may be coded {0, 1} or {-1, +1};
    0 is mapped to -1. With ``intercept`` a column of ones named ``(Intercept)``
    is prepended.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column is None:
        label_column = header[0]
    if label_column not in header:
        raise DataError(f"{path}: no column named {label_column!r}")
    lab = header.index(label_column)
    values = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                values[r - 1, c] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell at row {r}, column {c} ({header[c]!r})") from None
            if not math.isfinite(values[r - 1, c]):
                raise DataError(f"{path}: non-finite cell at row {r}, column {c} ({header[c]!r})")
    labels = values[:, lab]
    bad = ~np.isin(labels, (-1.0, 0.0, 1.0))
    if np.any(bad):
        r = int(np.flatnonzero(bad)[0]) + 1
        raise DataError(f"{path}: label {labels[r - 1]:g} at row {r} is not in {{0,1}} or {{-1,+1}}")
    if np.any(labels == 0.0) and np.any(labels == -1.0):
        raise DataError(f"{path}: labels mix the {{0,1}} and {{-1,+1}} codings")
    y = np.where(labels == 0.0, -1.0, labels)
    cov_idx = [c for c in range(len(header)) if c != lab]
    X = values[:, cov_idx]
    names = [header[c] for c in cov_idx]
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = ["(Intercept)"] + names
    return Dataset(y=y, X=X, column_names=names, intercept=intercept)


def standardize(d):
    """Centre and rescale columns: sd 0.5 for continuous, range 1 for binary.

    A column is binary iff it takes exactly two distinct values. The intercept
    column is left untouched. Applying this to already standardised data is a
    no-op up to rounding.
    """
    X = d.X.copy()
    transforms = []
    for j in range(d.p):
        col = X[:, j]
        if d.intercept and j == 0:
            if not np.all(col == 1.0):
                raise DataError("declared intercept column is not all ones")
            transforms.append((0.0, 1.0))
            continue
        if d.n == 0:
            transforms.append((0.0, 1.0))
            continue
        center = float(col.mean())
        if np.unique(col).size == 2:
            scale = 1.0 / float(col.max() - col.min())
        else:
            sd = float(col.std(ddof=1)) if d.n > 1 else 0.0
            if not sd > 0.0:
                raise DegenerateColumnError(f"column {d.column_names[j]!r} has zero variance")
            scale = 0.5 / sd
        X[:, j] = (col - center) * scale
        transforms.append((center, scale))
    if d.transforms:
        # compose with the earlier transform so back-mapping stays to raw units
        transforms = [(c0 + c1 / s0, s0 * s1) for (c0, s0), (c1, s1) in zip(d.transforms, transforms)]
    return replace(d, X=X, standardized=True, transforms=transforms)


@dataclass(frozen=True)
class Prior:
    """Independent Gaussian or Cauchy prior centred at zero.

    ``scales`` are the Cauchy scales; the Gaussian prior paired with them uses
    standard deviation ``2 * scales``.
    """

    kind: str
    scales: np.ndarray

    def __post_init__(self):
        if self.kind not in ("gaussian", "cauchy"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        s = np.asarray(self.scales, dtype=float).reshape(-1)
        if not np.all(s > 0):
            raise ValueError("prior scales must be positive")
        object.__setattr__(self, "scales", s)

    @property
    def code(self):
        return GAUSSIAN if self.kind == "gaussian" else CAUCHY

    @property
    def kernel_scale(self):
        """Gaussian standard deviations, or Cauchy scales."""
        return 2.0 * self.scales if self.kind == "gaussian" else self.scales

    @property
    def p(self):
        return self.scales.shape[0]

    def subset(self, cols):
        return Prior(self.kind, self.scales[list(cols)])


def default_prior(p, kind="cauchy", intercept=True):
    scales = np.full(p, 2.5)
    if intercept and p > 0:
        scales[0] = 10.0
    return Prior(kind, scales)


def prior_log_density(prior, beta):
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    out = kernels.log_prior_batch(beta, prior.code, prior.kernel_scale)
    return float(out[0]) if out.shape[0] == 1 else out


@dataclass(frozen=True)
class LinkModel:
    """Probit or logit link with stable log F and its first two derivatives."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("probit", "logit"):
            raise ValueError(f"unknown link {self.kind!r}")

    @property
    def code(self):
        return PROBIT if self.kind == "probit" else LOGIT

    def cdf(self, x):
        return np.exp(self.log_cdf(x))

    def log_cdf(self, x):
        return kernels.log_cdf(x, self.code)

    def dlog_cdf(self, x):
        return kernels.dlog_cdf(x, self.code)

    def d2log_cdf(self, x):
        return kernels.d2log_cdf(x, self.code)


class PosteriorTarget:
    """Unnormalised posterior p(beta) p(D | beta); the evidence is never included."""

    def __init__(self, dataset, prior, link):
        if isinstance(link, str):
            link = LinkModel(link)
        if prior.p != dataset.p:
            raise ValueError(f"prior has {prior.p} components, data has {dataset.p} columns")
        self.dataset = dataset
        self.prior = prior
        self.link = link
        self.X = np.ascontiguousarray(dataset.X)
        self.y = np.ascontiguousarray(dataset.y)

    @property
    def p(self):
        return self.dataset.p

    @property
    def n(self):
        return self.dataset.n

    def kernel_args(self):
        return self.X, self.y, self.link.code, self.prior.code, self.prior.kernel_scale

    def restrict(self, cols):
        return PosteriorTarget(self.dataset.subset_columns(cols), self.prior.subset(cols), self.link)

    def log_likelihood(self, beta):
        beta = np.asarray(beta, dtype=float)
        if self.n == 0:
            return 0.0
        return float(self.link.log_cdf(self.y * (self.X @ beta)).sum())

    def log_prior(self, beta):
        return prior_log_density(self.prior, beta)

    def log_posterior(self, beta):
        return self.log_prior(beta) + self.log_likelihood(beta)

    def log_posterior_batch(self, B):
        return kernels.logpost_batch(self.X, self.y, np.atleast_2d(B), self.link.code,
                                     self.prior.code, self.prior.kernel_scale)

    def log_posterior_with_derivatives(self, beta):
        beta = np.asarray(beta, dtype=float)
        s = self.prior.kernel_scale
        if self.prior.kind == "gaussian":
            grad = -beta / s**2
            hess = np.diag(-1.0 / s**2)
        else:
            d = s**2 + beta**2
            grad = -2.0 * beta / d
            hess = np.diag(-2.0 * (s**2 - beta**2) / d**2)
        value = self.log_prior(beta)
        if self.n:
            u = self.y * (self.X @ beta)
            value += float(self.link.log_cdf(u).sum())
            grad = grad + self.X.T @ (self.link.dlog_cdf(u) * self.y)
            hess = hess + (self.X.T * self.link.d2log_cdf(u)) @ self.X
        return value, grad, hess


def log_likelihood(t, beta):
    return t.log_likelihood(beta)


def log_posterior_with_derivatives(t, beta):
    return t.log_posterior_with_derivatives(beta)

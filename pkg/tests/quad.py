"""Tensor-grid quadrature of small posteriors, used as an oracle in tests."""
import numpy as np
from scipy import special


def grid(t, q, n=401, span=9.0):
    """Grid axes centred on the Gaussian ``q`` with the log posterior on the mesh."""
    axes = [np.linspace(m - span * s, m + span * s, n) for m, s in zip(q.mean, q.sd)]
    mesh = np.meshgrid(*axes, indexing="ij")
    B = np.column_stack([m.ravel() for m in mesh])
    return axes, B, t.log_posterior_batch(B).reshape(mesh[0].shape)


def moments(t, q, n=401, span=9.0):
    """Posterior mean, sd and log evidence."""
    axes, B, lp = grid(t, q, n, span)
    cell = np.prod([a[1] - a[0] for a in axes])
    log_z = float(special.logsumexp(lp) + np.log(cell))
    w = np.exp(lp.ravel() - lp.max())
    w /= w.sum()
    mean = w @ B
    return mean, np.sqrt(w @ (B - mean) ** 2), log_z


def marginal(t, q, j, n=401, span=9.0):
    """Grid and normalised marginal density of component ``j``."""
    axes, _, lp = grid(t, q, n, span)
    dens = np.exp(lp - lp.max())
    other = tuple(k for k in range(dens.ndim) if k != j)
    m = dens.sum(axis=other) if other else dens
    m /= np.trapezoid(m, axes[j])
    return axes[j], m

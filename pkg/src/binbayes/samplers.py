"""Importance sampling (plain and randomised QMC) and MCMC samplers."""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special
from scipy.stats import qmc

from . import kernels
from .gaussian import GaussianApprox

log = logging.getLogger(__name__)


class DegenerateWeightsError(ValueError):
    pass


class UnsupportedLinkError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def seed_sequence(seed):
    """Accept an int, None or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def log_ess(log_weights):
    """log of (sum w)^2 / sum w^2, computed on the log scale."""
    lw = np.asarray(log_weights, dtype=float)
    return 2.0 * special.logsumexp(lw) - special.logsumexp(2.0 * lw)


def normalized_weights(log_weights):
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all weights are zero")
    w = np.exp(lw - lw.max())
    return w / w.sum()


@dataclass
class WeightedSample:
    points: np.ndarray
    log_weights: np.ndarray
    log_evidence: float
    seed: object = None
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def weights(self):
        return normalized_weights(self.log_weights)

    @property
    def ess(self):
        return float(np.exp(log_ess(self.log_weights)))

    @property
    def ef(self):
        return self.ess / self.N

    def mean(self):
        return self.weights @ self.points

    def var(self):
        W = self.weights
        mu = W @ self.points
        return W @ (self.points - mu) ** 2


def _weighted_sample(q, t, B, seed, **meta):
    lw = t.log_posterior_batch(B) - q.logpdf(B)
    log_z = float(special.logsumexp(lw) - math.log(B.shape[0]))
    return WeightedSample(B, lw, log_z, seed, dict(meta))


def importance_sample(q, t, N, seed):
    """Draw N points from the Gaussian ``q`` and weight them by posterior / q."""
    if N < 2:
        raise ValueError("N must be at least 2")
    rng = np.random.default_rng(seed)
    B = q.sample(N, rng)
    return _weighted_sample(q, t, B, seed, method="is")


def self_normalized_estimate(ws, phi):
    """Self-normalised estimate of E[phi(beta)] with its plug-in standard error.

    ``phi`` maps the N x p point matrix to N values (or an N x k array).
    """
    lw = np.asarray(ws.log_weights)
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all weights are zero")
    W = normalized_weights(lw)
    vals = np.asarray(phi(ws.points), dtype=float)
    est = np.tensordot(W, vals, axes=(0, 0))
    dev = vals - est
    se = np.sqrt(np.tensordot(W**2, dev**2, axes=(0, 0)))
    return est, se


# ---------------------------------------------------------------------------
# randomised QMC
# ---------------------------------------------------------------------------

_SOBOL_MAX_DIM = 21201


def sobol_points(m, d, scramble_seed=None):
    """First 2**m points of the d-dimensional Sobol' sequence.

    With ``scramble_seed`` the points receive a nested uniform scramble of
    their 32 leading bits plus a uniform jitter below 2**-32, which makes every
    point marginally uniform on (0, 1).
    """
    if d > _SOBOL_MAX_DIM:
        raise ConfigurationError(f"Sobol' direction numbers cover at most {_SOBOL_MAX_DIM} dimensions")
    eng = qmc.Sobol(d, scramble=False, bits=32)
    u = eng.random_base2(m)
    if scramble_seed is None:
        return u
    ints = np.ascontiguousarray(np.round(u * 2.0**32).astype(np.uint64))
    ss = seed_sequence(scramble_seed)
    key = np.uint64(ss.generate_state(1, dtype=np.uint64)[0])
    scr = kernels.owen_scramble(ints, key)
    jitter = np.random.default_rng(ss.spawn(1)[0]).random(scr.shape)
    return (scr.astype(float) + jitter) * 2.0**-32


@dataclass
class RqmcResult:
    samples: list
    means: np.ndarray
    variances: np.ndarray

    @property
    def mean_estimate(self):
        return self.means.mean(axis=0)

    def mse(self, truth=None):
        """Per-component MSE of the single-replication posterior-mean estimate."""
        return replication_mse(self.means, truth)


def replication_mse(estimates, truth=None):
    """MSE over replications; the empirical variance when ``truth`` is None."""
    est = np.asarray(estimates, dtype=float)
    if truth is None:
        return est.var(axis=0, ddof=1)
    return ((est - np.asarray(truth)) ** 2).mean(axis=0)


def rqmc_replication(q, t, N, scramble_seed, **meta):
    """One importance sample driven by a scrambled Sobol' net of size N = 2^m."""
    if N < 2 or N & (N - 1):
        raise ValueError("N must be a power of two")
    u = sobol_points(int(round(math.log2(N))), q.p, scramble_seed=scramble_seed)
    B = q.mean + special.ndtri(u) @ q.cholesky().T
    return _weighted_sample(q, t, B, scramble_seed, method="rqmc", **meta)


def rqmc_importance_sample(q, t, N, R, seed):
    """R independently scrambled Sobol' importance samples of size N."""
    if N < 2 or N & (N - 1):
        raise ValueError("N must be a power of two")
    if R < 2:
        raise ValueError("need at least two replications")
    seeds = seed_sequence(seed).spawn(R)
    samples = [rqmc_replication(q, t, N, ss, replication=r) for r, ss in enumerate(seeds)]
    means = np.array([s.mean() for s in samples])
    variances = np.array([s.var() for s in samples])
    return RqmcResult(samples, means, variances)


def plain_is_replications(q, t, N, R, seed):
    """The plain Monte Carlo counterpart of :func:`rqmc_importance_sample`."""
    seeds = seed_sequence(seed).spawn(R)
    samples = [importance_sample(q, t, N, ss) for ss in seeds]
    means = np.array([s.mean() for s in samples])
    variances = np.array([s.var() for s in samples])
    return RqmcResult(samples, means, variances)


# ---------------------------------------------------------------------------
# MCMC
# ---------------------------------------------------------------------------

@dataclass
class ChainTrace:
    states: np.ndarray
    log_posterior: np.ndarray
    acceptance_rate: float
    burn_in: int
    tuning: dict = field(default_factory=dict)
    seed: object = None

    @property
    def kept(self):
        return self.states[self.burn_in:]

    def mean(self):
        return self.kept.mean(axis=0)

    def var(self):
        return self.kept.var(axis=0)

    def batch_means_se(self, n_batches=50):
        return batch_means_se(self.kept, n_batches)


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of a correlated series by non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    b = T // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    means = x[: b * n_batches].reshape((n_batches, b) + x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def _burn(T, burn_in):
    return T // 10 if burn_in is None else int(burn_in)


def rwmh(t, q_calib, T, seed, scale=2.38, init=None, burn_in=None):
    """Random-walk Metropolis with proposal N(beta, scale^2/p * Sigma_q)."""
    if T < 1:
        raise ValueError("T must be positive")
    p = t.p
    rng = np.random.default_rng(seed)
    C = linalg.cholesky((scale**2 / p) * q_calib.cov, lower=True)
    increments = np.ascontiguousarray(rng.standard_normal((T, p)) @ C.T)
    log_u = np.log(rng.random(T))
    beta0 = np.array(q_calib.mean if init is None else init, dtype=float)
    X, y, link, pk, ps = t.kernel_args()
    states, lps, acc = kernels.rwmh_chain(beta0, increments, log_u, X, y, link, pk, ps)
    return ChainTrace(states, lps, acc / T, _burn(T, burn_in),
                      {"scale": scale, "proposal_cov": ((scale**2 / p) * q_calib.cov).tolist()}, seed)


def independent_mh(t, q, T, seed, init=None, burn_in=None, chunk=65536):
    """Independent Metropolis-Hastings with the Gaussian ``q`` as proposal.

    Proposals do not depend on the state, so all log ratios are computed in
    batch; only the accept/reject pass is sequential.
    """
    if T < 1:
        raise ValueError("T must be positive")
    rng = np.random.default_rng(seed)
    x0 = np.array(q.mean if init is None else init, dtype=float)
    B = np.vstack([x0[None, :], q.sample(T, rng)])
    lr = np.concatenate([t.log_posterior_batch(B[i:i + chunk]) - q.logpdf(B[i:i + chunk])
                         for i in range(0, T + 1, chunk)])
    log_u = np.log(rng.random(T + 1))
    log_u[0] = np.inf
    idx, acc = kernels.imh_select(lr, log_u, 0)
    idx = idx[1:]
    return ChainTrace(B[idx], lr[idx] + q.logpdf(B[idx]), acc / T, _burn(T, burn_in),
                      {"proposal": "gaussian"}, seed)


def _truncnorm_positive(mean, rng):
    """Draw w ~ N(mean, 1) conditioned on w > 0, elementwise."""
    lower = -mean
    out = np.empty_like(mean)
    mid = np.abs(lower) <= 6.0
    u = rng.random(mean.shape)
    # inverse CDF on the upper tail: x = -Phi^{-1}(u Phi(-l)) is accurate for l up to ~37
    out[mid] = -special.ndtri(u[mid] * special.ndtr(-lower[mid]))
    for i in np.flatnonzero(lower > 6.0):
        a = lower[i]
        alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
        while True:
            x = a + rng.exponential(1.0 / alpha)
            if rng.random() <= math.exp(-0.5 * (x - alpha) ** 2):
                out[i] = x
                break
    for i in np.flatnonzero(lower < -6.0):
        while True:
            x = rng.standard_normal()
            if x > lower[i]:
                out[i] = x
                break
    return mean + out


def gibbs_probit(t, T, seed, init=None, burn_in=None, keep_latents=False, keep_conditionals=False):
    """Data-augmentation Gibbs sampler for the probit model.

    With a Cauchy prior each beta_j carries a latent precision multiplier s_j
    so that beta_j | s_j ~ N(0, sigma_j^2 / s_j) and s_j ~ Gamma(1/2, rate 1/2).
    ``keep_conditionals`` stores the mean and marginal variances of each
    Gaussian draw beta | z (and s), for Rao-Blackwellised estimates.
    """
    if t.link.kind != "probit":
        raise UnsupportedLinkError("the data-augmentation Gibbs sampler needs the probit link")
    if T < 1:
        raise ValueError("T must be positive")
    rng = np.random.default_rng(seed)
    X, y = t.X, t.y
    p = t.p
    s2 = t.prior.kernel_scale**2
    XtX = X.T @ X
    cauchy = t.prior.kind == "cauchy"
    beta = np.zeros(p) if init is None else np.array(init, dtype=float)
    states = np.empty((T, p))
    lps = np.empty(T)
    s = np.ones(p)
    if not cauchy:
        L = linalg.cholesky(XtX + np.diag(1.0 / s2), lower=True)
    z = None
    min_margin = np.inf
    if keep_conditionals:
        cmeans = np.empty((T, p))
        cvars = np.empty((T, p)) if cauchy else None
    for it in range(T):
        z = y * _truncnorm_positive(y * (X @ beta), rng)
        min_margin = min(min_margin, float((y * z).min(initial=np.inf)))
        if cauchy:
            rate = 0.5 * (1.0 + beta**2 / s2)
            s = rng.gamma(1.0, 1.0 / rate)
            L = linalg.cholesky(XtX + np.diag(s / s2), lower=True)
        mu = linalg.cho_solve((L, True), X.T @ z)
        beta = mu + linalg.solve_triangular(L.T, rng.standard_normal(p), lower=False)
        if keep_conditionals:
            cmeans[it] = mu
            if cauchy:
                cvars[it] = _chol_inv_diag(L)
        states[it] = beta
        lps[it] = t.log_posterior(beta)
    tuning = {"min_latent_margin": min_margin}
    trace = ChainTrace(states, lps, 1.0, _burn(T, burn_in), tuning, seed)
    if keep_latents:
        trace.tuning["last_z"] = z
        trace.tuning["last_s"] = s
    if keep_conditionals:
        trace.tuning["conditional_means"] = cmeans
        trace.tuning["conditional_vars"] = (np.broadcast_to(_chol_inv_diag(L), (T, p))
                                            if not cauchy else cvars)
    return trace


def _chol_inv_diag(L):
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return (Linv**2).sum(axis=0)


def gibbs_conditional_mean(t, z, s=None):
    """E[beta | z] for the Gaussian (or scale-conditioned Cauchy) prior."""
    s2 = t.prior.kernel_scale**2
    prec = np.ones(t.p) / s2 if s is None else np.asarray(s) / s2
    return linalg.solve(t.X.T @ t.X + np.diag(prec), t.X.T @ z, assume_a="pos")


@dataclass
class PhasePoint:
    beta: np.ndarray
    momentum: np.ndarray
    energy: float = float("nan")


def hamiltonian(energy, beta, momentum, inv_mass):
    return energy(beta) + 0.5 * float(momentum @ (inv_mass @ momentum))


def leapfrog(pp, grad_energy, step_size, inv_mass):
    """One leapfrog step for H = E(beta) + rho' M^{-1} rho / 2.

    Returns ``(PhasePoint, ok)``; ``ok`` is False when the gradient is not finite.
    """
    if step_size <= 0:
        raise ValueError("step size must be positive")
    inv_mass = np.atleast_2d(inv_mass)
    r = pp.momentum - 0.5 * step_size * grad_energy(pp.beta)
    b = pp.beta + step_size * (inv_mass @ r)
    g = grad_energy(b)
    if not np.all(np.isfinite(g)):
        return PhasePoint(b, r), False
    r = r - 0.5 * step_size * g
    return PhasePoint(b, r), True


def hmc(t, q_calib, T, seed, target_rate=0.65, kappa=0.75, init=None, burn_in=None,
        max_steps=1000, step_size=None):
    """HMC with M^{-1} = Sigma_q, eps * L = 1 and vanishing adaptation of eps.

    log eps moves by t^-kappa (a_t - target_rate) where a_t is the acceptance
    probability at iteration t; adaptation stops after the burn-in.
    """
    if T < 1:
        raise ValueError("T must be positive")
    if not 0.5 < kappa <= 1.0:
        raise ValueError("kappa must lie in (1/2, 1]")
    p = t.p
    rng = np.random.default_rng(seed)
    inv_mass = np.ascontiguousarray(q_calib.cov)
    Lc = linalg.cholesky(inv_mass, lower=True)
    # momentum ~ N(0, M) with M = Sigma_q^{-1}
    rho = np.ascontiguousarray(linalg.solve_triangular(Lc.T, rng.standard_normal((p, T)), lower=False).T)
    log_u = np.log(rng.random(T))
    n_adapt = _burn(T, burn_in)
    eps0 = 0.1 * p**-0.25 if step_size is None else step_size
    if step_size is not None:
        n_adapt = 0
    beta0 = np.array(q_calib.mean if init is None else init, dtype=float)
    X, y, link, pk, ps = t.kernel_args()
    states, lps, acc, eps_hist, steps, divergent, log_eps = kernels.hmc_chain(
        beta0, rho, log_u, inv_mass, math.log(eps0), n_adapt, target_rate, kappa, max_steps,
        X, y, link, pk, ps)
    burn = _burn(T, burn_in)
    post = acc[burn:] if burn < T else acc
    tuning = {
        "final_step_size": math.exp(log_eps),
        "initial_step_size": eps0,
        "adapted_acceptance": float(post.mean()),
        "divergent": int(divergent),
        "mean_leapfrog_steps": float(steps.mean()),
        "step_size_history": eps_hist,
        "accept_prob": acc,
    }
    return ChainTrace(states, lps, float(acc.mean()), burn, tuning, seed)

"""Bayesian variable selection under a uniform prior over models.

A model is a bit vector gamma over the selectable (non-intercept) columns; the
intercept, when present, is always included. Small problems are enumerated;
larger ones use tempering SMC over {0,1}^k with independent Metropolis moves
drawn from a chain of nested logistic regressions.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import kernels
from .ep import ep_fit
from .gaussian import laplace
from .samplers import importance_sample, seed_sequence
from .smc import next_temperature

log = logging.getLogger(__name__)

MAX_ENUMERATE = 20
_CLAMP = 1e-4


class ModelEvidenceError(RuntimeError):
    def __init__(self, gamma, cause):
        super().__init__(f"evidence failed for model {''.join(str(int(g)) for g in gamma)}: {cause}")
        self.gamma = gamma


def n_selectable(t):
    return t.p - 1 if t.dataset.intercept else t.p


def model_columns(gamma, intercept):
    cols = [j + int(intercept) for j in np.flatnonzero(gamma)]
    return ([0] if intercept else []) + cols


def model_evidence(gamma, t, method="laplace", seed=None, n_inner=512):
    """log p(D | gamma) for the restricted model; ``is`` gives a noisy unbiased estimate.

    A model with no columns at all has likelihood 1/2 per observation.
    """
    gamma = np.asarray(gamma, dtype=bool)
    if t.n == 0:
        return 0.0
    cols = model_columns(gamma, t.dataset.intercept)
    if not cols:
        return t.n * math.log(0.5)
    tr = t.restrict(cols)
    try:
        if method == "laplace":
            return laplace(tr, init=np.zeros(tr.p)).log_evidence
        if method == "ep":
            return ep_fit(tr)[0].log_evidence
        if method == "is":
            return importance_sample(laplace(tr, init=np.zeros(tr.p)), tr, n_inner, seed).log_evidence
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise ModelEvidenceError(gamma, exc) from exc
    raise ValueError(f"unknown evidence method {method!r}")


class EvidenceOracle:
    """Evidence evaluations with a call counter.

    Deterministic methods are memoised by gamma. For ``is`` every call draws a
    fresh estimate from its own seed, as pseudo-marginal moves require.
    """

    def __init__(self, t, method="laplace", n_inner=512):
        self.t = t
        self.method = method
        self.n_inner = n_inner
        self.calls = 0
        self.fresh = 0
        self._memo = {}

    def __call__(self, gamma, seed=None):
        self.calls += 1
        gamma = np.asarray(gamma, dtype=bool)
        if self.method == "is":
            self.fresh += 1
            return model_evidence(gamma, self.t, "is", seed, self.n_inner)
        key = np.packbits(gamma).tobytes() + bytes([gamma.size % 256])
        if key not in self._memo:
            self.fresh += 1
            self._memo[key] = model_evidence(gamma, self.t, self.method)
        return self._memo[key]


@dataclass
class EnumerationResult:
    models: np.ndarray
    log_evidence: np.ndarray
    posterior: np.ndarray
    inclusion: np.ndarray

    def top(self, k=10):
        order = np.argsort(-self.posterior, kind="stable")[:k]
        return [(self.models[i], float(self.posterior[i]), float(self.log_evidence[i])) for i in order]


def all_models(k):
    codes = np.arange(2**k, dtype=np.int64)
    return ((codes[:, None] >> np.arange(k)) & 1).astype(bool)


def enumerate_varsel(t, method="laplace", seed=None, n_inner=512):
    """Posterior over all 2^k models by complete enumeration (k <= 20)."""
    k = n_selectable(t)
    if k > MAX_ENUMERATE:
        raise ValueError(f"{k} selectable columns is too many to enumerate (cap {MAX_ENUMERATE}); "
                         "use binary_smc_varsel instead")
    models = all_models(k)
    seeds = seed_sequence(seed).spawn(len(models))
    le = np.array([model_evidence(g, t, method, s, n_inner) for g, s in zip(models, seeds)])
    post = np.exp(le - special.logsumexp(le))
    return EnumerationResult(models, le, post, np.clip(post @ models, 0.0, 1.0))


# ---------------------------------------------------------------------------
# nested logistic proposal
# ---------------------------------------------------------------------------

@dataclass
class NestedLogisticProposal:
    """Product of conditionals P(gamma_j = 1 | gamma_1..gamma_{j-1}).

    ``coefs[j]`` holds j + 1 numbers: an intercept and one coefficient per
    preceding component. Probabilities are clamped to [1e-4, 1 - 1e-4].
    """

    coefs: list

    @property
    def k(self):
        return len(self.coefs)

    def _prob(self, j, G):
        c = self.coefs[j]
        eta = c[0] + G[:, :j].astype(float) @ c[1:]
        return np.clip(special.expit(eta), _CLAMP, 1.0 - _CLAMP)

    def sample(self, n, rng):
        G = np.zeros((n, self.k), dtype=bool)
        U = rng.random((n, self.k))
        for j in range(self.k):
            G[:, j] = U[:, j] < self._prob(j, G)
        return G

    def logpmf(self, G):
        G = np.atleast_2d(np.asarray(G, dtype=bool))
        out = np.zeros(G.shape[0])
        for j in range(self.k):
            pr = self._prob(j, G)
            out += np.where(G[:, j], np.log(pr), np.log1p(-pr))
        return out

    @classmethod
    def uniform(cls, k):
        return cls([np.zeros(j + 1) for j in range(k)])


def _fit_logistic(Z, y, w, penalty, max_iter=50, tol=1e-10):
    """Weighted logistic regression with a ridge penalty, by Newton's method."""
    theta = np.zeros(Z.shape[1])
    for _ in range(max_iter):
        eta = Z @ theta
        mu = special.expit(eta)
        grad = Z.T @ (w * (y - mu)) - penalty * theta
        H = (Z.T * (w * mu * (1.0 - mu))) @ Z + penalty * np.eye(Z.shape[1])
        step = linalg.solve(H, grad, assume_a="pos")
        theta = theta + step
        if np.max(np.abs(step)) < tol:
            break
    return theta


def fit_nested_logistic(G, weights=None, penalty=1e-2, min_corr=None):
    """Fit the nested conditionals to weighted particles.

    Weights are rescaled to sum to the number of particles. Components whose
    weighted frequency is within 1e-4 of 0 or 1 become constant Bernoullis.
    Component j regresses only on preceding components whose weighted
    correlation with it exceeds ``min_corr`` in absolute value; the default
    max(0.075, 3 / sqrt(ESS)) screens out correlations that are sampling
    noise, which otherwise make the chain overfit the particles.
    """
    G = np.asarray(G, dtype=bool)
    n, k = G.shape
    w = np.full(n, 1.0) if weights is None else np.asarray(weights, dtype=float)
    w = w * (n / w.sum())
    if min_corr is None:
        ess = n * n / float(w @ w)
        min_corr = max(0.075, 3.0 / math.sqrt(ess))
    Gf = G.astype(float)
    freq = w @ Gf / n
    C = ((Gf - freq) * w[:, None]).T @ (Gf - freq) / n
    sd = np.sqrt(np.maximum(np.diag(C), 1e-300))
    R = C / np.outer(sd, sd)
    coefs = []
    for j in range(k):
        c = np.zeros(j + 1)
        if freq[j] <= _CLAMP or freq[j] >= 1.0 - _CLAMP:
            c[0] = special.logit(min(max(freq[j], _CLAMP), 1.0 - _CLAMP))
            coefs.append(c)
            continue
        keep = np.flatnonzero(np.abs(R[j, :j]) > min_corr)
        Z = np.column_stack([np.ones(n), Gf[:, keep]])
        theta = _fit_logistic(Z, Gf[:, j], w, penalty)
        c[0] = theta[0]
        c[1 + keep] = theta[1:]
        coefs.append(c)
    return NestedLogisticProposal(coefs)


# ---------------------------------------------------------------------------
# binary tempering SMC
# ---------------------------------------------------------------------------

@dataclass
class GammaParticleSystem:
    models: np.ndarray
    log_evidence: np.ndarray
    log_weights: np.ndarray
    ladder: list
    log_marginal: float
    stages: list = field(default_factory=list)
    evidence_calls: int = 0
    audit: list = field(default_factory=list)

    @property
    def weights(self):
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    @property
    def inclusion(self):
        return np.clip(self.weights @ self.models, 0.0, 1.0)


def _stream(ss, *key):
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + key))


def _child_seeds(rng, n):
    return rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)


def binary_smc_varsel(t, N, tau=0.5, m=3, method="is", n_inner=512, seed=None,
                      max_stages=1000, audit=False):
    """Tempering SMC over models, pi_d(gamma) proportional to p(D | gamma)^d.

    Each particle carries its evidence estimate; a fresh estimate is drawn only
    for a proposed model, and kept only if the move is accepted.
    """
    k = n_selectable(t)
    ss = seed_sequence(seed)
    oracle = EvidenceOracle(t, method, n_inner)
    rng = _stream(ss, 0)
    G = rng.random((N, k)) < 0.5
    seeds = _child_seeds(rng, N)
    ell = np.array([oracle(g, int(s)) for g, s in zip(G, seeds)])
    trail = [("init", n, None) for n in range(N)] if audit else []
    delta_lo = 0.0
    ladder = [0.0]
    log_z = 0.0
    stages = []
    for stage in range(max_stages):
        delta = next_temperature(ell, delta_lo, tau)
        lw = (delta - delta_lo) * ell
        inc = float(special.logsumexp(lw) - math.log(N))
        log_z += inc
        W = np.exp(lw - lw.max())
        W /= W.sum()
        record = {"stage": stage, "delta_lo": delta_lo, "delta": delta,
                  "ef": float(1.0 / (N * (W**2).sum())), "log_evidence_increment": inc}
        ladder.append(delta)
        if delta >= 1.0:
            record["evidence_calls"] = oracle.calls
            stages.append(record)
            return GammaParticleSystem(G, ell, lw, ladder, log_z, stages, oracle.calls, trail)
        rng = _stream(ss, stage + 1)
        prop_dist = fit_nested_logistic(G, W)
        counts = kernels.systematic_counts(W, rng.random(), N)
        idx = np.repeat(np.arange(N), counts)
        G, ell = G[idx], ell[idx]
        lq = prop_dist.logpmf(G)
        accepted = 0
        for step in range(m):
            Gp = prop_dist.sample(N, rng)
            lqp = prop_dist.logpmf(Gp)
            seeds = _child_seeds(rng, N)
            ellp = np.array([oracle(g, int(s)) for g, s in zip(Gp, seeds)])
            log_u = np.log(rng.random(N))
            acc = log_u < delta * (ellp - ell) + lq - lqp
            if audit:
                trail.extend(("move", int(n), stage) for n in np.flatnonzero(acc))
            G = np.where(acc[:, None], Gp, G)
            ell = np.where(acc, ellp, ell)
            lq = np.where(acc, lqp, lq)
            accepted += int(acc.sum())
        record.update({"acceptance": accepted / (m * N) if m else None,
                       "evidence_calls": oracle.calls})
        stages.append(record)
        delta_lo = delta
    raise RuntimeError(f"tempering did not reach delta = 1 in {max_stages} stages")


@dataclass
class GammaChain:
    models: np.ndarray
    inclusion: np.ndarray
    acceptance_rate: float
    evidence_calls: int


def gamma_gibbs(t, budget, method="is", n_inner=512, seed=None, burn_in=0.1):
    """Single-site flip Metropolis over models with at most ``budget`` evidence calls.

    Components are visited in systematic order; every proposal costs one
    evidence evaluation. Inclusion probabilities are averages of the visited
    states after the first ``burn_in`` fraction of proposals.
    """
    k = n_selectable(t)
    ss = seed_sequence(seed)
    rng = _stream(ss, 0)
    oracle = EvidenceOracle(t, method, n_inner)
    g = rng.random(k) < 0.5
    ell = oracle(g, int(_child_seeds(rng, 1)[0]))
    n_prop = max(budget - 1, 0)
    states = np.empty((n_prop, k), dtype=bool)
    accepted = 0
    for it in range(n_prop):
        j = it % k
        gp = g.copy()
        gp[j] = not gp[j]
        ellp = oracle(gp, int(_child_seeds(rng, 1)[0]))
        if math.log(rng.random()) < ellp - ell:
            g, ell = gp, ellp
            accepted += 1
        states[it] = g
    kept = states[int(burn_in * n_prop):]
    incl = kept.mean(axis=0) if len(kept) else g.astype(float)
    return GammaChain(states, incl, accepted / max(n_prop, 1), oracle.calls)

"""Adaptive tempering SMC from a Gaussian proposal q to the posterior.

The sequence is pi_d(beta) proportional to q(beta)^(1-d) {p(beta) p(D|beta)}^d.
Moving from d_lo to d reweights particles by ratio^(d - d_lo), where ratio is
p(beta) p(D|beta) / q(beta).
"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special

from . import kernels
from .samplers import DegenerateWeightsError, WeightedSample, log_ess, seed_sequence

log = logging.getLogger(__name__)


def ef_at(log_ratio, delta, delta_lo):
    """Efficiency factor of the incremental weights ratio^(delta - delta_lo)."""
    lw = (delta - delta_lo) * np.asarray(log_ratio)
    return float(np.exp(log_ess(lw))) / lw.shape[0]


def next_temperature(log_ratio, delta_lo, tau, tol=1e-10):
    """Next tempering exponent.

    Returns 1.0 when the incremental weights at exponent 1 already have EF of
    at least ``tau``; otherwise the bisection root of EF(delta) = tau on
    [delta_lo, 1] (lower end of the final bracket, so EF >= tau).
    """
    if not 0.0 <= delta_lo < 1.0:
        raise ValueError("delta_lo must lie in [0, 1)")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    if ef_at(log_ratio, 1.0, delta_lo) >= tau:
        return 1.0
    lo, hi = delta_lo, 1.0
    if not ef_at(log_ratio, lo, delta_lo) >= tau:
        log.warning("EF does not cross tau on [%g, 1]; forcing the final stage", delta_lo)
        return 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ef_at(log_ratio, mid, delta_lo) >= tau:
            lo = mid
        else:
            hi = mid
    if lo <= delta_lo:
        # EF falls below tau immediately; take the smallest resolvable step
        lo = hi
    return lo


def systematic_resample(weights, N, seed):
    """Offspring counts O_n of systematic resampling: sum O_n = N, E[O_n] = N W_n."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("all weights are zero")
    rng = np.random.default_rng(seed)
    return kernels.systematic_counts(np.ascontiguousarray(w / total), rng.random(), int(N))


@dataclass
class ParticleSystem:
    particles: np.ndarray
    log_weights: np.ndarray
    delta: float
    ladder: list
    log_evidence: float
    acceptance: list = field(default_factory=list)
    ef: list = field(default_factory=list)
    stages: list = field(default_factory=list)

    @property
    def N(self):
        return self.particles.shape[0]

    @property
    def n_stages(self):
        return len(self.ladder) - 1

    def weighted_sample(self):
        return WeightedSample(self.particles, self.log_weights, self.log_evidence,
                              meta={"method": "smc", "ladder": list(self.ladder)})

    def stage_log_lines(self):
        return [json.dumps(s, sort_keys=True) for s in self.stages]

    def write_stage_log(self, path):
        with open(path, "w") as fh:
            for line in self.stage_log_lines():
                fh.write(line + "\n")


def _stage_rng(ss, stage):
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (stage,)))


def _log_ratio(q, t, B):
    return t.log_posterior_batch(B) - q.logpdf(B)


def _move(q, t, B, l, delta, m, rng, scale):
    """m random-walk Metropolis steps invariant for log q + delta * log ratio."""
    N, p = B.shape
    cov = np.atleast_2d(np.cov(B, rowvar=False))
    lam = scale**2 / p
    try:
        C = linalg.cholesky(lam * cov + 1e-12 * np.eye(p), lower=True)
    except linalg.LinAlgError:
        log.warning("particle covariance is singular; falling back to the proposal covariance")
        C = linalg.cholesky(lam * q.cov, lower=True)
    lq = q.logpdf(B)
    accepted = 0
    for _ in range(m):
        prop = B + rng.standard_normal((N, p)) @ C.T
        lq_prop = q.logpdf(prop)
        l_prop = t.log_posterior_batch(prop) - lq_prop
        log_u = np.log(rng.random(N))
        acc = log_u < (lq_prop + delta * l_prop) - (lq + delta * l)
        B = np.where(acc[:, None], prop, B)
        l = np.where(acc, l_prop, l)
        lq = np.where(acc, lq_prop, lq)
        accepted += int(acc.sum())
    return B, l, accepted / (m * N) if m else None


def temper_smc(q, t, N, tau=0.5, m=3, seed=None, scale=2.38, max_stages=1000):
    """Tempering SMC with adaptive exponents chosen by bisection on the EF.

    When the EF at exponent 1 is already at least ``tau`` the algorithm stops
    after its first stage and is exactly importance sampling from ``q``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    ss = seed_sequence(seed)
    # stage 0 consumes the same stream as importance_sample(q, t, N, seed)
    B = q.sample(N, np.random.default_rng(ss))
    l = _log_ratio(q, t, B)
    delta_lo = 0.0
    ladder = [0.0]
    log_z = 0.0
    stages = []
    efs, accs = [], []
    for stage in range(max_stages):
        delta = next_temperature(l, delta_lo, tau)
        lw = (delta - delta_lo) * l
        inc = float(special.logsumexp(lw) - math.log(N))
        log_z += inc
        ef = float(np.exp(log_ess(lw))) / N
        efs.append(ef)
        ladder.append(delta)
        record = {"stage": stage, "delta_lo": delta_lo, "delta": delta, "ef": ef,
                  "log_evidence_increment": inc, "log_evidence": log_z}
        if delta >= 1.0:
            stages.append(record)
            return ParticleSystem(B, lw, 1.0, ladder, log_z, accs, efs, stages)
        rng = _stage_rng(ss, stage + 1)
        W = np.exp(lw - lw.max())
        W /= W.sum()
        counts = kernels.systematic_counts(W, rng.random(), N)
        idx = np.repeat(np.arange(N), counts)
        B, l = B[idx], l[idx]
        B, l, rate = _move(q, t, B, l, delta, m, rng, scale)
        if m and rate == 0.0:
            log.warning("no move accepted at stage %d (delta=%.4g)", stage, delta)
        accs.append(rate)
        record.update({"acceptance": rate, "unique_ancestors": int((counts > 0).sum())})
        stages.append(record)
        delta_lo = delta
    raise RuntimeError(f"tempering did not reach delta = 1 in {max_stages} stages")

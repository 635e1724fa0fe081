"""Expectation propagation with rank-one Gaussian sites.

Each likelihood site is stored through two scalars (tau_i, nu_i) acting on the
projection s = x_i' beta, i.e. Q_i = tau_i x_i x_i' and r_i = nu_i x_i. A Cauchy
prior factorises over components, so it enters as p further rank-one sites
along the coordinate axes; a Gaussian prior is a fixed site that is never
updated.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import wofz

from . import kernels
from .gaussian import GaussianApprox, NotPositiveDefiniteError, _sym

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)
_MIN_DAMPING = 1.0 / 64.0


def gaussian_log_partition(r, Q):
    """log of the integral of exp(-b'Qb/2 + r'b) over R^p."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    try:
        L = linalg.cholesky(_sym(Q), lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError("Q is not positive definite") from None
    z = linalg.solve_triangular(L, r, lower=True)
    return 0.5 * len(r) * _LOG_2PI - np.log(np.diag(L)).sum() + 0.5 * float(z @ z)


def _psi1(nu, tau):
    return 0.5 * (_LOG_2PI - np.log(tau)) + 0.5 * nu * nu / tau


@dataclass
class HybridMoments:
    Z: float
    mean: np.ndarray
    cov: np.ndarray
    log_Z: float = None


def _lift(cavity, x, logz, mh, vh, v, m):
    sx = cavity.cov @ x
    mean = cavity.mean + sx * (mh - m) / v
    cov = cavity.cov + np.outer(sx, sx) * (vh - v) / (v * v)
    return HybridMoments(math.exp(logz), mean, _sym(cov), logz)


def _site_moments(cavity, y, x, link, quad):
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        # constant factor F(0) = 1/2
        return HybridMoments(0.5, cavity.mean.copy(), cavity.cov.copy(), math.log(0.5))
    v = float(x @ cavity.cov @ x)
    if v <= 0.0:
        raise FloatingPointError("cavity variance along x is not positive")
    m = float(x @ cavity.mean)
    t, lw = kernels.gauss_hermite(quad)
    logz, mh, vh = kernels.tilted_moments_batch(np.array([m]), np.array([v]), np.array([float(y)]),
                                                link, t, lw)
    return _lift(cavity, x, float(logz[0]), float(mh[0]), float(vh[0]), v, m)


def probit_site_moments(cavity, y, x):
    """Exact moments of Phi(y x'b) N(b; cavity) (normalised)."""
    return _site_moments(cavity, y, x, kernels.PROBIT, 64)


def logit_site_moments(cavity, y, x, quad=64):
    """Moments of L(y x'b) N(b; cavity) by adaptive Gauss-Hermite on x'b."""
    return _site_moments(cavity, y, x, kernels.LOGIT, quad)


def cauchy_tilted(m, v, scale):
    """(log Z, mean, var) of Cauchy(s; 0, scale) N(s; m, v), via the Faddeeva function."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    sd = np.sqrt(v)
    zeta = (m + 1j * scale) / (sd * math.sqrt(2.0))
    w = wofz(zeta)
    w1 = -2.0 * zeta * w + 2j / _SQRT_PI
    w2 = -2.0 * w - 2.0 * zeta * w1
    re = w.real
    g1 = (w1.real / re) / (sd * math.sqrt(2.0))
    g2 = (w2.real / re) / (2.0 * v)
    logz = np.log(re) - np.log(sd * math.sqrt(2.0 * math.pi))
    return logz, m + v * g1, v + v * v * (g2 - g1 * g1)


@dataclass
class EpSite:
    Q: np.ndarray
    r: np.ndarray
    log_Z: float


@dataclass
class EpState:
    """Sites and the global Gaussian of an EP run."""

    target: object
    tau: np.ndarray
    nu: np.ndarray
    log_z: np.ndarray
    prior_tau: np.ndarray
    prior_nu: np.ndarray
    prior_log_z: np.ndarray
    Q: np.ndarray = None
    r: np.ndarray = None
    cov: np.ndarray = None
    mean: np.ndarray = None
    log_evidence: float = float("nan")
    sweeps: int = 0
    converged: bool = False
    skipped: int = 0
    history: list = field(default_factory=list)

    @property
    def cauchy(self):
        return self.target.prior.kind == "cauchy"

    def prior_site(self):
        if self.cauchy:
            return np.diag(self.prior_tau), self.prior_nu.copy()
        sd = self.target.prior.kernel_scale
        return np.diag(1.0 / sd**2), np.zeros(self.target.p)

    def refresh(self):
        """Recompute the global natural and moment parameters from the sites."""
        X = self.target.X
        Q0, r0 = self.prior_site()
        Q = Q0 + (X.T * self.tau) @ X
        r = r0 + X.T @ self.nu
        g = GaussianApprox.from_natural(r, Q)
        self.Q, self.r, self.cov, self.mean = g.precision, g.shift, g.cov, g.mean
        return self

    def sites(self):
        X = self.target.X
        out = [EpSite(self.tau[i] * np.outer(X[i], X[i]), self.nu[i] * X[i], float(self.log_z[i]))
               for i in range(self.target.n)]
        if self.cauchy:
            for j in range(self.target.p):
                e = np.zeros(self.target.p)
                e[j] = 1.0
                out.append(EpSite(self.prior_tau[j] * np.outer(e, e), self.prior_nu[j] * e,
                                  float(self.prior_log_z[j])))
        return out

    def approx(self):
        return GaussianApprox(self.mean.copy(), self.cov.copy(), self.Q.copy(), self.r.copy(),
                              self.log_evidence)


def init_state(t):
    n, p = t.n, t.p
    if t.prior.kind == "cauchy":
        prior_tau = 1.0 / (2.0 * t.prior.scales) ** 2
    else:
        prior_tau = np.zeros(p)
    state = EpState(t, np.zeros(n), np.zeros(n), np.zeros(n), prior_tau, np.zeros(p), np.zeros(p))
    return state.refresh()


def _site_log_z(logz_h, tau_c, nu_c, tau, nu):
    return logz_h - (_psi1(nu_c + nu, tau_c + tau) - _psi1(nu_c, tau_c))


def ep_update_site(state, i, damping=1.0, quad=64):
    """Moment-match data site ``i`` against its hybrid, updating ``state`` in place.

    Returns False when the update is skipped because the cavity is not a
    proper Gaussian along x_i.
    """
    t = state.target
    x = t.X[i]
    if not np.any(x):
        state.tau[i] = state.nu[i] = 0.0
        state.log_z[i] = math.log(0.5)
        return True
    sx = state.cov @ x
    v = float(x @ sx)
    m = float(x @ state.mean)
    tau_c = 1.0 / v - state.tau[i]
    if tau_c <= 0.0:
        state.skipped += 1
        return False
    nu_c = m / v - state.nu[i]
    gh_t, gh_lw = kernels.gauss_hermite(quad)
    logz_h, mh, vh = (float(a[0]) for a in kernels.tilted_moments_batch(
        np.array([nu_c / tau_c]), np.array([1.0 / tau_c]), np.array([t.y[i]]), t.link.code, gh_t, gh_lw))
    tau_t = 1.0 / vh - tau_c
    nu_t = mh / vh - nu_c
    d = damping
    for _ in range(3):
        new_tau = (1.0 - d) * state.tau[i] + d * tau_t
        new_nu = (1.0 - d) * state.nu[i] + d * nu_t
        dtau, dnu = new_tau - state.tau[i], new_nu - state.nu[i]
        denom = 1.0 + dtau * v
        if denom > 1e-12:
            state.mean = state.mean + ((dnu - dtau * m) / denom) * sx
            state.cov = _sym(state.cov - (dtau / denom) * np.outer(sx, sx))
            state.Q = state.Q + dtau * np.outer(x, x)
            state.r = state.r + dnu * x
            state.tau[i], state.nu[i] = new_tau, new_nu
            state.log_z[i] = _site_log_z(logz_h, tau_c, nu_c, new_tau, new_nu)
            return True
        d *= 0.5
    state.skipped += 1
    return False


def _update_prior_sites(state, damping):
    """Sequential update of the Cauchy prior sites, one axis at a time."""
    scales = state.target.prior.scales
    for j in range(state.target.p):
        v = state.cov[j, j]
        m = state.mean[j]
        tau_c = 1.0 / v - state.prior_tau[j]
        if tau_c <= 0.0:
            state.skipped += 1
            continue
        nu_c = m / v - state.prior_nu[j]
        logz, mh, vh = (float(a) for a in cauchy_tilted(nu_c / tau_c, 1.0 / tau_c, scales[j]))
        if not (vh > 0.0 and math.isfinite(mh)):
            state.skipped += 1
            continue
        tau_t = 1.0 / vh - tau_c
        nu_t = mh / vh - nu_c
        d = damping
        sx = state.cov[:, j].copy()
        for _ in range(3):
            new_tau = (1.0 - d) * state.prior_tau[j] + d * tau_t
            new_nu = (1.0 - d) * state.prior_nu[j] + d * nu_t
            dtau, dnu = new_tau - state.prior_tau[j], new_nu - state.prior_nu[j]
            denom = 1.0 + dtau * v
            if denom > 1e-12:
                state.mean = state.mean + ((dnu - dtau * m) / denom) * sx
                state.cov = state.cov - (dtau / denom) * np.outer(sx, sx)
                state.prior_tau[j], state.prior_nu[j] = new_tau, new_nu
                break
            d *= 0.5
        else:
            state.skipped += 1


def _parallel_sweep(state, damping, gh_t, gh_lw):
    t = state.target
    X = t.X
    SX = X @ state.cov
    v = np.einsum("ij,ij->i", SX, X)
    m = X @ state.mean
    tau_c = 1.0 / v - state.tau
    nu_c = m / v - state.nu
    ok = tau_c > 0.0
    new_tau, new_nu = state.tau.copy(), state.nu.copy()
    if np.any(ok):
        _, mh, vh = kernels.tilted_moments_batch(nu_c[ok] / tau_c[ok], 1.0 / tau_c[ok], t.y[ok],
                                                 t.link.code, gh_t, gh_lw)
        good = (vh > 0.0) & np.isfinite(mh)
        idx = np.flatnonzero(ok)[good]
        new_tau[idx] = 1.0 / vh[good] - tau_c[idx]
        new_nu[idx] = mh[good] / vh[good] - nu_c[idx]
        ok[np.flatnonzero(ok)[~good]] = False
    p_tau, p_nu = state.prior_tau.copy(), state.prior_nu.copy()
    if state.cauchy:
        vd = np.diag(state.cov)
        ptc = 1.0 / vd - state.prior_tau
        pnc = state.mean / vd - state.prior_nu
        pok = ptc > 0.0
        _, mh, vh = cauchy_tilted(pnc[pok] / ptc[pok], 1.0 / ptc[pok], t.prior.scales[pok])
        p_tau[pok] = 1.0 / vh - ptc[pok]
        p_nu[pok] = mh / vh - pnc[pok]
    state.skipped += int((~ok).sum())
    old = (state.tau.copy(), state.nu.copy(), state.prior_tau.copy(), state.prior_nu.copy())
    d = damping
    for _ in range(3):
        state.tau = (1 - d) * old[0] + d * new_tau
        state.nu = (1 - d) * old[1] + d * new_nu
        state.prior_tau = (1 - d) * old[2] + d * p_tau
        state.prior_nu = (1 - d) * old[3] + d * p_nu
        try:
            state.refresh()
            return
        except NotPositiveDefiniteError:
            d *= 0.5
    state.tau, state.nu, state.prior_tau, state.prior_nu = old
    state.refresh()
    state.skipped += t.n


def compute_log_evidence(state, quad=64):
    """EP estimate of log p(D) from the current sites; also fills the site log Z."""
    t = state.target
    X = t.X
    total = 0.0
    if t.n:
        gh_t, gh_lw = kernels.gauss_hermite(quad)
        live = np.any(X != 0.0, axis=1)
        Xl = X[live]
        v = np.einsum("ij,ij->i", Xl @ state.cov, Xl)
        tau_c = 1.0 / v - state.tau[live]
        nu_c = (Xl @ state.mean) / v - state.nu[live]
        logz_h, _, _ = kernels.tilted_moments_batch(nu_c / tau_c, 1.0 / tau_c, t.y[live], t.link.code,
                                                    gh_t, gh_lw)
        state.log_z = np.full(t.n, math.log(0.5))
        state.log_z[live] = _site_log_z(logz_h, tau_c, nu_c, state.tau[live], state.nu[live])
        total += state.log_z.sum()
    if state.cauchy:
        vd = np.diag(state.cov)
        ptc = 1.0 / vd - state.prior_tau
        pnc = state.mean / vd - state.prior_nu
        logz_h, _, _ = cauchy_tilted(pnc / ptc, 1.0 / ptc, t.prior.scales)
        state.prior_log_z = _site_log_z(logz_h, ptc, pnc, state.prior_tau, state.prior_nu)
        total += state.prior_log_z.sum()
        total += gaussian_log_partition(state.r, state.Q)
    else:
        Q0, r0 = state.prior_site()
        total += gaussian_log_partition(state.r, state.Q) - gaussian_log_partition(r0, Q0)
    state.log_evidence = float(total)
    return state.log_evidence


def ep_fit(t, schedule="sequential", damping=1.0, tol=1e-6, max_sweeps=200, quad=64, order=None):
    """Run EP to convergence; returns ``(GaussianApprox, EpState)``.

    Convergence is declared when the largest change of the mean and of the
    marginal variances over a sweep falls below ``tol``.
    """
    if schedule not in ("sequential", "parallel"):
        raise ValueError(f"unknown schedule {schedule!r}")
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    state = init_state(t)
    gh_t, gh_lw = kernels.gauss_hermite(quad)
    site_order = np.arange(t.n) if order is None else np.asarray(order, dtype=np.int64)
    prev = np.concatenate([state.mean, np.diag(state.cov)])
    par_damping = damping
    for sweep in range(1, max_sweeps + 1):
        if schedule == "sequential":
            # on the first sweep the prior cavity is flat, so the prior sites wait
            if state.cauchy and sweep > 1:
                _update_prior_sites(state, damping)
            if t.n:
                cov = np.ascontiguousarray(state.cov)
                mean = np.ascontiguousarray(state.mean)
                state.skipped += kernels.ep_sweep(t.X, t.y, t.link.code, state.tau, state.nu, cov, mean,
                                                  damping, gh_t, gh_lw, site_order)
            if state.cauchy and sweep == 1:
                state.refresh()
                _update_prior_sites(state, damping)
            state.refresh()
        else:
            # a parallel sweep that moves twice as far as the previous one is
            # undone and retried with half the damping
            while True:
                snap = (state.tau.copy(), state.nu.copy(), state.prior_tau.copy(), state.prior_nu.copy())
                _parallel_sweep(state, par_damping, gh_t, gh_lw)
                cur = np.concatenate([state.mean, np.diag(state.cov)])
                change = float(np.max(np.abs(cur - prev)))
                if (sweep == 1 or change <= 2.0 * state.history[-1] or par_damping <= _MIN_DAMPING
                        or change < tol):
                    break
                state.tau, state.nu, state.prior_tau, state.prior_nu = snap
                state.refresh()
                par_damping = max(0.5 * par_damping, _MIN_DAMPING)
                log.debug("parallel EP sweep %d diverging; damping lowered to %g", sweep, par_damping)
        cur = np.concatenate([state.mean, np.diag(state.cov)])
        change = float(np.max(np.abs(cur - prev)))
        state.history.append(change)
        prev = cur
        state.sweeps = sweep
        if change < tol:
            state.converged = True
            break
    if not state.converged:
        log.warning("EP did not converge in %d sweeps (last change %.3g)", max_sweeps, change)
    compute_log_evidence(state, quad)
    return state.approx(), state

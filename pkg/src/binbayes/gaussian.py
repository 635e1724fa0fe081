"""MAP estimation and the Laplace family of Gaussian approximations."""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import PosteriorTarget, Prior

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class ApproximationError(RuntimeError):
    pass


def _chol(A, what="matrix"):
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from None


def _sym(A):
    return 0.5 * (A + A.T)


@dataclass
class GaussianApprox:
    """A p-variate Gaussian held in both moment and natural form.

    ``precision @ mean == shift`` and ``precision == inv(cov)``.
    """

    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray
    shift: np.ndarray
    log_evidence: float = None

    @classmethod
    def from_moments(cls, mean, cov, log_evidence=None):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = _sym(np.atleast_2d(np.asarray(cov, dtype=float)))
        L = _chol(cov, "covariance")
        Linv = linalg.solve_triangular(L, np.eye(len(mean)), lower=True)
        Q = _sym(Linv.T @ Linv)
        return cls(mean, cov, Q, Q @ mean, log_evidence)

    @classmethod
    def from_natural(cls, shift, precision, log_evidence=None):
        shift = np.asarray(shift, dtype=float).reshape(-1)
        Q = _sym(np.atleast_2d(np.asarray(precision, dtype=float)))
        L = _chol(Q, "precision")
        mean = linalg.cho_solve((L, True), shift)
        Linv = linalg.solve_triangular(L, np.eye(len(shift)), lower=True)
        return cls(mean, _sym(Linv.T @ Linv), Q, shift, log_evidence)

    @property
    def p(self):
        return self.mean.shape[0]

    @property
    def sd(self):
        return np.sqrt(np.diag(self.cov))

    def cholesky(self):
        return _chol(self.cov, "covariance")

    def sample(self, N, rng):
        z = rng.standard_normal((N, self.p))
        return self.mean + z @ self.cholesky().T

    def logpdf(self, B):
        B = np.atleast_2d(B)
        L = self.cholesky()
        z = linalg.solve_triangular(L, (B - self.mean).T, lower=True)
        return (-0.5 * self.p * _LOG_2PI - np.log(np.diag(L)).sum()
                - 0.5 * (z * z).sum(axis=0))

    def marginal_density(self, j, grid):
        s = math.sqrt(self.cov[j, j])
        z = (np.asarray(grid) - self.mean[j]) / s
        return np.exp(-0.5 * z * z) / (s * math.sqrt(2.0 * math.pi))

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "covariance": self.cov.tolist(),
            "log_evidence": None if self.log_evidence is None else float(self.log_evidence),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls.from_moments(d["mean"], d["covariance"], d.get("log_evidence"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def prior_gaussian(prior):
    """The Gaussian prior itself, as a :class:`GaussianApprox`."""
    if prior.kind != "gaussian":
        raise ValueError("only a Gaussian prior is itself Gaussian")
    sd = prior.kernel_scale
    return GaussianApprox.from_moments(np.zeros(prior.p), np.diag(sd**2))


@dataclass
class MapResult:
    beta: np.ndarray
    hessian: np.ndarray
    iterations: int
    converged: bool
    gradient_norm: float
    log_posterior: float
    history: list


def ols_init(t):
    """Least-squares fit of the +-1 labels on X (zeros if there is no data)."""
    if t.n == 0:
        return np.zeros(t.p)
    beta, *_ = np.linalg.lstsq(t.X, t.y, rcond=None)
    return beta


def _ascent_direction(grad, hess):
    """Newton direction; shift the Hessian when it is not negative definite."""
    try:
        L = linalg.cholesky(-hess, lower=True)
        return linalg.cho_solve((L, True), grad), False
    except linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(_sym(hess)).max())
        shifted = hess - (lam + 1e-6) * np.eye(len(grad))
        L = linalg.cholesky(-shifted, lower=True)
        return linalg.cho_solve((L, True), grad), True


def newton_map(t, init=None, tol=1e-8, max_iter=100, fixed=None):
    """Maximise the log posterior by Newton-Raphson with step halving.

    ``fixed`` optionally maps component indices to values held constant; the
    search then runs over the remaining components only and ``hessian`` is the
    Hessian of those free components.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = t.p
    beta = ols_init(t) if init is None else np.array(init, dtype=float)
    if not np.all(np.isfinite(beta)):
        raise ValueError("initial point is not finite")
    free = np.arange(p)
    if fixed:
        for j, v in fixed.items():
            beta[j] = v
        free = np.array([j for j in range(p) if j not in fixed], dtype=int)

    f, g, H = t.log_posterior_with_derivatives(beta)
    history = [f]
    steps = 0
    while steps < max_iter:
        gf, Hf = g[free], H[np.ix_(free, free)]
        if np.max(np.abs(gf), initial=0.0) <= tol:
            break
        step, shifted = _ascent_direction(gf, Hf)
        if shifted:
            log.debug("Hessian not negative definite at iteration %d; shifted", steps + 1)
        lam = 1.0
        accepted = False
        for _ in range(40):
            cand = beta.copy()
            cand[free] += lam * step
            fc, gc, Hc = t.log_posterior_with_derivatives(cand)
            # ties within rounding are accepted only if they reduce the gradient
            if np.isfinite(fc) and (fc >= f or (fc >= f - 1e-12 * (1.0 + abs(f))
                                                and np.abs(gc[free]).max() < np.abs(gf).max())):
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        beta, f, g, H = cand, fc, gc, Hc
        history.append(f)
        steps += 1
    gnorm = float(np.max(np.abs(g[free]), initial=0.0))
    converged = gnorm <= tol
    return MapResult(beta, H[np.ix_(free, free)], steps, bool(converged), gnorm, f, history)


def laplace(t, map_result=None, **newton_kw):
    """Gaussian centred at the MAP with precision minus the Hessian there."""
    res = map_result if map_result is not None else newton_map(t, **newton_kw)
    if not res.converged:
        raise ApproximationError(
            f"Newton-Raphson did not converge (|grad|={res.gradient_norm:.3g} after {res.iterations} iterations)")
    Q = _sym(-res.hessian)
    L = _chol(Q, "negative Hessian at the mode")
    logdet = 2.0 * np.log(np.diag(L)).sum()
    log_z = res.log_posterior + 0.5 * t.p * _LOG_2PI - 0.5 * logdet
    return GaussianApprox.from_natural(Q @ res.beta, Q, log_evidence=float(log_z))


@dataclass
class MarginalCurve:
    index: int
    grid: np.ndarray
    density: np.ndarray
    dropped: int = 0

    def mean(self):
        return float(np.trapezoid(self.grid * self.density, self.grid))


def improved_laplace_marginal(t, j, n_grid=64, span=5.0, approx=None):
    """Marginal of component ``j`` via conditional Laplace fits along a grid.

    At each grid value b the remaining components are maximised with beta_j = b
    and the unnormalised density is p(beta_hat) p(D|beta_hat) / |H_hat|^(1/2).
    """
    if n_grid < 2:
        raise ValueError("the grid needs at least two points")
    if approx is None:
        approx = laplace(t)
    sd = math.sqrt(approx.cov[j, j])
    grid = approx.mean[j] + np.linspace(-span, span, n_grid) * sd
    logq = np.full(n_grid, np.nan)
    centre = int(np.argmin(np.abs(grid - approx.mean[j])))
    # walk outward from the centre so each conditional fit is warm-started
    order = [list(range(centre, n_grid)), list(range(centre - 1, -1, -1))]
    for path in order:
        start = approx.mean.copy()
        for k in path:
            if t.p == 1:
                logq[k] = t.log_posterior(np.array([grid[k]]))
                continue
            res = newton_map(t, init=start, fixed={j: grid[k]})
            if not res.converged:
                log.warning("conditional fit failed at grid point %d (beta_%d=%.4g)", k, j, grid[k])
                continue
            sign, logdet = np.linalg.slogdet(-res.hessian)
            if sign <= 0:
                log.warning("conditional Hessian not negative definite at grid point %d", k)
                continue
            logq[k] = res.log_posterior - 0.5 * logdet
            start = res.beta
    ok = np.isfinite(logq)
    dropped = int((~ok).sum())
    if dropped > 0.2 * n_grid:
        raise ApproximationError(f"{dropped} of {n_grid} grid points failed")
    g, lq = grid[ok], logq[ok]
    dens = np.exp(lq - lq.max())
    dens /= np.trapezoid(dens, g)
    return MarginalCurve(j, g, dens, dropped)


@dataclass
class LaplaceEMResult:
    approx: GaussianApprox
    variances: np.ndarray
    iterations: int
    converged: bool


def _gaussian_prior_target(t, variances):
    # Prior stores Cauchy-equivalent scales; a Gaussian with variance v has scale sqrt(v)/2
    return PosteriorTarget(t.dataset, Prior("gaussian", np.sqrt(variances) / 2.0), t.link)


def _newton_step(t, beta):
    _, g, H = t.log_posterior_with_derivatives(beta)
    step, _ = _ascent_direction(g, H)
    return beta + step


def laplace_em_mstep(beta_sq, prior_var, nu=1.0):
    """Conditional update of the component variances given E[beta_j^2]."""
    return (prior_var * nu + beta_sq) / (nu + 2.0)


def laplace_em(t, tol=1e-8, max_iter=500, nu=1.0):
    """Approximate EM over the scale-mixture variances of a Cauchy prior.

    Each E-step replaces p(beta | sigma^2, D) by the Gaussian obtained from one
    Newton-Raphson step; after convergence one more step gives the reported
    approximation.
    """
    if t.prior.kind != "cauchy":
        raise ValueError("Laplace-EM requires a Cauchy prior")
    s = t.prior.scales**2
    var = s.copy()
    beta = ols_init(t)
    best = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        tg = _gaussian_prior_target(t, var)
        beta = _newton_step(tg, beta)
        _, _, H = tg.log_posterior_with_derivatives(beta)
        cov = linalg.inv(-H)
        new_var = laplace_em_mstep(beta**2 + np.diag(cov), s, nu)
        change = np.max(np.abs(new_var - var) / var)
        var = new_var
        best = (beta.copy(), var.copy())
        if change < tol:
            converged = True
            break
    if not converged:
        log.warning("Laplace-EM did not converge in %d iterations", max_iter)
    beta, var = best
    tg = _gaussian_prior_target(t, var)
    beta = _newton_step(tg, beta)
    _, _, H = tg.log_posterior_with_derivatives(beta)
    Q = _sym(-H)
    approx = GaussianApprox.from_natural(Q @ beta, Q)
    return LaplaceEMResult(approx, var, it, converged)

"""Hot numerical kernels.

Each kernel exists twice: a loop-style implementation compiled with numba and a
vectorised numpy implementation. The module-level names (``loglik_batch``,
``rwmh_chain`` ...) point at the numba variant unless numba is unavailable or
``BINBAYES_DISABLE_NUMBA`` is set. Randomness is always drawn by the caller and
passed in as arrays, so both variants consume identical random streams.
"""
import math

import numpy as np
from scipy.special import erfc as _erfc
from scipy.special import expit as _expit

from ._jit import USE_NUMBA, njit

PROBIT = 0
LOGIT = 1
GAUSSIAN = 0
CAUCHY = 1

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)
_SQRT2 = math.sqrt(2.0)
# below this argument log Phi switches to the asymptotic expansion
_ASYM_CUT = -8.0
_HALF_LOG_2PI = 0.5 * _LOG_2PI


# ---------------------------------------------------------------------------
# scalar link functions (jitted; also callable from plain Python)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mills_series_m1(x):
    # S(x) - 1 where Phi(x) ~ phi(x)/(-x) * S(x), S = sum (-1)^k (2k-1)!!/x^(2k)
    x2 = x * x
    term = 1.0
    acc = 0.0
    for k in range(1, 40):
        term *= -(2.0 * k - 1.0) / x2
        acc += term
        if abs(term) < 1e-17:
            break
    return acc


@njit(cache=True)
def log_ndtr_scalar(x):
    if x > 0.0:
        return math.log1p(-0.5 * math.erfc(x / _SQRT2))
    if x >= _ASYM_CUT:
        return math.log(0.5 * math.erfc(-x / _SQRT2))
    return -0.5 * x * x - math.log(-x) - _HALF_LOG_2PI + math.log1p(_mills_series_m1(x))


@njit(cache=True)
def dlog_ndtr_scalar(x):
    if x >= _ASYM_CUT:
        return math.exp(-0.5 * x * x - _HALF_LOG_2PI - log_ndtr_scalar(x))
    return -x / (1.0 + _mills_series_m1(x))


@njit(cache=True)
def d2log_ndtr_scalar(x):
    r = dlog_ndtr_scalar(x)
    if x >= _ASYM_CUT:
        return -r * (x + r)
    s1 = _mills_series_m1(x)
    return -r * x * s1 / (1.0 + s1)


@njit(cache=True)
def log_logistic_scalar(x):
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True)
def _logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def log_cdf_scalar(x, link):
    if link == PROBIT:
        return log_ndtr_scalar(x)
    return log_logistic_scalar(x)


@njit(cache=True)
def dlog_cdf_scalar(x, link):
    if link == PROBIT:
        return dlog_ndtr_scalar(x)
    return _logistic(-x)


@njit(cache=True)
def d2log_cdf_scalar(x, link):
    if link == PROBIT:
        return d2log_ndtr_scalar(x)
    return -_logistic(x) * _logistic(-x)


# ---------------------------------------------------------------------------
# vectorised link functions (numpy)
# ---------------------------------------------------------------------------

def _mills_series_m1_np(x):
    x2 = x * x
    term = np.ones_like(x)
    acc = np.zeros_like(x)
    for k in range(1, 40):
        term = term * (-(2.0 * k - 1.0) / x2)
        acc += term
        if np.all(np.abs(term) < 1e-17):
            break
    return acc


def log_ndtr(x):
    """Stable log of the standard normal CDF."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x > 0.0
    mid = (~pos) & (x >= _ASYM_CUT)
    low = x < _ASYM_CUT
    with np.errstate(divide="ignore"):
        out[pos] = np.log1p(-0.5 * _erfc(x[pos] / _SQRT2))
        out[mid] = np.log(0.5 * _erfc(-x[mid] / _SQRT2))
    xl = x[low]
    if xl.size:
        out[low] = -0.5 * xl * xl - np.log(-xl) - _HALF_LOG_2PI + np.log1p(_mills_series_m1_np(xl))
    return out


def dlog_ndtr(x):
    """Inverse Mills ratio phi(x)/Phi(x)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    hi = x >= _ASYM_CUT
    xh = x[hi]
    out[hi] = np.exp(-0.5 * xh * xh - _HALF_LOG_2PI - log_ndtr(xh))
    xl = x[~hi]
    if xl.size:
        out[~hi] = -xl / (1.0 + _mills_series_m1_np(xl))
    return out


def d2log_ndtr(x):
    x = np.asarray(x, dtype=float)
    r = dlog_ndtr(x)
    out = -r * (x + r)
    lo = x < _ASYM_CUT
    if np.any(lo):
        s1 = _mills_series_m1_np(x[lo])
        out[lo] = -r[lo] * x[lo] * s1 / (1.0 + s1)
    return out


def log_cdf(x, link):
    x = np.asarray(x, dtype=float)
    if link == PROBIT:
        return log_ndtr(x)
    return -np.logaddexp(0.0, -x)


def dlog_cdf(x, link):
    x = np.asarray(x, dtype=float)
    if link == PROBIT:
        return dlog_ndtr(x)
    return _expit(-x)


def d2log_cdf(x, link):
    x = np.asarray(x, dtype=float)
    if link == PROBIT:
        return d2log_ndtr(x)
    return -_expit(x) * _expit(-x)


# ---------------------------------------------------------------------------
# log-likelihood over a batch of coefficient vectors
# ---------------------------------------------------------------------------

@njit(cache=True)
def _loglik_batch_nb(X, y, B, link):
    N = B.shape[0]
    n = X.shape[0]
    out = np.zeros(N)
    if n == 0:
        return out
    Xt = np.ascontiguousarray(X.T)
    chunk = 1024
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        lin = np.ascontiguousarray(B[start:stop]) @ Xt
        for k in range(stop - start):
            acc = 0.0
            for i in range(n):
                acc += log_cdf_scalar(y[i] * lin[k, i], link)
            out[start + k] = acc
    return out


def _loglik_batch_np(X, y, B, link, chunk=2048):
    N = B.shape[0]
    out = np.zeros(N)
    if X.shape[0] == 0:
        return out
    for start in range(0, N, chunk):
        lin = (X @ B[start:start + chunk].T) * y[:, None]
        out[start:start + chunk] = log_cdf(lin, link).sum(axis=0)
    return out


@njit(cache=True)
def _log_prior_point(beta, prior_kind, prior_scale):
    acc = 0.0
    for j in range(beta.shape[0]):
        s = prior_scale[j]
        b = beta[j]
        if prior_kind == GAUSSIAN:
            acc -= _HALF_LOG_2PI + math.log(s) + 0.5 * (b / s) ** 2
        else:
            acc -= _LOG_PI + math.log(s) + math.log1p((b / s) ** 2)
    return acc


@njit(cache=True)
def _logpost_point_nb(beta, X, y, link, prior_kind, prior_scale):
    n, p = X.shape
    acc = _log_prior_point(beta, prior_kind, prior_scale)
    for i in range(n):
        s = 0.0
        for j in range(p):
            s += X[i, j] * beta[j]
        acc += log_cdf_scalar(y[i] * s, link)
    return acc


@njit(cache=True)
def _logpost_grad_point_nb(beta, X, y, link, prior_kind, prior_scale):
    n, p = X.shape
    grad = np.zeros(p)
    acc = _log_prior_point(beta, prior_kind, prior_scale)
    for j in range(p):
        s = prior_scale[j]
        if prior_kind == GAUSSIAN:
            grad[j] = -beta[j] / (s * s)
        else:
            grad[j] = -2.0 * beta[j] / (s * s + beta[j] * beta[j])
    for i in range(n):
        s = 0.0
        for j in range(p):
            s += X[i, j] * beta[j]
        u = y[i] * s
        acc += log_cdf_scalar(u, link)
        d = dlog_cdf_scalar(u, link) * y[i]
        for j in range(p):
            grad[j] += d * X[i, j]
    return acc, grad


def log_prior_batch(B, prior_kind, prior_scale):
    z = B / prior_scale
    if prior_kind == GAUSSIAN:
        return -(_HALF_LOG_2PI + np.log(prior_scale)).sum() - 0.5 * (z * z).sum(axis=1)
    return -(_LOG_PI + np.log(prior_scale)).sum() - np.log1p(z * z).sum(axis=1)


def _logpost_point_np(beta, X, y, link, prior_kind, prior_scale):
    val = log_prior_batch(beta[None, :], prior_kind, prior_scale)[0]
    if X.shape[0]:
        val += log_cdf(y * (X @ beta), link).sum()
    return val


def _logpost_grad_point_np(beta, X, y, link, prior_kind, prior_scale):
    val = _logpost_point_np(beta, X, y, link, prior_kind, prior_scale)
    s = prior_scale
    if prior_kind == GAUSSIAN:
        grad = -beta / (s * s)
    else:
        grad = -2.0 * beta / (s * s + beta * beta)
    if X.shape[0]:
        u = y * (X @ beta)
        grad = grad + X.T @ (dlog_cdf(u, link) * y)
    return val, grad


# ---------------------------------------------------------------------------
# Markov chain drivers
# ---------------------------------------------------------------------------

def _make_rwmh_chain(logpost):
    def rwmh_chain(beta0, increments, log_u, X, y, link, prior_kind, prior_scale):
        T, p = increments.shape
        states = np.empty((T, p))
        lps = np.empty(T)
        beta = beta0.copy()
        lp = logpost(beta, X, y, link, prior_kind, prior_scale)
        accepted = 0
        for t in range(T):
            prop = beta + increments[t]
            lp_prop = logpost(prop, X, y, link, prior_kind, prior_scale)
            if log_u[t] < lp_prop - lp:
                beta = prop
                lp = lp_prop
                accepted += 1
            states[t] = beta
            lps[t] = lp
        return states, lps, accepted

    return rwmh_chain


def _make_leapfrog(grad_fn):
    def leapfrog_path(beta, rho, eps, n_steps, inv_mass, X, y, link, prior_kind, prior_scale):
        lp, g = grad_fn(beta, X, y, link, prior_kind, prior_scale)
        b = beta.copy()
        r = rho.copy()
        for _ in range(n_steps):
            r = r + 0.5 * eps * g
            b = b + eps * (inv_mass @ r)
            lp, g = grad_fn(b, X, y, link, prior_kind, prior_scale)
            if not np.isfinite(lp):
                return b, r, lp, False
            r = r + 0.5 * eps * g
        return b, r, lp, True

    return leapfrog_path


def _make_hmc_chain(grad_fn, leapfrog_path):
    def hmc_chain(beta0, rho0, log_u, inv_mass, log_eps0, n_adapt, target_rate, kappa,
                  max_steps, X, y, link, prior_kind, prior_scale):
        T, p = rho0.shape
        states = np.empty((T, p))
        lps = np.empty(T)
        accept_prob = np.empty(T)
        eps_hist = np.empty(T)
        n_steps_hist = np.empty(T, dtype=np.int64)
        beta = beta0.copy()
        lp, _ = grad_fn(beta, X, y, link, prior_kind, prior_scale)
        log_eps = log_eps0
        divergent = 0
        for t in range(T):
            eps = math.exp(log_eps)
            n_steps = int(round(1.0 / eps))
            if n_steps < 1:
                n_steps = 1
            if n_steps > max_steps:
                n_steps = max_steps
            rho = rho0[t]
            h0 = -lp + 0.5 * (rho @ (inv_mass @ rho))
            b_new, r_new, lp_new, ok = leapfrog_path(beta, rho, eps, n_steps, inv_mass,
                                                     X, y, link, prior_kind, prior_scale)
            a = 0.0
            if ok:
                h1 = -lp_new + 0.5 * (r_new @ (inv_mass @ r_new))
                dh = h1 - h0
                if not math.isfinite(dh) or abs(dh) > 1000.0:
                    divergent += 1
                else:
                    a = 1.0 if dh <= 0.0 else math.exp(-dh)
                    if log_u[t] < -dh:
                        beta = b_new
                        lp = lp_new
            else:
                divergent += 1
            accept_prob[t] = a
            eps_hist[t] = eps
            n_steps_hist[t] = n_steps
            if t < n_adapt:
                log_eps += (t + 1.0) ** (-kappa) * (a - target_rate)
            states[t] = beta
            lps[t] = lp
        return states, lps, accept_prob, eps_hist, n_steps_hist, divergent, log_eps

    return hmc_chain


_rwmh_chain_np = _make_rwmh_chain(_logpost_point_np)
_leapfrog_path_np = _make_leapfrog(_logpost_grad_point_np)
_hmc_chain_np = _make_hmc_chain(_logpost_grad_point_np, _leapfrog_path_np)

_rwmh_chain_nb = njit(_make_rwmh_chain(_logpost_point_nb))
_leapfrog_path_nb = njit(_make_leapfrog(_logpost_grad_point_nb))
_hmc_chain_nb = njit(_make_hmc_chain(_logpost_grad_point_nb, _leapfrog_path_nb))


# ---------------------------------------------------------------------------
# EP: one-dimensional tilted moments and sequential sweep
# ---------------------------------------------------------------------------

@njit(cache=True)
def _probit_tilted(m, v, y):
    sq = math.sqrt(1.0 + v)
    z = y * m / sq
    logz = log_ndtr_scalar(z)
    r = dlog_ndtr_scalar(z)
    mh = m + y * v * r / sq
    vh = v - v * v * r * (z + r) / (1.0 + v)
    return logz, mh, vh


@njit(cache=True)
def _tilted_mode(m, v, y, link):
    # the log tilted density is strictly concave; its mode lies between m and
    # m + v * y * (log F)'(y m). Newton steps that leave the bracket are bisected.
    lo = m
    hi = m + v * y * dlog_cdf_scalar(y * m, link)
    if lo > hi:
        lo, hi = hi, lo
    a = m
    for _ in range(200):
        g1 = y * dlog_cdf_scalar(y * a, link) - (a - m) / v
        if g1 > 0.0:
            lo = a
        else:
            hi = a
        g2 = d2log_cdf_scalar(y * a, link) - 1.0 / v
        new = a - g1 / g2
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - a) < 1e-13 * (1.0 + abs(a)) or hi - lo < 1e-13 * (1.0 + abs(a)):
            a = new
            break
        a = new
    return a


@njit(cache=True)
def _gh_tilted(m, v, y, link, gh_t, gh_lw):
    # adaptive Gauss-Hermite: nodes centred on the tilted mode, scaled by its curvature
    a = _tilted_mode(m, v, y, link)
    g2 = d2log_cdf_scalar(y * a, link) - 1.0 / v
    b = -1.0 / g2
    sb = math.sqrt(2.0 * b)
    ga = log_cdf_scalar(y * a, link) - 0.5 * (a - m) ** 2 / v
    K = gh_t.shape[0]
    c = np.empty(K)
    s = np.empty(K)
    tot = 0.0
    for k in range(K):
        s[k] = a + sb * gh_t[k]
        gk = log_cdf_scalar(y * s[k], link) - 0.5 * (s[k] - m) ** 2 / v
        c[k] = math.exp(gh_lw[k] + gk - ga)
        tot += c[k]
    mh = 0.0
    for k in range(K):
        mh += c[k] * s[k]
    mh /= tot
    vh = 0.0
    for k in range(K):
        vh += c[k] * (s[k] - mh) ** 2
    vh /= tot
    logz = math.log(sb) + ga + math.log(tot) - 0.5 * (_LOG_2PI + math.log(v))
    return logz, mh, vh


@njit(cache=True)
def tilted_moments_1d(m, v, y, link, gh_t, gh_lw):
    """(log Z, mean, variance) of F(y s) N(s; m, v) normalised over s."""
    if link == PROBIT:
        return _probit_tilted(m, v, y)
    return _gh_tilted(m, v, y, link, gh_t, gh_lw)


@njit(cache=True)
def _ep_sweep_nb(X, y, link, tau, nu, Sigma, mu, damping, gh_t, gh_lw, order):
    n, p = X.shape
    skipped = 0
    sx = np.empty(p)
    for idx in range(order.shape[0]):
        i = order[idx]
        x = X[i]
        for a in range(p):
            acc = 0.0
            for b in range(p):
                acc += Sigma[a, b] * x[b]
            sx[a] = acc
        v = 0.0
        m = 0.0
        for a in range(p):
            v += x[a] * sx[a]
            m += x[a] * mu[a]
        if v <= 0.0:
            continue
        tau_c = 1.0 / v - tau[i]
        if tau_c <= 0.0:
            skipped += 1
            continue
        nu_c = m / v - nu[i]
        vc = 1.0 / tau_c
        mc = vc * nu_c
        logz, mh, vh = tilted_moments_1d(mc, vc, y[i], link, gh_t, gh_lw)
        if not (vh > 0.0) or not math.isfinite(mh):
            skipped += 1
            continue
        tau_t = 1.0 / vh - tau_c
        nu_t = mh / vh - nu_c
        done = False
        d = damping
        for _ in range(3):
            new_tau = (1.0 - d) * tau[i] + d * tau_t
            new_nu = (1.0 - d) * nu[i] + d * nu_t
            dtau = new_tau - tau[i]
            dnu = new_nu - nu[i]
            denom = 1.0 + dtau * v
            if denom > 1e-12:
                c = dtau / denom
                f = (dnu - dtau * m) / denom
                for a in range(p):
                    mu[a] += f * sx[a]
                    for b in range(p):
                        Sigma[a, b] -= c * sx[a] * sx[b]
                tau[i] = new_tau
                nu[i] = new_nu
                done = True
                break
            d *= 0.5
        if not done:
            skipped += 1
    return skipped


def _ep_sweep_np(X, y, link, tau, nu, Sigma, mu, damping, gh_t, gh_lw, order):
    # the sweep is inherently sequential; numpy only vectorises the p-dim algebra
    skipped = 0
    for i in order:
        x = X[i]
        sx = Sigma @ x
        v = float(x @ sx)
        m = float(x @ mu)
        if v <= 0.0:
            continue
        tau_c = 1.0 / v - tau[i]
        if tau_c <= 0.0:
            skipped += 1
            continue
        nu_c = m / v - nu[i]
        vc = 1.0 / tau_c
        mc = vc * nu_c
        _, mh, vh = tilted_moments_batch(np.array([mc]), np.array([vc]), np.array([y[i]]),
                                         link, gh_t, gh_lw)
        mh, vh = float(mh[0]), float(vh[0])
        if not (vh > 0.0) or not np.isfinite(mh):
            skipped += 1
            continue
        tau_t = 1.0 / vh - tau_c
        nu_t = mh / vh - nu_c
        d = damping
        for _ in range(3):
            new_tau = (1.0 - d) * tau[i] + d * tau_t
            new_nu = (1.0 - d) * nu[i] + d * nu_t
            dtau = new_tau - tau[i]
            dnu = new_nu - nu[i]
            denom = 1.0 + dtau * v
            if denom > 1e-12:
                mu += ((dnu - dtau * m) / denom) * sx
                Sigma -= (dtau / denom) * np.outer(sx, sx)
                tau[i] = new_tau
                nu[i] = new_nu
                break
            d *= 0.5
        else:
            skipped += 1
    return skipped


def _tilted_mode_np(m, v, y, link):
    lo = m.copy()
    hi = m + v * y * dlog_cdf(y * m, link)
    lo, hi = np.minimum(lo, hi), np.maximum(lo, hi)
    a = m.copy()
    for _ in range(200):
        g1 = y * dlog_cdf(y * a, link) - (a - m) / v
        up = g1 > 0.0
        lo = np.where(up, a, lo)
        hi = np.where(up, hi, a)
        new = a - g1 / (d2log_cdf(y * a, link) - 1.0 / v)
        out = ~((lo < new) & (new < hi))
        new[out] = 0.5 * (lo[out] + hi[out])
        tol = 1e-13 * (1.0 + np.abs(a))
        done = (np.abs(new - a) < tol) | (hi - lo < tol)
        a = new
        if np.all(done):
            break
    return a


def tilted_moments_batch(m, v, y, link, gh_t, gh_lw):
    """Vectorised tilted moments for arrays of cavities (used by parallel EP)."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    if link == PROBIT:
        sq = np.sqrt(1.0 + v)
        z = y * m / sq
        logz = log_ndtr(z)
        r = dlog_ndtr(z)
        return logz, m + y * v * r / sq, v - v * v * r * (z + r) / (1.0 + v)
    a = _tilted_mode_np(m, v, y, link)
    b = -1.0 / (d2log_cdf(y * a, link) - 1.0 / v)
    sb = np.sqrt(2.0 * b)
    ga = log_cdf(y * a, link) - 0.5 * (a - m) ** 2 / v
    s = a[:, None] + sb[:, None] * gh_t[None, :]
    gk = log_cdf(y[:, None] * s, link) - 0.5 * (s - m[:, None]) ** 2 / v[:, None]
    c = np.exp(gh_lw[None, :] + gk - ga[:, None])
    tot = c.sum(axis=1)
    mh = (c * s).sum(axis=1) / tot
    vh = (c * (s - mh[:, None]) ** 2).sum(axis=1) / tot
    logz = np.log(sb) + ga + np.log(tot) - 0.5 * (_LOG_2PI + np.log(v))
    return logz, mh, vh


def gauss_hermite(n_nodes):
    """Gauss-Hermite nodes and log(weight) + node**2, for the adaptive rule."""
    t, w = np.polynomial.hermite.hermgauss(n_nodes)
    return t, np.log(w) + t * t


# ---------------------------------------------------------------------------
# systematic resampling
# ---------------------------------------------------------------------------

@njit(cache=True)
def _imh_select_nb(log_ratio, log_u, start):
    T = log_ratio.shape[0]
    idx = np.empty(T, dtype=np.int64)
    cur = start
    acc = 0
    for k in range(T):
        if log_u[k] < log_ratio[k] - log_ratio[cur]:
            cur = k
            acc += 1
        idx[k] = cur
    return idx, acc


def _imh_select_np(log_ratio, log_u, start):
    T = log_ratio.shape[0]
    idx = np.empty(T, dtype=np.int64)
    cur = start
    acc = 0
    for k in range(T):
        if log_u[k] < log_ratio[k] - log_ratio[cur]:
            cur = k
            acc += 1
        idx[k] = cur
    return idx, acc


@njit(cache=True)
def _systematic_counts_nb(W, u, N):
    M = W.shape[0]
    counts = np.zeros(M, dtype=np.int64)
    # rounding in the running sum must never select a trailing zero weight
    last = M - 1
    while last > 0 and W[last] <= 0.0:
        last -= 1
    cum = W[0]
    j = 0
    for k in range(N):
        pos = (u + k) / N
        while pos >= cum and j < last:
            j += 1
            cum += W[j]
        counts[j] += 1
    return counts


def _systematic_counts_np(W, u, N):
    M = W.shape[0]
    cum = np.cumsum(W)
    idx = np.searchsorted(cum, (u + np.arange(N)) / N, side="right")
    np.minimum(idx, np.flatnonzero(W > 0.0)[-1], out=idx)
    return np.bincount(idx, minlength=M).astype(np.int64)


# ---------------------------------------------------------------------------
# nested uniform (Owen) scrambling of 32-bit digital nets
# ---------------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S63 = np.uint64(63)
_ONE = np.uint64(1)


@njit(cache=True)
def _splitmix(z):
    z = z + _GOLD
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def _owen_nb(points, seed):
    N, d = points.shape
    out = np.empty_like(points)
    for j in range(d):
        dim_key = _splitmix(seed ^ _splitmix(np.uint64(j)))
        for k in range(N):
            v = points[k, j]
            res = np.uint64(0)
            prefix = np.uint64(1)
            for level in range(32):
                shift = np.uint64(31 - level)
                digit = (v >> shift) & _ONE
                flip = _splitmix(dim_key ^ _splitmix(prefix)) >> _S63
                res |= (digit ^ flip) << shift
                prefix = (prefix << _ONE) | digit
            out[k, j] = res
    return out


def _splitmix_np(z):
    z = z + _GOLD
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _owen_np(points, seed):
    N, d = points.shape
    out = np.empty_like(points)
    with np.errstate(over="ignore"):
        for j in range(d):
            dim_key = _splitmix_np(np.array([seed], dtype=np.uint64)
                                   ^ _splitmix_np(np.array([j], dtype=np.uint64)))[0]
            v = points[:, j]
            res = np.zeros(N, dtype=np.uint64)
            prefix = np.ones(N, dtype=np.uint64)
            for level in range(32):
                shift = np.uint64(31 - level)
                digit = (v >> shift) & _ONE
                flip = _splitmix_np(dim_key ^ _splitmix_np(prefix)) >> _S63
                res |= (digit ^ flip) << shift
                prefix = (prefix << _ONE) | digit
            out[:, j] = res
    return out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    loglik_batch = _loglik_batch_nb
    logpost_point = _logpost_point_nb
    logpost_grad_point = _logpost_grad_point_nb
    rwmh_chain = _rwmh_chain_nb
    hmc_chain = _hmc_chain_nb
    ep_sweep = _ep_sweep_nb
    imh_select = _imh_select_nb
    systematic_counts = _systematic_counts_nb
    owen_scramble = _owen_nb
else:
    loglik_batch = _loglik_batch_np
    logpost_point = _logpost_point_np
    logpost_grad_point = _logpost_grad_point_np
    rwmh_chain = _rwmh_chain_np
    hmc_chain = _hmc_chain_np
    ep_sweep = _ep_sweep_np
    imh_select = _imh_select_np
    systematic_counts = _systematic_counts_np
    owen_scramble = _owen_np

BACKEND = "numba" if USE_NUMBA else "numpy"


def logpost_batch(X, y, B, link, prior_kind, prior_scale):
    """Unnormalised log posterior for each row of ``B``."""
    B = np.ascontiguousarray(B, dtype=float)
    return loglik_batch(X, y, B, link) + log_prior_batch(B, prior_kind, prior_scale)

"""Benchmark layer: golden references, marginal accuracy, IRIS and reports.

Report files split into a deterministic part (report.json and the metric
CSVs) and a timing part (timing.json, IRIS and ESS-per-CPU tables). Given the
same config and seeds the deterministic part is byte-identical across runs.
"""
import csv
import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import samplers
from .datasets import load_dataset
from .ep import ep_fit
from .gaussian import MarginalCurve, improved_laplace_marginal, laplace, laplace_em
from .model import PosteriorTarget, default_prior
from .samplers import ChainTrace, ConfigurationError, WeightedSample, seed_sequence
from .smc import temper_smc

log = logging.getLogger(__name__)

APPROXIMATIONS = ("laplace", "improved-laplace", "laplace-em", "ep")
SAMPLERS = ("is", "rqmc", "rwmh", "gibbs", "hmc", "smc")
SCENARIOS = ("gaussian/probit", "gaussian/logit", "cauchy/probit", "cauchy/logit")


class GoldenReferenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _curve(c):
    if isinstance(c, MarginalCurve):
        return np.asarray(c.grid, float), np.asarray(c.density, float)
    g, d = c
    return np.asarray(g, float), np.asarray(d, float)


def marginal_accuracy(q, ref):
    """1 - L1/2 between two densities given as (grid, density) pairs.

    Both are linearly interpolated onto the union of their grids, taken as
    zero outside their own grid, and integrated by the trapezoid rule.
    """
    gq, dq = _curve(q)
    gr, dr = _curve(ref)
    if gq.size < 2 or gr.size < 2:
        raise ValueError("each grid needs at least two points")
    if gq[-1] < gr[0] or gr[-1] < gq[0]:
        raise ValueError("grids do not overlap")
    g = np.union1d(gq, gr)
    fq = np.interp(g, gq, dq, left=0.0, right=0.0)
    fr = np.interp(g, gr, dr, left=0.0, right=0.0)
    l1 = float(np.trapezoid(np.abs(fq - fr), g))
    return float(min(max(1.0 - 0.5 * l1, 0.0), 1.0))


def iris(mse_m, cpu_m, mse_is, cpu_is):
    """(MSE_M / MSE_IS) * (CPU_IS / CPU_M); elementwise over components."""
    args = [np.asarray(a, dtype=float) for a in (mse_m, cpu_m, mse_is, cpu_is)]
    for a in args:
        if not np.all(a > 0) or not np.all(np.isfinite(a)):
            raise ValueError("IRIS needs finite positive MSEs and CPU times")
    out = (args[0] / args[2]) * (args[3] / args[1])
    return float(out) if out.ndim == 0 else out


def _sample_weights(sample):
    if isinstance(sample, WeightedSample):
        W = sample.weights
        return sample.points, W, np.full(sample.points.shape[1], 1.0 / float(W @ W))
    if isinstance(sample, ChainTrace):
        x = sample.kept
        var = x.var(axis=0)
        se = samplers.batch_means_se(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            ess = np.where(se > 0, var / se**2, x.shape[0])
        return x, np.full(x.shape[0], 1.0 / x.shape[0]), np.minimum(ess, x.shape[0])
    raise TypeError("expected a WeightedSample or a ChainTrace")


def default_grid(mean, sd, n_grid=512, span=8.0):
    return mean + np.linspace(-span, span, n_grid) * sd


def kde_1d(x, w, grid, h):
    """Weighted Gaussian KDE on a uniform grid by linear binning and convolution."""
    G = grid.size
    dx = grid[1] - grid[0]
    pos = (x - grid[0]) / dx
    i = np.floor(pos).astype(np.int64)
    f = pos - i
    ok = (i >= 0) & (i < G - 1)
    i, f, wk = i[ok], f[ok], w[ok]
    counts = np.bincount(i, wk * (1.0 - f), minlength=G) + np.bincount(i + 1, wk * f, minlength=G)
    half = min(int(math.ceil(6.0 * h / dx)), G)
    u = np.arange(-half, half + 1) * dx / h
    kern = np.exp(-0.5 * u * u)
    kern /= kern.sum() * dx
    return signal.fftconvolve(counts, kern, mode="same")


def kde_marginals(sample, grids=None, n_grid=512, min_ess=100.0):
    """Per-component KDE of a weighted sample or a chain.

    Bandwidth is 1.06 sd n_eff^(-1/5) with n_eff the effective sample size
    (the weight ESS, or the batch-means ESS of each component of a chain).
    """
    X, W, ess = _sample_weights(sample)
    p = X.shape[1]
    out = []
    for j in range(p):
        x = X[:, j]
        mu = float(W @ x)
        sd = math.sqrt(max(float(W @ (x - mu) ** 2), 0.0))
        if not sd > 0:
            raise ValueError(f"component {j} has zero variance; cannot build a KDE")
        if ess[j] < min_ess:
            raise ValueError(f"component {j} has effective sample size {ess[j]:.1f} < {min_ess}")
        h = 1.06 * sd * ess[j] ** -0.2
        grid = default_grid(mu, sd, n_grid) if grids is None else np.asarray(grids[j], float)
        out.append(MarginalCurve(j, grid, kde_1d(x, W, grid, h)))
    return out


def gaussian_marginals(q, grids=None, n_grid=512):
    sd = q.sd
    out = []
    for j in range(q.p):
        grid = default_grid(q.mean[j], sd[j], n_grid) if grids is None else np.asarray(grids[j], float)
        out.append(MarginalCurve(j, grid, q.marginal_density(j, grid)))
    return out


# ---------------------------------------------------------------------------
# golden reference
# ---------------------------------------------------------------------------

@dataclass
class GoldenReference:
    grids: np.ndarray
    densities: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    mean_se: np.ndarray
    log_evidence: float
    provenance: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.mean.shape[0]

    def curve(self, j):
        return MarginalCurve(j, self.grids[j], self.densities[j])

    def to_dict(self):
        return {"grids": self.grids.tolist(), "densities": self.densities.tolist(),
                "mean": self.mean.tolist(), "var": self.var.tolist(),
                "mean_se": self.mean_se.tolist(), "log_evidence": self.log_evidence,
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["grids"]), np.array(d["densities"]), np.array(d["mean"]),
                   np.array(d["var"]), np.array(d["mean_se"]), d["log_evidence"], d["provenance"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def mixture_marginals(means, variances, grids, max_terms=20000):
    """Marginals of an equal-weight mixture of Gaussians N(means[t], variances[t]).

    With a common variance per component this is a KDE of the means with that
    variance as squared bandwidth; otherwise up to ``max_terms`` evenly thinned
    terms are evaluated directly.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    T, p = means.shape
    out = []
    for j in range(p):
        grid = np.asarray(grids[j], dtype=float)
        v = variances[:, j]
        if np.all(v == v[0]):
            dens = kde_1d(means[:, j], np.full(T, 1.0 / T), grid, math.sqrt(v[0]))
        else:
            idx = np.unique(np.linspace(0, T - 1, min(T, max_terms)).astype(np.int64))
            m, sd = means[idx, j][:, None], np.sqrt(v[idx, j])[:, None]
            dens = (np.exp(-0.5 * ((grid - m) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))).mean(axis=0)
        out.append(MarginalCurve(j, grid, dens))
    return out


GOLDEN_SAMPLERS = ("auto", "gibbs", "imh", "rwmh")


def _golden_chain(t, q, T, seed, sampler):
    if sampler == "gibbs":
        return sampler, samplers.gibbs_probit(t, T, seed, init=q.mean, keep_conditionals=True)
    if sampler == "imh":
        return sampler, samplers.independent_mh(t, q, T, seed)
    if sampler == "rwmh":
        return sampler, samplers.rwmh(t, q, T, seed, init=q.mean)
    raise ConfigurationError(f"unknown golden sampler {sampler!r}; expected one of {GOLDEN_SAMPLERS}")


def _golden_marginals(chain, grids):
    if "conditional_means" in chain.tuning:
        b = chain.burn_in
        return mixture_marginals(chain.tuning["conditional_means"][b:],
                                 chain.tuning["conditional_vars"][b:], grids)
    return kde_marginals(chain, grids)


GOLDEN_T = {"gibbs": 10**6, "imh": 4 * 10**6, "rwmh": 10**6}


def build_golden(t, T=None, seed=0, evidence_N=10**5, stability=0.998, n_grid=512, sampler="auto"):
    """Two independent long exact runs, pooled once they agree.

    The default sampler is Gibbs for Gaussian/probit, with Rao-Blackwellised
    marginals from the Gaussian conditionals of beta given the latents, and
    otherwise independent Metropolis-Hastings with the EP proposal and KDE
    marginals. The two runs must agree to marginal accuracy ``stability`` on
    every component. The evidence comes from tempering SMC with the EP proposal,
    whose posterior means are also recorded as a cross-check.
    """
    q = ep_fit(t)[0]
    ss = seed_sequence(seed)
    s_a, s_b, s_z = ss.spawn(3)
    if sampler == "auto":
        sampler = "gibbs" if t.prior.kind == "gaussian" and t.link.kind == "probit" else "imh"
    T = GOLDEN_T.get(sampler, 10**6) if T is None else int(T)
    kind, a = _golden_chain(t, q, T, s_a, sampler)
    _, b = _golden_chain(t, q, T, s_b, kind)
    pooled = np.vstack([a.kept, b.kept])
    mu, sd = pooled.mean(axis=0), pooled.std(axis=0)
    grids = np.array([default_grid(mu[j], sd[j], n_grid) for j in range(t.p)])
    ra, rb = _golden_marginals(a, grids), _golden_marginals(b, grids)
    agree = np.array([marginal_accuracy(x, y) for x, y in zip(ra, rb)])
    if np.any(agree < stability):
        raise GoldenReferenceError(
            f"golden runs disagree: min MA {agree.min():.5f} < {stability} (component {int(agree.argmin())})")
    dens = np.array([0.5 * (x.density + y.density) for x, y in zip(ra, rb)])
    se = 0.5 * np.sqrt(a.batch_means_se() ** 2 + b.batch_means_se() ** 2)
    ps = temper_smc(q, t, evidence_N, seed=s_z)
    ws = ps.weighted_sample()
    smc_mean, smc_se = ws.mean(), np.sqrt(ws.var() / ws.ess)
    prov = {"sampler": kind, "T": int(T), "runs": 2, "seed": seed if isinstance(seed, int) else None,
            "acceptance": [a.acceptance_rate, b.acceptance_rate], "stability_ma": agree.tolist(),
            "evidence": "smc", "evidence_N": int(evidence_N), "smc_mean": smc_mean.tolist(),
            "smc_mean_z": ((smc_mean - pooled.mean(axis=0)) / np.sqrt(se**2 + smc_se**2)).tolist()}
    return GoldenReference(grids, dens, pooled.mean(axis=0), pooled.var(axis=0), se,
                           float(ps.log_evidence), prov)


# ---------------------------------------------------------------------------
# benchmark cells
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "datasets": ["pima"],
    "scenarios": ["gaussian/probit"],
    "methods": ["laplace", "ep", "is"],
    "seeds": list(range(25)),
    "N": 2**14,
    "T": 10**4,
    "smc": {"tau": 0.5, "m": 3},
    "golden": {"T": None, "seed": 12345, "evidence_N": 10**5, "stability": 0.998, "sampler": "auto"},
    "large_p": 50,
}


def validate_config(config):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    cfg.update(config)
    cfg["golden"] = {**DEFAULT_CONFIG["golden"], **config.get("golden", {})}
    cfg["smc"] = {**DEFAULT_CONFIG["smc"], **config.get("smc", {})}
    for m in cfg["methods"]:
        if m not in APPROXIMATIONS + SAMPLERS:
            raise ConfigurationError(f"unknown method {m!r}")
    for s in cfg["scenarios"]:
        if s not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {s!r}; expected one of {SCENARIOS}")
    if not cfg["datasets"] or not cfg["methods"] or not cfg["seeds"]:
        raise ConfigurationError("datasets, methods and seeds must be non-empty")
    if "rqmc" in cfg["methods"] and cfg["N"] & (cfg["N"] - 1):
        raise ConfigurationError("rqmc needs N to be a power of two")
    budget = max(cfg["N"], cfg["T"])
    gT = cfg["golden"]["T"] if cfg["golden"]["T"] is not None else min(GOLDEN_T.values())
    if "golden_path" not in cfg and gT < 20 * budget:
        raise ConfigurationError(
            f"golden run length {gT} is below 20x the largest method budget {budget}")
    return cfg


def make_target(dataset, scenario):
    prior, link = scenario.split("/")
    d = load_dataset(dataset)
    return PosteriorTarget(d, default_prior(d.p, prior, d.intercept), link)


def _approx_cell(method, t, golden):
    if method == "laplace":
        q = laplace(t)
    elif method == "ep":
        q = ep_fit(t)[0]
    elif method == "laplace-em":
        q = laplace_em(t).approx
    else:
        q = laplace(t)
        curves = [improved_laplace_marginal(t, j, approx=q) for j in range(t.p)]
        mean = np.array([c.mean() for c in curves])
        var = np.array([np.trapezoid((c.grid - m) ** 2 * c.density, c.grid) for c, m in zip(curves, mean)])
        ma = [marginal_accuracy(c, golden.curve(j)) for j, c in enumerate(curves)]
        return {"mean": mean, "var": var, "ma": ma, "log_evidence": None}
    curves = gaussian_marginals(q, golden.grids)
    return {"mean": q.mean, "var": np.diag(q.cov), "ma": [marginal_accuracy(c, golden.curve(j))
                                                         for j, c in enumerate(curves)],
            "log_evidence": q.log_evidence}


def _sampler_cell(method, t, golden, cfg, seed):
    N, T = cfg["N"], cfg["T"]
    q = ep_fit(t)[0]
    out = {}
    if method == "is":
        s = samplers.importance_sample(q, t, N, seed)
        out.update(ef=s.ef, log_evidence=s.log_evidence)
    elif method == "rqmc":
        s = samplers.rqmc_replication(q, t, N, seed)
        out.update(ef=s.ef, log_evidence=s.log_evidence)
    elif method == "smc":
        ps = temper_smc(q, t, N, tau=cfg["smc"]["tau"], m=cfg["smc"]["m"], seed=seed)
        s = ps.weighted_sample()
        out.update(ef=ps.ef[-1], log_evidence=ps.log_evidence, stages=ps.n_stages,
                   acceptance=[a for a in ps.acceptance if a is not None])
    elif method == "rwmh":
        s = samplers.rwmh(t, q, T, seed, init=q.mean)
        out.update(acceptance=s.acceptance_rate)
    elif method == "gibbs":
        s = samplers.gibbs_probit(t, T, seed, init=q.mean)
    elif method == "hmc":
        s = samplers.hmc(t, q, T, seed, init=q.mean)
        out.update(acceptance=s.tuning["adapted_acceptance"])
    else:
        raise ConfigurationError(f"unknown sampler {method!r}")
    out["mean"], out["var"] = s.mean(), s.var()
    try:
        curves = kde_marginals(s, golden.grids)
        out["ma"] = [marginal_accuracy(c, golden.curve(j)) for j, c in enumerate(curves)]
    except ValueError as exc:
        out["ma"] = None
        out["ma_error"] = str(exc)
    return out


def run_cell(method, dataset, scenario, seed, cfg, golden):
    """One (method, dataset, scenario, seed) cell; failures are returned, not raised."""
    key = {"method": method, "dataset": dataset, "scenario": scenario, "seed": seed}
    t0, c0 = time.perf_counter(), time.process_time()
    try:
        t = make_target(dataset, scenario)
        if method == "gibbs" and t.link.kind != "probit":
            return {**key, "status": "skipped", "reason": "Gibbs sampling needs the probit link"}
        if method == "laplace-em" and t.prior.kind != "cauchy":
            return {**key, "status": "skipped", "reason": "Laplace-EM needs the Cauchy prior"}
        if method in APPROXIMATIONS:
            res = _approx_cell(method, t, golden)
        else:
            cell_seed = np.random.SeedSequence([int(seed), APPROXIMATIONS.index("ep"),
                                                SAMPLERS.index(method)])
            res = _sampler_cell(method, t, golden, cfg, cell_seed)
    except Exception as exc:  # noqa: BLE001 - every failure is recorded per cell
        return {**key, "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(limit=3)}
    res = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in res.items()}
    if res.get("log_evidence") is not None:
        res["log_evidence"] = float(res["log_evidence"])
        res["evidence_error"] = abs(res["log_evidence"] - golden.log_evidence)
    timing = {"cpu_seconds": time.process_time() - c0, "wall_seconds": time.perf_counter() - t0}
    return {**key, "status": "ok", **res, "timing": timing}


def _cell_job(args):
    return run_cell(*args)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class BenchReport:
    config: dict
    cells: list
    summary: list
    golden: dict

    def deterministic_dict(self):
        cells = [{k: v for k, v in c.items() if k not in ("timing", "traceback")} for c in self.cells]
        summary = [{k: v for k, v in s.items() if not k.startswith(("cpu", "iris", "ess_per"))}
                   for s in self.summary]
        return {"config": self.config, "golden": self.golden, "cells": cells, "summary": summary}

    def timing_dict(self):
        cells = [{"method": c["method"], "dataset": c["dataset"], "scenario": c["scenario"],
                  "seed": c["seed"], **c.get("timing", {})} for c in self.cells]
        summary = [{k: v for k, v in s.items()
                    if k in ("method", "dataset", "scenario") or k.startswith(("cpu", "iris", "ess_per"))}
                   for s in self.summary]
        return {"cells": cells, "summary": summary}


def _median(x):
    return float(np.median(x)) if len(x) else None


def summarize(cells, goldens, cfg):
    rows = []
    groups = {}
    for c in cells:
        groups.setdefault((c["dataset"], c["scenario"], c["method"]), []).append(c)
    for (dataset, scenario, method), cs in sorted(groups.items()):
        ok = [c for c in cs if c["status"] == "ok"]
        row = {"dataset": dataset, "scenario": scenario, "method": method,
               "cells": len(cs), "ok": len(ok)}
        if ok:
            g = goldens[(dataset, scenario)]
            means = np.array([c["mean"] for c in ok])
            vars_ = np.array([c["var"] for c in ok])
            row["mse_mean"] = ((means - g.mean) ** 2).mean(axis=0).tolist()
            row["mse_var"] = ((vars_ - g.var) ** 2).mean(axis=0).tolist()
            mas = [c["ma"] for c in ok if c.get("ma") is not None]
            if mas:
                row["ma"] = np.mean(mas, axis=0).tolist()
                row["ma_median"] = _median(row["ma"])
            for key in ("ef", "evidence_error"):
                vals = [c[key] for c in ok if c.get(key) is not None]
                if vals:
                    row[f"{key}_median"] = _median(vals)
            acc = [np.mean(c["acceptance"]) for c in ok if c.get("acceptance") not in (None, [])]
            if acc:
                row["acceptance_median"] = _median(acc)
            row["cpu_seconds_median"] = _median([c["timing"]["cpu_seconds"] for c in ok])
            if method in SAMPLERS and len(ok) >= 2:
                mse = (means.var(axis=0, ddof=1), vars_.var(axis=0, ddof=1))
                row["replication_var_mean"] = mse[0].tolist()
                post_var = g.var
                row["ess_per_cpu_second"] = (post_var / np.maximum(row["mse_mean"], 1e-300)
                                             / row["cpu_seconds_median"]).tolist()
        rows.append(row)
    by_key = {(r["dataset"], r["scenario"], r["method"]): r for r in rows}
    for r in rows:
        base = by_key.get((r["dataset"], r["scenario"], "is"))
        if r["method"] in SAMPLERS and base and base.get("ok", 0) >= 2 and r.get("ok", 0) >= 2:
            try:
                im = iris(r["mse_mean"], r["cpu_seconds_median"], base["mse_mean"], base["cpu_seconds_median"])
                iv = iris(r["mse_var"], r["cpu_seconds_median"], base["mse_var"], base["cpu_seconds_median"])
                r["iris_mean_median"] = _median(im)
                r["iris_var_median"] = _median(iv)
            except ValueError as exc:
                r["iris_error"] = str(exc)
        if r["method"] == "rqmc" and base and base.get("ok", 0) >= 2 and r.get("ok", 0) >= 2:
            gain = np.array(base["replication_var_mean"]) / np.array(r["replication_var_mean"])
            r["rqmc_gain_mean_median"] = _median(gain)
            ev = [c["log_evidence"] for c in cells if c["method"] == "is" and c["status"] == "ok"
                  and (c["dataset"], c["scenario"]) == (r["dataset"], r["scenario"])]
            evq = [c["log_evidence"] for c in cells if c["method"] == "rqmc" and c["status"] == "ok"
                   and (c["dataset"], c["scenario"]) == (r["dataset"], r["scenario"])]
            r["rqmc_gain_evidence"] = float(np.var(ev, ddof=1) / np.var(evq, ddof=1))
    return rows


def _golden_for(dataset, scenario, cfg):
    path = cfg.get("golden_path", {}).get(f"{dataset}|{scenario}") if isinstance(cfg.get("golden_path"), dict) else None
    if path and os.path.exists(path):
        return GoldenReference.load(path)
    gc = cfg["golden"]
    return build_golden(make_target(dataset, scenario), T=gc["T"], seed=gc["seed"],
                        evidence_N=gc["evidence_N"], stability=gc["stability"], sampler=gc["sampler"])


def run_benchmark(config, threads=1):
    """Run every configured cell, then reduce them into a :class:`BenchReport`."""
    cfg = validate_config(config)
    goldens, gold_meta = {}, {}
    for dataset in cfg["datasets"]:
        for scenario in cfg["scenarios"]:
            g = _golden_for(dataset, scenario, cfg)
            goldens[(dataset, scenario)] = g
            gold_meta[f"{dataset}|{scenario}"] = {"mean": g.mean.tolist(), "var": g.var.tolist(),
                                                  "mean_se": g.mean_se.tolist(),
                                                  "log_evidence": g.log_evidence, **g.provenance}
    jobs = [(m, d, s, seed, cfg, goldens[(d, s)])
            for d in cfg["datasets"] for s in cfg["scenarios"] for m in cfg["methods"] for seed in cfg["seeds"]]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            cells = list(ex.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]
    return BenchReport(cfg, cells, summarize(cells, goldens, cfg), gold_meta)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_report(report, out_dir):
    """Write report.json, timing.json and the per-table/figure CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    timing_dir = os.path.join(out_dir, "timing")
    os.makedirs(timing_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.deterministic_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(timing_dir, "timing.json"), "w") as fh:
        json.dump(report.timing_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    S = report.summary
    p_of = {k: len(v["mean"]) for k, v in report.golden.items()}
    _write_csv(os.path.join(out_dir, "table2.csv"),
               ["dataset", "scenario", "ef_median", "rqmc_gain_mean_median", "rqmc_gain_evidence"],
               [[r["dataset"], r["scenario"], r.get("ef_median"),
                 next((x.get("rqmc_gain_mean_median") for x in S if x["method"] == "rqmc"
                       and (x["dataset"], x["scenario"]) == (r["dataset"], r["scenario"])), None),
                 next((x.get("rqmc_gain_evidence") for x in S if x["method"] == "rqmc"
                       and (x["dataset"], x["scenario"]) == (r["dataset"], r["scenario"])), None)]
                for r in S if r["method"] == "is"])
    ma_rows = [[r["dataset"], r["scenario"], r["method"], j, a]
               for r in S if r.get("ma") for j, a in enumerate(r["ma"])]
    _write_csv(os.path.join(out_dir, "fig1_evidence_error.csv"),
               ["dataset", "scenario", "method", "p", "evidence_error_median"],
               [[r["dataset"], r["scenario"], r["method"], p_of[f"{r['dataset']}|{r['scenario']}"],
                 r["evidence_error_median"]] for r in S if r.get("evidence_error_median") is not None])
    _write_csv(os.path.join(out_dir, "fig2_marginal_accuracy.csv"),
               ["dataset", "scenario", "method", "component", "ma"],
               [row for row in ma_rows if row[2] in APPROXIMATIONS])
    _write_csv(os.path.join(out_dir, "fig4_marginal_accuracy_large.csv"),
               ["dataset", "scenario", "method", "component", "ma"],
               [row for row in ma_rows if row[2] in ("ep", "laplace")
                and p_of[f"{row[0]}|{row[1]}"] >= report.config["large_p"]])
    _write_csv(os.path.join(out_dir, "sampler_marginal_accuracy.csv"),
               ["dataset", "scenario", "method", "component", "ma"],
               [row for row in ma_rows if row[2] in SAMPLERS])
    _write_csv(os.path.join(timing_dir, "fig3_iris.csv"),
               ["dataset", "scenario", "method", "iris_mean_median", "iris_var_median", "cpu_seconds_median"],
               [[r["dataset"], r["scenario"], r["method"], r.get("iris_mean_median"),
                 r.get("iris_var_median"), r.get("cpu_seconds_median")] for r in S if r["method"] in SAMPLERS])
    _write_csv(os.path.join(timing_dir, "fig5_ess.csv"),
               ["dataset", "scenario", "method", "component", "ess_per_cpu_second"],
               [[r["dataset"], r["scenario"], r["method"], j, e]
                for r in S if r.get("ess_per_cpu_second") for j, e in enumerate(r["ess_per_cpu_second"])])

"""Command line interface: ingest, approx, sample, varsel and bench."""
import argparse
import logging
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, io, kernels, samplers
from .bench import run_benchmark, write_report
from .datasets import load_dataset
from .ep import ep_fit
from .gaussian import improved_laplace_marginal, laplace, laplace_em, prior_gaussian
from .model import PosteriorTarget, default_prior
from .smc import temper_smc
from .varsel import binary_smc_varsel, enumerate_varsel

log = logging.getLogger("binbayes")

APPROX = ("laplace", "improved-laplace", "laplace-em", "ep")
SAMPLE = ("is", "rqmc", "rwmh", "gibbs", "hmc", "smc")
VARSEL = ("enumerate", "smc")


def _common(p):
    p.add_argument("--dataset", default="pima",
                   help="pima, synthetic:n,p,seed[,link], correlated:n,p,seed[,link] or a CSV path")
    p.add_argument("--label-column", default=None, help="label column of a CSV dataset (default: first)")
    p.add_argument("--no-intercept", action="store_true", help="do not prepend an intercept column")
    p.add_argument("--prior", choices=("gaussian", "cauchy"), default="cauchy")
    p.add_argument("--link", choices=("probit", "logit"), default="logit")
    p.add_argument("--n", type=int, default=None, help="sample size, chain length or particle count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="binbayes", description="Bayesian binary regression toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read and standardise a dataset")
    _common(p)

    p = sub.add_parser("approx", help="Gaussian approximation of the posterior")
    p.add_argument("method", choices=APPROX)
    p.add_argument("--schedule", choices=("sequential", "parallel"), default="sequential")
    p.add_argument("--grid", type=int, default=64, help="grid size for improved Laplace")
    _common(p)

    p = sub.add_parser("sample", help="sample from the posterior")
    p.add_argument("method", choices=SAMPLE)
    p.add_argument("--proposal", choices=("ep", "laplace", "prior"), default="ep",
                   help="Gaussian proposal or calibration for the sampler")
    p.add_argument("--replications", type=int, default=25, help="RQMC replications")
    p.add_argument("--tau", type=float, default=0.5, help="SMC efficiency-factor target")
    p.add_argument("--moves", type=int, default=3, help="SMC Metropolis steps per stage")
    p.add_argument("--burn-in", type=int, default=None)
    _common(p)

    p = sub.add_parser("varsel", help="Bayesian variable selection")
    p.add_argument("method", choices=VARSEL)
    p.add_argument("--evidence", choices=("laplace", "ep", "is"), default="laplace")
    p.add_argument("--n-inner", type=int, default=512, help="IS sample size per evidence estimate")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--moves", type=int, default=3)
    p.add_argument("--top", type=int, default=10)
    _common(p)

    p = sub.add_parser("bench", help="run a benchmark from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="ignored; seeds come from the config")
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--out", default="out")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _target(args):
    d = load_dataset(args.dataset, label_column=args.label_column, intercept=not args.no_intercept)
    return PosteriorTarget(d, default_prior(d.p, args.prior, d.intercept), args.link)


def _meta(args, **extra):
    keep = {k: v for k, v in vars(args).items() if k not in ("out", "verbose", "threads")}
    return {"command": keep, "backend": kernels.BACKEND, "version": __version__, **extra}


def cmd_ingest(args):
    d = load_dataset(args.dataset, label_column=args.label_column, intercept=not args.no_intercept)
    cols = {"y": d.y, **{name: d.X[:, j] for j, name in enumerate(d.column_names)}}
    io.write_columns(os.path.join(args.out, "dataset.csv"), cols, _meta(args, n=d.n, p=d.p))
    with open(os.path.join(args.out, "transforms.json"), "w") as fh:
        fh.write(d.transforms_json() + "\n")


def cmd_approx(args):
    t = _target(args)
    extra = {}
    if args.method == "laplace":
        q = laplace(t)
    elif args.method == "ep":
        q, state = ep_fit(t, schedule=args.schedule)
        extra = {"sweeps": state.sweeps, "converged": state.converged}
    elif args.method == "laplace-em":
        res = laplace_em(t)
        q = res.approx
        extra = {"variances": res.variances.tolist(), "iterations": res.iterations,
                 "converged": res.converged}
    else:
        q = laplace(t)
        rows = []
        for j in range(t.p):
            c = improved_laplace_marginal(t, j, n_grid=args.grid, approx=q)
            rows.extend([j, float(g), float(v)] for g, v in zip(c.grid, c.density))
        io.write_rows(os.path.join(args.out, "marginals.csv"), ["component", "beta", "density"], rows)
    out = {**q.to_dict(), "method": args.method, "columns": t.dataset.column_names, **extra}
    io.write_json(os.path.join(args.out, "approx.json"), {**out, "meta": _meta(args)})


def _proposal(args, t):
    if args.proposal == "ep":
        return ep_fit(t)[0]
    if args.proposal == "laplace":
        return laplace(t)
    return prior_gaussian(t.prior)


def cmd_sample(args):
    t = _target(args)
    q = _proposal(args, t)
    names = t.dataset.column_names
    path = os.path.join(args.out, "samples.csv")
    meta = _meta(args)
    m = args.method
    if m == "is":
        ws = samplers.importance_sample(q, t, args.n or 50000, args.seed)
        io.write_weighted_sample(path, ws, meta, names)
    elif m == "rqmc":
        N = args.n or 2**14
        res = samplers.rqmc_importance_sample(q, t, N, args.replications, args.seed)
        pts = np.vstack([s.points for s in res.samples])
        cols = {n: pts[:, j] for j, n in enumerate(names)}
        cols["log_weight"] = np.concatenate([s.log_weights for s in res.samples])
        cols["replication"] = np.repeat(np.arange(args.replications), N)
        meta.update(kind="rqmc", N=N, replications=args.replications,
                    means=res.means.tolist(), log_evidence=[s.log_evidence for s in res.samples],
                    ef=[s.ef for s in res.samples])
        io.write_columns(path, cols, meta)
    elif m in ("rwmh", "gibbs", "hmc"):
        T = args.n or 20000
        if m == "rwmh":
            tr = samplers.rwmh(t, q, T, args.seed, init=q.mean, burn_in=args.burn_in)
        elif m == "gibbs":
            tr = samplers.gibbs_probit(t, T, args.seed, init=q.mean, burn_in=args.burn_in)
        else:
            tr = samplers.hmc(t, q, T, args.seed, init=q.mean, burn_in=args.burn_in)
        io.write_chain_trace(path, tr, meta, names)
    else:
        ps = temper_smc(q, t, args.n or 10000, tau=args.tau, m=args.moves, seed=args.seed)
        io.write_weighted_sample(path, ps.weighted_sample(), {**meta, "stages": ps.n_stages}, names)
        io.write_jsonl(os.path.join(args.out, "smc_stages.jsonl"), ps.stages)


def cmd_varsel(args):
    t = _target(args)
    d = t.dataset
    names = d.column_names[1:] if d.intercept else list(d.column_names)
    if args.method == "enumerate":
        res = enumerate_varsel(t, args.evidence, seed=args.seed, n_inner=args.n_inner)
        incl = res.inclusion
        top = [("".join("1" if g else "0" for g in gm), w, le) for gm, w, le in res.top(args.top)]
    else:
        ps = binary_smc_varsel(t, args.n or 1000, tau=args.tau, m=args.moves, method=args.evidence,
                               n_inner=args.n_inner, seed=args.seed)
        incl = ps.inclusion
        W = ps.weights
        agg = {}
        for g, w, le in zip(ps.models, W, ps.log_evidence):
            key = "".join("1" if b else "0" for b in g)
            tot, _ = agg.get(key, (0.0, le))
            agg[key] = (tot + float(w), float(le))
        ranked = sorted(agg.items(), key=lambda kv: (-kv[1][0], kv[0]))[: args.top]
        top = [(k, w, le) for k, (w, le) in ranked]
        io.write_jsonl(os.path.join(args.out, "varsel_stages.jsonl"), ps.stages)
    io.write_rows(os.path.join(args.out, "inclusion.csv"), ["variable", "inclusion"],
                  [[n, float(p)] for n, p in zip(names, incl)])
    io.write_rows(os.path.join(args.out, "top_models.csv"), ["rank", "model", "probability", "log_evidence"],
                  [[r + 1, k, float(w), float(le)] for r, (k, w, le) in enumerate(top)])
    io.write_json(os.path.join(args.out, "varsel.meta.json"), _meta(args, variables=names))


def cmd_bench(args):
    cfg = io.read_json(args.config)
    report = run_benchmark(cfg, threads=args.threads)
    write_report(report, args.out)
    failed = [c for c in report.cells if c["status"] == "failed"]
    for c in failed:
        log.warning("cell %s/%s/%s/%s failed: %s", c["method"], c["dataset"], c["scenario"], c["seed"], c["error"])


COMMANDS = {"ingest": cmd_ingest, "approx": cmd_approx, "sample": cmd_sample,
            "varsel": cmd_varsel, "bench": cmd_bench}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        with threadpool_limits(limits=1 if args.command == "bench" else args.threads):
            COMMANDS[args.command](args)
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

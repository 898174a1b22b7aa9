"""Command-line front end: ``fairrecon {metrics,audit,reweight,verify,langevin}``.

Every command reads a JSON scenario (a file path or the name of a bundled
scenario), prints its main result on stdout in ``--format`` and, with
``--out DIR``, also writes the full set of report files there. Outputs depend
only on the scenario and the seed.

Exit codes: 0 success, 1 a verification suite failed, 2 usage or scenario
error, 3 runtime precondition failure (e.g. an unreachable measurement).
The thread count of the numerical backends can be capped with the
``FAIRRECON_THREADS`` environment variable.
"""

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .exceptions import DimensionError, DivergenceError, PreconditionError, UnreachableMeasurementError
from .metrics import evaluate
from .model import GaussianLinearChannel, mixture_posterior
from .posterior import langevin_posterior_sample
from .reweight import solve_rdp_weights
from .scenario import ScenarioError, bundled_names, load
from .stats import audit_from_counts, simulate_audit
from .verification import SUITES, run_suite, to_jsonable

THREADS_ENV = "FAIRRECON_THREADS"

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(ValueError):
    pass


def _json(obj):
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _key_value_csv(d):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in d.items():
        w.writerow([k, json.dumps(to_jsonable(v), sort_keys=True) if isinstance(v, (dict, list)) else v])
    return buf.getvalue()


class Output:
    """Collects named files; prints the primary one and writes all under ``--out``."""

    def __init__(self, args):
        self.fmt = args.format
        self.out = Path(args.out) if args.out else None
        self.files = {}

    def add(self, name, text):
        self.files[name] = text

    def emit(self, json_name, csv_name):
        sys.stdout.write(self.files[json_name if self.fmt == "json" else csv_name])
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (self.out / name).write_text(text)


def _seed(args, sc):
    return args.seed if args.seed is not None else sc.get("seed", 0)


def _samples(args, sc, default=None):
    n = args.samples if args.samples is not None else sc.get("samples", default)
    if n is None:
        raise UsageError("sample count missing: pass --samples or set 'samples' in the scenario")
    if n <= 0:
        raise UsageError(f"sample count must be positive, got {n}")
    return int(n)


def _discrete_channel(sc):
    ch = sc.channel
    if isinstance(ch, GaussianLinearChannel):
        raise UsageError("this command needs a discrete channel")
    return ch


def cmd_metrics(args):
    sc = load(args.scenario)
    model, truth, channel = sc.model, sc.truth_prior, _discrete_channel(sc)
    report = evaluate(truth, channel, sc.kernel(model, channel), sc.groups)
    out = Output(args)
    out.add("metrics.json", _json(report.to_dict()))
    out.add("confusion.csv", report.joint.to_csv())
    out.emit("metrics.json", "confusion.csv")
    return EXIT_OK


def cmd_audit(args):
    sc = load(args.scenario)
    level = sc.get("level", 0.95)
    if sc.get("counts") is not None:
        c = sc.get("counts")
        table = np.asarray(c["table"])
        if table.shape != (len(c["names"]),) * 2:
            raise ScenarioError(f"{sc.path}: field .counts.table: needs a {len(c['names'])}x{len(c['names'])} table")
        res = audit_from_counts(table, c["names"], level)
    else:
        model, truth, channel = sc.model, sc.truth_prior, _discrete_channel(sc)
        n = _samples(args, sc)
        res = simulate_audit(truth, channel, sc.kernel(model, channel), sc.groups, n, _seed(args, sc), level)
    out = Output(args)
    out.add("audit.json", _json(res.to_dict()))
    out.add("audit_counts.csv", res.counts_csv())
    out.add("audit_errors.csv", res.errors_csv())
    out.emit("audit.json", "audit_counts.csv")
    return EXIT_OK


def cmd_reweight(args):
    sc = load(args.scenario)
    model, channel, groups = sc.model, _discrete_channel(sc), sc.groups
    res = solve_rdp_weights(model, channel, groups, **sc.get("solver", {}))
    summary = {
        "groups": list(groups.names),
        "weights": res.weights.tolist(),
        "alpha": res.alpha.tolist(),
        "ratio": res.ratio,
        "converged": res.converged,
        "iterations": res.n_iter,
        "monotonicity_violations": res.monotonicity_violations,
    }
    out = Output(args)
    out.add("reweight.json", _json(summary))
    out.add("reweight_trace.csv", res.trace_csv())
    out.emit("reweight.json", "reweight_trace.csv")
    if not res.converged:
        print(f"warning: no convergence after {res.n_iter} iterations (ratio {res.ratio:.6g})", file=sys.stderr)
    return EXIT_OK


def _suite_inputs(suite, sc):
    if sc is None:
        return {}
    if suite == "oblivious-rdp":
        kw = {"model": sc.model, "channel": _discrete_channel(sc), "partitions": sc.partitions()}
        for key in ("min_accuracy", "grid_resolution"):
            if sc.get(key) is not None:
                kw[key] = sc.get(key)
        return kw
    if suite == "rdp-pr":
        kw = {"model": sc.model, "channel": _discrete_channel(sc), "partition": sc.groups}
        if sc.get("rdp_tol") is not None:
            kw["rdp_tol"] = sc.get("rdp_tol")
        return kw
    raise UsageError(f"suite {suite!r} is fully seeded and takes no scenario")


def cmd_verify(args):
    sc = load(args.scenario) if args.scenario else None
    seed = args.seed if args.seed is not None else (sc.get("seed", 0) if sc else 0)
    report = run_suite(args.suite, seed, **_suite_inputs(args.suite, sc))
    head = {"suite": report.suite, "seed": report.seed, "passed": report.passed, **report.summary}
    out = Output(args)
    out.add("summary.json", _json(head))
    out.add("summary.csv", _key_value_csv(head))
    out.add(f"verify_{args.suite}.json", _json(report.to_dict()))
    out.emit("summary.json", "summary.csv")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_langevin(args):
    sc = load(args.scenario)
    mixture, channel, schedule = sc.mixture, sc.channel, sc.schedule
    if not isinstance(channel, GaussianLinearChannel):
        raise UsageError("langevin needs a gaussian channel")
    if sc.get("measurement") is None:
        raise UsageError("langevin needs a 'measurement' in the scenario")
    y = np.asarray(sc.get("measurement"), dtype=float)
    n = _samples(args, sc)
    seed = _seed(args, sc)
    mode = sc.get("schedule").get("likelihood_variance", "annealed")
    xs = langevin_posterior_sample(mixture, channel, y, schedule, rng_seed=seed, n_chains=n, likelihood_variance=mode)
    exact = mixture_posterior(mixture, channel, y)
    regions = {}
    for name, (lo, hi) in (sc.get("regions") or {}).items():
        inside = np.ones(n, dtype=bool)
        if lo is not None:
            inside &= xs[:, 0] > lo
        if hi is not None:
            inside &= xs[:, 0] <= hi
        p = float(inside.mean())
        regions[name] = {
            "sampled": p,
            "standard_error": float(np.sqrt(p * (1 - p) / n)),
            "exact": exact.interval_probability(lo, hi),
        }
    summary = {
        "chains": n,
        "seed": seed,
        "schedule": schedule.to_dict(),
        "likelihood_variance": mode,
        "sample_mean": xs.mean(axis=0).tolist(),
        "sample_variance": xs.var(axis=0, ddof=1).tolist() if n > 1 else None,
        "standard_error": (xs.std(axis=0, ddof=1) / np.sqrt(n)).tolist() if n > 1 else None,
        "exact_mean": exact.mean.tolist(),
        "regions": regions,
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["chain", *(f"x{i}" for i in range(xs.shape[1]))])
    for i, row in enumerate(xs):
        w.writerow([i, *map(repr, row.tolist())])
    out = Output(args)
    out.add("langevin.json", _json(summary))
    out.add("langevin_samples.csv", buf.getvalue())
    out.emit("langevin.json", "langevin_samples.csv")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the scenario)")
    common.add_argument("--out", default=None, metavar="DIR", help="directory for report files")
    common.add_argument("--samples", type=int, default=None, metavar="N", help="sample or chain count")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    parser = argparse.ArgumentParser(
        prog="fairrecon",
        description="Fairness metrics, audits, reweighting and checks for reconstruction from lossy measurements.",
        epilog="bundled scenarios: " + ", ".join(bundled_names()),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("metrics", cmd_metrics, "exact fairness metrics of a kernel"),
        ("audit", cmd_audit, "sampled or ingested error counts with exact binomial SPE tests"),
        ("reweight", cmd_reweight, "group weights that equalize self-reconstruction rates"),
        ("langevin", cmd_langevin, "annealed Langevin posterior samples for a Gaussian mixture prior"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--scenario", required=True, metavar="PATH")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", parents=[common], help="run a seeded verification suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--scenario", default=None, metavar="PATH", help="override the suite's built-in fixture")
    p.set_defaults(func=cmd_verify)
    return parser


def _threads():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n <= 0:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with threadpool_limits(limits=_threads()):
            return args.func(args)
    except (ScenarioError, UsageError, DimensionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UnreachableMeasurementError, PreconditionError, DivergenceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

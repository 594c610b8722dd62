"""Benchmark CLI: run scheme x dataset matrices, ECDF/area tables, the
jitter study, leave-one-out studies, and one-shot fits.

Exit codes: 0 on success, 1 when some matrix cell failed (rows are still
emitted), 2 on configuration errors.
"""

import argparse
import json
import os
import sys

from . import benchmark, testbed
from .errors import ConfigError, GpError
from .kernels import MATERN, KernelSpec
from .optimize import fit


def _build_parser():
    parser = argparse.ArgumentParser(prog="bench", description="GP MLE benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment matrix from a JSON config")
    run.add_argument("--config", required=True, help="path to the matrix config (JSON)")
    run.add_argument("--out", required=True, help="output directory for results.csv / timings.csv")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")

    ecdf = sub.add_parser("ecdf", help="ECDF and area tables from a results directory")
    ecdf.add_argument("--in", dest="in_dir", required=True, help="directory holding results.csv")
    ecdf.add_argument("--reference", required=True, help="reference scheme id")
    ecdf.add_argument(
        "--aggregate",
        choices=("pool", "mean"),
        default="pool",
        help="pool repetitions into the sample, or average NLL per dataset first",
    )
    ecdf.add_argument("--out", required=True, help="output CSV for ECDF step points")

    jitter = sub.add_parser("jitter", help="noise-ratio study (conditioning, noise, NLL, error)")
    jitter.add_argument("--function", default="branin")
    jitter.add_argument("--n", type=int, default=20)
    jitter.add_argument("--ratios", default="0,1e-8,1e-6,1e-4,1e-2", help="comma-separated noise ratios")
    jitter.add_argument("--seed", type=int, default=0)
    jitter.add_argument(
        "--target-kappa",
        type=float,
        default=1e10,
        help="walk the refit up the long-range ridge to this condition number (0 disables)",
    )
    jitter.add_argument("--out", required=True)

    loo = sub.add_parser("loo", help="leave-one-out refit study")
    loo.add_argument("--function", default="borehole")
    loo.add_argument("--n-mult", type=int, default=3, help="points per input dimension")
    loo.add_argument("--scheme", default="improved", choices=sorted(benchmark.PRESETS))
    loo.add_argument("--seed", type=int, default=0)
    loo.add_argument("--out", required=True)

    fit_cmd = sub.add_parser("fit", help="fit one dataset and print params/NLL as JSON")
    fit_cmd.add_argument("--data", required=True, help="dataset CSV (x_1..x_d, z)")
    fit_cmd.add_argument("--scheme", default="improved", choices=sorted(benchmark.PRESETS))
    fit_cmd.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_run(args):
    try:
        with open(args.config) as handle:
            cfg = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"bench run: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        matrix, master_seed = benchmark.parse_config(cfg)
    except ConfigError as exc:
        print(f"bench run: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        master_seed = args.seed
    os.makedirs(args.out, exist_ok=True)
    rows = benchmark.run_matrix(matrix, master_seed=master_seed, jobs=args.jobs)
    results, timings = benchmark.write_result_tables(rows, args.out)
    failures = [r for r in rows if r.status != "ok"]
    print(f"wrote {results} and {timings}: {len(rows)} rows, {len(failures)} failures")
    return 1 if failures else 0


def _cmd_ecdf(args):
    path = os.path.join(args.in_dir, "results.csv")
    try:
        rows = benchmark.read_result_rows(path)
    except OSError as exc:
        print(f"bench ecdf: {exc}", file=sys.stderr)
        return 2
    scheme_names = sorted({r.scheme for r in rows if r.scheme != args.reference})
    point_rows = []
    area_rows = []
    try:
        for name in scheme_names:
            report = benchmark.ecdf_of_differences(rows, name, args.reference, aggregate=args.aggregate)
            for x, y in report.points():
                point_rows.append({"scheme": name, "diff": x, "ecdf": y})
            area_rows.append(
                {
                    "scheme": name,
                    "area": report.area,
                    "n_diffs": int(report.diffs.size),
                    "n_failed": report.n_failed,
                    "negative_count": report.negative_count,
                }
            )
    except GpError as exc:
        print(f"bench ecdf: {exc}", file=sys.stderr)
        return 2
    benchmark.emit_csv(point_rows, args.out, ("scheme", "diff", "ecdf"))
    stem, ext = os.path.splitext(args.out)
    areas_path = f"{stem}-areas{ext or '.csv'}"
    benchmark.emit_csv(
        area_rows, areas_path, ("scheme", "area", "n_diffs", "n_failed", "negative_count")
    )
    print(json.dumps({r["scheme"]: r["area"] for r in area_rows}, sort_keys=True))
    return 0


def _cmd_jitter(args):
    try:
        ratios = [float(r) for r in args.ratios.split(",") if r != ""]
    except ValueError as exc:
        print(f"bench jitter: bad --ratios: {exc}", file=sys.stderr)
        return 2
    try:
        spec, params, dataset = benchmark.fit_scenario(
            function=args.function,
            n=args.n,
            seed=args.seed,
            min_kappa=args.target_kappa if args.target_kappa > 0 else None,
        )
        rows = benchmark.jitter_study(spec, params, dataset, ratios)
    except (GpError, KeyError, ValueError) as exc:
        print(f"bench jitter: {exc}", file=sys.stderr)
        return 1
    benchmark.emit_csv(rows, args.out, benchmark.JITTER_COLUMNS)
    print(f"wrote {args.out}: {len(rows)} ratios")
    return 0


def _cmd_loo(args):
    try:
        fn = testbed.get_function(args.function)
    except KeyError as exc:
        print(f"bench loo: {exc}", file=sys.stderr)
        return 2
    design = testbed.DesignSpec(kind=testbed.LHS_MDU, n=args.n_mult * fn.dim, seed=args.seed)
    try:
        dataset = testbed.make_dataset(fn, design)
    except GpError as exc:
        print(f"bench loo: {exc}", file=sys.stderr)
        return 2
    spec = KernelSpec(family=MATERN, dim=fn.dim, nu=2.5)
    scheme = benchmark.PRESETS[args.scheme](seed=benchmark.derive_seed("loo", args.seed))
    rows = benchmark.loo_table(scheme, spec, dataset)
    benchmark.emit_csv(rows, args.out, benchmark.LOO_COLUMNS)
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {
        "function": fn.name,
        "n": dataset.n,
        "scheme": args.scheme,
        "loo_mse": sum(r["squared_error"] for r in ok) / len(ok) if ok else None,
        "failed_folds": len(rows) - len(ok),
    }
    print(json.dumps(summary, sort_keys=True))
    return 1 if len(ok) < len(rows) else 0


def _cmd_fit(args):
    try:
        dataset = testbed.dataset_from_csv(args.data)
    except (OSError, ValueError) as exc:
        print(f"bench fit: cannot read {args.data}: {exc}", file=sys.stderr)
        return 2
    spec = KernelSpec(family=MATERN, dim=dataset.dim, nu=2.5)
    scheme = benchmark.PRESETS[args.scheme](seed=args.seed)
    try:
        result = fit(scheme, spec, dataset)
    except GpError as exc:
        print(f"bench fit: {exc}", file=sys.stderr)
        return 1
    print(
        json.dumps(
            {
                "nll": result.nll,
                "params": json.loads(benchmark.params_to_json(result.params)),
                "n_nll_evals": result.n_nll_evals,
            },
            sort_keys=True,
        )
    )
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "ecdf": _cmd_ecdf,
    "jitter": _cmd_jitter,
    "loo": _cmd_loo,
    "fit": _cmd_fit,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()

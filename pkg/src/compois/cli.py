"""Command-line front end: sampling, fitting, model comparison, benchmarking.

Every output file is accompanied by a JSON run manifest recording the
command, resolved seed, input digests and timestamps, so a run can be
reproduced exactly.  Exit codes: 0 success, 2 usage error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import sys
import time
from importlib.metadata import PackageNotFoundError, version as _pkg_version

import numpy as np

from .envelope import build_envelope
from .estimator import bic_estimate
from .glm import (
    BoundModel,
    builtin_models,
    load_dataset,
    parse_formula,
    simulate_response,
    synthetic_covariates,
)
from .mcmc import McmcConfig, run_chain
from .params import CmpParams, CompoisError, DataError
from .rejection import acceptance_grid, sample_with_costs, write_acceptance_csv
from .rng import make_rng, resolve_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _tool_version() -> str:
    try:
        return _pkg_version("compois")
    except PackageNotFoundError:
        return "unknown"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, argv, seed, inputs, outputs, started, finished, extra=None):
    manifest = {
        "schema": 1,
        "tool": "compois",
        "version": _tool_version(),
        "command": ["compois"] + list(argv),
        "rerun": ["compois"] + _with_resolved_seed(argv, seed),
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": finished,
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _with_resolved_seed(argv, seed) -> list[str]:
    argv = list(argv)
    if seed is None or "--seed" in argv:
        return argv
    return argv + ["--seed", str(seed)]


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse grid {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="compois",
        description="Exact COM-Poisson sampling and doubly-intractable regression inference.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_sample = sub.add_parser("sample", help="draw exact variates, with trial accounting")
    p_sample.add_argument("--mu", type=float, required=True)
    p_sample.add_argument("--nu", type=float, required=True)
    p_sample.add_argument("--n", type=int, default=1000, help="number of draws")
    p_sample.add_argument("--seed", type=int, default=None)
    p_sample.add_argument("--out", default=None, help="output CSV (default stdout)")

    p_fit = sub.add_parser("fit", help="fit a regression model by MCMC")
    p_fit.add_argument("--data", required=True, help="input CSV with header row")
    p_fit.add_argument("--formula", required=True,
                       help="e.g. 'mu ~ BIDPREM + WHTKNGHT ; nu ~ SIZE'")
    p_fit.add_argument("--response", default="NUMBIDS", help="response column name")
    p_fit.add_argument("--algorithm", default="exchange",
                       choices=["exchange", "gimh", "mcwm", "exact-truncated"])
    p_fit.add_argument("--iterations", type=int, default=100_000)
    p_fit.add_argument("--burnin", type=int, default=10_000)
    p_fit.add_argument("--r", type=int, default=100,
                       help="acceptances per bound estimate (pseudo-marginal only)")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--standardize", action="store_true",
                       help="z-score covariates before fitting")
    p_fit.add_argument("--threads", type=int, default=1)
    p_fit.add_argument("--out", required=True, help="output prefix")

    p_bic = sub.add_parser("bic", help="rank models by estimated BIC")
    p_bic.add_argument("--data", required=True)
    p_bic.add_argument("--models", default=None,
                       help="file of 'name = formula' lines (default: built-in five)")
    p_bic.add_argument("--response", default="NUMBIDS")
    p_bic.add_argument("--r", type=int, default=5000)
    p_bic.add_argument("--iterations", type=int, default=100_000)
    p_bic.add_argument("--burnin", type=int, default=10_000)
    p_bic.add_argument("--seed", type=int, default=None)
    p_bic.add_argument("--standardize", action="store_true")
    p_bic.add_argument("--out", default=None, help="output CSV (default stdout)")

    p_bench = sub.add_parser("bench", help="acceptance-rate grid and throughput report")
    p_bench.add_argument("--mu-grid", type=_parse_grid, default=[0.5, 1.0, 2.0, 5.0, 10.0])
    p_bench.add_argument("--nu-grid", type=_parse_grid,
                         default=[0.1, 0.3, 0.7, 1.0, 1.5, 3.0])
    p_bench.add_argument("--draws", type=int, default=10_000, help="draws per grid cell")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--skip-throughput", action="store_true")
    p_bench.add_argument("--out", required=True, help="acceptance grid CSV")
    return parser


def cmd_sample(args, argv) -> int:
    started = _now()
    seed = resolve_seed(args.seed)
    rng = make_rng(seed)
    params = CmpParams(args.mu, args.nu)
    env = build_envelope(params)
    values, trials = sample_with_costs(params, env, args.n, rng)
    rate = args.n / trials.sum()
    rows = list(zip(values.tolist(), trials.tolist()))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["value", "trials"])
            w.writerows(rows)
        _write_manifest(args.out + ".manifest.json", argv, seed, [], [args.out],
                        started, _now(), extra={"acceptance_rate": rate})
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["value", "trials"])
        w.writerows(rows)
    print(f"# draws={args.n} proposals={int(trials.sum())} acceptance_rate={rate:.4f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_fit(args, argv) -> int:
    started = _now()
    seed = resolve_seed(args.seed)
    data = load_dataset(args.data)
    try:
        spec = parse_formula(args.formula, name="fit", response=args.response)
    except ValueError as exc:
        raise DataError(str(exc))
    model = BoundModel(spec, data, standardize=args.standardize)
    config = McmcConfig(
        iterations=args.iterations,
        burn_in=args.burnin,
        algorithm=args.algorithm,
        r=args.r,
        seed=seed,
    )
    result = run_chain(model, config)
    chain_path = args.out + ".chain.csv"
    with open(chain_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(result.names)
        np.savetxt(fh, result.retained_draws(), delimiter=",", fmt="%.10g")
    summary = result.to_summary()
    summary["n"] = model.n
    summary["model"] = {
        "formula": args.formula,
        "response": args.response,
        "k": model.k,
        "standardize": bool(args.standardize),
    }
    summary_path = args.out + ".summary.json"
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(args.out + ".manifest.json", argv, seed, [args.data],
                    [chain_path, summary_path], started, _now())
    for j, name in enumerate(result.names):
        print(f"{name}: mean={result.means[j]:.4f} sd={result.sds[j]:.4f} "
              f"accept={result.accept_rates[j]:.3f}")
    print(f"mESS={result.mess:.1f} cpu_s={result.cpu_seconds:.2f} "
          f"iters/s={result.draws_per_second:.0f}")
    return EXIT_OK


def _read_models_file(path, response):
    specs = []
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise DataError(f"models file not found: {path}")
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"models file line {line!r} is not 'name = formula'")
        name, formula = line.split("=", 1)
        try:
            specs.append(parse_formula(formula.strip(), name=name.strip(), response=response))
        except ValueError as exc:
            raise DataError(f"model {name.strip()!r}: {exc}")
    if not specs:
        raise DataError(f"models file {path} defines no models")
    return specs


def cmd_bic(args, argv) -> int:
    started = _now()
    seed = resolve_seed(args.seed)
    data = load_dataset(args.data)
    if args.models:
        specs = _read_models_file(args.models, args.response)
    else:
        specs = builtin_models(response=args.response)
    rng = make_rng(seed)
    rows = []
    for spec in specs:
        try:
            model = BoundModel(spec, data, standardize=args.standardize)
            config = McmcConfig(
                iterations=args.iterations, burn_in=args.burnin,
                algorithm="exchange", seed=None,
            )
            chain = run_chain(model, config, rng=rng)
            report = bic_estimate(chain, model, args.r, rng)
        except CompoisError as exc:
            raise type(exc)(f"model {spec.name!r}: {exc}")
        rows.append({
            "model": spec.name,
            "k": report["k"],
            "n": report["n"],
            "r": report["r"],
            "loglik_hat": report["loglik_hat"],
            "bic_hat": report["bic_hat"],
        })
    order = np.argsort([row["bic_hat"] for row in rows])
    for rank, idx in enumerate(order, start=1):
        rows[idx]["rank"] = rank
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["model", "k", "n", "r", "loglik_hat", "bic_hat", "rank"])
        for row in rows:
            w.writerow([row["model"], row["k"], row["n"], row["r"],
                        f"{row['loglik_hat']:.4f}", f"{row['bic_hat']:.4f}", row["rank"]])
    finally:
        if args.out:
            out.close()
    if args.out:
        _write_manifest(args.out + ".manifest.json", argv, seed, [args.data], [args.out],
                        started, _now())
    best = rows[int(order[0])]
    print(f"# best model: {best['model']} (bic_hat={best['bic_hat']:.2f})", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args, argv) -> int:
    started = _now()
    seed = resolve_seed(args.seed)
    rng = make_rng(seed)
    rows = acceptance_grid(args.mu_grid, args.nu_grid, args.draws, rng, threads=args.threads)
    write_acceptance_csv(rows, args.out)
    extra = {}
    if not args.skip_throughput:
        ips = reference_throughput(seed)
        extra["reference_exchange_iters_per_sec"] = ips
        print(f"reference exchange fit (n=126, k=6): {ips:.0f} iterations/sec")
    _write_manifest(args.out + ".manifest.json", argv, seed, [], [args.out],
                    started, _now(), extra=extra)
    return EXIT_OK


def reference_throughput(seed, n: int = 126, iterations: int = 2000) -> float:
    """Exchange iterations/sec on a synthetic dataset shaped like the largest model."""
    rng = make_rng(0 if seed is None else seed)
    spec = builtin_models()[4]
    data = synthetic_covariates(n, rng)
    beta_true = np.array([0.35, -0.2, 0.43, 0.8, -0.18, -0.5])
    data = simulate_response(spec, data, beta_true, rng)
    model = BoundModel(spec, data)
    config = McmcConfig(iterations=iterations, burn_in=iterations // 4, seed=None)
    t0 = time.perf_counter()
    run_chain(model, config, rng=rng)
    return iterations / (time.perf_counter() - t0)


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"sample": cmd_sample, "fit": cmd_fit, "bic": cmd_bic, "bench": cmd_bench}
    try:
        return handlers[args.cmd](args, argv)
    except DataError as exc:
        print(f"compois: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CompoisError as exc:
        print(f"compois: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"compois: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

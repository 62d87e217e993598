"""Command line front end.

Exit codes: 0 success, 1 usage or input error, 2 diagnostic failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .analysis import (
    compare_scan_orders,
    confidence_density_rho,
    fiducial_rho_curve,
    gelman_rubin,
    marginal_fiducial_mu,
    marginal_fiducial_sigma,
    normal_mean_fiducial,
    prior_mu_curve,
    prior_sigma_curve,
    summarize,
)
from .config import SEED_ENV, ConfigError, RunConfig, default_seed, load_config
from .errors import BVGibbsError
from .fiducial import TruncationConfig, max_alpha
from .model import (
    REFERENCE_SUMMARY,
    PARAM_NAMES,
    compute_sufficient_stats,
    read_observations_csv,
    synthesize_matching_dataset,
    write_observations_csv,
)
from .sampler import ScanPolicy, read_trace_csv, run_chain, run_multi_chain, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_DIAGNOSTIC = 0, 1, 2

CURVE_KINDS = (
    "prior-mu",
    "prior-sigma",
    "fiducial-mu",
    "fiducial-sigma",
    "confidence-rho",
    "fiducial-rho-conditional",
    "normal-mean-fiducial",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jsonable(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return _jsonable(obj.item())
    return obj


def _dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n"
    if path is not None:
        path.write_text(text)
    return text


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    data = synthesize_matching_dataset(
        args.n, args.mean_x, args.sd_x, args.mean_y, args.sd_y, args.corr, args.seed
    )
    out = Path(args.out)
    try:
        write_observations_csv(data, out)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from None
    mx, sx, my, sy, r = compute_sufficient_stats(data).sample_moments()
    print(f"wrote {len(data)} observations to {out}")
    print(f"mean_x={mx:.10g} sd_x={sx:.10g} mean_y={my:.10g} sd_y={sy:.10g} corr={r:.10g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def _resolve_run_config(args) -> RunConfig:
    overrides = list(args.set or [])
    if args.iters is not None:
        overrides.append(f"sampler.iterations={args.iters}")
    if args.burn_in is not None:
        overrides.append(f"sampler.burn_in={args.burn_in}")
    if args.seed is not None:
        overrides.append(f"sampler.seed={args.seed}")
    if getattr(args, "scan", None) is not None:
        overrides.append(f"sampler.scan={json.dumps(args.scan)}")
    if args.trunc is not None:
        overrides.append(f"sampler.trunc={json.dumps(args.trunc)}")
    if args.no_adapt:
        overrides.append("sampler.adapt=false")
    return load_config(args.config, overrides)


def _load_data(path: str):
    p = Path(path)
    try:
        data = read_observations_csv(p)
    except OSError as exc:
        raise UsageError(f"cannot read {p}: {exc.strerror}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return p, data


def _summary_json(trace) -> dict:
    if len(trace) == 0:
        blocks = {name: {"mean": None, "sd": None, "q025": None, "q50": None,
                         "q975": None, "mcse": None, "acceptance": None} for name in PARAM_NAMES}
    else:
        blocks = summarize(trace).to_json()
    return {
        "iterations": len(trace),
        "parameters": blocks,
        "tuned_proposals": trace.tuned_proposal_sd,
    }


def cmd_run(args) -> int:
    cfg = _resolve_run_config(args)
    data_path, data = _load_data(args.data)
    if args.chains < 1:
        raise UsageError("--chains must be >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.sampler.seed + i for i in range(args.chains)]

    manifest = {
        "software": {"name": "bvgibbs", "version": __version__},
        "command": "run",
        "config": cfg.to_json(),
        "chains": args.chains,
        "seeds": seeds,
        "data": {"path": str(data_path), "sha256": _sha256(data_path), "n": len(data)},
        "started": _now(),
    }
    _dump_json(manifest, out_dir / "manifest.json")

    if args.chains == 1:
        traces = [run_chain(data, cfg.prior, None, cfg.sampler)]
        names = ["trace.csv"]
    else:
        traces = run_multi_chain(data, cfg.prior, cfg.sampler, args.chains, workers=args.workers)
        names = [f"trace_chain{i}.csv" for i in range(args.chains)]
    for trace, name in zip(traces, names):
        write_trace_csv(trace, out_dir / name)

    summary = {"config": cfg.to_json(), "chains": []}
    for trace, name, seed in zip(traces, names, seeds):
        block = _summary_json(trace)
        block.update(file=name, seed=seed, init=dict(zip(PARAM_NAMES, trace.init)))
        summary["chains"].append(block)
    summary["parameters"] = summary["chains"][0]["parameters"]
    if len(traces) > 1 and len(traces[0]) >= 10:
        summary["convergence"] = gelman_rubin(traces).to_json()
    _dump_json(summary, out_dir / "summary.json")
    print(f"wrote {', '.join(names)}, summary.json and manifest.json to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(args) -> int:
    if len(args.traces) < 2:
        raise UsageError("diagnose needs at least 2 trace files")
    traces = []
    for path in args.traces:
        try:
            traces.append(read_trace_csv(path))
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise UsageError(f"trace lengths differ: {[len(t) for t in traces]}")
    try:
        report = gelman_rubin(traces, threshold=args.threshold)
    except BVGibbsError as exc:
        raise UsageError(str(exc)) from None
    payload = report.to_json()
    payload["files"] = list(args.traces)
    payload["mean"] = {n: sum(m[n] for m in report.chain_means) / len(traces) for n in PARAM_NAMES}
    payload["mcse"] = [summarize(t).to_json() for t in traces]
    payload["mcse"] = [{n: block[n]["mcse"] for n in PARAM_NAMES} for block in payload["mcse"]]
    text = _dump_json(payload, Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC


# ---------------------------------------------------------------------------
# curves


def _need(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"curve {args.kind} needs {', '.join(missing)}")


def _data_side(args):
    """Fill xbar, s, n, r from --data when given."""
    if args.data is None:
        return
    _, data = _load_data(args.data)
    mx, sx, my, sy, r = compute_sufficient_stats(data).sample_moments()
    side = args.side.lower()
    if args.xbar is None:
        args.xbar = mx if side == "x" else my
    if args.s is None:
        args.s = sx if side == "x" else sy
    if args.n is None:
        args.n = len(data)
    if args.r is None:
        args.r = r


def cmd_curves(args) -> int:
    if args.kind not in CURVE_KINDS:
        raise UsageError(f"unknown curve kind {args.kind!r}; valid kinds: {', '.join(CURVE_KINDS)}")
    _data_side(args)
    points = args.points
    kind = args.kind
    if kind in ("prior-mu", "prior-sigma"):
        prior = load_config(args.config, list(args.set or [])).prior
        curve = (prior_mu_curve if kind == "prior-mu" else prior_sigma_curve)(prior, args.side, points)
    elif kind == "fiducial-mu":
        _need(args, "xbar", "s", "n")
        curve = marginal_fiducial_mu(args.xbar, args.s, args.n, points)
    elif kind == "fiducial-sigma":
        _need(args, "s", "n")
        curve = marginal_fiducial_sigma(args.s, args.n, points)
    elif kind == "confidence-rho":
        _need(args, "r", "n")
        curve = confidence_density_rho(args.r, args.n, points)
    elif kind == "normal-mean-fiducial":
        _need(args, "xbar", "sigma2", "n")
        curve = normal_mean_fiducial(args.xbar, args.sigma2, args.n, points)
    else:
        _need(args, "rho_hat", "n")
        if args.alpha is None or args.alpha == "auto":
            trunc = max_alpha(args.rho_hat, args.n, 0.9)
        else:
            trunc = TruncationConfig(float(args.alpha))
        curve = fiducial_rho_curve(args.rho_hat, args.n, trunc, points)
    out = Path(args.out)
    try:
        curve.to_csv(out)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc.strerror}") from None
    print(f"wrote {len(curve.abscissae)} points of {kind} to {out} (area {curve.area():.6f})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare-scans


def cmd_compare_scans(args) -> int:
    cfg = _resolve_run_config(args)
    if len(args.orders) < 2:
        raise UsageError("compare-scans needs at least 2 fixed orders")
    try:
        policies = [ScanPolicy.parse(o) for o in args.orders]
    except ValueError as exc:
        raise UsageError(f"malformed scan order: {exc}") from None
    if any(p.order is None for p in policies):
        raise UsageError("orders must be permutations, not 'uniform'")
    _, data = _load_data(args.data)
    stats = compute_sufficient_stats(data)

    runs = {"uniform": ScanPolicy.uniform()}
    for i, p in enumerate(policies):
        runs[f"order{i}:{p}"] = p
    traces = {}
    for label, policy in runs.items():
        traces[label] = run_chain(stats, cfg.prior, None, replace(cfg.sampler, scan=policy))
    if any(len(t) < 4 for t in traces.values()):
        raise UsageError("runs are too short to compare; increase --iters")
    report = compare_scan_orders(traces, reference="uniform")
    report["config"] = cfg.to_json()
    text = _dump_json(report, Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_DIAGNOSTIC if report["flag"] else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_run_options(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--iters", type=int, help="kept transitions per chain")
    p.add_argument("--burn-in", type=int, help="discarded transitions")
    p.add_argument("--seed", type=int, help=f"base seed (default: config, then ${SEED_ENV}, then 0)")
    p.add_argument("--trunc", help="'auto', 'auto:SAFETY' or a fixed alpha")
    p.add_argument("--no-adapt", action="store_true", help="do not tune proposals during burn-in")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bvgibbs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a dataset with exact summary statistics")
    p.add_argument("--n", type=int, default=REFERENCE_SUMMARY["n"])
    p.add_argument("--mean-x", type=float, default=REFERENCE_SUMMARY["mean_x"])
    p.add_argument("--sd-x", type=float, default=REFERENCE_SUMMARY["sd_x"])
    p.add_argument("--mean-y", type=float, default=REFERENCE_SUMMARY["mean_y"])
    p.add_argument("--sd-y", type=float, default=REFERENCE_SUMMARY["sd_y"])
    p.add_argument("--corr", type=float, default=REFERENCE_SUMMARY["corr"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the sampler")
    p.add_argument("data", help="CSV with header x,y")
    _add_run_options(p)
    p.add_argument("--scan", help="'uniform' or a permutation such as rho,mu_x,sigma2_x,mu_y,sigma2_y")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--workers", type=int, default=1, help="processes for multi-chain runs")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="Gelman-Rubin PSRF over trace files")
    p.add_argument("traces", nargs="+")
    p.add_argument("--threshold", type=float, default=1.01)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("curves", help="emit a reference density as value,density CSV")
    p.add_argument("kind", help=", ".join(CURVE_KINDS))
    p.add_argument("--side", choices=["x", "y"], default="x")
    p.add_argument("--data", help="take xbar, s, n and r from this x,y CSV")
    p.add_argument("--config", help="JSON config (prior constants) for prior curves")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.add_argument("--xbar", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--rho-hat", type=float)
    p.add_argument("--alpha", help="truncation level or 'auto'")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("compare-scans", help="compare fixed scan orders against the uniform scan")
    p.add_argument("data")
    p.add_argument("orders", nargs="+", help="permutations like rho,mu_x,sigma2_x,mu_y,sigma2_y")
    _add_run_options(p)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_compare_scans)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "simulate" and args.seed is None:
        try:
            args.seed = default_seed()
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, BVGibbsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

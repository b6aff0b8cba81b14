"""Command-line surface: config ingestion, subcommand dispatch, seeding,
structured JSON/CSV output, and run manifests.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 when a
mixing-regime warning is escalated by --strict.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings

import numpy as np

from . import __version__, set_threads
from . import continuous, estimate, experiments, glauber, hardcore, model as model_mod
from .discretize import (CanonicalPointSet, GraphSizeError, build_graph,
                         load_graph, resolution_for_error)
from .glauber import RegimeWarning

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_REGIME = 3


def _config_hash(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _fmt17(x: float) -> str:
    return f"{x:.17g}"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _emit(payload: dict, out_path=None):
    text = json.dumps(payload, indent=2, default=_json_default)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("HARDGRID_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise model_mod.ConfigError("HARDGRID_SEED", "must be an integer") from exc
    return 0


def _load_graph_or_config(args):
    """A positional input is either a JSON model config or a binary graph."""
    path = args.input
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == b"HARDGRID":
        return load_graph(path), None
    spec = model_mod.model_from_config(path)
    eps_d = getattr(args, "eps_d", None) or 0.5
    rho = resolution_for_error(spec, eps_d, adaptive=getattr(args, "adaptive", True))
    return build_graph(spec, CanonicalPointSet(spec.region, rho)), spec


def _cmd_model_validate(args) -> tuple[int, dict, list]:
    spec = model_mod.model_from_config(args.config)
    report = {
        "valid": True,
        "dimension": spec.dimension,
        "side_length": spec.region.side_length,
        "volume": spec.volume(),
        "num_types": spec.q,
        "interaction_min": None if math.isinf(spec.interaction.lambda_min())
        else spec.interaction.lambda_min(),
        "interaction_max": spec.interaction.lambda_max(),
        "fugacity_max": spec.fugacities.lambda_max(),
        "log_z_upper_bound": model_mod.log_z_upper_bound(spec),
    }
    try:
        uc = model_mod.check_uniform_condition(spec)
        report["uniform_condition"] = {"satisfied": uc.satisfied,
                                       "lhs": uc.lhs, "rhs": uc.rhs}
    except ValueError:
        report["uniform_condition"] = "vacuous (no constraints)"
    cc = model_mod.check_clique_condition(spec)
    report["decay_witness"] = {
        "status": cc.status,
        "f": None if cc.f is None else cc.f.tolist(),
    }
    _emit(report, args.output)
    return EXIT_OK, report, [args.output] if args.output else []


def _cmd_discretize(args) -> tuple[int, dict, list]:
    spec = model_mod.model_from_config(args.config)
    rho = resolution_for_error(spec, args.eps_d, adaptive=args.adaptive)
    points = CanonicalPointSet(spec.region, rho)
    graph = build_graph(spec, points)
    graph.write_binary(args.output)
    outputs = [args.output]
    if args.edgelist:
        graph.write_edgelist(args.edgelist)
        outputs.append(args.edgelist)
    info = {
        "resolution": rho,
        "adaptive": args.adaptive,
        "eps_d": args.eps_d,
        "num_points": graph.num_points,
        "num_vertices": graph.num_vertices,
        "max_degree": graph.max_degree() if graph.num_vertices <= 200_000 else None,
        "output": args.output,
    }
    print(json.dumps(info, indent=2, default=_json_default))
    return EXIT_OK, info, outputs


def _cmd_zhat(args) -> tuple[int, dict, list]:
    graph, _spec = _load_graph_or_config(args)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    diagnostics = {}
    if args.method == "exact":
        ln_z = float(hardcore.exact_log_z(graph))
    elif args.method == "mcmc":
        result = estimate.estimate_log_z_mcmc(graph, args.eps_a, seed)
        ln_z = float(result.log_z)
        diagnostics = {"samples_per_ratio": result.samples_per_ratio,
                       "ratios": result.ratios.tolist()}
    else:
        result = estimate.estimate_log_z_weitz(graph, args.eps_a)
        ln_z = float(result.log_z)
        diagnostics = {"converged": result.converged, "depth": result.depth,
                       "history": result.history}
    payload = {
        "method": args.method,
        "ln_z": ln_z,
        "eps_a": args.eps_a,
        "seed": seed,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
        "diagnostics": diagnostics,
    }
    _emit(payload, args.output)
    return EXIT_OK, payload, [args.output] if args.output else []


def _cmd_sample_discrete(args) -> tuple[int, dict, list]:
    graph, _spec = _load_graph_or_config(args)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    vs = glauber.sample(graph, args.eps_s, seed, steps=args.steps)
    payload = {
        "method": "single-site-chain",
        "vertices": vs.tolist(),
        "num_occupied": int(vs.size),
        "num_vertices": graph.num_vertices,
        "eps_s": args.eps_s,
        "seed": seed,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
    }
    _emit(payload, args.output)
    return EXIT_OK, payload, [args.output] if args.output else []


def _cmd_sample_continuous(args) -> tuple[int, dict, list]:
    spec = model_mod.model_from_config(args.config)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    result = continuous.sample_continuous(
        spec, args.eps_s, seed, max_retries=args.max_retries,
        steps=args.steps, resolution=args.resolution)
    cfg = result.configuration
    points_txt = ("[" + ", ".join(
        "[" + ", ".join(_fmt17(v) for v in row) + "]" for row in cfg.points) + "]")
    body = {
        "n": cfg.n,
        "points": "@POINTS@",
        "types": cfg.types.tolist(),
        "valid": result.valid,
        "retries": result.retries,
        "seed": seed,
        "resolution": result.resolution,
        "num_vertices": result.num_vertices,
        "steps": result.steps,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
    }
    text = json.dumps(body, indent=2, default=_json_default)
    text = text.replace('"@POINTS@"', points_txt)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.count_check:
        diag = _count_check(spec, args, seed)
        print(json.dumps({"count_distribution_check": diag}, indent=2,
                         default=_json_default))
    return EXIT_OK, body, [args.output] if args.output else []


def _count_check(spec, args, seed) -> dict:
    """Optional diagnostic: binned particle-count distribution against the
    closed-form term weights (1D single-type only)."""
    from scipy import stats

    if spec.dimension != 1 or spec.q != 1:
        return {"skipped": "diagnostic available for the 1D single-type model"}
    batch = continuous.sample_continuous_batch(
        spec, args.eps_s, args.count_check, rng_seed_shift(seed),
        resolution=args.resolution)
    sigma = float(spec.interaction.entries[0, 0])
    probs = continuous.tonks_count_distribution(
        spec.region.side_length, sigma / 2.0, float(spec.fugacities.values[0]))
    kmax = probs.size - 1
    observed = np.bincount(np.clip(batch.particle_counts, 0, kmax),
                           minlength=kmax + 1).astype(float)
    expected = probs * observed.sum()
    keep = expected >= 5.0
    if keep.sum() < 2:
        return {"skipped": "not enough mass for a binned comparison"}
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    chi2, p = stats.chisquare(obs, exp * obs.sum() / exp.sum())
    return {"chi2": float(chi2), "p_value": float(p),
            "samples": int(batch.particle_counts.size),
            "mean_count": batch.mean_count()}


def rng_seed_shift(seed: int) -> int:
    return (seed + 0x5EED) & ((1 << 63) - 1)


def _cmd_oracle(args) -> tuple[int, dict, list]:
    spec = model_mod.model_from_config(args.config)
    seed = _resolve_seed(args)
    t0 = time.perf_counter()
    if args.method == "tonks":
        if spec.dimension != 1 or spec.q != 1:
            raise model_mod.ConfigError(
                "interaction", "closed form applies to the 1D single-type model")
        sigma = float(spec.interaction.entries[0, 0])
        if sigma <= 0:
            raise model_mod.ConfigError(
                "interaction", "closed form needs a positive interaction distance")
        ln_z = float(continuous.tonks_log_z(spec.region.side_length, sigma / 2.0,
                                            float(spec.fugacities.values[0])))
        payload = {"method": "tonks", "ln_z": ln_z, "std_error": 0.0,
                   "seed": seed,
                   "wall_time_ms": (time.perf_counter() - t0) * 1e3}
    else:
        est = continuous.oracle_log_z_mc(spec, args.tol, seed)
        payload = {"method": "mc", "ln_z": est.ln_z, "std_error": est.std_error,
                   "truncation_k": est.truncation_k,
                   "samples_per_term": est.samples_per_term,
                   "tail_bound": est.tail_bound, "tol": args.tol, "seed": seed,
                   "wall_time_ms": (time.perf_counter() - t0) * 1e3}
    _emit(payload, args.output)
    return EXIT_OK, payload, [args.output] if args.output else []


def _write_rows_csv(path: str, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "n", "ln_z_hc", "ln_z_ref", "deviation"])
        for row in rows:
            writer.writerow(row)


def _cmd_experiment(args) -> tuple[int, dict, list]:
    spec = model_mod.model_from_config(args.config)
    seed = _resolve_seed(args)
    outputs = []
    if args.kind == "concentration":
        report = experiments.concentration_trial(spec, args.n, args.trials,
                                                 args.eps_d, seed)
        payload = report.summary()
        if args.output:
            _write_rows_csv(args.output, report.rows)
            outputs.append(args.output)
    elif args.kind == "expectation":
        report = experiments.expectation_check(spec, args.n, args.trials, seed)
        payload = {"mean_z": report.mean_z, "z_ref": report.z_ref,
                   "standard_error": report.standard_error,
                   "passed": report.passed, "trials": report.trials}
        if args.output:
            _write_rows_csv(args.output, report.rows)
            outputs.append(args.output)
    else:
        lam = spec.fugacities.lambda_max()
        verdict = experiments.tightness_check(lam, spec.volume(), args.n,
                                              args.eps_d)
        payload = {"fugacity": lam, "volume": spec.volume(), "n": args.n,
                   "eps_d": args.eps_d, "under_approximates": verdict}
    print(json.dumps(payload, indent=2, default=_json_default))
    return EXIT_OK, payload, outputs


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hardgrid",
        description="Hard-constraint point processes via geometric hard-core "
                    "discretizations")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (numerics are unaffected by this)")
    p.add_argument("--strict", action="store_true",
                   help="escalate mixing-regime warnings to exit code 3")
    p.add_argument("--manifest", default=None,
                   help="path for the run manifest (default: alongside output)")
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("model", help="model config operations")
    pmsub = pm.add_subparsers(dest="model_command", required=True)
    pv = pmsub.add_parser("validate", help="validate a model config")
    pv.add_argument("config")
    pv.add_argument("-o", "--output", default=None)
    pv.set_defaults(func=_cmd_model_validate)

    pd = sub.add_parser("discretize", help="build and export the graph")
    pd.add_argument("config")
    pd.add_argument("--eps-d", type=float, required=True, dest="eps_d")
    pd.add_argument("--adaptive", action="store_true")
    pd.add_argument("-o", "--output", required=True)
    pd.add_argument("--edgelist", default=None)
    pd.set_defaults(func=_cmd_discretize)

    pz = sub.add_parser("zhat", help="estimate ln Z of a graph")
    pz.add_argument("method", choices=["exact", "mcmc", "weitz"])
    pz.add_argument("input", help="model config (JSON) or graph file")
    pz.add_argument("--eps-a", type=float, default=0.2, dest="eps_a")
    pz.add_argument("--eps-d", type=float, default=None, dest="eps_d",
                    help="discretization budget when input is a config")
    pz.add_argument("--seed", type=int, default=None)
    pz.add_argument("-o", "--output", default=None)
    pz.set_defaults(func=_cmd_zhat)

    ps = sub.add_parser("sample", help="draw configurations")
    pssub = ps.add_subparsers(dest="sample_command", required=True)
    psd = pssub.add_parser("discrete")
    psd.add_argument("input", help="model config (JSON) or graph file")
    psd.add_argument("--eps-s", type=float, required=True, dest="eps_s")
    psd.add_argument("--eps-d", type=float, default=None, dest="eps_d")
    psd.add_argument("--seed", type=int, default=None)
    psd.add_argument("--steps", type=int, default=None)
    psd.add_argument("-o", "--output", default=None)
    psd.set_defaults(func=_cmd_sample_discrete)
    psc = pssub.add_parser("continuous")
    psc.add_argument("config")
    psc.add_argument("--eps-s", type=float, required=True, dest="eps_s")
    psc.add_argument("--seed", type=int, default=None)
    psc.add_argument("--steps", type=int, default=None,
                     help="override the chain-length schedule")
    psc.add_argument("--resolution", type=float, default=None,
                     help="override the sampling resolution")
    psc.add_argument("--max-retries", type=int, default=16, dest="max_retries")
    psc.add_argument("--count-check", type=int, default=None, dest="count_check",
                     help="optional diagnostic: compare N samples' particle "
                          "counts against the closed-form weights")
    psc.add_argument("-o", "--output", default=None)
    psc.set_defaults(func=_cmd_sample_continuous)

    po = sub.add_parser("oracle", help="continuous-side reference values")
    po.add_argument("method", choices=["mc", "tonks"])
    po.add_argument("config")
    po.add_argument("--tol", type=float, default=0.05)
    po.add_argument("--seed", type=int, default=None)
    po.add_argument("-o", "--output", default=None)
    po.set_defaults(func=_cmd_oracle)

    pe = sub.add_parser("experiment", help="batch experiments with CSV output")
    pe.add_argument("kind", choices=["concentration", "expectation", "tightness"])
    pe.add_argument("config")
    pe.add_argument("--n", type=int, required=True)
    pe.add_argument("--trials", type=int, default=100)
    pe.add_argument("--eps-d", type=float, default=0.2, dest="eps_d")
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument("-o", "--output", default=None)
    pe.set_defaults(func=_cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.threads is not None:
        set_threads(args.threads)

    t0 = time.perf_counter()
    regime_msgs = []
    try:
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always", RegimeWarning)
            code, _payload, outputs = args.func(args)
            regime_msgs = [str(w.message) for w in wlist
                           if issubclass(w.category, RegimeWarning)]
    except (model_mod.ConfigError,) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, GraphSizeError, FileNotFoundError,
            continuous.OracleTruncationError,
            estimate.UndersampledRatioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    for msg in regime_msgs:
        print(f"warning: {msg}", file=sys.stderr)

    manifest_path = args.manifest
    if manifest_path is None:
        out = getattr(args, "output", None)
        manifest_path = (out + ".manifest.json") if out else "hardgrid_manifest.json"
    config_path = getattr(args, "config", None) or getattr(args, "input", None)
    manifest = {
        "command_line": " ".join(argv if argv is not None else sys.argv[1:]),
        "config_hash": _config_hash(config_path) if config_path else None,
        "seed": getattr(args, "seed", None),
        "artifact_version": __version__,
        "wall_time_ms": (time.perf_counter() - t0) * 1e3,
        "outputs_written": outputs,
    }
    try:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
    except OSError as exc:  # manifest failure should not mask the result
        print(f"warning: could not write manifest: {exc}", file=sys.stderr)

    if regime_msgs and args.strict:
        return EXIT_REGIME
    return code


if __name__ == "__main__":
    sys.exit(main())

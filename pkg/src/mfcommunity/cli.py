"""Command-line entry point: ``mfcommunity <subcommand> [flags]``.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or parameter errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import experiment, oracle, simulator
from .estimator import DegenerateInputError, failed_score, recover, score, sigma_hat
from .model import (
    DEFAULT_PARAMS,
    ParameterError,
    build_layout,
    load_environment,
    sample_environment,
    save_environment,
    theoretical_constants,
    validate_params,
)
from .seeding import derive_seed
from .svg import heatmap_svg, sweep_svg, write_svg

PARAM_FLAGS = [
    # flag, ModelParams field, type
    ("n", "n_components", int),
    ("r_plus", "r_plus", float),
    ("beta", "beta", float),
    ("lambda", "lam", float),
    ("p", "p", float),
]
DEFAULT_REPLICAS = 1000
DEFAULT_MC_T = 10_000


class UsageError(Exception):
    pass


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model parameters (inline flags override --params)")
    g.add_argument("--params", metavar="FILE", help="JSON file with any of n, r_plus, beta, lambda, p")
    d = DEFAULT_PARAMS
    g.add_argument("--n", type=int, help=f"number of components N (default: {d.n_components})")
    g.add_argument("--r-plus", dest="r_plus", type=float, help=f"excitatory fraction (default: {d.r_plus})")
    g.add_argument("--beta", type=float, help=f"beta = mu / lambda (default: {d.beta})")
    g.add_argument("--lambda", dest="lam", type=float, help=f"lambda (default: {d.lam})")
    g.add_argument("--p", type=float, help=f"edge probability (default: {d.p})")


def _params(args):
    values = asdict(DEFAULT_PARAMS)
    if args.params:
        raw = json.loads(Path(args.params).read_text())
        aliases = {"n": "n_components", "N": "n_components", "lambda": "lam"}
        for k, v in raw.items():
            k = aliases.get(k, k)
            if k not in values:
                raise UsageError(f"unknown parameter {k!r} in {args.params}")
            values[k] = v
    for flag, fld, _ in PARAM_FLAGS:
        v = getattr(args, "lam" if flag == "lambda" else flag)
        if v is not None:
            values[fld] = v
    return validate_params(**values)


def _csv_ints(text: str) -> list[int]:
    return [int(float(x)) for x in text.split(",") if x.strip()]


def _csv_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(msg: str, args) -> None:
    # keep stdout clean when it carries the data
    print(msg, file=sys.stdout if getattr(args, "out", None) else sys.stderr)


# -- subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.env:
        env = load_environment(args.env)
    else:
        params = _params(args)
        env = sample_environment(params, build_layout(params), derive_seed(args.seed, 0))
    if args.env_out:
        save_environment(env, args.env_out)
    cfg = simulator.SimConfig(args.t, args.burn_in, derive_seed(args.seed, 1))
    traj = simulator.simulate(env, cfg)
    if args.format == "binary":
        if not args.out:
            raise UsageError("--format binary needs --out")
        with open(args.out, "wb") as f:
            simulator.write_binary(traj, f)
    elif args.format == "csv":
        buf = io.StringIO()
        simulator.write_csv(traj, buf)
        _emit(buf.getvalue(), args.out)
    else:
        raise UsageError(f"simulate writes csv or binary, not {args.format}")
    mean = simulator.summarize(traj).grand_mean
    _summary(f"simulate: N={env.n_components} T={traj.t_samples} grand_mean={mean:.6f} env={env.fingerprint}", args)
    return 0


def cmd_estimate(args) -> int:
    traj = simulator.read_trajectory(args.trajectory)
    values = sigma_hat(traj)
    doc: dict = {"sigma_hat": values.tolist()}
    try:
        res = recover(values)
    except DegenerateInputError:
        res = None
    if res is not None:
        doc["centroids"] = list(res.centroids)
        doc["labels_hat"] = res.labels_hat.tolist()
        doc["kmeans_iters"] = res.kmeans_iters
    else:
        doc["centroids"] = None
        doc["labels_hat"] = None
    if args.env:
        layout = load_environment(args.env).layout
        if layout.n_components != traj.n_components:
            raise UsageError("environment and trajectory sizes differ")
        sc = failed_score(layout) if res is None else score(res.labels_hat, layout)
        doc["exact"] = sc.exact
        doc["misclassified_fraction"] = sc.misclassified_fraction
    _emit(json.dumps(doc) + "\n", args.out)
    extra = f" exact={doc['exact']} misclassified={doc['misclassified_fraction']:.4f}" if args.env else ""
    _summary(f"estimate: N={traj.n_components} T={traj.t_samples}{extra}", args)
    return 0


def cmd_oracle(args) -> int:
    if args.env:
        env = load_environment(args.env)
    else:
        params = _params(args)
        env = sample_environment(params, build_layout(params), derive_seed(args.seed, 0))
    oq = oracle.compute_oracle(env, tol=args.tol)
    consts = theoretical_constants(env.params)
    res = oracle.approximation_residuals(env, oq, consts)
    l_err, c_err, v_err = oracle.environment_diagnostics(env, consts, oq.mean_vec)
    doc = {
        "params": asdict(env.params),
        "env_fingerprint": env.fingerprint,
        "mean_vec": oq.mean_vec.tolist(),
        "var_vec": oq.var_vec.tolist(),
        "sigma_vec": oq.sigma_vec.tolist(),
        "iterations": oq.iterations,
        "residual": oq.residual,
        "constants": asdict(consts),
    }
    if args.matrices:
        doc["sigma0"] = oq.sigma0.tolist()
        doc["sigma1"] = oq.sigma1.tolist()
    _emit(json.dumps(doc) + "\n", args.out)
    if args.residuals_out:
        row = {**asdict(res), "L_err": l_err, "C_err": c_err, "v_err": v_err}
        with open(args.residuals_out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(row), lineterminator="\n")
            w.writeheader()
            w.writerow(row)
    _summary(f"oracle: N={env.n_components} iterations={oq.iterations} thm2_supnorm={res.thm2_supnorm:.3e}", args)
    return 0


def cmd_mc(args) -> int:
    params = _params(args)
    cell = experiment.run_cell(params, args.t, args.replicas, args.seed, 0, args.threads, args.burn_in)
    _emit(experiment.cells_to_csv([cell]), args.out)
    _summary(f"mc: N={params.n_components} T={args.t} per_hat={cell.per_hat:.4f} mmp_hat={cell.mmp_hat:.4f}", args)
    return 0


def _spec(args, kind: str) -> experiment.ExperimentSpec:
    d = json.loads(Path(args.spec).read_text()) if args.spec else {}
    if args.t_grid:
        d["t_grid"] = _csv_ints(args.t_grid)
    if args.replicas is not None:
        d["n_replicas"] = args.replicas
    if args.seed is not None:
        d["master_seed"] = args.seed
    if kind == "heatmap" and args.n_grid:
        d["n_grid"] = _csv_ints(args.n_grid)
    if kind == "sweep" and args.parameter:
        if not args.values:
            raise UsageError("--parameter needs --values")
        d["sweep"] = {"parameter": args.parameter, "values": _csv_floats(args.values)}
    if "t_grid" not in d:
        raise UsageError(f"{kind} needs a T grid (--t-grid or spec file)")
    if kind == "heatmap" and "n_grid" not in d:
        raise UsageError("heatmap needs an N grid (--n-grid or spec file)")
    if kind == "sweep" and "sweep" not in d:
        raise UsageError("sweep needs --parameter/--values or a spec file")
    try:
        return experiment.spec_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment spec: {exc}") from exc


def _grid_outputs(args, spec, cells, svg_text):
    text = svg_text if args.format == "svg" else experiment.cells_to_csv(cells)
    _emit(text, args.out)
    if args.out:
        experiment.write_metadata(spec, cells, str(args.out) + ".meta.json")
    if args.svg:
        write_svg(svg_text, args.svg)


def cmd_heatmap(args) -> int:
    spec = _spec(args, "heatmap")
    cells = experiment.run_heatmap(spec, args.threads)
    _grid_outputs(args, spec, cells, heatmap_svg(cells))
    _summary(f"heatmap: {len(cells)} cells, replicas={spec.n_replicas}", args)
    return 0


def cmd_sweep(args) -> int:
    spec = _spec(args, "sweep")
    cells = experiment.run_sweep(spec, args.threads)
    _grid_outputs(args, spec, cells, sweep_svg(cells, spec.sweep[0]))
    _summary(f"sweep: {spec.sweep[0]} over {len(spec.sweep[1])} values, {len(cells)} cells", args)
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfcommunity", description="Community recovery for interacting binary chains.")
    sub = ap.add_subparsers(dest="command", required=True)

    def threads(p):
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${experiment.THREADS_ENV} or CPU count)")

    s = sub.add_parser("simulate", help="simulate one trajectory")
    _add_param_flags(s)
    s.add_argument("--t", type=int, required=True, help="number of recorded steps T")
    s.add_argument("--burn-in", type=int, default=None, help="discarded steps (default: coupling-bound rule)")
    s.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    s.add_argument("--env", help="read the environment from this JSON file instead of sampling it")
    s.add_argument("--env-out", help="write the environment used to this JSON file")
    s.add_argument("--format", choices=["csv", "binary"], default="csv", help="output format (default: csv)")
    s.add_argument("--out", help="output path (default: stdout, csv only)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate communities from a trajectory file")
    e.add_argument("--trajectory", required=True, help="trajectory file (csv or binary)")
    e.add_argument("--env", help="environment JSON holding the true layout, for scoring")
    e.add_argument("--format", choices=["json"], default="json", help="output format (default: json)")
    e.add_argument("--out", help="output path (default: stdout)")
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("oracle", help="exact moments for one environment")
    _add_param_flags(o)
    o.add_argument("--env", help="environment JSON file (default: sample one from the parameters)")
    o.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    o.add_argument("--tol", type=float, default=oracle.DEFAULT_TOL, help=f"fixed-point tolerance (default: {oracle.DEFAULT_TOL:g})")
    o.add_argument("--matrices", action="store_true", help="include sigma0 and sigma1 in the JSON")
    o.add_argument("--residuals-out", help="write approximation residuals as a one-row CSV")
    o.add_argument("--format", choices=["json"], default="json", help="output format (default: json)")
    o.add_argument("--out", help="output path (default: stdout)")
    o.set_defaults(func=cmd_oracle)

    m = sub.add_parser("mc", help="PER/MMP for one (parameters, T) cell")
    _add_param_flags(m)
    m.add_argument("--t", type=int, default=DEFAULT_MC_T, help=f"number of recorded steps T (default: {DEFAULT_MC_T})")
    m.add_argument("--burn-in", type=int, default=None, help="discarded steps (default: coupling-bound rule)")
    m.add_argument("--replicas", type=int, default=DEFAULT_REPLICAS, help=f"Monte Carlo replicas (default: {DEFAULT_REPLICAS})")
    m.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    m.add_argument("--format", choices=["csv"], default="csv", help="output format (default: csv)")
    m.add_argument("--out", help="output CSV path (default: stdout)")
    threads(m)
    m.set_defaults(func=cmd_mc)

    for name, helptext in (("heatmap", "PER over an (N, T) grid"), ("sweep", "PER/MMP while one parameter varies")):
        g = sub.add_parser(name, help=helptext)
        g.add_argument("--spec", help="JSON experiment spec")
        g.add_argument("--t-grid", help="comma-separated T values (overrides spec)")
        if name == "heatmap":
            g.add_argument("--n-grid", help="comma-separated N values (overrides spec)")
        else:
            g.add_argument("--parameter", choices=sorted(experiment.SWEEPABLE), help="parameter to vary")
            g.add_argument("--values", help="comma-separated parameter values")
        g.add_argument("--replicas", type=int, default=None, help=f"replicas per cell (default: spec or {DEFAULT_REPLICAS})")
        g.add_argument("--seed", type=int, default=None, help="master seed (default: spec or 0)")
        g.add_argument("--format", choices=["csv", "svg"], default="csv", help="format written to --out (default: csv)")
        g.add_argument("--out", help="output CSV path (default: stdout); metadata goes to OUT.meta.json")
        g.add_argument("--svg", help="also write the SVG figure to this path")
        threads(g)
        g.set_defaults(func=cmd_heatmap if name == "heatmap" else cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for flag in ("t", "replicas", "threads"):
        v = getattr(args, flag, None)
        if v is not None and v < 1:
            print(f"error: --{flag} must be >= 1", file=sys.stderr)
            return 2
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

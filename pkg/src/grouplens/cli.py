"""Command-line interface: ``grouplens {fit,test,simulate,diagnose}``.

Exit codes: 0 success, 1 input error, 2 non-convergence (outputs are still
written), 3 infeasible projection (no p-value is emitted).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import GroupPartition, RegressionProblem, default_weights
from .diagnostics import check_ordering, estimate_constant, sample_cone
from .errors import (DegenerateScaleError, InfeasibleProjectionError, InvalidArgumentError,
                     RankDeficiencyError)
from .inference import group_test, ols_sigma
from .projection import feasibility_report, relaxed_projection
from .scaled import fit_scaled
from .simulation import (SimDesign, block_design, generate, large_group_design, null_design,
                         run_replications, sigma_design, small_group_design)

log = logging.getLogger("grouplens")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INFEASIBLE = 0, 1, 2, 3


class InputError(Exception):
    """Malformed or missing user input (exit code 1)."""


# ---------------------------------------------------------------- CSV I/O

def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_matrix(path) -> np.ndarray:
    """Numeric CSV with an optional header row (detected by a non-numeric first token)."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            cells = [c.strip() for c in rec]
            if lineno == 1 and not _is_number(cells[0]):
                continue
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise InputError(f"{path}:{lineno}: not a number: {bad!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise InputError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(f"{path}:{lineno}: expected {width} fields, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def read_vector(path) -> np.ndarray:
    m = read_matrix(path)
    if m.shape[1] != 1:
        raise InputError(f"{path}: expected a single column, found {m.shape[1]}")
    return m[:, 0]


def read_groups(path, p: int) -> GroupPartition:
    ids = read_vector(path)
    if ids.size != p:
        raise InputError(f"{path}: {ids.size} group ids for {p} design columns")
    for lineno, v in enumerate(ids, start=1):
        if v != int(v) or v < 1:
            raise InputError(f"{path}: entry {lineno}: group ids must be positive integers")
    labels = ids.astype(int)
    present = np.unique(labels)
    if not np.array_equal(present, np.arange(1, present.size + 1)):
        raise InputError(f"{path}: group ids must be 1..M with none missing")
    return GroupPartition.from_labels(labels - 1)


def write_matrix(path, A, header=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in A:
            w.writerow([repr(float(v)) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    return cfg


# ---------------------------------------------------------------- problem assembly

def load_problem(args) -> RegressionProblem:
    for name in ("design", "response", "groups"):
        if getattr(args, name) is None:
            raise InputError(f"--{name} is required")
    X = read_matrix(args.design)
    y = read_vector(args.response)
    if y.size != X.shape[0]:
        raise InputError(f"response has {y.size} rows but the design has {X.shape[0]}")
    part = read_groups(args.groups, X.shape[1])
    w = default_weights(part, X.shape[0], M=args.weights_M, scale=args.weights_scale)
    return RegressionProblem(X, y, part, w)


def _fit(problem, args):
    return fit_scaled(problem, max_outer=args.max_outer, conv_tol=args.conv_tol)


def _resolve_G(args, problem) -> np.ndarray:
    if (args.group is None) == (args.variables is None):
        raise InputError("give exactly one of --group or --variables")
    if args.group is not None:
        if not 1 <= args.group <= problem.partition.M:
            raise InputError(f"--group {args.group} out of range 1..{problem.partition.M}")
        return problem.partition.groups[args.group - 1].copy()
    try:
        idx = [int(t) for t in args.variables.split(",") if t.strip()]
    except ValueError:
        raise InputError("--variables must be a comma-separated list of integers") from None
    if not idx:
        raise InputError("--variables is empty")
    if min(idx) < 1 or max(idx) > problem.p:
        raise InputError(f"--variables out of range 1..{problem.p}")
    return np.unique(np.array(idx) - 1)


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    problem = load_problem(args)
    fit = _fit(problem, args)
    write_json(args.out, {
        "beta": fit.beta, "sigma": fit.sigma, "kkt_residual": fit.kkt_residual,
        "iterations": fit.iterations, "converged": fit.converged, "weights": problem.weights,
        "config": _config(args)})
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_test(args) -> int:
    problem = load_problem(args)
    G = _resolve_G(args, problem)
    if G.size >= problem.n:
        raise InputError("the tested group must have fewer variables than observations")
    fit = _fit(problem, args)
    bundle = relaxed_projection(problem.X, problem.partition, G, penalty_kind=args.penalty,
                                xi=args.xi, omega2=problem.weights)
    report = feasibility_report(bundle)
    out = {"G": G + 1, "k_G": bundle.k_G, "gap": bundle.gap, "tau": bundle.tau,
           "eta_G": report["eta_G"], "feasible": report["feasible"],
           "fit_converged": fit.converged, "config": _config(args)}
    if not report["feasible"]:
        out.update(reasons=report["reasons"], worst_group=report["worst_group"],
                   worst_ratio=report["worst_ratio"])
        write_json(args.out, out)
        return EXIT_INFEASIBLE
    if args.oracle_sigma is not None:
        sigma, plugin = float(args.oracle_sigma), "oracle"
    elif args.sigma_plugin == "ols":
        sigma, plugin = ols_sigma(problem), "ols"
    else:
        sigma, plugin = fit.sigma, "scaled"
    res = group_test(problem, bundle, init_fit=fit, level=args.alpha, sigma=sigma,
                     require_converged=False)
    out.update(T=res.T, T2=res.T ** 2, p_value=res.p_value, method=res.method,
               ellipsoid_radius=res.ellipsoid_radius, beta_G_hat=res.beta_G_hat,
               sigma=sigma, sigma_plugin=plugin, alpha=args.alpha)
    write_json(args.out, out)
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


PRESETS = {
    "sigma-p200": lambda: sigma_design(200),
    "sigma-p2000": lambda: sigma_design(2000),
    "small-group": small_group_design,
    "large-group": large_group_design,
    "block-rho0-tau1": lambda: block_design(0.0, 1.0),
    "block-rho0.5-tau1": lambda: block_design(0.5, 1.0),
    "block-rho0.9-tau1": lambda: block_design(0.9, 1.0),
    "block-rho0-tau0.1": lambda: block_design(0.0, 0.1),
    "block-rho0.5-tau0.1": lambda: block_design(0.5, 0.1),
    "block-rho0.9-tau0.1": lambda: block_design(0.9, 0.1),
    "block-k20-rho0.9-tau0.1": lambda: block_design(0.9, 0.1, group_size=20),
    "null": null_design,
}
SLOW_PRESETS = {"sigma-p2000"}


def _resolve_design(args) -> SimDesign:
    if (args.spec is None) == (args.preset is None):
        raise InputError("give exactly one of --spec or --preset")
    if args.preset is not None:
        if args.preset in SLOW_PRESETS and not args.slow:
            raise InputError(f"preset {args.preset!r} is slow; pass --slow to run it")
        base = PRESETS[args.preset]().to_dict()
    else:
        text = args.spec
        if not text.lstrip().startswith("{") and Path(text).is_file():
            text = Path(text).read_text(encoding="utf-8")
        try:
            base = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"--spec: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(base, dict):
            raise InputError("--spec must be a JSON object")
    overrides = {"seed": args.seed, "weights_scale": args.weights_scale, "xi": args.xi,
                 "penalty": args.penalty, "alpha": args.alpha}
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    if args.oracle_sigma:
        base["oracle_sigma"] = True
    return SimDesign.from_dict(base)


def cmd_simulate(args) -> int:
    design = _resolve_design(args)
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    summary = run_replications(design, args.reps, threads=args.threads)
    payload = summary.to_dict()
    payload["config"] = _config(args)
    write_json(args.out, payload)
    if args.qq is not None:
        series = args.qq_series or _default_series(design)
        if series not in summary.qq:
            raise InputError(f"no QQ series {series!r}; available: {sorted(summary.qq)}")
        write_matrix(args.qq, summary.qq[series],
                     header=["theoretical_quantile", "empirical_quantile"])
    if args.emit_problem is not None:
        emit_problem(design, args.emit_rep, args.emit_problem)
    return EXIT_OK


def _default_series(design: SimDesign) -> str:
    if design.test_groups:
        j = design.test_groups[0]
        k = design.group_size
        return f"T2_normal_group{j}" if k >= 20 else f"T2_group{j}"
    return "sigma"


def emit_problem(design: SimDesign, rep: int, directory) -> dict:
    """Write one replication as design/response/groups CSVs readable by ``fit``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    data = generate(design, rep)
    pr = data.problem
    write_matrix(d / "design.csv", pr.X)
    write_matrix(d / "response.csv", pr.y[:, None])
    write_matrix(d / "groups.csv", (pr.partition.labels() + 1)[:, None])
    meta = {"design": design.to_dict(), "rep": rep, "beta_true": data.beta,
            "fit_flags": {"--weights-scale": design.weights_scale,
                          "--weights-M": design.weights_M}}
    write_json(d / "problem.json", meta)
    return meta


def cmd_diagnose(args) -> int:
    if args.design is None or args.groups is None:
        raise InputError("--design and --groups are required")
    if args.budget < 1:
        raise InputError("--budget must be at least 1")
    X = read_matrix(args.design)
    part = read_groups(args.groups, X.shape[1])
    try:
        T = [int(t) - 1 for t in args.T.split(",") if t.strip()]
    except ValueError:
        raise InputError("--T must be a comma-separated list of group ids") from None
    if not T or min(T) < 0 or max(T) >= part.M:
        raise InputError(f"--T must name groups in 1..{part.M}")
    omega = default_weights(part, X.shape[0], M=args.weights_M, scale=args.weights_scale)
    xi = 1.0 if args.xi is None else args.xi
    kinds = [k.strip().upper() for k in args.kinds.split(",") if k.strip()]
    estimates = {}
    for kind in kinds:
        est = estimate_constant(kind, X, part, omega, xi, T, q=args.q, budget=args.budget,
                                seed=args.seed)
        estimates[f"{kind}_{args.q}" if kind in ("CIF", "SCIF") else kind] = est.to_dict()
    samples = sample_cone(X, part, omega, xi, T, args.budget, seed=args.seed)
    write_json(args.out, {"estimates": estimates, "ordering": check_ordering(samples),
                          "omega": omega, "config": _config(args)})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _alpha(text):
    a = float(text)
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return a


def _seed(text):
    s = int(text)
    if not 0 <= s < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return s


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grouplens",
                                description="De-biased scaled group Lasso inference.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def io(sp, response=True):
        sp.add_argument("--design", help="n x p CSV design matrix")
        if response:
            sp.add_argument("--response", help="n x 1 CSV response")
        sp.add_argument("--groups", help="p x 1 CSV of 1-based group ids")
        sp.add_argument("--out", default="-", help="output JSON path ('-' for stdout)")
        sp.add_argument("--weights-scale", type=float, default=1.0)
        sp.add_argument("--weights-M", type=int, default=None,
                        help="group count in the penalty level (default: number of groups)")

    def solver(sp):
        sp.add_argument("--max-outer", type=int, default=100)
        sp.add_argument("--conv-tol", type=float, default=1e-6)

    sp = sub.add_parser("fit", help="scaled group Lasso fit")
    io(sp)
    solver(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("test", help="chi-squared test for one group of variables")
    io(sp)
    solver(sp)
    sp.add_argument("--group", type=int, help="1-based group id to test")
    sp.add_argument("--variables", help="comma-separated 1-based variable indices")
    sp.add_argument("--xi", type=float, default=1.0)
    sp.add_argument("--penalty", choices=("frobenius", "nuclear"), default="frobenius")
    sp.add_argument("--alpha", type=_alpha, default=0.05)
    sp.add_argument("--sigma-plugin", choices=("scaled", "ols"), default="scaled",
                    help="noise level plug-in: scaled fit or degree-adjusted least squares")
    sp.add_argument("--oracle-sigma", type=float, default=None,
                    help="use this known noise level instead of a plug-in")
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("simulate", help="replication study")
    sp.add_argument("--spec", help="design as inline JSON or a JSON file")
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--out", default="-")
    sp.add_argument("--qq", help="QQ CSV output path")
    sp.add_argument("--qq-series", help="QQ series to write (default depends on the design)")
    sp.add_argument("--emit-problem", help="directory for the CSV files of one replication")
    sp.add_argument("--emit-rep", type=int, default=0)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=_seed, default=None)
    sp.add_argument("--weights-scale", type=float, default=None)
    sp.add_argument("--xi", type=float, default=None)
    sp.add_argument("--penalty", choices=("frobenius", "nuclear"), default=None)
    sp.add_argument("--alpha", type=_alpha, default=None)
    sp.add_argument("--oracle-sigma", action="store_true",
                    help="test with the true noise level")
    sp.add_argument("--slow", action="store_true", help="allow slow presets")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diagnose", help="upper bounds on design constants")
    io(sp, response=False)
    sp.add_argument("--T", default="1", help="comma-separated 1-based group ids")
    sp.add_argument("--kinds", default="RE,CC,SCIF")
    sp.add_argument("--q", type=int, choices=(1, 2), default=1)
    sp.add_argument("--xi", type=float, default=None)
    sp.add_argument("--budget", type=int, default=1000)
    sp.add_argument("--seed", type=_seed, default=0)
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GROUPLENS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InfeasibleProjectionError as exc:
        print(f"grouplens: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, InvalidArgumentError, RankDeficiencyError, DegenerateScaleError,
            OSError) as exc:
        print(f"grouplens: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

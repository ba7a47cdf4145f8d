"""Command-line entry points.

Exit codes: 0 success, 1 configuration or usage error, 2 solver failure,
3 verification failure, 4 strict-concavity violation.  Every command writes
a report document to the output directory, including on failure.
"""

import argparse
import contextlib
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .estimates import (
    barrier_check,
    barrier_sweep,
    comparison_check,
    estimate_ratios,
    strict_concavity_scan,
    validate_hypotheses,
    worst_offenders,
)
from .functions import make_function
from .geom import (
    METRIC_NAMES,
    curvature,
    gradient_commutation_residual,
    commutation_residual,
    curvature_commutation_residual,
    make_builtin_metric,
    torsion,
)
from .instances import calibrate_strict_concavity, count_violations, lemma_ratio, sample_lemma_instances
from .io import (
    ConfigError,
    FieldFormatError,
    build_problem,
    load_config,
    read_field,
    solve_options,
    write_csv,
    write_field,
    write_report,
)
from .pointwise import NotAdmissibleError
from .solver import SolverError, solve_continuation

logger = logging.getLogger("hermitian_ma")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_VERIFY = 3
EXIT_LEMMA = 4

GEOM_TOL = 1e-10
COMMUTATION_FUNCTIONS = (("quadratic-plus-exp", (1.0, 0.1)), ("bilinear", ()), ("mixed-trig", ()))


class _Run:
    """Collects the report document and writes it whatever the outcome."""

    def __init__(self, command, args):
        self.out = Path(args.out)
        self.doc = {"command": command, "version": __version__, "status": "running",
                    "exit_code": None, "seed": args.seed, "serial": args.serial}
        self.start = time.perf_counter()

    def finish(self, code, status=None, error=None):
        self.doc["exit_code"] = code
        self.doc["status"] = status or ("ok" if code == EXIT_OK else "failed")
        if error is not None:
            self.doc["error"] = str(error)
        self.doc["timing"] = {"seconds": time.perf_counter() - self.start}
        path = write_report(self.doc, self.out / "report.json")
        print(f"report: {path}")
        return code


def _load(args, run):
    if not args.config:
        raise ConfigError(["--config is required for this command"])
    if not Path(args.config).is_file():
        raise ConfigError([f"config file {args.config} does not exist"])
    doc = load_config(args.config, args.override)
    run.doc["config"] = doc
    if args.out_default and "output_dir" in doc:
        run.out = Path(doc["output_dir"])
    return doc


def _grid_meta(grid):
    return {"n": grid.n, "m": grid.m, "lo": list(grid.lo), "hi": list(grid.hi)}


def _base_dir(args):
    return Path(args.config).resolve().parent


def cmd_solve(args, run):
    doc = _load(args, run)
    problem = build_problem(doc, base_dir=_base_dir(args))
    run.doc["grid"] = _grid_meta(problem.grid)
    verdict = validate_hypotheses(problem)
    run.doc["hypotheses"] = vars(verdict)
    if not verdict.ok:
        print(f"warning: hypotheses violated (subsolution min {verdict.subsolution_min:.3e}, "
              f"cone min {verdict.cone_min:.3e}); solving anyway", file=sys.stderr)
    try:
        state, report = solve_continuation(problem, solve_options(doc))
    except (SolverError, NotAdmissibleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return run.finish(EXIT_SOLVER, error=exc)
    run.doc["solve"] = report.to_dict()
    field_path = run.out / "u.field"
    field_path.parent.mkdir(parents=True, exist_ok=True)
    write_field(state.u, field_path)
    run.doc["field"] = str(field_path)
    est = estimate_ratios(state.u, problem)
    cmp = comparison_check(state.u, problem.usub)
    est.comparison_min = cmp.min_value
    est.cone_min = verdict.cone_min
    est.subsolution_min = verdict.subsolution_min
    run.doc["estimates"] = est.to_dict()
    print(f"converged: residual {report.final_residual:.3e}, {report.newton_total} Newton iterations, "
          f"{report.seconds:.2f} s")
    if problem.exact is not None:
        err = float(np.max(np.abs(state.u.values - problem.exact.value(problem.grid.points()))))
        run.doc["max_error"] = err
        print(f"max error vs exact solution: {err:.3e}")
    print(f"field: {field_path}")
    return run.finish(EXIT_OK)


def _observed_order(rows):
    for prev, cur in zip(rows, rows[1:]):
        e0, e1 = prev["max_error"], cur["max_error"]
        if max(e0, e1) <= 1e-10:
            cur["observed_order"] = "exact"
        elif e0 > 0 and e1 > 0:
            cur["observed_order"] = math.log(e0 / e1) / math.log(prev["h"] / cur["h"])
        else:
            cur["observed_order"] = None
    return rows


def cmd_mms(args, run):
    doc = _load(args, run)
    if doc["problem"]["psi"]["kind"] != "mms":
        raise ConfigError(["mms command needs problem.psi.kind = 'mms'"])
    mms_cfg = doc.get("mms", {})
    refinements = mms_cfg.get("refinements", [doc["problem"]["m"]])
    min_order = mms_cfg.get("min_order", 1.8)
    opts = solve_options(doc)
    rows = []
    run.doc["refinements"] = rows
    for m in refinements:
        problem = build_problem(doc, m=m, base_dir=_base_dir(args))
        try:
            state, report = solve_continuation(problem, opts)
        except (SolverError, NotAdmissibleError) as exc:
            print(f"solver failure at m = {m}: {exc}", file=sys.stderr)
            return run.finish(EXIT_SOLVER, error=exc)
        err = float(np.max(np.abs(state.u.values - problem.exact.value(problem.grid.points()))))
        est = estimate_ratios(state.u, problem)
        rows.append({"m": m, "h": float(np.max(problem.grid.h)), "max_error": err, "observed_order": None,
                     "newton": report.newton_total, "ratio_grad": est.ratio_grad, "ratio_lap": est.ratio_lap})
        print(f"m = {m}: max error {err:.3e} ({report.newton_total} Newton iterations)")
    _observed_order(rows)
    csv_rows = [[r["m"], r["h"], r["max_error"], "" if r["observed_order"] is None else r["observed_order"],
                 r["ratio_grad"], r["ratio_lap"]] for r in rows]
    path = write_csv(csv_rows, ["m", "h", "max_error", "observed_order", "ratio_grad", "ratio_lap"],
                     run.out / "mms.csv")
    print(f"table: {path}")
    if len(rows) < 2:
        return run.finish(EXIT_OK)
    final = rows[-1]["observed_order"]
    ok = final == "exact" or (isinstance(final, float) and final >= min_order)
    run.doc["final_order"] = final
    print(f"observed order: {final}")
    return run.finish(EXIT_OK if ok else EXIT_VERIFY, status=None if ok else "order below threshold")


def cmd_verify(args, run):
    doc = _load(args, run)
    if not args.field:
        raise ConfigError(["verify needs --field PATH"])
    problem = build_problem(doc, base_dir=_base_dir(args))
    try:
        u = read_field(args.field)
    except (OSError, FieldFormatError) as exc:
        raise ConfigError([f"cannot read solution field: {exc}"]) from None
    if u.spec != problem.grid:
        raise ConfigError([f"solution grid {u.spec} does not match the configured grid {problem.grid}"])
    run.doc["grid"] = _grid_meta(problem.grid)
    verify_cfg = doc.get("verify", {})
    theta = verify_cfg.get("theta", 0.0)
    n_min = verify_cfg.get("N", 0.0)
    verdict = validate_hypotheses(problem)
    run.doc["hypotheses"] = vars(verdict)
    try:
        cmp = comparison_check(u, problem.usub)
    except ValueError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return run.finish(EXIT_VERIFY, error=exc)
    est = estimate_ratios(u, problem)
    est.comparison_min = cmp.min_value
    est.cone_min = verdict.cone_min
    est.subsolution_min = verdict.subsolution_min
    run.doc["comparison"] = vars(cmp)
    try:
        violations = strict_concavity_scan(u, problem.usub, problem, theta, n_min)
        if "barrier" in verify_cfg:
            b = verify_cfg["barrier"]
            barrier = barrier_check(u, problem.usub, problem, b["t"], b["T"], b["delta"])
        else:
            barrier, _ = barrier_sweep(u, problem.usub, problem)
    except NotAdmissibleError as exc:
        est.strict_concavity = {"theta_used": theta, "N_used": n_min, "violations": None}
        run.doc["estimates"] = est.to_dict()
        print(f"verification failure: {exc}", file=sys.stderr)
        return run.finish(EXIT_VERIFY, error=exc)
    est.strict_concavity = {"theta_used": theta, "N_used": n_min, "violations": violations}
    est.barrier = vars(barrier) if barrier is not None else {"found": False}
    run.doc["estimates"] = est.to_dict()
    if args.csv:
        diff = u.values - problem.usub.values
        rows = [[str(idx), *coords, value] for idx, coords, value in worst_offenders(diff, u.spec, k=20)]
        header = ["node"] + [f"t{a}" for a in range(u.spec.dim)] + ["u_minus_usub"]
        print(f"worst offenders: {write_csv(rows, header, run.out / 'worst_offenders.csv')}")
    print(f"comparison min(u - usub) = {cmp.min_value:.3e} ({'PASS' if cmp.passed else 'FAIL'})")
    print(f"strict concavity scan at theta = {theta:g}, N = {n_min:g}: {violations} violations")
    print(f"ratio_grad = {est.ratio_grad:.4f}, ratio_lap = {est.ratio_lap:.4f}")
    if barrier is not None:
        print(f"barrier: c0 = {barrier.c0:.4g} at t = {barrier.t:g}, T = {barrier.T:g}, "
              f"delta = {barrier.delta:g} (v_min = {barrier.v_min:.3e})")
    ok = cmp.passed and violations == 0
    return run.finish(EXIT_OK if ok else EXIT_VERIFY)


def _lemma_params(args, doc):
    cfg = dict(doc.get("lemma", {})) if doc else {}
    for key in ("n", "epsilon", "sup_psi", "samples", "pilot_size", "theta", "N"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("n", 2)
    cfg.setdefault("epsilon", 0.5)
    cfg.setdefault("sup_psi", 1.0)
    cfg.setdefault("samples", 100000)
    cfg.setdefault("pilot_size", 20000)
    if cfg["n"] not in (2, 3, 4):
        raise ConfigError([f"lemma-check supports n in {{2, 3, 4}}, got {cfg['n']}"])
    if not 0 < cfg["epsilon"] <= 1:
        raise ConfigError([f"epsilon must lie in (0, 1], got {cfg['epsilon']}"])
    if not cfg["sup_psi"] > 0:
        raise ConfigError(["sup_psi must be positive (degenerate ψ not supported)"])
    return cfg


def cmd_lemma_check(args, run):
    doc = _load(args, run) if args.config else None
    cfg = _lemma_params(args, doc)
    seeds = np.random.SeedSequence(args.seed).spawn(2)
    pilot_seed = int(seeds[0].generate_state(1)[0])
    theta, n_thr, details = calibrate_strict_concavity(cfg["n"], cfg["epsilon"], cfg["sup_psi"],
                                              pilot_size=cfg["pilot_size"], seed=pilot_seed)
    run.doc["calibration"] = {"theta": theta, "N": n_thr,
                              "grid": {str(k): (None if v is None else {"theta": v[0], "pilot_min_ratio": v[1]})
                                       for k, v in details.items()}}
    if "theta" in cfg:
        theta = cfg["theta"]
    if "N" in cfg:
        n_thr = cfg["N"]
    run.doc["lemma"] = {"n": cfg["n"], "epsilon": cfg["epsilon"], "sup_psi": cfg["sup_psi"],
                        "samples": cfg["samples"], "theta": theta, "N": n_thr}
    if theta is None or n_thr is None:
        print("no positive theta found on the calibration grid")
        return run.finish(EXIT_LEMMA, status="no constants found")
    rng = np.random.default_rng(seeds[1])
    sample = sample_lemma_instances(rng, cfg["n"], cfg["samples"], cfg["epsilon"], cfg["sup_psi"], n_thr)
    if sample is None:
        raise ConfigError([f"threshold N = {n_thr} is unreachable within the sampling range"])
    violations = count_violations(sample, theta, n_thr)
    ratio_min = float(np.min(lemma_ratio(sample)))
    run.doc["lemma"].update({"violations": violations, "min_ratio": ratio_min})
    print(f"theta* = {theta:g}, N* = {n_thr:g}; {cfg['samples']} samples with W >= N*: "
          f"{violations} violations (smallest ratio {ratio_min:.4f})")
    return run.finish(EXIT_OK if violations == 0 else EXIT_LEMMA)


def cmd_geom_check(args, run):
    doc = _load(args, run) if args.config else None
    name = args.metric or (doc["problem"]["metric"]["name"] if doc else None)
    params = args.params if args.params is not None else (
        doc["problem"]["metric"].get("params", []) if doc else [])
    n = args.n or (doc["problem"]["n"] if doc else 2)
    if name is None:
        raise ConfigError(["geom-check needs --metric NAME or --config"])
    if name not in METRIC_NAMES:
        raise ConfigError([f"unknown metric {name!r}; supported: {', '.join(METRIC_NAMES)}"])
    try:
        metric = make_builtin_metric(name, params, n)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    rng = np.random.default_rng(args.seed)
    pts = rng.uniform(-1.0, 1.0, (args.points, 2 * n))
    tors = torsion(metric, pts)
    curv = curvature(metric, pts)
    checks = {
        "torsion_antisymmetry": float(np.max(np.abs(tors + np.swapaxes(tors, -1, -2)))),
        "curvature_hermitian_symmetry": float(np.max(np.abs(
            curv - np.conj(np.transpose(curv, (0, 2, 1, 4, 3)))))),
    }
    for fname, fparams in COMMUTATION_FUNCTIONS:
        v = make_function(fname, fparams, n)
        checks[f"commutation[{fname}]"] = commutation_residual(metric, v, pts)
        checks[f"gradient_commutation[{fname}]"] = gradient_commutation_residual(metric, v, pts)
        checks[f"curvature_commutation[{fname}]"] = curvature_commutation_residual(metric, v, pts)
    norms = {"torsion_max": float(np.max(np.abs(tors))), "curvature_max": float(np.max(np.abs(curv)))}
    run.doc["geom"] = {"metric": name, "params": list(params), "n": n, "points": args.points,
                       "residuals": checks, "norms": norms}
    for key, val in checks.items():
        print(f"{key:45s} {val:.3e} {'PASS' if val <= GEOM_TOL else 'FAIL'}")
    print(f"max |T| = {norms['torsion_max']:.4g}, max |R| = {norms['curvature_max']:.4g}")
    ok = all(v <= GEOM_TOL for v in checks.values())
    return run.finish(EXIT_OK if ok else EXIT_VERIFY)


COMMANDS = {
    "solve": cmd_solve,
    "mms": cmd_mms,
    "verify": cmd_verify,
    "lemma-check": cmd_lemma_check,
    "geom-check": cmd_geom_check,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration document")
    common.add_argument("--out", default=None, help="output directory (default: config output_dir or ./out)")
    common.add_argument("--serial", action="store_true", help="single-threaded, bit-reproducible run")
    common.add_argument("--seed", type=int, default=0, help="random seed for Monte-Carlo commands")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config path, e.g. problem.m=13 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hermitian-ma", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the configured Dirichlet problem")
    sub.add_parser("mms", parents=[common], help="manufactured-solution convergence study")
    p = sub.add_parser("verify", parents=[common], help="post-solve diagnostics on a solution field")
    p.add_argument("--field", help="solution field file")
    p.add_argument("--csv", action="store_true", help="also write the worst-offender table")
    p = sub.add_parser("lemma-check", parents=[common], help="Monte-Carlo strict concavity check")
    p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sup-psi", dest="sup_psi", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--pilot-size", dest="pilot_size", type=int)
    p.add_argument("--theta", type=float, help="force theta instead of the calibrated value")
    p.add_argument("--N", dest="N", type=float, help="force the W threshold")
    p = sub.add_parser("geom-check", parents=[common], help="torsion, curvature and commutation identities")
    p.add_argument("--metric")
    p.add_argument("--params", type=float, nargs="*")
    p.add_argument("--n", type=int)
    p.add_argument("--points", type=int, default=100)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.out_default = args.out is None
    if args.out is None:
        args.out = "out"
    run = _Run(args.command, args)
    limits = threadpool_limits(limits=1) if args.serial else contextlib.nullcontext()
    with limits:
        try:
            return COMMANDS[args.command](args, run)
        except ConfigError as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return run.finish(EXIT_CONFIG, error=exc)


if __name__ == "__main__":
    sys.exit(main())

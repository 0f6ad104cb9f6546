"""Command-line front end for reproducible batch runs.

Subcommands: solve, verify-trees, bryuno, analyze, measure, integrate.
Exit codes: 0 success, 1 broken mathematical contract (oracle mismatch,
compatibility failure), 2 malformed input.  All outputs are deterministic:
reports embed a hash of the resolved configuration and the provenance of
every Diophantine estimate (gamma and the search radius it is valid for),
never timestamps.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    attractivity_check,
    borel_transform,
    davie_compare,
    melnikov_measure,
    radius_estimate,
)
from .diophantine import (
    RotationVector,
    bryuno_function,
    bryuno_omega,
    continued_fraction,
    surd_from_cf,
    surd_golden,
    surd_silver,
)
from .errors import ContractError, InputError, LindstedtError
from .models import compatibility_report, solve_lindstedt, spec_from_json
from .series import ft_order_norms, ft_order_sup_norms, to_csv
from .trees import TreeEnumerator, siegel_bryuno_check, tree_sum

ORACLE_TOL = 1e-10


def _threads_requested() -> int:
    """LINDSTEDT_THREADS caps internal parallelism; execution is serial
    either way (0 = serial is the default and only mode in this build)."""
    raw = os.environ.get("LINDSTEDT_THREADS", "0")
    try:
        return max(0, int(raw))
    except ValueError:
        return 0


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _load_model_file(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read model spec {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(
            f"malformed JSON in {path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from None
    return doc


def _provenance(omega: RotationVector) -> dict:
    return {"gamma_estimate": omega.gamma_estimate,
            "gamma_nu_max": omega.nu_max_used,
            "tau": omega.tau,
            "gamma_metric": omega.gamma_metric}


def emit_plotdata(curves: dict, outdir: Path) -> list[str]:
    """Write one two-column text file per curve; stable filenames."""
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(curves):
        rows = curves[name]
        path = outdir / f"{name}.dat"
        lines = [f"{float(a)!r} {float(b)!r}" for a, b in rows]
        path.write_text("\n".join(lines) + "\n")
        written.append(str(path))
    return written


# -- subcommands -----------------------------------------------------------------


def cmd_solve(args) -> int:
    doc = _load_model_file(args.spec)
    if args.order is not None:
        doc["order"] = args.order
    spec, omega, K = spec_from_json(doc)
    report = solve_lindstedt(spec, omega, K)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "series.csv").write_text(to_csv(report.series))
    norms = ft_order_norms(report.series)
    diag = {
        "config_hash": _config_hash(doc),
        "model": spec.variant,
        "order": K,
        "provenance": _provenance(omega),
        "order_norms": [float(x) for x in norms],
        "min_divisor_per_order": [float(x) for x in report.min_divisor],
        "hermitian_violation": report.hermitian_violation,
        "compatibility_absolute": _jsonable(report.compat_abs),
        "compatibility_relative": _jsonable(report.compat_rel),
        "zero_mode_corrections": {
            str(k): [[float(c.real), float(c.imag)] for c in v]
            for k, v in report.zero_mode_corrections.items()},
        "threads": _threads_requested(),
    }
    _dump_json(outdir / "report.json", diag)
    if args.plotdata:
        curves = {"order_norms": [(k, math.log(n)) for k, n in enumerate(norms) if n > 0]}
        emit_plotdata(curves, outdir)
    return 0


def _jsonable(rows):
    out = []
    for row in rows:
        if isinstance(row, tuple):
            out.append([float(x) for x in row])
        else:
            out.append(float(row))
    return out


def cmd_verify_trees(args) -> int:
    doc = _load_model_file(args.spec)
    if args.order is not None:
        doc["order"] = args.order
    spec, omega, K = spec_from_json(doc)
    solve = solve_lindstedt(spec, omega, K)
    enum = TreeEnumerator(spec, order_budget=max(K, 5))
    gamma = omega.gamma_estimate
    tau = omega.tau or 1.0
    rows = []
    worst_rel = 0.0
    worst_margin = math.inf
    for k in range(1, K + 1):
        order_scale = max(
            (float(np.max(np.abs(solve.series.coeff(k, nu))))
             for nu in solve.series.keys_at_order(k)), default=1.0)
        nus = set(solve.series.keys_at_order(k))
        if enum.rules.has_zero_lines:
            nus.add((0,) * spec.dim_d)
        for nu in sorted(nus):
            trees = enum.trees(k, nu)
            ts = tree_sum(spec, omega, k, nu, enumerator=enum)
            rc = solve.series.coeff(k, nu)
            err = float(np.max(np.abs(ts - rc)))
            rel = err / max(float(np.max(np.abs(rc))), 1e-3 * order_scale)
            worst_rel = max(worst_rel, rel)
            margin = None
            for tree in trees:
                chk = siegel_bryuno_check(tree, spec, omega, gamma, tau)
                m = chk["worst_margin"]
                if math.isfinite(m):
                    margin = m if margin is None else min(margin, m)
                    worst_margin = min(worst_margin, m)
            rows.append({"k": k, "nu": list(nu), "n_trees": len(trees),
                         "tree_sum": _cvec(ts), "recursion_value": _cvec(rc),
                         "rel_error": rel,
                         "siegel_bryuno_worst_margin": margin})
    out = {
        "config_hash": _config_hash(doc),
        "model": spec.variant,
        "order": K,
        "oracle_tolerance": args.oracle_tol,
        "provenance": _provenance(omega),
        "rows": rows,
        "worst_rel_error": worst_rel,
        "siegel_bryuno_worst_margin": (None if not math.isfinite(worst_margin)
                                       else worst_margin),
    }
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "verify_trees.json", out)
    if worst_rel > args.oracle_tol:
        raise ContractError(
            f"tree-sum oracle mismatch: worst relative error {worst_rel:.3e} "
            f"exceeds {args.oracle_tol:.1e}")
    if math.isfinite(worst_margin) and worst_margin < 0:
        raise ContractError("per-scale counting bound violated on an enumerated tree")
    return 0


def _cvec(v) -> list:
    return [[float(c.real), float(c.imag)] for c in np.atleast_1d(v)]


def _alpha_from_args(args):
    if args.alpha == "golden":
        return surd_golden()
    if args.alpha == "silver":
        return surd_silver()
    if args.alpha.startswith("cf:"):
        # cf:1,1,1 or cf:150;1 (preperiod;period)
        body = args.alpha[3:]
        if ";" in body:
            pre, per = body.split(";")
            pre_list = [int(x) for x in pre.split(",") if x]
        else:
            pre_list, per = [], body
        return surd_from_cf(pre_list, [int(x) for x in per.split(",") if x])
    return float(args.alpha)


def cmd_bryuno(args) -> int:
    request = {"alpha": args.alpha, "omega": args.omega, "nmax": args.nmax}
    out: dict = {"config_hash": _config_hash(request)}
    curves = {}
    if args.omega:
        omega = RotationVector.from_floats([float(x) for x in args.omega.split(",")])
        rep = bryuno_omega(omega, args.nmax if args.nmax else 12)
        out["kind"] = "vector"
        out["omega"] = [float(x) for x in omega.as_floats()]
        out["alpha_n"] = rep.alpha_n
        curves["bryuno_partial_sums"] = list(enumerate(rep.partial_sums, start=1))
    else:
        # scalar sums iterate to convergence unless a depth is forced
        alpha = _alpha_from_args(args)
        rep = bryuno_function(alpha, n_max=args.nmax)
        out["kind"] = "scalar"
        out["alpha"] = float(alpha.value()) if hasattr(alpha, "value") else float(alpha)
        out["q_n"] = [int(q) for q in rep.q]
        curves["bryuno_partial_sums"] = list(enumerate(rep.partial_sums))
    out.update({"n_used": rep.n_used, "partial_sums": rep.partial_sums,
                "value": rep.value, "converged": rep.converged,
                "tail_bound": rep.tail_bound})
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "bryuno.json", out)
    if args.plotdata:
        emit_plotdata(curves, outdir)
    return 0


def cmd_analyze(args) -> int:
    doc = _load_model_file(args.spec)
    spec, omega, K = spec_from_json(doc)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report: dict = {"config_hash": _config_hash(doc), "model": spec.variant,
                    "order": K}
    curves = {}
    solve = None
    if args.radius or args.borel or args.integrate:
        solve = solve_lindstedt(spec, omega, K)
        report["provenance"] = _provenance(omega)
    if args.radius:
        norms = ft_order_norms(solve.series)
        est = radius_estimate(norms)
        report["radius"] = {"rho": est.rho, "slope": est.slope,
                            "classification": est.classification,
                            "window": list(est.window),
                            "t_statistic": est.t_statistic}
        curves["order_norms"] = [(k, math.log(n)) for k, n in enumerate(norms) if n > 0]
    if args.borel:
        sup = ft_order_sup_norms(solve.series)
        bt = borel_transform(sup)
        report["borel"] = {"signature": bt["signature"],
                           "original": bt["original_class"],
                           "transformed": bt["transformed_class"]}
    if args.davie:
        alphas = [surd_golden(), surd_from_cf([150], [1]), surd_from_cf([3000], [1])]
        if args.davie_cf:
            alphas = [surd_from_cf(*_parse_cf(tok)) for tok in args.davie_cf]
        cmp = davie_compare(alphas, K)
        report["davie"] = {"rows": cmp["rows"],
                           "pairs": [{"pair": list(p["pair"]), "ratio": p["ratio"],
                                      "verdict": p["verdict"]} for p in cmp["pairs"]],
                           "consistent": cmp["consistent"]}
    if args.measure:
        mrep = _measure_from_args(args, omega)
        report["measure"] = mrep
        curves["measure_fraction"] = [(row["eps0"], row["excluded_fraction"])
                                      for row in mrep["ladder"]]
    if args.integrate:
        res = attractivity_check(spec, omega, solve.series, args.eps,
                                 args.offset, args.t_final)
        report["integrate"] = {k: (float(v) if isinstance(v, (int, float, np.floating))
                                   else v) for k, v in res.items()}
    _dump_json(outdir / "analysis.json", report)
    if args.plotdata:
        emit_plotdata(curves, outdir)
    return 0


def _parse_cf(tok: str):
    if ";" in tok:
        pre, per = tok.split(";")
        return [int(x) for x in pre.split(",") if x], [int(x) for x in per.split(",") if x]
    return [], [int(x) for x in tok.split(",") if x]


def _measure_from_args(args, omega: RotationVector) -> dict:
    if omega.gamma_estimate is None:
        omega.with_diophantine(max(1.0, omega.d - 1.0), 200)
    a_list = [float(x) for x in args.a_list.split(",") if x]
    ladder = []
    eps0 = args.eps0
    for _ in range(args.halvings + 1):
        mr = melnikov_measure(a_list, args.gamma, args.tau_prime, eps0, omega,
                              nu_max=args.nu_max)
        ladder.append({"eps0": eps0, "excluded_fraction": mr.excluded_fraction,
                       "excluded_fraction_grid": mr.excluded_fraction_grid,
                       "m0": mr.m0, "grid_warning": mr.grid_warning,
                       "analytic_shape": mr.analytic_bound_fraction,
                       "assumption_breach": mr.assumption_breach})
        eps0 /= 2.0
    return {"a_list": a_list, "gamma": args.gamma, "tau_prime": args.tau_prime,
            "nu_max": args.nu_max, "ladder": ladder,
            "provenance": _provenance(omega)}


def cmd_measure(args) -> int:
    doc = _load_model_file(args.spec) if args.spec else {"omega": {"kind": "golden_pair"}}
    if args.spec:
        _, omega, _ = spec_from_json(doc)
    else:
        from .models import omega_from_json
        omega = omega_from_json(doc["omega"])
    report = {"config_hash": _config_hash({"measure": vars(args)["a_list"]}),
              "measure": _measure_from_args(args, omega)}
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "measure.json", report)
    if args.plotdata:
        emit_plotdata({"measure_fraction": [(row["eps0"], row["excluded_fraction"])
                                            for row in report["measure"]["ladder"]]},
                      outdir)
    return 0


def cmd_integrate(args) -> int:
    doc = _load_model_file(args.spec)
    spec, omega, K = spec_from_json(doc)
    solve = solve_lindstedt(spec, omega, K)
    res = attractivity_check(spec, omega, solve.series, args.eps, args.offset,
                             args.t_final)
    report = {"config_hash": _config_hash(doc),
              "integrate": {k: (float(v) if isinstance(v, (int, float, np.floating))
                                else v) for k, v in res.items()}}
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_json(outdir / "integrate.json", report)
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lindstedt",
                                description="Perturbation series for quasi-periodic "
                                            "solutions: solve, verify, analyze")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve the order-by-order recursion")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--order", type=int, default=None)
    sp.add_argument("--out", default="out")
    sp.add_argument("--plotdata", action="store_true")
    sp.set_defaults(func=cmd_solve)

    vp = sub.add_parser("verify-trees", help="tree-sum oracle vs the recursion")
    vp.add_argument("--spec", required=True)
    vp.add_argument("--order", type=int, default=None)
    vp.add_argument("--out", default="out")
    vp.add_argument("--oracle-tol", type=float, default=ORACLE_TOL)
    vp.set_defaults(func=cmd_verify_trees)

    bp = sub.add_parser("bryuno", help="Brjuno sums of a rotation number or vector")
    bp.add_argument("--alpha", default="golden",
                    help="golden | silver | float | cf:pre;period")
    bp.add_argument("--omega", default=None, help="comma-separated components")
    bp.add_argument("--nmax", type=int, default=None)
    bp.add_argument("--out", default="out")
    bp.add_argument("--plotdata", action="store_true")
    bp.set_defaults(func=cmd_bryuno)

    ap = sub.add_parser("analyze", help="convergence / summability / measure checks")
    ap.add_argument("--spec", required=True)
    ap.add_argument("--out", default="out")
    ap.add_argument("--radius", action="store_true")
    ap.add_argument("--davie", action="store_true")
    ap.add_argument("--davie-cf", nargs="*", default=None)
    ap.add_argument("--borel", action="store_true")
    ap.add_argument("--measure", action="store_true")
    ap.add_argument("--integrate", action="store_true")
    ap.add_argument("--plotdata", action="store_true")
    _measure_args(ap)
    _integrate_args(ap)
    ap.set_defaults(func=cmd_analyze)

    mp = sub.add_parser("measure", help="resonance-exclusion measure scan")
    mp.add_argument("--spec", default=None)
    mp.add_argument("--out", default="out")
    mp.add_argument("--plotdata", action="store_true")
    _measure_args(mp)
    mp.set_defaults(func=cmd_measure)

    ip = sub.add_parser("integrate", help="attractivity of the response solution")
    ip.add_argument("--spec", required=True)
    ip.add_argument("--out", default="out")
    _integrate_args(ip)
    ip.set_defaults(func=cmd_integrate)
    return p


def _measure_args(p):
    p.add_argument("--a-list", default="1.0,2.0")
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--tau-prime", type=float, default=4.0)
    p.add_argument("--eps0", type=float, default=0.02)
    p.add_argument("--halvings", type=int, default=3)
    p.add_argument("--nu-max", type=int, default=80)


def _integrate_args(p):
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--offset", type=float, default=0.1)
    p.add_argument("--t-final", type=float, default=200.0 * 2.0 * math.pi)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 1
    except (InputError, LindstedtError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

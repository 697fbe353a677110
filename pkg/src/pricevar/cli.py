"""Command-line interface: ``pricevar {solve,verify,reproduce-example,check-model}``.

Exit codes: 0 success, 1 input error, 2 a mathematical condition does not
hold (closed-form hypothesis, invariant check, reference value), 3 the
numerical solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .closedform import HypothesisError, cr_multi, cr_trajectory, md_exponents, md_multi
from .example import RATIO_NOTE, example_checks, solve_example
from .io import (ConfigError, atomic_write, dumps, load_config, load_model, read_trajectory,
                 write_trajectory)
from .model import DomainError, ModelKind, Seasonality, demand_transference
from .optimality import (INVARIANTS, SingularMatrixError, default_invariants, invariance_report,
                         matrix_conditions)
from .varsolve import compare_trajectories, solve_cr, solve_md

EXIT_OK, EXIT_INPUT, EXIT_HYPOTHESIS, EXIT_NONCONVERGED = 0, 1, 2, 3

COMPARISON_TAIL = 0.05

log = logging.getLogger("pricevar")


def _vec(x) -> list:
    return [float(v) for v in np.asarray(x).reshape(-1)]


def _cr_to_dict(eq) -> dict:
    return {
        "p_star": _vec(eq.p_star), "I_star": _vec(eq.I_star), "P_star": _vec(eq.P_star),
        "R_star": _vec(eq.R_star), "l_star": _vec(eq.l_star), "r_scale": float(eq.r_scale),
        "residuals": {k: float(v) for k, v in eq.residuals.items()},
    }


# -- solve ------------------------------------------------------------------------

def _solve_markdown(cfg, method: str, out: Path, result: dict):
    params = cfg.model.params
    seas = cfg.seasonality()
    closed_traj = None
    I0_numeric = cfg.I0
    if method != "numeric" or cfg.T is None:
        sol, closed_traj = md_multi(params, cfg.I0, T=cfg.T, seasonality=seas, n_intervals=cfg.grid)
        if cfg.T is None:
            # horizon solved for: continue in de-seasoned units on [0, T]
            params = params.replace(S0=sol.S0)
            seas = Seasonality.uniform(sol.T)
        I0_numeric = sol.I0
        if method != "numeric":
            result["closed"] = sol.to_dict()
            write_trajectory(out / "closed_trajectory.csv", closed_traj)
    if method == "closed":
        return closed_traj, None
    res = solve_md(params, I0_numeric, seas, cfg.solver)
    return closed_traj if method == "both" else None, res


def _solve_cr(cfg, method: str, out: Path, result: dict):
    params = cfg.model.params
    seas = cfg.seasonality() or Seasonality.uniform(1.0)
    closed_traj = None
    I_bounds = cfg.I0
    if method != "numeric":
        eq = cr_multi(params, float(np.exp(np.mean(np.log(cfg.I0)))))
        closed_traj = cr_trajectory(params, eq, seas, n_intervals=cfg.grid)
        I_bounds = eq.I_star
        result["closed"] = _cr_to_dict(eq)
        write_trajectory(out / "closed_trajectory.csv", closed_traj)
    if method == "closed":
        return closed_traj, None
    return closed_traj, solve_cr(params, I_bounds, seas, cfg.solver)


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.grid is not None:
        if args.grid < 2:
            raise ConfigError("--grid: expected an integer >= 2")
        cfg.grid = args.grid
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError("--tol: must be positive")
        cfg.solver.tol = args.tol
    out = Path(args.out or cfg.outputs)
    result = {"problem": cfg.problem, "method": args.method, "config": cfg.to_dict()}
    runner = _solve_markdown if cfg.problem == "markdown" else _solve_cr
    try:
        closed_traj, res = runner(cfg, args.method, out, result)
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    status = EXIT_OK
    if res is not None:
        write_trajectory(out / "numeric_trajectory.csv", res.trajectory)
        result["numeric"] = res.to_dict()
        result["numeric"]["I0"] = _vec(res.trajectory.I[0])
        if not res.converged:
            print(f"solver did not converge: {res.message}", file=sys.stderr)
            status = EXIT_NONCONVERGED
    if closed_traj is not None and res is not None:
        cmp = compare_trajectories(closed_traj, res.trajectory, COMPARISON_TAIL)
        report = {"exclude_tail_frac": COMPARISON_TAIL, **cmp.to_dict()}
        atomic_write(out / "comparison.json", dumps(report))
        print(f"comparison: obj_rel_dev={cmp.obj_rel_dev:.3e} sup_rel_dev_p={cmp.sup_rel_dev_p:.3e} "
              f"sup_rel_dev_I={cmp.sup_rel_dev_I:.3e}")
    atomic_write(out / "result.json", dumps(result))
    print(f"wrote results to {out}")
    return status


# -- verify -----------------------------------------------------------------------

def _parse_invariants(text: str | None, params) -> list[str]:
    if text is None or text == "all":
        return default_invariants(params)
    names = [w.strip() for w in text.split(",") if w.strip()]
    unknown = [w for w in names if w not in INVARIANTS]
    if unknown:
        raise ConfigError(f"--invariants: unknown name(s) {', '.join(unknown)}; "
                          f"known: {', '.join(INVARIANTS)}")
    return names


def cmd_verify(args) -> int:
    traj = read_trajectory(args.trajectory)
    model = load_model(args.model)
    params = model.params
    if traj.n != params.n:
        raise ConfigError(f"{args.trajectory}: trajectory has {traj.n} items, model has {params.n}")
    names = _parse_invariants(args.invariants, params)
    if not names:
        print("warning: empty invariant list, nothing to check (vacuous pass)", file=sys.stderr)
        return EXIT_OK
    try:
        reports = invariance_report(params, traj, names, args.tol, interior=args.interior)
    except (SingularMatrixError, DomainError) as exc:
        raise ConfigError(f"{args.trajectory}: cannot evaluate invariants ({exc})") from None
    print(f"{'invariant':<24} {'max_rel_dev':>12} {'tol':>10}  status")
    for r in reports:
        print(f"{r.name:<24} {r.max_rel_dev:>12.4e} {r.tol:>10.3g}  {'PASS' if r.passed else 'FAIL'}")
    if args.out:
        out = Path(args.out)
        for r in reports:
            atomic_write(out / f"invariant_{r.name}.csv", r.to_csv())
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"failing invariant(s): {', '.join(failed)}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    return EXIT_OK


# -- reproduce-example ----------------------------------------------------------

def cmd_reproduce_example(args) -> int:
    sol, traj = solve_example()
    checks = example_checks(sol)
    print("two-item markdown example: alpha=diag(0.5,0.3), gamma=[[-2,0.25],[0.25,-1.5]], I0=(200,300)")
    for c in checks:
        print(c.line())
    print(RATIO_NOTE)
    n_fail = sum(not c.passed for c in checks)
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    if args.out:
        out = Path(args.out)
        write_trajectory(out / "closed_trajectory.csv", traj)
        atomic_write(out / "result.json", dumps({"closed": sol.to_dict()}))
    return EXIT_OK if n_fail == 0 else EXIT_HYPOTHESIS


# -- check-model ------------------------------------------------------------------

def cmd_check_model(args) -> int:
    doc = load_model(args.model)
    p = doc.params
    mc = matrix_conditions(p.gamma)
    print(f"items: {p.n}   kind: {p.kind.value}")
    print(f"elasticity matrix diagonally dominant: {mc.diag_dominant}")
    if p.n > 1:
        print("demand transference (row i, column j):")
        for i in range(p.n):
            print("  " + " ".join(f"{demand_transference(p, i, j):>10.4g}" if i != j else f"{'-':>10}"
                                  for j in range(p.n)))
    try:
        mu, a, theta, V, R_dir, _ = md_exponents(p)
        print(f"closed-form markdown: applicable, mu = {_vec(mu)}, revenue direction = {_vec(R_dir)}")
        print(f"  highly negative on revenue direction: {mc.highly_negative_on(R_dir)}")
    except (HypothesisError, np.linalg.LinAlgError) as exc:
        print(f"closed-form markdown: not applicable ({exc})")
    if p.kind is ModelKind.CONSTANT_ELASTICITY and np.all(p.c > 0):
        try:
            eq = cr_multi(p, 1.0)
            print(f"replenishment equilibrium: p* = {_vec(eq.p_star)}, Lerner index = {_vec(eq.l_star)}")
        except (HypothesisError, np.linalg.LinAlgError) as exc:
            print(f"replenishment equilibrium: not available ({exc})")
    else:
        print("replenishment equilibrium: needs the constant-elasticity model with positive costs")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pricevar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a markdown or replenishment problem")
    s.add_argument("--config", required=True, help="run configuration (JSON)")
    s.add_argument("--method", choices=("closed", "numeric", "both"), default="closed")
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--grid", type=int, help="closed-form emission intervals")
    s.add_argument("--tol", type=float, help="solver projected-gradient tolerance")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check conserved quantities along a trajectory CSV")
    v.add_argument("trajectory", help="trajectory CSV")
    v.add_argument("--model", required=True, help="model document (JSON)")
    v.add_argument("--invariants", default="all",
                   help=f"comma-separated subset of {', '.join(INVARIANTS)}, or 'all'")
    v.add_argument("--tol", type=float, default=1e-6, help="max relative deviation")
    v.add_argument("--interior", type=float, default=0.0,
                   help="ignore this fraction of the horizon at each end")
    v.add_argument("--out", help="directory for per-invariant CSV reports")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reproduce-example", help="run the built-in two-item markdown example")
    r.add_argument("--out", help="also write the example trajectory and result here")
    r.set_defaults(func=cmd_reproduce_example)

    c = sub.add_parser("check-model", help="report structural properties of a model")
    c.add_argument("model", help="model document (JSON)")
    c.set_defaults(func=cmd_check_model)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "tol", None) is not None and not (math.isfinite(args.tol) and args.tol > 0):
        print("error: --tol must be a positive finite number", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HypothesisError as exc:
        print(f"hypothesis violated: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

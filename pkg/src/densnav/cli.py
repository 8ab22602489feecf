"""Command line driver: ``densnav {fit,solve,eval,export-lp,make-raster}``.

Set ``OMP_NUM_THREADS`` (or the BLAS-specific variable) to bound the thread
count; the commands themselves run sequentially.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import navprog, scenario, terrain
from .config import ConfigError, load_config

log = logging.getLogger("densnav")


def _out(args, cfg):
    return Path(args.out or cfg["output"])


def _fit_artifacts(args, cfg, out):
    if (out / "dictionary.json").exists() and (out / "generators" / "M0.bin").exists():
        return scenario.load_fit(out)
    return scenario.run_fit(cfg, out, args.seed_override)


def cmd_fit(args, cfg):
    out = _out(args, cfg)
    D, gen = scenario.run_fit(cfg, out, args.seed_override)
    print(f"fitted {gen.input_dim + 1} generators on N={D.size} basis functions -> {out / 'generators'}")
    for lab in ["zero"] + [f"e{j}" for j in range(1, gen.input_dim + 1)]:
        print(f"  {lab}: negative mass fraction {gen.diagnostics[lab]['negative_mass']:.4f}")
    return 0


def cmd_solve(args, cfg, export_only=False):
    out = _out(args, cfg)
    D, gen = _fit_artifacts(args, cfg, out)
    if export_only:
        problem = scenario.build_problem(cfg, D, gen)
        gamma = problem.gamma
        if gamma is None:
            # the auto budget needs the pre-solve
            _, sol, lp = scenario.run_solve(cfg, D, gen)
        else:
            lp = navprog.assemble(problem)
        path = out / "problem.navlp"
        out.mkdir(parents=True, exist_ok=True)
        navprog.export_standard_form(lp, path)
        print(f"wrote {path} ({lp.n_vars} variables, {lp.A_eq.shape[0]} equalities, "
              f"{lp.A_ub.shape[0]} inequalities)")
        return 0
    problem, sol, lp = scenario.run_solve(cfg, D, gen, out, export_lp=args.export)
    print(f"status={sol.solver_status} objective={sol.objective:.6g} gamma={sol.gamma}")
    print("kkt: " + ", ".join(f"{k}={v:.3g}" for k, v in sol.kkt_residuals.items()
                              if isinstance(v, float)))
    if sol.solver_status == "infeasible":
        print("LP infeasible: " + json.dumps(sol.kkt_residuals), file=sys.stderr)
        return 2
    return 0 if sol.solver_status == "optimal" else 3


def cmd_eval(args, cfg):
    out = _out(args, cfg)
    if cfg["evaluation"]["n_samples"] < 1:
        print("evaluation needs n_samples >= 1", file=sys.stderr)
        return 2
    D, gen = _fit_artifacts(args, cfg, out)
    problem = scenario.build_problem(cfg, D, gen)
    sol_dir = out / "solution"
    if not (sol_dir / "solution.json").exists():
        print(f"no solution under {sol_dir}; run 'solve' first", file=sys.stderr)
        return 2
    sol = navprog.DensitySolution.load(sol_dir)
    metrics, _, _ = scenario.run_eval(cfg, problem, sol, out, args.seed_override)
    print(f"success_rate={metrics.success_rate:.3f} obstacle_occupancy={metrics.obstacle_occupancy:.3g} "
          f"mean_trav_cost={metrics.mean_trav_cost:.4g} saturation={metrics.saturation_fraction:.3f}")
    return 0


def cmd_make_raster(args, cfg):
    """Sample the scenario terrain on a lattice covering the planar box."""
    box = cfg["system"].get("planar_box", {"lo": [-3.0, -3.0], "hi": [9.0, 9.0]})
    tmap = terrain.terrain_from_dict(cfg["terrain"], (0, 1), cfg.get("_base_dir", "."))
    n = args.size
    lo, hi = np.array(box["lo"]), np.array(box["hi"])
    dx, dy = (hi - lo) / (n - 1)
    vals = terrain.rasterize(tmap, lo[0], lo[1], dx, dy, n, n)
    path = Path(args.out or cfg["output"]) / "terrain.raster" if not args.raster else Path(args.raster)
    path.parent.mkdir(parents=True, exist_ok=True)
    terrain.write_raster(path, lo[0], lo[1], dx, dy, vals)
    print(f"wrote {path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="densnav", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario YAML file or bundled name (s1, s2)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed-override", type=int, default=None,
                        help="replace the snapshot (fit) or evaluation (eval) seed")
        return sp

    common(sub.add_parser("fit", help="fit Perron-Frobenius generators from snapshots"))
    s = common(sub.add_parser("solve", help="assemble and solve the navigation LP"))
    s.add_argument("--export", action="store_true", help="also write the LP in navlp format")
    common(sub.add_parser("eval", help="closed-loop evaluation of the recovered controller"))
    common(sub.add_parser("export-lp", help="write the navigation LP in navlp v1 format"))
    r = common(sub.add_parser("make-raster", help="rasterise the scenario terrain"))
    r.add_argument("--size", type=int, default=121)
    r.add_argument("--raster", help="raster file path (default <out>/terrain.raster)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    handlers = {"fit": cmd_fit, "solve": cmd_solve, "eval": cmd_eval,
                "export-lp": lambda a, c: cmd_solve(a, c, export_only=True),
                "make-raster": cmd_make_raster}
    try:
        return handlers[args.command](args, cfg)
    except (ValueError, RuntimeError) as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

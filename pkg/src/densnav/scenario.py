"""Scenario pipeline: fit generators, solve the LP, evaluate the controller.

Every stage is a plain function of the validated config (see ``config``) and
the artifacts of the previous stage, so the CLI and the tests share one code
path.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import basis, controller, dynamics, navprog, operators, terrain
from .ipm import IPMOptions

log = logging.getLogger(__name__)


def build_system(cfg, padded=False):
    s = cfg["system"]
    if s["preset"] == "dubins":
        box = s.get("planar_box", {"lo": [-3.0, -3.0], "hi": [9.0, 9.0]})
        pad = cfg["dictionary"].get("pad", 0.0) if padded else 0.0
        lo = [a - pad for a in box["lo"]]
        hi = [a + pad for a in box["hi"]]
        return dynamics.dubins_car(lo, hi)
    return dynamics.make_system(s["preset"])


def build_dictionary(cfg, sys=None):
    """Centre lattice over the (optionally padded) state box."""
    sys = sys or build_system(cfg, padded=True)
    d = cfg["dictionary"]
    periodic = sys.angle_dims if d.get("periodic_angle", True) else ()
    return basis.build_grid_dictionary(sys.domain, d["counts"], d["sigma_ratio"], periodic)


def snapshot_count(cfg, dictionary):
    s = cfg["snapshots"]
    return s["M_per_basis"] * dictionary.size if s["M"] == "auto" else int(s["M"])


def run_fit(cfg, out=None, seed=None):
    """Fit the generator set; writes dictionary.json and the matrices when ``out`` is set."""
    sys = build_system(cfg, padded=True)
    D = build_dictionary(cfg, sys)
    s = cfg["snapshots"]
    dt = s.get("dt", cfg["system"]["dt"])
    gen = operators.fit_generators(sys, D, snapshot_count(cfg, D), dt,
                                   s["seed"] if seed is None else seed, sampling=s["sampling"])
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        D.save(out / "dictionary.json")
        gen.save(out / "generators")
    return D, gen


def load_fit(out):
    out = Path(out)
    return basis.RbfDictionary.load(out / "dictionary.json"), operators.GeneratorSet.load(out / "generators")


def build_problem(cfg, dictionary, generators):
    p = cfg["problem"]
    dims = (0, 1)
    X0 = terrain.region_from_dict(p["X0"], dims)
    XT = terrain.region_from_dict(p["XT"], dims)
    Xu = terrain.region_from_dict(p["Xu"], dims) if p.get("Xu") else None
    tmap = terrain.terrain_from_dict(cfg["terrain"], dims, cfg.get("_base_dir", "."))
    d = cfg["dictionary"]
    if d.get("pad", 0) > 0 and d.get("pad_cost", 0) > 0:
        box = build_system(cfg).domain
        tmap = terrain.PaddedTerrain(tmap, tuple(box.lo[:2]), tuple(box.hi[:2]), float(d["pad_cost"]))
    Neps = XT.inflate(p["eps"])
    grid = basis.quadrature_for(dictionary, cfg["quadrature"]["nodes_per_spacing"],
                                exclude=Neps.contains, excluded_region=f"target + {p['eps']}")
    centre = p.get("h0_center") or getattr(X0, "center", None)
    radius = p.get("h0_radius") or getattr(X0, "radius", 1.0)
    h0 = basis.normalized_on(basis.truncated_gaussian(centre, radius, dims), grid)
    m = basis.project_density(dictionary, grid, h0, method=p["projection"])
    gamma = p["gamma"]
    return navprog.NavigationProblem(
        dictionary, grid, generators, tmap, X0, XT, m, Xu=Xu, alpha=p["alpha"], beta=p["beta"],
        gamma=None if gamma == "auto" else float(gamma), L=tuple(p["L"]),
        curvature_bound=p.get("curvature"), eps=p["eps"], obstacle_tau=p["obstacle_tau"], h0=h0)


def solver_options(cfg):
    s = cfg["solver"]
    return IPMOptions(tol=s["tol"], max_iter=s["max_iter"])


def run_solve(cfg, dictionary, generators, out=None, export_lp=False):
    problem = build_problem(cfg, dictionary, generators)
    sol, lp = navprog.solve_problem(problem, solver_options(cfg), cfg["problem"]["gamma_factor"],
                                    cfg["solver"]["method"])
    if out is not None:
        out = Path(out)
        sol.save(out / "solution")
        (out / "solution" / "kkt_report.txt").write_text(
            "\n".join(f"{k} = {v}" for k, v in sol.kkt_residuals.items()) + "\n")
        if export_lp:
            navprog.export_standard_form(lp, out / "problem.navlp")
    return problem, sol, lp


def make_controller(cfg, problem, solution):
    sys = build_system(cfg)
    heading = sys.angle_dims[0] if sys.angle_dims else None
    target = getattr(problem.XT, "center", None)
    return controller.controller_from_solution(problem.dictionary, solution, problem.L,
                                               problem.grid, target, heading)


def run_eval(cfg, problem, solution, out=None, seed=None):
    e = cfg["evaluation"]
    if e["n_samples"] < 1:
        raise ValueError("evaluation needs n_samples >= 1")
    sys = build_system(cfg)
    ctl = make_controller(cfg, problem, solution)
    dt = e.get("dt", cfg["system"]["dt"])
    metrics, trajs = controller.evaluate_policy(
        sys, ctl, problem, e["n_samples"], dt, e["t_max"], e["seed"] if seed is None else seed,
        return_trajectories=True)
    if out is not None:
        out = Path(out)
        (out / "trajectories").mkdir(parents=True, exist_ok=True)
        metrics.save_json(out / "metrics.json")
        for i, tr in enumerate(trajs[: e["save_trajectories"]]):
            tr.save_csv(out / "trajectories" / f"run{i:03d}.csv")
        if sys.state_dim >= 2:
            lo, hi = sys.domain.lo, sys.domain.hi
            nx = ny = 121
            controller.export_density_grid(
                ctl, lo[0], lo[1], (hi[0] - lo[0]) / (nx - 1), (hi[1] - lo[1]) / (ny - 1), nx, ny,
                e["raster_theta"], out / "density.raster", sys.state_dim)
    return metrics, trajs, ctl

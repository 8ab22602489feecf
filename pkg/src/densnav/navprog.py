"""Navigation linear program in density space: assembly, presolve and solve.

Variables are stacked as x = (v, w_1..w_m, r_1..r_m), each block of length N:
v holds the coefficients of the occupation density rho, w_j those of the
density-weighted input rho_bar_j and r_j the slacks bounding |w_j|.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sps

from .basis import BasisCoefficients, weighted_integral
from .ipm import IPMOptions, solve_lp
from .terrain import indicator_vector


class AssemblyError(ValueError):
    pass


@dataclass
class NavigationProblem:
    """Data of one navigation task.

    ``obstacle_tau`` sets the relative level below which obstacle integrals
    are treated as zero; Gaussian bumps overlap every set, so without it the
    avoidance row would force the whole density to vanish.  Centres whose
    planar position lies in the target inflated by ``eps`` carry no mass
    balance row, which lets density leave through the target.
    """

    dictionary: object
    grid: object
    generators: object
    terrain: object
    X0: object
    XT: object
    h0_coeffs: BasisCoefficients
    Xu: object = None
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float | None = None
    L: tuple = (3.0, 3.0)
    curvature_bound: float | None = None
    eps: float = 0.1
    obstacle_tau: float = 1e-6
    absorb_target: bool = True
    h0: object = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise AssemblyError("need alpha, beta >= 0 with alpha + beta > 0")
        if self.gamma is not None and self.gamma <= 0:
            raise AssemblyError("gamma must be positive")
        if any(l <= 0 for l in self.L):
            raise AssemblyError("control limits must be positive")


@dataclass
class LinearProgram:
    """min c^T x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lb <= x <= ub."""

    c: np.ndarray
    A_eq: sps.csr_matrix
    b_eq: np.ndarray
    A_ub: sps.csr_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    N: int = 0
    m: int = 0
    data: dict = field(default_factory=dict)

    @property
    def n_vars(self):
        return self.c.size

    def block(self, x, name, j=0):
        """Slice of a solution vector: name in {'v', 'w', 'r'}, j 1-based for w, r."""
        N, m = self.N, self.m
        k = {"v": 0, "w": j, "r": m + j}[name]
        return x[k * N:(k + 1) * N]


@dataclass
class DensitySolution:
    v: np.ndarray
    w: list
    r: list
    objective: float
    solver_status: str
    kkt_residuals: dict
    gamma: float | None = None
    report: dict = field(default_factory=dict)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        BasisCoefficients(self.v, "v").save_csv(d / "v.csv")
        for j, (wj, rj) in enumerate(zip(self.w, self.r), 1):
            BasisCoefficients(wj, f"w{j}").save_csv(d / f"w{j}.csv")
            BasisCoefficients(rj, f"r{j}").save_csv(d / f"r{j}.csv")
        meta = {"objective": self.objective, "status": self.solver_status,
                "kkt": self.kkt_residuals, "gamma": self.gamma, "inputs": len(self.w),
                "report": self.report}
        (d / "solution.json").write_text(json.dumps(meta, indent=2))

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        meta = json.loads((d / "solution.json").read_text())
        m = meta["inputs"]
        w = [BasisCoefficients.load_csv(d / f"w{j}.csv").values for j in range(1, m + 1)]
        r = [BasisCoefficients.load_csv(d / f"r{j}.csv").values for j in range(1, m + 1)]
        return cls(BasisCoefficients.load_csv(d / "v.csv").values, w, r, meta["objective"],
                   meta["status"], meta["kkt"], meta["gamma"], meta.get("report", {}))


def problem_vectors(problem):
    """Quadrature data D1, D2, d1 (untruncated), d2 over the grid."""
    D, grid, b = problem.dictionary, problem.grid, problem.terrain
    bq = b(grid.nodes)
    out = {"D1": weighted_integral(D, grid, problem.alpha * bq),
           "D2": weighted_integral(D, grid, problem.beta * bq),
           "d2": weighted_integral(D, grid, bq)}
    if problem.Xu is not None:
        out["d1"] = weighted_integral(D, grid, indicator_vector(problem.Xu))
    return out


def target_centres(problem):
    """Basis indices whose centre lies in the target inflated by eps."""
    return np.asarray(problem.XT.inflate(problem.eps).contains(problem.dictionary.centers))


def assemble(problem, vectors=None):
    """Build the navigation LP (see the module docstring for the layout)."""
    gen, D = problem.generators, problem.dictionary
    N = D.size
    m = gen.input_dim
    if gen.M0.shape != (N, N) or any(Mj.shape != (N, N) for Mj in gen.M):
        raise AssemblyError(f"generator size does not match the {N}-term dictionary")
    if len(problem.L) != m:
        raise AssemblyError("one control limit per input is required")
    if problem.h0_coeffs.values.shape != (N,):
        raise AssemblyError("initial density coefficients have the wrong length")
    if problem.grid.size == 0:
        raise AssemblyError("empty quadrature grid")
    if problem.curvature_bound is not None and m != 2:
        raise AssemblyError("the curvature option needs exactly two inputs (speed, turn rate)")
    vec = problem_vectors(problem) if vectors is None else vectors
    nv = (2 * m + 1) * N

    c = np.concatenate([vec["D1"], np.zeros(m * N)] + [vec["D2"]] * m)

    # mass balance  -M0 v - sum_j Mj wj = m0, without the rows of target centres
    keep = np.ones(N, dtype=bool)
    if problem.absorb_target:
        keep &= ~target_centres(problem)
    eq = sps.hstack([sps.csr_matrix(-gen.M0)] + [sps.csr_matrix(-Mj) for Mj in gen.M]
                    + [sps.csr_matrix((N, m * N))], format="csr")[keep]
    b_eq = problem.h0_coeffs.values[keep]
    d1t = None
    if problem.Xu is not None:
        d1 = vec["d1"]
        d1t = np.where(d1 > problem.obstacle_tau * d1.max(), d1, 0.0)
        eq = sps.vstack([eq, sps.csr_matrix(np.concatenate([d1t, np.zeros(nv - N)]))], format="csr")
        b_eq = np.append(b_eq, 0.0)

    I = sps.identity(N, format="csr")
    Z = None
    rows, rhs = [], []

    def blockrow(entries):
        cols = [Z] * (2 * m + 1)
        for k, mat in entries:
            cols[k] = mat
        return sps.hstack([c_ if c_ is not None else sps.csr_matrix((N, N)) for c_ in cols],
                          format="csr")

    for j in range(1, m + 1):
        rows += [blockrow([(m + j, -I), (j, -I)]), blockrow([(m + j, -I), (j, I)])]
        rows += [blockrow([(j, I), (0, -problem.L[j - 1] * I)]),
                 blockrow([(j, -I), (0, -problem.L[j - 1] * I)])]
        rhs += [np.zeros(N)] * 4
    if problem.curvature_bound is not None:
        rows += [blockrow([(m + 2, problem.curvature_bound * I), (1, -I)]), blockrow([(1, -I)])]
        rhs += [np.zeros(N)] * 2
    A_ub = sps.vstack(rows, format="csr")
    b_ub = np.concatenate(rhs)
    if problem.gamma is not None:
        A_ub = sps.vstack([A_ub, sps.csr_matrix(np.concatenate([vec["d2"], np.zeros(nv - N)]))],
                          format="csr")
        b_ub = np.append(b_ub, problem.gamma)

    lb = np.concatenate([np.zeros(N), np.full(2 * m * N, -np.inf)])
    ub = np.full(nv, np.inf)
    data = dict(vec)
    data["d1_truncated"] = d1t
    data["mass_rows"] = keep
    return LinearProgram(c, eq, b_eq, A_ub, b_ub, lb, ub, N, m, data)


# ---------------------------------------------------------------- presolve


def _presolve(lp, tol=0.0):
    """Remove variables forced to zero and the rows they empty.

    Handles equality rows with rhs 0 and nonnegative coefficients on
    nonnegative variables, singleton inequality rows (turned into bounds)
    and variables with equal bounds.  Returns the reduced data plus the map
    back to the full variable vector.
    """
    n = lp.n_vars
    lb, ub = lp.lb.copy(), lp.ub.copy()
    Ae, be = lp.A_eq.tocsr(), lp.b_eq.copy()
    Au, bu = lp.A_ub.tocsr(), lp.b_ub.copy()
    fixed = np.zeros(n, dtype=bool)
    fixval = np.zeros(n)
    live_e = np.ones(Ae.shape[0], dtype=bool)
    live_u = np.ones(Au.shape[0], dtype=bool)

    changed = True
    while changed:
        changed = False
        free_cols = ~fixed
        # forcing equality rows
        Ae_f = Ae[:, free_cols]
        for i in np.flatnonzero(live_e):
            row = Ae_f.getrow(i)
            if row.nnz == 0:
                continue
            rhs = be[i] - Ae.getrow(i) @ fixval if fixed.any() else be[i]
            cols = np.flatnonzero(free_cols)[row.indices]
            if abs(float(np.ravel(rhs)[0])) <= tol and np.all(row.data >= 0) and np.all(lb[cols] >= 0):
                lb[cols] = ub[cols] = 0.0
                changed = True
        newly = (~fixed) & (lb == ub)
        if newly.any():
            fixval[newly] = lb[newly]
            fixed |= newly
            changed = True
        free_cols = ~fixed
        # singleton inequality rows become bounds
        Au_f = Au[:, free_cols]
        fcols = np.flatnonzero(free_cols)
        shift = Au @ fixval
        nnz = np.diff(Au_f.indptr)
        for i in np.flatnonzero(live_u & (nnz <= 1)):
            r = bu[i] - shift[i]
            if nnz[i] == 0:
                if r < -1e-9:
                    raise AssemblyError("presolve found an infeasible inequality row")
                live_u[i] = False
                continue
            a = Au_f.data[Au_f.indptr[i]]
            k = fcols[Au_f.indices[Au_f.indptr[i]]]
            if a > 0:
                ub[k] = min(ub[k], r / a)
            else:
                lb[k] = max(lb[k], r / a)
            live_u[i] = False
            changed = True
        if np.any(lb > ub + 1e-9):
            raise AssemblyError("presolve found contradictory bounds")
        ub = np.maximum(ub, lb)
        newly = (~fixed) & (lb == ub)
        if newly.any():
            fixval[newly] = lb[newly]
            fixed |= newly
            changed = True
    free = ~fixed
    be_r = be - Ae @ fixval
    Ae_r = Ae[:, free]
    nz_e = np.diff(Ae_r.indptr) > 0
    if np.any(np.abs(be_r[~nz_e]) > 1e-9 * (1 + np.abs(be).max(initial=0))):
        raise AssemblyError("presolve found an infeasible equality row")
    keep_e = live_e & nz_e
    bu_r = bu - Au @ fixval
    return dict(free=free, fixval=fixval, lb=lb[free], ub=ub[free], c=lp.c[free],
                A_eq=Ae_r[keep_e], b_eq=be_r[keep_e], A_ub=Au[live_u][:, free], b_ub=bu_r[live_u],
                obj_shift=float(lp.c @ fixval))


def _bound_rows(lb, ub):
    n = lb.size
    lo = np.flatnonzero(np.isfinite(lb))
    hi = np.flatnonzero(np.isfinite(ub))
    G = sps.vstack([sps.csr_matrix((-np.ones(lo.size), (np.arange(lo.size), lo)), shape=(lo.size, n)),
                    sps.csr_matrix((np.ones(hi.size), (np.arange(hi.size), hi)), shape=(hi.size, n))],
                   format="csr")
    return G, np.concatenate([-lb[lo], ub[hi]])


def kkt_report(lp, x):
    """Absolute and scaled primal residuals of x on the full LP."""
    req = lp.A_eq @ x - lp.b_eq if lp.A_eq.shape[0] else np.zeros(0)
    viol = np.maximum(lp.A_ub @ x - lp.b_ub, 0) if lp.A_ub.shape[0] else np.zeros(0)
    bnd = np.maximum(np.maximum(lp.lb - x, x - lp.ub), 0)
    scale = 1.0 + max(np.abs(lp.b_eq).max(initial=0), np.abs(lp.b_ub).max(initial=0))
    prim = float(max(np.abs(req).max(initial=0), viol.max(initial=0), bnd.max(initial=0)))
    return {"primal": prim, "primal_scaled": float(prim / scale)}


def _solve_highs(red, opts):
    from scipy.optimize import linprog

    bounds = np.column_stack([red["lb"], red["ub"]])
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b) for a, b in bounds]
    A_ub = red["A_ub"] if red["A_ub"].shape[0] else None
    A_eq = red["A_eq"] if red["A_eq"].shape[0] else None
    tol = opts.tol if opts is not None else 1e-8
    res = linprog(red["c"], A_ub=A_ub, b_ub=red["b_ub"] if A_ub is not None else None,
                  A_eq=A_eq, b_eq=red["b_eq"] if A_eq is not None else None, bounds=bounds,
                  method="highs-ipm", options={"primal_feasibility_tolerance": tol,
                                               "dual_feasibility_tolerance": tol,
                                               "ipm_optimality_tolerance": tol})
    status = {0: "optimal", 1: "max-iter", 2: "infeasible", 3: "unbounded"}.get(res.status, "max-iter")
    if res.x is None:
        return np.zeros(red["c"].size), status, {"message": res.message}
    y = res.eqlin.marginals if A_eq is not None else np.zeros(0)
    z = res.ineqlin.marginals if A_ub is not None else np.zeros(0)
    lam = res.lower.marginals + res.upper.marginals
    stat = red["c"] - (A_eq.T @ y if A_eq is not None else 0) - (A_ub.T @ z if A_ub is not None else 0) - lam
    dual = float(np.abs(stat).max(initial=0) / (1 + np.abs(red["c"]).max(initial=0)))
    lbf = np.where(np.isfinite(red["lb"]), red["lb"], 0.0)
    ubf = np.where(np.isfinite(red["ub"]), red["ub"], 0.0)
    dobj = (red["b_eq"] @ y if A_eq is not None else 0) + (red["b_ub"] @ z if A_ub is not None else 0) \
        + lbf @ res.lower.marginals + ubf @ res.upper.marginals
    gap = float(abs(res.fun - dobj) / (1 + abs(res.fun)))
    return res.x, status, {"dual": dual, "gap": gap, "iterations": int(res.nit)}


def solve(lp, opts=None, method="highs-ipm"):
    """Presolve, run an interior-point method and map back to the full LP.

    ``method`` is ``highs-ipm`` (the HiGHS interior-point code shipped with
    scipy) or ``builtin`` (the homogeneous self-dual solver in ``ipm``).
    """
    opts = opts or IPMOptions()
    try:
        red = _presolve(lp)
    except AssemblyError as exc:
        x = np.zeros(lp.n_vars)
        return _solution(lp, x, float("nan"), "infeasible", {"presolve": str(exc)})
    if method == "builtin":
        Gb, hb = _bound_rows(red["lb"], red["ub"])
        G = sps.vstack([red["A_ub"], Gb], format="csr")
        h = np.concatenate([red["b_ub"], hb])
        res = solve_lp(red["c"], red["A_eq"], red["b_eq"], G, h, opts)
        xr, status = res.x, res.status
        info = {"dual": res.dual_residual, "gap": res.gap, "iterations": res.iterations}
    elif method == "highs-ipm":
        xr, status, info = _solve_highs(red, opts)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    x = red["fixval"].copy()
    x[red["free"]] = xr
    kkt = kkt_report(lp, x)
    kkt.update(info)
    kkt["fixed_variables"] = int((~red["free"]).sum())
    if status == "unbounded":
        status = "infeasible"
    if status == "optimal" and kkt["primal_scaled"] > 1e-6:
        status = "max-iter"
    obj = float(lp.c @ x) if status != "infeasible" else float("nan")
    return _solution(lp, x, obj, status, kkt)


def _solution(lp, x, obj, status, kkt):
    N, m = lp.N, lp.m
    v = x[:N].copy()
    w = [x[j * N:(j + 1) * N].copy() for j in range(1, m + 1)]
    r = [x[(m + j) * N:(m + j + 1) * N].copy() for j in range(1, m + 1)]
    gamma = float(lp.b_ub[-1]) if lp.data.get("has_gamma") else None
    report = {}
    if "d2" in lp.data:
        report["d2v"] = float(lp.data["d2"] @ v)
    if lp.data.get("d1") is not None:
        report["d1v"] = float(lp.data["d1"] @ v)
    return DensitySolution(v, w, r, obj, status, kkt, gamma, report)


def solve_problem(problem, opts=None, gamma_factor=1.5, method="highs-ipm"):
    """Assemble and solve; gamma=None or 'auto' triggers a budget pre-solve.

    The pre-solve drops the budget row and sets gamma to ``gamma_factor``
    times the traversability d2^T v of that solution.
    """
    vec = problem_vectors(problem)
    gamma = problem.gamma
    pre = None
    if gamma is None or gamma == "auto":
        from dataclasses import replace

        lp0 = assemble(replace(problem, gamma=None), vec)
        pre = solve(lp0, opts, method)
        if pre.solver_status != "optimal":
            return pre, lp0
        gamma = gamma_factor * pre.report["d2v"]
    from dataclasses import replace

    lp = assemble(replace(problem, gamma=float(gamma)), vec)
    lp.data["has_gamma"] = True
    sol = solve(lp, opts, method)
    sol.gamma = float(gamma)
    if pre is not None:
        sol.report["presolve_objective"] = pre.objective
    return sol, lp


# ---------------------------------------------------------------- interchange


def _fmt(x):
    return repr(float(x))


def export_standard_form(lp, path):
    """Write the LP in the ``navlp v1`` text format.

    Header ``navlp v1 <n_vars> <n_eq> <n_ineq>``; sections OBJ (``0 col val``),
    EQ and INEQ (``row col val`` triples, right-hand sides as ``row rhs val``)
    and BOUNDS (``col lb ub``).  Empty sections are omitted.  Values use the
    shortest repr that round-trips exactly.
    """
    n = lp.n_vars
    with open(path, "w") as fh:
        fh.write(f"navlp v1 {n} {lp.A_eq.shape[0]} {lp.A_ub.shape[0]} {lp.N} {lp.m}\n")
        fh.write("OBJ\n")
        for j in np.flatnonzero(lp.c):
            fh.write(f"0 {j} {_fmt(lp.c[j])}\n")
        for name, A, b in (("EQ", lp.A_eq, lp.b_eq), ("INEQ", lp.A_ub, lp.b_ub)):
            if A.shape[0] == 0:
                continue
            fh.write(f"{name}\n")
            C = A.tocoo()
            order = np.lexsort((C.col, C.row))
            for i, j, a in zip(C.row[order], C.col[order], C.data[order]):
                fh.write(f"{i} {j} {_fmt(a)}\n")
            for i, bi in enumerate(b):
                fh.write(f"{i} rhs {_fmt(bi)}\n")
        fh.write("BOUNDS\n")
        for j in range(n):
            if np.isfinite(lp.lb[j]) or np.isfinite(lp.ub[j]):
                fh.write(f"{j} {_fmt(lp.lb[j])} {_fmt(lp.ub[j])}\n")
        fh.write("END\n")


def import_standard_form(path):
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if head[:2] != ["navlp", "v1"]:
        raise ValueError(f"{path}: not a navlp v1 file")
    n, p, q = int(head[2]), int(head[3]), int(head[4])
    N, m = (int(head[5]), int(head[6])) if len(head) > 6 else (0, 0)
    c = np.zeros(n)
    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    trip = {"EQ": ([], [], []), "INEQ": ([], [], [])}
    rhs = {"EQ": np.zeros(p), "INEQ": np.zeros(q)}
    section = None
    for ln in lines[1:]:
        parts = ln.split()
        if not parts:
            continue
        if parts[0] in ("OBJ", "EQ", "INEQ", "BOUNDS", "END"):
            section = parts[0]
            continue
        if section == "OBJ":
            c[int(parts[1])] = float(parts[2])
        elif section in trip:
            if parts[1] == "rhs":
                rhs[section][int(parts[0])] = float(parts[2])
            else:
                for lst, val in zip(trip[section], (int(parts[0]), int(parts[1]), float(parts[2]))):
                    lst.append(val)
        elif section == "BOUNDS":
            lb[int(parts[0])] = float(parts[1])
            ub[int(parts[0])] = float(parts[2])
    mats = {k: sps.csr_matrix((t[2], (t[0], t[1])), shape=(size, n))
            for (k, t), size in zip(trip.items(), (p, q))}
    return LinearProgram(c, mats["EQ"], rhs["EQ"], mats["INEQ"], rhs["INEQ"], lb, ub, N, m)

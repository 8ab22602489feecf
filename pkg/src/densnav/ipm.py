"""
Primal-dual interior-point solver for linear programs.

Solves

    minimize    c^T x
    subject to  A x  = b
                G x <= h

with a homogeneous self-dual embedding and Mehrotra predictor-corrector
steps.  Infeasibility and unboundedness are reported with certificates
taken from the embedding.

The Newton systems are reduced to the normal form

    [ G^T W^-2 G   A^T ] [dx]   [r1]
    [ A             0  ] [dy] = [r2]

and solved either densely (small problems) or by a block elimination that
factors the sparse part of ``G^T W^-2 G`` with a sparse LU and absorbs dense
rows of ``G`` through the Woodbury identity (problems where ``G`` is
local but a handful of rows couple many variables).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sps
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


@dataclass
class IPMOptions:
    tol: float = 1e-8
    """Relative tolerance on primal/dual residuals and duality gap."""
    tol_infeasible: float = 1e-8
    tol_accept: float = 1e-6
    """Residual level accepted as optimal once progress stalls."""
    stall_iterations: int = 5
    max_iter: int = 200
    step_fraction: float = 0.99
    regularization: float = 1e-11
    refinement_steps: int = 2
    dense_threshold: int = 2500
    """Use the dense augmented solve when n + p stays below this."""
    verbose: bool = False


@dataclass
class IPMResult:
    status: str  # optimal | infeasible | unbounded | max-iter
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    certificate: dict = field(default_factory=dict)


def _as_operator(M, n):
    if M is None:
        return sps.csr_matrix((0, n))
    if sps.issparse(M):
        return M.tocsr()
    return np.atleast_2d(np.asarray(M, dtype=float))


def _norm(v):
    return float(np.linalg.norm(v)) if v.size else 0.0


class _NormalSolver:
    """Factor and solve the reduced KKT system for one scaling D = z/s."""

    def __init__(self, A, G, opts: IPMOptions):
        self.A = A
        self.G = G
        self.opts = opts
        self.n = G.shape[1]
        self.p = A.shape[0]
        self.dense = (self.n + self.p) <= opts.dense_threshold
        if not self.dense:
            Gs = G if sps.issparse(G) else sps.csr_matrix(G)
            nnz_row = np.diff(Gs.indptr)
            cut = max(64, int(0.05 * self.n))
            self.dense_rows = np.flatnonzero(nnz_row > cut)
            self.sparse_rows = np.flatnonzero(nnz_row <= cut)
            self.Gs = Gs[self.sparse_rows]
            self.Gd = Gs[self.dense_rows].toarray()
            self.A_dense = A.toarray() if sps.issparse(A) else A

    def factor(self, D):
        opts = self.opts
        if self.dense:
            Gd = self.G.toarray() if sps.issparse(self.G) else self.G
            Ad = self.A.toarray() if sps.issparse(self.A) else self.A
            H = Gd.T @ (D[:, None] * Gd)
            self.H = H
            delta = opts.regularization * (1.0 + np.max(np.abs(np.diag(H)), initial=0.0))
            self.delta = delta
            K = np.zeros((self.n + self.p, self.n + self.p))
            K[: self.n, : self.n] = H + delta * np.eye(self.n)
            K[: self.n, self.n:] = Ad.T
            K[self.n:, : self.n] = Ad
            K[self.n:, self.n:] = -delta * np.eye(self.p)
            self.K = K
            self.lu = la.lu_factor(K, check_finite=False)
            self.Kexact = K.copy()
            self.Kexact[: self.n, : self.n] = H
            self.Kexact[self.n:, self.n:] = 0.0
            return
        Ds = D[self.sparse_rows]
        Dd = D[self.dense_rows]
        Hs = (self.Gs.T @ sps.diags(Ds) @ self.Gs).tocsc()
        scale = 1.0 + np.max(np.abs(Hs.diagonal()), initial=0.0)
        if Dd.size:
            scale = max(scale, 1.0 + np.max(Dd * np.sum(self.Gd**2, axis=1)))
        delta = opts.regularization * scale
        self.delta = delta
        Hs = Hs + delta * sps.identity(self.n, format="csc")
        self.Hs_lu = spla.splu(Hs)
        self.Hs = Hs
        self.Dd = Dd
        if Dd.size:
            HGd = self.Hs_lu.solve(np.ascontiguousarray(self.Gd.T))
            cap = np.diag(1.0 / Dd) + self.Gd @ HGd
            self.HGd = HGd
            self.cap_lu = la.lu_factor(cap, check_finite=False)
        Ad = self.A_dense
        if self.p:
            HAt = self._solve_H(np.ascontiguousarray(Ad.T))
            S = Ad @ HAt
            S[np.diag_indices_from(S)] += delta
            self.HAt = HAt
            self.S_lu = la.lu_factor(S, check_finite=False)

    def _solve_H(self, R):
        X = self.Hs_lu.solve(R)
        if self.Dd.size:
            X = X - self.HGd @ la.lu_solve(self.cap_lu, self.Gd @ X, check_finite=False)
        return X

    def _matvec_H(self, x):
        out = self.Hs @ x - self.delta * x
        if self.Dd.size:
            out = out + self.Gd.T @ (self.Dd * (self.Gd @ x))
        return out

    def solve(self, r1, r2):
        if self.dense:
            rhs = np.concatenate([r1, r2])
            sol = la.lu_solve(self.lu, rhs, check_finite=False)
            for _ in range(self.opts.refinement_steps):
                res = rhs - self.Kexact @ sol
                sol = sol + la.lu_solve(self.lu, res, check_finite=False)
            return sol[: self.n], sol[self.n:]
        dx, dy = self._solve_structured(r1, r2)
        for _ in range(self.opts.refinement_steps):
            e1 = r1 - self._matvec_H(dx) - (self.A.T @ dy if self.p else 0.0)
            e2 = r2 - (self.A @ dx if self.p else np.zeros(0))
            cx, cy = self._solve_structured(e1, e2)
            dx, dy = dx + cx, dy + cy
        return dx, dy

    def _solve_structured(self, r1, r2):
        Hr = self._solve_H(r1)
        if not self.p:
            return Hr, np.zeros(0)
        dy = la.lu_solve(self.S_lu, self.A_dense @ Hr - r2, check_finite=False)
        dx = Hr - self.HAt @ dy
        return dx, dy


def solve_lp(c, A_eq=None, b_eq=None, G=None, h=None, options: IPMOptions | None = None) -> IPMResult:
    """Solve ``min c^T x`` subject to ``A_eq x = b_eq`` and ``G x <= h``."""
    opts = options or IPMOptions()
    c = np.asarray(c, dtype=float)
    n = c.size
    A = _as_operator(A_eq, n)
    G = _as_operator(G, n)
    b = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    p, m = A.shape[0], G.shape[0]
    if b.size != p or h.size != m or A.shape[1] != n or G.shape[1] != n:
        raise ValueError("inconsistent LP dimensions")

    x = np.zeros(n)
    y = np.zeros(p)
    s = np.ones(m)
    z = np.ones(m)
    tau = 1.0
    kappa = 1.0

    nb = 1.0 + _norm(b)
    nh = 1.0 + _norm(h)
    nc = 1.0 + _norm(c)
    solver = _NormalSolver(A, G, opts)

    def At(v):
        return A.T @ v if p else np.zeros(n)

    def Ax(v):
        return A @ v if p else np.zeros(0)

    best = None
    best_it = 0
    status = "max-iter"
    cert: dict = {}
    it = 0
    for it in range(opts.max_iter + 1):
        rx = At(y) + G.T @ z + c * tau
        ry = -Ax(x) + b * tau
        rz = s + G @ x - h * tau
        rt = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (m + 1)

        xh, yh, zh, sh = x / tau, y / tau, z / tau, s / tau
        pobj = c @ xh
        dobj = -(b @ yh) - h @ zh
        pres = max(_norm(Ax(xh) - b) / nb, _norm(G @ xh + sh - h) / nh)
        dres = _norm(At(yh) + G.T @ zh + c) / nc
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        if opts.verbose:
            log.info("ipm %3d pobj=%.8e dobj=%.8e pres=%.2e dres=%.2e gap=%.2e tau=%.2e kappa=%.2e",
                     it, pobj, dobj, pres, dres, gap, tau, kappa)
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, xh.copy(), yh.copy(), zh.copy(), sh.copy(), pres, dres, gap)
            best_it = it
        if pres <= opts.tol and dres <= opts.tol and gap <= opts.tol:
            status = "optimal"
            break
        if it - best_it >= opts.stall_iterations and best[0] <= opts.tol_accept:
            status = "optimal"
            break

        # certificates of infeasibility from the embedding
        bz = -(b @ y) - h @ z
        if bz > 0:
            pinf = _norm(At(y) + G.T @ z) / bz
            if pinf <= opts.tol_infeasible and tau < 1e-2 * kappa or pinf <= 1e-2 * opts.tol_infeasible:
                status = "infeasible"
                cert = {"y": y / bz, "z": z / bz, "residual": pinf}
                break
        cx = c @ x
        if cx < 0:
            dinf = max(_norm(Ax(x)), _norm(G @ x + s)) / (-cx)
            if dinf <= opts.tol_infeasible and tau < 1e-2 * kappa or dinf <= 1e-2 * opts.tol_infeasible:
                status = "unbounded"
                cert = {"x": x / (-cx), "residual": dinf}
                break
        if it == opts.max_iter:
            break

        D = z / s
        try:
            solver.factor(D)
        except (la.LinAlgError, RuntimeError) as exc:
            log.warning("factorization failed at iteration %d: %s", it, exc)
            break

        def kkt(bx, by, bz_):
            # A^T dy + G^T dz = bx ; A dx = by ; G dx - W^2 dz = bz_
            dx, dy = solver.solve(bx + G.T @ (D * bz_), by)
            dz = D * (G @ dx - bz_)
            return dx, dy, dz

        x2, y2, z2 = kkt(-c, b, h)
        denom = c @ x2 + b @ y2 + h @ z2 - kappa / tau

        def direction(sigma, rc, rtk):
            eta = 1.0 - sigma
            bx = -eta * rx
            by = eta * ry  # A dx = b dtau + eta*ry
            bz_ = -eta * rz - rc / z
            x1, y1, z1 = kkt(bx, by, bz_)
            pt = -eta * rt - rtk / tau
            dtau = (pt - (c @ x1 + b @ y1 + h @ z1)) / denom
            dx = x1 + dtau * x2
            dy = y1 + dtau * y2
            dz = z1 + dtau * z2
            ds = (rc - s * dz) / z
            dkappa = (rtk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def max_step(ds, dz, dtau, dkappa):
            a = 1.0
            for v, dv in ((s, ds), (z, dz)):
                neg = dv < 0
                if np.any(neg):
                    a = min(a, float(np.min(-v[neg] / dv[neg])))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        dxa, dya, dza, dsa, dta, dka = direction(0.0, -s * z, -tau * kappa)
        aa = max_step(dsa, dza, dta, dka)
        mu_aff = ((s + aa * dsa) @ (z + aa * dza) + (tau + aa * dta) * (kappa + aa * dka)) / (m + 1)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        # corrector
        rc = -s * z + sigma * mu - dsa * dza
        rtk = -tau * kappa + sigma * mu - dta * dka
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, rc, rtk)
        alpha = min(1.0, opts.step_fraction * max_step(ds, dz, dtau, dkappa))

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            log.warning("non-finite iterate at iteration %d", it)
            break

    if status == "optimal":
        _, xo, yo, zo, so, pres_o, dres_o, gap_o = best
    elif status in ("infeasible", "unbounded"):
        xo, yo, zo, so = x / max(tau, 1e-300), y, z, s
        pres_o, dres_o, gap_o = pres, dres, gap
    else:
        _, xo, yo, zo, so, pres_o, dres_o, gap_o = best
    obj = float(c @ xo) if status != "infeasible" else float("nan")
    return IPMResult(status=status, x=xo, y=yo, z=zo, s=so, objective=obj, iterations=it,
                     primal_residual=float(pres_o), dual_residual=float(dres_o), gap=float(gap_o),
                     certificate=cert)

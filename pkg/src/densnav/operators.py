"""EDMD, row-normalised Koopman matrices and Perron-Frobenius generators.

Coefficient vectors are columns.  A Koopman matrix U acts on observable
coefficients; the Perron-Frobenius matrix P = U^T and its generators act on
density coefficients from the left.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import eval_basis
from .dynamics import generate_snapshots

_MAGIC = b"DNMAT01\n"


class FitError(RuntimeError):
    pass


class NormalizationError(RuntimeError):
    pass


def dictionary_id(dictionary):
    """Short content hash identifying a dictionary."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dictionary.centers).tobytes())
    h.update(np.float64(dictionary.sigma).tobytes())
    h.update(repr(tuple(dictionary.periodic_dims)).encode())
    return h.hexdigest()[:16]


@dataclass
class KoopmanMatrix:
    U: np.ndarray
    dt: float
    dict_id: str = ""
    normalized: bool = False
    negative_mass: float | None = None
    cond_G: float | None = None


def _snapshot_moments(dictionary, X, Y, chunk=4096):
    N = dictionary.size
    G = np.zeros((N, N))
    A = np.zeros((N, N))
    for i in range(0, len(X), chunk):
        PX = eval_basis(dictionary, X[i:i + chunk])
        PY = eval_basis(dictionary, Y[i:i + chunk])
        G += PX.T @ PX
        A += PX.T @ PY
    return G / len(X), A / len(X)


def edmd_fit(dictionary, data, cutoff=1e-8):
    """Least-squares Koopman matrix U* = pinv(G) A from snapshot pairs.

    The pseudoinverse drops eigenvalues of G below ``cutoff`` times the
    largest one.  Works with any callable dictionary returning (k, N) rows.
    """
    if data.M < 1:
        raise FitError("no snapshot pairs")
    if callable(dictionary) and not hasattr(dictionary, "centers"):
        PX, PY = dictionary(data.X), dictionary(data.Y)
        G, A = PX.T @ PX / data.M, PX.T @ PY / data.M
        did = ""
    else:
        G, A = _snapshot_moments(dictionary, data.X, data.Y)
        did = dictionary_id(dictionary)
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    if lam[-1] <= 0 or not np.isfinite(lam[-1]):
        raise FitError("degenerate data: G is zero")
    keep = lam > cutoff * lam[-1]
    Gp = (V[:, keep] / lam[keep]) @ V[:, keep].T
    cond = float(lam[-1] / lam[0]) if lam[0] > 0 else float("inf")
    return KoopmanMatrix(Gp @ A, data.dt, did, False, None, cond)


def negative_mass_fraction(U):
    return float(np.abs(np.minimum(U, 0)).sum() / np.abs(U).sum())


def nsdmd_star(K, tau_row=1e-10):
    """Divide every row of U by its sum so that rows sum to one."""
    U = np.asarray(K.U, dtype=float)
    s = U.sum(axis=1)
    small = np.flatnonzero(np.abs(s) <= tau_row)
    if small.size:
        raise NormalizationError(f"row sum below {tau_row:g} at basis index {int(small[0])}")
    Un = U / s[:, None]
    return KoopmanMatrix(Un, K.dt, K.dict_id, True, negative_mass_fraction(Un), K.cond_G)


def pf_from_koopman(K):
    """Perron-Frobenius matrix P = U^T of a normalised Koopman matrix."""
    if not K.normalized:
        raise ValueError("Koopman matrix must be row-normalised first")
    return np.ascontiguousarray(np.asarray(K.U).T)


@dataclass
class GeneratorSet:
    M0: np.ndarray
    M: list
    dt: float
    dict_id: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def input_dim(self):
        return len(self.M)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_matrix(d / "M0.bin", self.M0)
        for j, Mj in enumerate(self.M, 1):
            save_matrix(d / f"M{j}.bin", Mj)
        meta = {"dt": self.dt, "dict_id": self.dict_id, "inputs": len(self.M)}
        (d / "generators.json").write_text(json.dumps(meta, indent=2))
        (d / "diagnostics.txt").write_text(diagnostics_report(self.diagnostics))

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        meta = json.loads((d / "generators.json").read_text())
        M = [load_matrix(d / f"M{j}.bin") for j in range(1, meta["inputs"] + 1)]
        return cls(load_matrix(d / "M0.bin"), M, meta["dt"], meta["dict_id"])


def _fit_pf(sys, dictionary, label, M_samples, dt, seed, sampling, cutoff, normalize):
    data = generate_snapshots(sys, label, M_samples, dt, seed, sampling=sampling)
    try:
        K = edmd_fit(dictionary, data, cutoff)
        if normalize:
            K = nsdmd_star(K)
        else:
            K = KoopmanMatrix(K.U, K.dt, K.dict_id, True, negative_mass_fraction(K.U), K.cond_G)
    except (FitError, NormalizationError) as exc:
        raise type(exc)(f"[input {label}] {exc}") from exc
    P = pf_from_koopman(K)
    diag = {"negative_mass": K.negative_mass, "cond_G": K.cond_G,
            "max_abs_row_sum_error": float(np.abs(K.U.sum(axis=1) - 1).max())}
    return P, diag


def fit_generators(sys, dictionary, M_samples, dt, seed, sampling="uniform", cutoff=1e-8,
                   normalize=True):
    """Generators M0 = (P0 - I)/dt and Mi = (Pi - I)/dt - M0 from snapshot data.

    Each input label ('zero', 'e1', ...) gets its own independently seeded
    sample of initial states.  ``normalize=False`` skips the row
    normalisation; a one-function dictionary needs this, since normalising a
    1x1 matrix always gives 1.
    """
    if dt <= 0 or M_samples < 1:
        raise ValueError("need dt > 0 and at least one sample")
    labels = ["zero"] + [f"e{i + 1}" for i in range(sys.input_dim)]
    seeds = np.random.SeedSequence(seed).generate_state(len(labels))
    N = dictionary.size if hasattr(dictionary, "size") else None
    pfs, diags = [], {}
    for lab, s in zip(labels, seeds):
        P, dg = _fit_pf(sys, dictionary, lab, M_samples, dt, int(s), sampling, cutoff, normalize)
        pfs.append(P)
        diags[lab] = dg
    I = np.eye(N if N is not None else pfs[0].shape[0])
    M0 = (pfs[0] - I) / dt
    Ms = [(P - I) / dt - M0 for P in pfs[1:]]
    diags["generator_column_sums"] = float(max(np.abs(Mx.sum(axis=0)).max() for Mx in [M0] + Ms))
    did = dictionary_id(dictionary) if hasattr(dictionary, "centers") else ""
    return GeneratorSet(M0, Ms, dt, did, diags)


def diagnostics_report(diag):
    lines = ["generator diagnostics"]
    for key, val in diag.items():
        if isinstance(val, dict):
            lines.append(f"[{key}]")
            lines.extend(f"  {k} = {v:.6g}" for k, v in val.items())
        else:
            lines.append(f"{key} = {val:.6g}")
    return "\n".join(lines) + "\n"


def save_matrix(path, M):
    """Binary container: magic, int64 rows and cols, row-major float64 (LE)."""
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.array(M.shape, dtype="<i8").tobytes())
        fh.write(M.tobytes())


def load_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a matrix file")
        rows, cols = np.frombuffer(fh.read(16), dtype="<i8")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: truncated matrix data")
    return data.reshape(rows, cols).astype(float)


def save_matrix_csv(path, M):
    np.savetxt(path, M, delimiter=",", fmt="%.17g")

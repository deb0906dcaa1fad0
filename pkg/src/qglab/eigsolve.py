"""Lowest eigenpairs of ``A u = lambda M u`` with diagonal ``M``.

Restarted block Lanczos on the shift-inverted operator.  With
``y = M^{1/2} u`` the pencil becomes the symmetric operator

    S = M^{1/2} (A - sigma M)^{-1} M^{1/2},   theta = 1/(lambda - sigma),

whose largest eigenvalues belong to the smallest ``lambda > sigma``.  The
Krylov basis is kept orthonormal by full re-orthogonalisation (two passes of
classical Gram-Schmidt), the shifted matrix is factorised once with SuperLU.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .spectrum import Spectrum


class EigenSolverError(RuntimeError):
    pass


class NonConvergence(EigenSolverError):
    pass


class IndefiniteMass(EigenSolverError):
    pass


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int


def _start_block(n: int, b: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = np.empty((n, b))
    X[:, 0] = 1.0
    if b > 1:
        X[:, 1:] = rng.standard_normal((n, b - 1))
    return X


def _orth(V: np.ndarray | None, W: np.ndarray) -> np.ndarray:
    """Orthonormalise W against V and itself; drops numerically dependent columns."""
    for _ in range(2):
        if V is not None and V.shape[1]:
            W = W - V @ (V.T @ W)
    Q, R = np.linalg.qr(W)
    d = np.abs(np.diag(R))
    keep = d > 1e-10 * max(d.max(initial=0.0), 1e-300)
    Q = Q[:, keep]
    if V is not None and V.shape[1] and Q.shape[1]:
        Q = Q - V @ (V.T @ Q)
        Q, _ = np.linalg.qr(Q)
    return Q


def _cluster_end(vals: np.ndarray, k: int, rtol: float) -> int:
    """Smallest k' >= k such that vals[k'-1] and vals[k'] are not in one cluster."""
    while k < vals.size and abs(vals[k] - vals[k - 1]) <= rtol * max(1.0, abs(vals[k])):
        k += 1
    return k


def eigsh_lowest(A: sp.spmatrix, M: np.ndarray | sp.spmatrix, k: int, *, tol: float = 1e-9,
                 sigma: float = -1.0, seed: int = 0, block: int | None = None,
                 max_basis: int | None = None, max_restarts: int = 60,
                 cluster_rtol: float = 1e-6) -> EigenResult:
    """The ``k`` smallest eigenpairs, widened so that no cluster is split.

    Convergence means ``||A u - lambda M u||_{M^-1} <= tol max(1, |lambda|)``
    for unit ``||u||_M``; ``tol`` is raised to the rounding floor
    ``10 eps ||M^-1 A||_inf`` on very fine meshes.  The start block is a
    constant column followed by a seeded Gaussian tail, so results are
    reproducible.  ``sigma`` must be negative for a semi-definite ``A``; it is
    moved closer to zero when the wanted eigenvalues turn out to be much
    smaller than ``|sigma|``.
    """
    n = A.shape[0]
    if k < 1:
        raise ValueError("k must be positive")
    m = np.asarray(M.diagonal() if sp.issparse(M) else M, dtype=float).ravel()
    if m.shape[0] != n:
        raise ValueError("mass has the wrong size")
    if np.any(m <= 0):
        raise IndefiniteMass("mass matrix must be positive diagonal")
    if k >= n - 1:
        # tiny problems: dense fallback keeps the contract without Krylov
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        s = 1 / np.sqrt(m)
        w, Y = np.linalg.eigh(s[:, None] * Ad * s[None, :])
        U = s[:, None] * Y
        return EigenResult(w, U, np.zeros_like(w), 0)

    sqm = np.sqrt(m)
    # rounding floor: residuals cannot drop below ~eps * ||M^-1/2 A M^-1/2||
    gersh = float(np.max(abs(A).sum(axis=1).A1 / m)) if sp.issparse(A) else float(np.max(np.abs(A).sum(1) / m))
    tol_eff = max(tol, 10 * np.finfo(float).eps * gersh)
    shift = {"sigma": sigma, "lu": splu(sp.csc_matrix(A - sigma * sp.diags(m))), "moves": 0}

    def S(Y):
        return sqm[:, None] * shift["lu"].solve(np.ascontiguousarray(sqm[:, None] * Y))

    guard = 4
    want = min(k + guard, n - 1)
    b = block or min(max(want, 4), n - 1)
    cap = max_basis or min(n - 1, max(4 * want + 20, 6 * b))

    Y0 = _start_block(n, b, seed) * sqm[:, None]
    Q = _orth(None, Y0)
    total_it = 0
    for restart in range(max_restarts):
        V, SV = Q, S(Q)
        total_it += 1
        while V.shape[1] + b <= cap:
            W = _orth(V, SV[:, -Q.shape[1]:] if Q.shape[1] else SV)
            if W.shape[1] == 0:
                break
            Q = W
            V = np.hstack([V, W])
            SV = np.hstack([SV, S(W)])
            total_it += 1
        H = V.T @ SV
        H = 0.5 * (H + H.T)
        th, Z = np.linalg.eigh(H)
        th, Z = th[::-1], Z[:, ::-1]
        pos = th > 0
        th, Z = th[pos], Z[:, pos]
        lam = shift["sigma"] + 1.0 / th
        Yr = V @ Z[:, :want]
        U = Yr / sqm[:, None]
        R = A @ U - (lam[:want] * m[:, None]) * U if U.shape[1] else U
        res = np.linalg.norm(R / sqm[:, None], axis=0) / np.maximum(1.0, np.abs(lam[:want]))
        kk = _cluster_end(lam, k, cluster_rtol)
        if kk <= want and np.all(res[:kk] <= tol_eff):
            return EigenResult(lam[:kk], U[:, :kk], res[:kk], total_it)
        if kk + guard > want:
            want = min(kk + guard, n - 1)
            cap = max(cap, min(n - 1, 4 * want + 20))
        # thick restart: keep the leading Ritz vectors as the new block
        Q = _orth(None, V @ Z[:, :min(want + guard, Z.shape[1])])
        b = Q.shape[1]
        # a shift far below the wanted eigenvalues leaves theta clustered near
        # 1/|sigma|; Ritz values bound lambda from above, so moving sigma up to
        # -target/4 stays below the spectrum (A is semi-definite)
        target = float(lam[min(want, lam.size) - 1]) if lam.size else 0.0
        if sigma < 0 and target > 0 and -shift["sigma"] > target and shift["moves"] < 6:
            shift["sigma"] = -0.25 * target
            shift["lu"] = splu(sp.csc_matrix(A - shift["sigma"] * sp.diags(m)))
            shift["moves"] += 1
    raise NonConvergence(f"eigensolver did not converge after {max_restarts} restarts")


def lowest_eigenvalues(pair, k: int, tol: float = 1e-9, *, seed: int = 0, **kw) -> Spectrum:
    """``k`` smallest eigenvalues of an assembled (stiffness, mass) pair as a Spectrum.

    The returned list may hold more than ``k`` values when the ``k``-th
    eigenvalue belongs to a multiplicity cluster.
    """
    A, M = (pair.stiffness, pair.mass) if hasattr(pair, "stiffness") else pair
    r = eigsh_lowest(A, M, k, tol=tol, seed=seed, **kw)
    vals = np.maximum(r.values, 0.0)
    res = r.residuals * np.maximum(1.0, np.abs(vals))
    return Spectrum.from_values(vals, float(vals[-1]), residuals=res, rtol=1e-6, atol=1e-9)

"""Bilinear finite elements for the Neumann Laplacian on a patch mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import ManifoldMesh, Patch

_G = 0.5 * np.array([1 - 1 / np.sqrt(3), 1 + 1 / np.sqrt(3)])   # Gauss points on [0, 1]
# Q1 shape functions on the unit square, local order (0,0), (1,0), (0,1), (1,1)
_LOC = np.array([(0, 0), (1, 0), (0, 1), (1, 1)])


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class AssembledPair:
    stiffness: sp.csr_matrix
    mass: np.ndarray          # lumped mass diagonal

    @property
    def n_nodes(self) -> int:
        return self.mass.size

    def check(self, sym_tol: float = 1e-14, kernel_tol: float = 1e-12) -> dict[str, float]:
        """Symmetry, constant-kernel and mass-positivity diagnostics."""
        A = self.stiffness
        nrm = abs(A).max()
        asym = abs(A - A.T).max() / nrm if nrm else 0.0
        ones = np.ones(self.n_nodes)
        ker = np.abs(A @ ones).max() / nrm if nrm else 0.0
        return {"asymmetry": float(asym), "kernel_residual": float(ker),
                "min_mass": float(self.mass.min())}


def _shape(xi, eta):
    """Values and reference derivatives of the four Q1 functions at (xi, eta)."""
    px = np.where(_LOC[:, 0] == 1, xi, 1 - xi)
    py = np.where(_LOC[:, 1] == 1, eta, 1 - eta)
    dx = np.where(_LOC[:, 0] == 1, 1.0, -1.0) * py
    dy = np.where(_LOC[:, 1] == 1, 1.0, -1.0) * px
    return px * py, dx, dy


def _patch_blocks(p: Patch, ids: np.ndarray):
    hx, hy = np.diff(p.xs), np.diff(p.ys)
    ncx, ncy = hx.size, hy.size
    K = np.zeros((ncx, ncy, 4, 4))
    Mloc = np.zeros((ncx, ncy, 4))
    for xi in _G:
        for eta in _G:
            phi, dxi, deta = _shape(xi, eta)
            X = p.xs[:-1, None] + xi * hx[:, None] + 0 * hy[None, :]
            Y = p.ys[None, :-1] + eta * hy[None, :] + 0 * hx[:, None]
            a, b = p.a(X, Y), p.b(X, Y)
            if np.any(~(a > 0)) or np.any(~(b > 0)):
                raise AssemblyError(f"non-positive metric factor in patch {p.name}")
            w = 0.25 * hx[:, None] * hy[None, :]
            kx = w * (b / a) / (hx[:, None] ** 2)
            ky = w * (a / b) / (hy[None, :] ** 2)
            K += kx[..., None, None] * np.outer(dxi, dxi) + ky[..., None, None] * np.outer(deta, deta)
            Mloc += (w * a * b)[..., None] * phi
    I = np.arange(ncx)[:, None]
    J = np.arange(ncy)[None, :]
    g = np.stack([ids[I + dx, J + dy] for dx, dy in _LOC], axis=-1)   # (ncx, ncy, 4)
    rows = np.repeat(g[..., :, None], 4, axis=-1)
    cols = np.repeat(g[..., None, :], 4, axis=-2)
    return rows.ravel(), cols.ravel(), K.ravel(), g.ravel(), Mloc.ravel()


def assemble(mesh: ManifoldMesh) -> AssembledPair:
    """Stiffness (2x2 Gauss) and row-sum lumped mass; Neumann everywhere."""
    R, C, V, MI, MV = [], [], [], [], []
    for p, ids in zip(mesh.patches, mesh.node_ids):
        r, c, v, mi, mv = _patch_blocks(p, ids)
        R.append(r), C.append(c), V.append(v), MI.append(mi), MV.append(mv)
    n = mesh.n_nodes
    A = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(n, n))
    A = 0.5 * (A + A.T)
    A.sum_duplicates()
    m = np.bincount(np.concatenate(MI), weights=np.concatenate(MV), minlength=n)
    if np.any(m <= 0):
        raise AssemblyError("lumped mass has non-positive entries")
    return AssembledPair(A.tocsr(), m)

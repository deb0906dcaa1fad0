"""Plain-text sparse triplet export.

Matrix file::

    rows cols nnz
    i j value          (0-based indices, 17 significant digits)

Node file::

    n_nodes
    node patch i j x y (first patch that owns the node, parameter coordinates)
"""
from __future__ import annotations

from typing import IO

import numpy as np
import scipy.sparse as sp

from .mesh import ManifoldMesh


def write_triplets(A, out: IO[str]) -> None:
    M = sp.coo_matrix(A) if sp.issparse(A) else sp.coo_matrix(np.diag(np.asarray(A, float)))
    M.sum_duplicates()
    order = np.lexsort((M.col, M.row))
    out.write(f"{M.shape[0]} {M.shape[1]} {M.nnz}\n")
    for i, j, v in zip(M.row[order], M.col[order], M.data[order]):
        out.write(f"{i} {j} {v:.17g}\n")


def read_triplets(inp: IO[str]) -> sp.csr_matrix:
    rows, cols, nnz = (int(x) for x in inp.readline().split())
    data = np.loadtxt(inp, ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise ValueError(f"expected {nnz} entries, found {data.shape[0]}")
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(rows, cols))


def write_nodes(mesh: ManifoldMesh, out: IO[str]) -> None:
    seen = np.zeros(mesh.n_nodes, dtype=bool)
    lines = [None] * mesh.n_nodes
    for pk, (p, ids) in enumerate(zip(mesh.patches, mesh.node_ids)):
        for i in range(p.shape[0]):
            for j in range(p.shape[1]):
                g = ids[i, j]
                if not seen[g]:
                    seen[g] = True
                    lines[g] = f"{g} {pk} {i} {j} {p.xs[i]:.17g} {p.ys[j]:.17g}\n"
    out.write(f"{mesh.n_nodes}\n")
    out.writelines(lines)

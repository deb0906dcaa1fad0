"""Finite-difference oracle for graph Laplacians.

Each edge is cut into ``n_j = max(2, round(n l_j))`` cells.  The weighted
form ``sum_j int p_j |u'|^2`` is discretised with piecewise-linear elements
and lumped mass, which on a uniform cell reproduces the three-point stencil
for ``-(p u')'/p``.  Vertices are shared nodes, so continuity is built in and
the Kirchhoff flux condition is the natural one.  A delta coupling adds
``kappa`` to the vertex stiffness, a borderline coupling adds ``vol`` to the
vertex mass, and Dirichlet nodes are removed.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .eigsolve import eigsh_lowest
from .graph import MetricGraph, VertexCondition
from .secular import _vertex_rules
from .spectrum import Spectrum


class FDBudgetError(RuntimeError):
    pass


def fd_matrices(graph: MetricGraph, n: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """Stiffness matrix and lumped mass diagonal on the free nodes."""
    rules = _vertex_rules(graph)
    nv = len(graph.vertices)
    vidx = graph.vertex_index
    rows, cols, vals = [], [], []
    mass = [0.0] * nv
    stiff_diag = [0.0] * nv
    nxt = nv
    for e in graph.edges:
        nc = max(2, int(round(n * e.length)))
        h = e.length / nc
        nodes = [vidx[e.init]] + list(range(nxt, nxt + nc - 1)) + [vidx[e.fin]]
        nxt += nc - 1
        mass += [0.0] * (nc - 1)
        xm = (np.arange(nc) + 0.5) * h
        pm = np.array([e.density(x) for x in xm])
        for c in range(nc):
            a, b = nodes[c], nodes[c + 1]
            k = pm[c] / h
            rows += [a, b, a, b]
            cols += [a, b, b, a]
            vals += [k, k, -k, -k]
            mass[a] += 0.5 * pm[c] * h
            mass[b] += 0.5 * pm[c] * h
    m = np.array(mass)
    for k, (kind, coef) in enumerate(rules):
        if kind == "delta":
            stiff_diag[k] = coef
        elif kind == "borderline":
            m[k] += coef
    rows += list(range(nv))
    cols += list(range(nv))
    vals += stiff_diag
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nxt, nxt))
    free = np.ones(nxt, dtype=bool)
    for k, (kind, _) in enumerate(rules):
        if kind in ("dirichlet", "loose-dirichlet"):
            free[k] = False
    # a Dirichlet-decoupled vertex separates its edges; dropping the shared
    # node gives the same problem as duplicating it with zero values
    keep = np.flatnonzero(free)
    return A[keep][:, keep].tocsr(), m[keep]


def eigenvalues_fd(graph: MetricGraph, cond: VertexCondition | None, n_per_unit_length: int,
                   cutoff: float, *, max_nodes: int = 2_000_000, k0: int = 8) -> Spectrum:
    """Eigenvalues of the discretised operator up to ``cutoff``.

    Residuals are the a-posteriori ``||A u - lambda M u|| / ||u||_M`` of the
    discrete problem; the discretisation error itself is O(n^-2).
    """
    if n_per_unit_length < 16:
        raise ValueError("need at least 16 cells per unit length")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    g = graph if cond is None else graph.with_condition(cond)
    A, m = fd_matrices(g, n_per_unit_length)
    N = A.shape[0]
    if N > max_nodes:
        raise FDBudgetError(f"{N} nodes exceed the budget of {max_nodes}")
    k = min(k0, N - 1)
    while True:
        r = eigsh_lowest(A, m, k, tol=1e-10)
        if r.values[-1] > cutoff or r.values.size >= N - 1:
            break
        k = min(2 * k, N - 1)
    vals = np.maximum(r.values, 0.0)
    res = r.residuals * np.maximum(1.0, vals)
    keep = vals <= cutoff
    return Spectrum.from_values(vals[keep], cutoff, residuals=res[keep], rtol=1e-7, atol=1e-9)

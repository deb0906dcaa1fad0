"""Patch decomposition of a two-dimensional graph-like manifold.

Every patch is a parameter rectangle carrying a diagonal metric

    g = a(x, y)**2 dx**2 + b(x, y)**2 dy**2,

so the Dirichlet energy density is ``(b/a) u_x**2 + (a/b) u_y**2`` and the
volume density is ``a b``.  Three kinds occur:

edge
    ``[0, L] x [-1, 1]`` with ``a = 1``, ``b = eps r(x)`` (product metric over
    ``F = [-1, 1]``, Neumann on the long sides).
vertex
    the square ``[0, 2]**2`` with conformal metric ``a = b = rho``; ports are
    whole sides, in the order left, right, bottom, top.
bottleneck
    ``[0, 1] x [-1, 1]`` with ``s = 0`` at the vertex and ``s = 1`` at the
    edge, ``a = a(s)`` and ``b = R(s)``.

Patches are glued side to side with node-to-node identification.  Along a
glued side the parameter runs from 0 to 2 (edge and bottleneck coordinate
``y`` maps to ``t = y + 1``), and the tangential line densities agree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..graph import MetricGraph
from ..regimes import ScalingRegime

SIDES = ("x0", "x1", "y0", "y1")
DEFAULT_VERTEX_VOL = 0.75
MIN_EDGE_CELLS = 8
NODE_BUDGET = 400_000


class MeshError(ValueError):
    pass


class PortError(MeshError):
    """A port cannot be realised (too many edges or cross-section too wide)."""


class MeshBudgetError(MeshError):
    pass


def smoothstep(t):
    """C1 ramp: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


@dataclass
class Patch:
    kind: str
    name: str
    xs: np.ndarray
    ys: np.ndarray
    a: Callable[[np.ndarray, np.ndarray], np.ndarray]
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.xs.size, self.ys.size

    @property
    def n_nodes(self) -> int:
        return self.xs.size * self.ys.size

    def node_fields(self) -> dict[str, np.ndarray]:
        """Energy weights ``w_x = b/a``, ``w_y = a/b`` and volume weight ``a b`` at nodes."""
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        a, b = self.a(X, Y), self.b(X, Y)
        return {"w_x": b / a, "w_y": a / b, "rho": a * b}

    def side_index(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        if side == "x0":
            return np.zeros(ny, int), np.arange(ny)
        if side == "x1":
            return np.full(ny, nx - 1), np.arange(ny)
        if side == "y0":
            return np.arange(nx), np.zeros(nx, int)
        if side == "y1":
            return np.arange(nx), np.full(nx, ny - 1)
        raise ValueError(side)

    def side_coords(self, side: str) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.side_index(side)
        return self.xs[i], self.ys[j]

    def side_parameter(self, side: str) -> np.ndarray:
        """Position along the side on the common scale [0, 2]."""
        x, y = self.side_coords(side)
        t = y if side in ("x0", "x1") else x
        lo = self.ys[0] if side in ("x0", "x1") else self.xs[0]
        return t - lo

    def tangential_density(self, side: str) -> np.ndarray:
        x, y = self.side_coords(side)
        return self.b(x, y) if side in ("x0", "x1") else self.a(x, y)


@dataclass(frozen=True)
class Interface:
    patch_a: int
    side_a: str
    patch_b: int
    side_b: str


@dataclass
class ManifoldMesh:
    patches: list[Patch]
    interfaces: list[Interface]
    node_ids: list[np.ndarray]
    n_nodes: int
    regime: ScalingRegime
    h: float
    info: dict = field(default_factory=dict)

    def patch_count(self, kind: str) -> int:
        return sum(1 for p in self.patches if p.kind == kind)

    def interface_mismatch(self) -> float:
        """Largest mismatch of glued side parameters and line densities."""
        worst = 0.0
        for itf in self.interfaces:
            pa, pb = self.patches[itf.patch_a], self.patches[itf.patch_b]
            dt = np.abs(pa.side_parameter(itf.side_a) - pb.side_parameter(itf.side_b))
            da, db = pa.tangential_density(itf.side_a), pb.tangential_density(itf.side_b)
            rel = np.abs(da - db) / np.maximum(np.abs(da), 1e-300)
            worst = max(worst, float(dt.max()), float(rel.max()))
        return worst

    def volume(self) -> float:
        """Exact-ish volume by 4x4 Gauss quadrature per cell (for audits)."""
        g, w = np.polynomial.legendre.leggauss(4)
        tot = 0.0
        for p in self.patches:
            hx, hy = np.diff(p.xs), np.diff(p.ys)
            qx = (p.xs[:-1, None] + 0.5 * hx[:, None] * (1 + g[None, :])).ravel()
            qy = (p.ys[:-1, None] + 0.5 * hy[:, None] * (1 + g[None, :])).ravel()
            wx = (0.5 * hx[:, None] * w[None, :]).ravel()
            wy = (0.5 * hy[:, None] * w[None, :]).ravel()
            X, Y = np.meshgrid(qx, qy, indexing="ij")
            tot += float(np.sum(wx[:, None] * wy[None, :] * p.a(X, Y) * p.b(X, Y)))
        return tot


# ---------------------------------------------------------------------------
# metric profiles


def _edge_patch(name, length, r, eps, xs, ys, meta) -> Patch:
    return Patch("edge", name, xs, ys,
                 a=lambda x, y: np.ones_like(x, dtype=float),
                 b=lambda x, y: eps * r(x) + 0.0 * y, meta=meta)


def _vertex_blend(rho_in: float, rho_port: float, port_sides: list[str], width: float = 1.0):
    """Conformal factor equal to ``rho_port`` on port sides and ``rho_in`` inside.

    The blend weight is the product of smoothsteps of the parameter
    distance to each port side, so it vanishes exactly on every port side.
    """
    def rho(x, y):
        phi = np.ones(np.broadcast(x, y).shape)
        for s in port_sides:
            d = {"x0": x, "x1": 2.0 - x, "y0": y, "y1": 2.0 - y}[s]
            phi = phi * smoothstep(np.asarray(d) / width)
        return rho_port + (rho_in - rho_port) * phi
    return rho


def _bottleneck(name, R_top, R_edge, a_const, delta_plus, ns_neck, ns_tail, ys, meta) -> Patch:
    """R falls from ``R_top`` at s=0 to ``R_edge`` at s=delta_plus, then stays."""
    dp = min(max(delta_plus, 1e-6), 1.0)
    s1 = np.linspace(0.0, dp, ns_neck + 1)
    s2 = np.linspace(dp, 1.0, ns_tail + 1)[1:] if dp < 1.0 else np.empty(0)
    xs = np.concatenate([s1, s2])

    def R(s, y):
        return R_edge + (R_top - R_edge) * (1.0 - smoothstep(np.asarray(s) / dp)) + 0.0 * y

    return Patch("bottleneck", name, xs, ys,
                 a=lambda s, y: np.full(np.broadcast(s, y).shape, a_const),
                 b=R, meta=dict(meta, R_top=R_top, R_edge=R_edge, a=a_const, delta_plus=dp))


def _even_cells(w: float, h: float) -> int:
    n = max(4, int(math.ceil(w / h - 1e-12)))
    return n + (n % 2)


# ---------------------------------------------------------------------------
# builder


def vertex_size_constant(vol: float) -> float:
    """Vertex half-size constant ``c_V`` with normalised area ``(2 c_V)**2 / 2 = vol``."""
    return math.sqrt(vol / 2.0)


def build_mesh(graph: MetricGraph, regime: ScalingRegime, h: float, *,
               budget: int = NODE_BUDGET, default_vertex_vol: float = DEFAULT_VERTEX_VOL,
               neck_cells: int = 6, fast_vertex_scale: float = 0.5) -> ManifoldMesh:
    """Discretise ``M_eps`` for ``graph`` at scale ``regime.eps`` with spacing ``h``.

    fast
        interior vertices get a square with conformal factor blended from
        ``r_v eps**alpha`` inside to ``eps r_v`` on port sides; the attached
        edges are shortened by the vertex half-size ``r_v eps**alpha`` so that
        path lengths through the vertex match the graph.  Loose ends are plain
        Neumann edge ends.
    slow, borderline
        every vertex (loose ends included) gets a square with constant factor
        ``c_V eps**alpha``, ``c_V = sqrt(vol/2)``, joined to each edge by a
        bottleneck whose radius falls from ``c_V eps**alpha`` to ``eps r``
        within ``s <= delta_plus`` and whose longitudinal factor is ``eps**2``.
        Vertices with ``vol = 0`` use ``default_vertex_vol``.
    """
    tag, eps, alpha = regime.tag, regime.eps, regime.alpha
    if tag == "nondecay":
        raise MeshError("the non-decaying regime has no manifold model here")
    if not h > 0:
        raise MeshError("h must be positive")
    if graph.loose_end != "neumann":
        raise MeshError("manifold models support Neumann loose ends only")
    nv = len(graph.vertices)
    vidx = graph.vertex_index
    deg = [graph.degree(k) for k in range(nv)]
    for k in range(nv):
        if deg[k] > 4:
            raise PortError(f"vertex {graph.vertices[k].id!r} has {deg[k]} edges; at most 4 ports")
    r_end = []
    for e in graph.edges:
        r_end.append((float(e.density(0.0)), float(e.density(e.length))))

    def port_r(he):
        return r_end[he.edge][he.end]

    with_vertex = [deg[k] >= 2 if tag == "fast" else True for k in range(nv)]
    vscale = eps ** alpha
    rho_in, r_v = [0.0] * nv, [0.0] * nv
    for k in range(nv):
        if not with_vertex[k]:
            continue
        if tag == "fast":
            r_v[k] = max(port_r(he) for he in graph.half_edges[k])
            rho_in[k] = fast_vertex_scale * r_v[k] * vscale
        else:
            vol = graph.vertices[k].vol or default_vertex_vol
            rho_in[k] = vertex_size_constant(vol) * vscale
            for he in graph.half_edges[k]:
                if rho_in[k] < eps * port_r(he):
                    raise PortError(
                        f"edge cross-section 2*eps*r={2 * eps * port_r(he):.3g} is wider than "
                        f"vertex {graph.vertices[k].id!r} ({2 * rho_in[k]:.3g})")

    # global transverse cell count, shared by every glued side
    widths = [2 * eps * max(float(np.max(e.density(np.linspace(0, e.length, 65)))), 0.0)
              for e in graph.edges]
    widths += [2 * x for x in rho_in]
    nt = _even_cells(max(widths), h)
    ys = np.linspace(-1.0, 1.0, nt + 1)
    ts = np.linspace(0.0, 2.0, nt + 1)

    patches: list[Patch] = []
    interfaces: list[Interface] = []
    trim = [[0.0, 0.0] for _ in graph.edges]
    half = [0.0] * nv
    if tag == "fast":
        # metric distance from a port midpoint to the centre of the square
        q = np.linspace(0.0, 1.0, 401)
        for k in range(nv):
            if with_vertex[k]:
                sides = list(SIDES[:deg[k]])
                rho = _vertex_blend(rho_in[k], eps * r_v[k], sides)
                half[k] = float(np.trapezoid(rho(q, np.ones_like(q)), q))
        for j, e in enumerate(graph.edges):
            for end, vid in ((0, e.init), (1, e.fin)):
                k = vidx[vid]
                if with_vertex[k]:
                    trim[j][end] = half[k]

    edge_patch = []
    for j, e in enumerate(graph.edges):
        x0, x1 = trim[j][0], e.length - trim[j][1]
        L = x1 - x0
        nx = int(math.ceil(L / h - 1e-12))
        if nx < MIN_EDGE_CELLS:
            raise MeshError(f"edge {e.id!r}: {nx} cells along the edge, need {MIN_EDGE_CELLS}; "
                            f"reduce h")
        xs = np.linspace(0.0, L, nx + 1)
        dens = e.density
        r = (lambda dens, x0: (lambda x: dens(np.asarray(x) + x0)))(dens, x0)
        edge_patch.append(len(patches))
        patches.append(_edge_patch(f"edge:{e.id}", L, r, eps, xs, ys,
                                   {"edge": e.id, "trim": (x0, e.length - x1)}))

    vertex_patch = [None] * nv
    for k in range(nv):
        if not with_vertex[k]:
            continue
        hes = graph.half_edges[k]
        sides = list(SIDES[:len(hes)])
        if tag == "fast":
            rho = _vertex_blend(rho_in[k], eps * r_v[k], sides)
        else:
            c = rho_in[k]
            rho = (lambda c: (lambda x, y: np.full(np.broadcast(x, y).shape, c)))(c)
        vertex_patch[k] = len(patches)
        patches.append(Patch("vertex", f"vertex:{graph.vertices[k].id}", ts, ts, a=rho, b=rho,
                             meta={"vertex": graph.vertices[k].id, "rho_in": rho_in[k],
                                   "ports": sides}))
        for side, he in zip(sides, hes):
            e_side = "x0" if he.end == 0 else "x1"
            ep = edge_patch[he.edge]
            r_here = port_r(he)
            if tag == "fast" and abs(r_here - r_v[k]) <= 1e-14 * r_v[k]:
                interfaces.append(Interface(vertex_patch[k], side, ep, e_side))
                continue
            if tag == "fast":
                top, a_const, dp, ns_neck, ns_tail = eps * r_v[k], eps, 1.0, neck_cells, 0
            else:
                top, a_const = rho_in[k], eps * eps
                dp, ns_neck, ns_tail = regime.delta_plus, neck_cells, 2
            bn = _bottleneck(f"neck:{graph.vertices[k].id}:{he.label}", top, eps * r_here,
                             a_const, dp, ns_neck, ns_tail, ys,
                             {"vertex": graph.vertices[k].id, "half_edge": he.label})
            bi = len(patches)
            patches.append(bn)
            interfaces.append(Interface(vertex_patch[k], side, bi, "x0"))
            interfaces.append(Interface(bi, "x1", ep, e_side))

    total = sum(p.n_nodes for p in patches)
    if total > budget:
        raise MeshBudgetError(f"mesh needs {total} patch nodes, budget is {budget}")
    node_ids, n_nodes = _number_nodes(patches, interfaces)
    mesh = ManifoldMesh(patches, interfaces, node_ids, n_nodes, regime, h,
                        info={"n_transverse": nt, "vertex_rho": rho_in, "trim": trim})
    if mesh.interface_mismatch() > 1e-12:
        raise PortError(f"interface mismatch {mesh.interface_mismatch():.3g}")
    return mesh


def _number_nodes(patches: list[Patch], interfaces: list[Interface]):
    offsets = np.cumsum([0] + [p.n_nodes for p in patches])
    parent = np.arange(offsets[-1])

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for itf in interfaces:
        pa, pb = patches[itf.patch_a], patches[itf.patch_b]
        ia, ja = pa.side_index(itf.side_a)
        ib, jb = pb.side_index(itf.side_b)
        if ia.size != ib.size:
            raise PortError(f"non-conforming interface {pa.name}/{pb.name}")
        ga = offsets[itf.patch_a] + ia * pa.shape[1] + ja
        gb = offsets[itf.patch_b] + ib * pb.shape[1] + jb
        for u, v in zip(ga, gb):
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
    roots = np.array([find(i) for i in range(offsets[-1])])
    _, compact = np.unique(roots, return_inverse=True)
    ids = [compact[offsets[i]:offsets[i + 1]].reshape(p.shape) for i, p in enumerate(patches)]
    return ids, int(compact.max()) + 1


# ---------------------------------------------------------------------------
# audits


def envelope_audit(mesh: ManifoldMesh, samples: int = 2001) -> list[str]:
    """Check every bottleneck profile against the admissible envelopes.

    With ``s = 0`` at the vertex and ``s = 1`` at the edge the profile must
    satisfy ``a <= eps**alpha`` away from the last ``delta_0`` stretch and
    ``a <= 1`` on it, ``eps r_- <= R <= vertex scale`` on ``[0, delta_plus]``
    and ``R <= eps r_+`` beyond.  The vertex scale is ``c_V eps**alpha``.
    Returns a list of violations (empty when admissible).
    """
    reg = mesh.regime
    eps, d0 = reg.eps, reg.delta0
    bad = []
    s = np.linspace(0.0, 1.0, samples)
    for p in mesh.patches:
        if p.kind != "bottleneck" or reg.tag == "fast":
            continue
        top, r_edge, dp = p.meta["R_top"], p.meta["R_edge"], p.meta["delta_plus"]
        a = p.a(s, 0.0 * s)
        R = p.b(s, 0.0 * s)
        tol = 1e-12
        lim_a = np.where(s <= 1.0 - d0, max(reg.vertex_scale, top), 1.0)
        if np.any(a > lim_a + tol):
            bad.append(f"{p.name}: a exceeds its envelope")
        if np.any(R < r_edge - tol):
            bad.append(f"{p.name}: R below eps r_-")
        if np.any(R[s <= dp] > top + tol):
            bad.append(f"{p.name}: R above the vertex scale near the vertex")
        if np.any(R[s > dp] > max(r_edge, eps * reg.r_plus) + tol):
            bad.append(f"{p.name}: R above eps r_+ beyond delta_plus")
    return bad

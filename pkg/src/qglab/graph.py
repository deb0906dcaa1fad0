"""Metric graphs, density profiles and vertex conditions.

A :class:`MetricGraph` is immutable once built.  Every edge carries a length
and a polynomial density profile ``p_j`` on its local coordinate ``[0, l_j]``;
every vertex carries a vertex-volume parameter ``vol`` used by the
energy-dependent (borderline) coupling.

Graphs are usually built from a plain mapping (parsed from YAML/JSON) with
:func:`build_metric_graph`, or with the small constructors at the bottom of
this module (:func:`interval`, :func:`star`, :func:`loop`, ...).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

MAX_POLY_DEGREE = 8
POSITIVITY_GRID = 1024


class GraphError(ValueError):
    """Base class for rejected graph descriptions."""


class GraphParseError(GraphError):
    """Malformed document: unknown keys, wrong types, missing fields."""


class NonPositiveLength(GraphError):
    pass


class DanglingEndpoint(GraphError):
    pass


class NonPositiveDensity(GraphError):
    pass


class DisconnectedGraph(GraphError):
    pass


class InvalidCondition(GraphError):
    pass


@dataclass(frozen=True)
class DensityProfile:
    """Polynomial density ``p(x) = sum_k coeffs[k] x**k`` on ``[0, length]``."""

    coeffs: tuple[float, ...] = (1.0,)

    @classmethod
    def constant(cls, c: float = 1.0) -> "DensityProfile":
        return cls((float(c),))

    @property
    def is_constant(self) -> bool:
        return all(c == 0.0 for c in self.coeffs[1:])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        # Horner, works for scalars and arrays alike
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.coeffs[-1])
        for c in reversed(self.coeffs[:-1]):
            out = out * x + c
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.coeffs) == 1:
            out = np.zeros_like(x)
        else:
            dc = [k * c for k, c in enumerate(self.coeffs)][1:]
            out = np.full_like(x, dc[-1])
            for c in reversed(dc[:-1]):
                out = out * x + c
        return out if out.ndim else float(out)

    def check_positive(self, length: float) -> None:
        """Sample on a 1024-point grid plus both endpoints.

        Sign changes narrower than the grid spacing go unnoticed; with the
        degree capped at 8 this only matters for pathological coefficients.
        """
        xs = np.linspace(0.0, length, POSITIVITY_GRID)
        vals = self(np.concatenate([xs, [0.0, length]]))
        if not np.all(np.isfinite(vals)) or np.min(vals) <= 0.0:
            raise NonPositiveDensity(
                f"density {self.coeffs} is not strictly positive on [0, {length}]"
            )


@dataclass(frozen=True)
class VertexCondition:
    """One of the four supported vertex couplings.

    ``kind`` is ``"kirchhoff"``, ``"delta"`` (with coupling ``kappa``),
    ``"dirichlet"`` (fully decoupled edges) or ``"borderline"`` (the
    energy-dependent coupling whose strength is the vertex volume).
    """

    kind: str = "kirchhoff"
    kappa: float = 0.0

    KINDS = ("kirchhoff", "delta", "dirichlet", "borderline")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidCondition(f"unknown vertex condition {self.kind!r}")
        if self.kind != "delta" and self.kappa != 0.0:
            raise InvalidCondition("kappa is only meaningful for delta coupling")
        if not math.isfinite(self.kappa):
            raise InvalidCondition("kappa must be finite")

    @classmethod
    def parse(cls, text: str) -> "VertexCondition":
        text = text.strip().lower()
        if text.startswith("delta"):
            _, _, val = text.partition(":")
            if not val:
                raise InvalidCondition("delta coupling needs a value, e.g. delta:1.5")
            try:
                return cls("delta", float(val))
            except ValueError as exc:
                raise InvalidCondition(f"bad delta coupling {val!r}") from exc
        if text in ("dirichlet", "dirichlet-decoupled"):
            return cls("dirichlet")
        return cls(text)

    def __str__(self) -> str:
        return f"delta:{self.kappa!r}" if self.kind == "delta" else self.kind


KIRCHHOFF = VertexCondition("kirchhoff")
DIRICHLET = VertexCondition("dirichlet")
BORDERLINE = VertexCondition("borderline")


@dataclass(frozen=True)
class Vertex:
    id: str
    vol: float = 0.0
    condition: VertexCondition | None = None


@dataclass(frozen=True)
class Edge:
    id: str
    init: str
    fin: str
    length: float
    density: DensityProfile = DensityProfile()

    @property
    def is_loop(self) -> bool:
        return self.init == self.fin


@dataclass(frozen=True)
class HalfEdge:
    """Edge end attached to a vertex; ``end`` is 0 for x=0 and 1 for x=l."""

    edge: int
    end: int

    @property
    def label(self) -> str:
        return f"{self.edge}.{self.end}"


@dataclass(frozen=True)
class MetricGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    condition: VertexCondition = KIRCHHOFF
    loose_end: str = "neumann"
    half_edges: tuple[tuple[HalfEdge, ...], ...] = field(default=(), compare=False)

    @property
    def vertex_index(self) -> dict[str, int]:
        return {v.id: k for k, v in enumerate(self.vertices)}

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges))

    @property
    def constant_density(self) -> bool:
        return all(e.density.is_constant for e in self.edges)

    def degree(self, k: int) -> int:
        return len(self.half_edges[k])

    def condition_at(self, k: int) -> VertexCondition:
        return self.vertices[k].condition or self.condition

    def with_condition(self, cond: VertexCondition) -> "MetricGraph":
        """Same graph with ``cond`` everywhere (per-vertex overrides dropped)."""
        verts = tuple(Vertex(v.id, v.vol) for v in self.vertices)
        return _finalize(verts, self.edges, cond, self.loose_end)

    def with_volumes(self, vols: Mapping[str, float] | float) -> "MetricGraph":
        if not isinstance(vols, Mapping):
            vols = {v.id: float(vols) for v in self.vertices}
        verts = tuple(
            Vertex(v.id, float(vols.get(v.id, v.vol)), v.condition) for v in self.vertices
        )
        return _finalize(verts, self.edges, self.condition, self.loose_end)


# ---------------------------------------------------------------------------
# construction and validation

_TOP_KEYS = {"vertices", "edges", "condition", "loose_end"}
_VERTEX_KEYS = {"id", "vol", "condition"}
_EDGE_KEYS = {"id", "init", "fin", "length", "density"}
_DENSITY_KEYS = {"kind", "value", "coeffs"}


def _reject_unknown(obj: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(obj, Mapping):
        raise GraphParseError(f"{where}: expected a mapping, got {type(obj).__name__}")
    extra = set(obj) - allowed
    if extra:
        raise GraphParseError(f"{where}: unknown keys {sorted(map(str, extra))}")


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise GraphParseError(f"{where}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise GraphParseError(f"{where}: non-finite value {x!r}")
    return float(x)


def _parse_density(spec: Any, where: str) -> DensityProfile:
    if spec is None:
        return DensityProfile()
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return DensityProfile.constant(_number(spec, where))
    _reject_unknown(spec, _DENSITY_KEYS, where)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        if "coeffs" in spec:
            raise GraphParseError(f"{where}: constant density takes 'value', not 'coeffs'")
        return DensityProfile.constant(_number(spec.get("value", 1.0), where + ".value"))
    if kind == "polynomial":
        if "value" in spec:
            raise GraphParseError(f"{where}: polynomial density takes 'coeffs', not 'value'")
        coeffs = spec.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise GraphParseError(f"{where}.coeffs: expected a non-empty list")
        if len(coeffs) - 1 > MAX_POLY_DEGREE:
            raise GraphParseError(f"{where}: polynomial degree capped at {MAX_POLY_DEGREE}")
        cs = [_number(c, f"{where}.coeffs[{i}]") for i, c in enumerate(coeffs)]
        while len(cs) > 1 and cs[-1] == 0.0:
            cs.pop()
        return DensityProfile(tuple(cs))
    raise GraphParseError(f"{where}.kind: expected 'constant' or 'polynomial', got {kind!r}")


def _parse_condition(spec: Any, where: str) -> VertexCondition:
    if isinstance(spec, VertexCondition):
        return spec
    if not isinstance(spec, str):
        raise GraphParseError(f"{where}: expected a condition string, got {spec!r}")
    return VertexCondition.parse(spec)


def build_metric_graph(spec: Mapping[str, Any]) -> MetricGraph:
    """Validate a graph description and materialise half-edge incidence.

    Raises a :class:`GraphError` subclass for every rejected description.
    """
    _reject_unknown(spec, _TOP_KEYS, "graph")
    raw_vertices = spec.get("vertices")
    raw_edges = spec.get("edges")
    if not isinstance(raw_vertices, list) or not raw_vertices:
        raise GraphParseError("graph.vertices: expected a non-empty list")
    if not isinstance(raw_edges, list) or not raw_edges:
        raise GraphParseError("graph.edges: expected a non-empty list")

    vertices = []
    for i, rv in enumerate(raw_vertices):
        where = f"vertices[{i}]"
        _reject_unknown(rv, _VERTEX_KEYS, where)
        if "id" not in rv:
            raise GraphParseError(f"{where}: missing 'id'")
        vol = _number(rv.get("vol", 0.0), where + ".vol")
        if vol < 0:
            raise GraphParseError(f"{where}.vol: must be >= 0")
        cond = _parse_condition(rv["condition"], where) if "condition" in rv else None
        vertices.append(Vertex(str(rv["id"]), vol, cond))

    edges = []
    for i, re_ in enumerate(raw_edges):
        where = f"edges[{i}]"
        _reject_unknown(re_, _EDGE_KEYS, where)
        for key in ("init", "fin", "length"):
            if key not in re_:
                raise GraphParseError(f"{where}: missing {key!r}")
        length = _number(re_["length"], where + ".length")
        edges.append(
            Edge(
                str(re_.get("id", i)),
                str(re_["init"]),
                str(re_["fin"]),
                length,
                _parse_density(re_.get("density"), where + ".density"),
            )
        )
    cond = _parse_condition(spec.get("condition", "kirchhoff"), "graph.condition")
    loose = spec.get("loose_end", "neumann")
    return _finalize(tuple(vertices), tuple(edges), cond, loose)


def _finalize(vertices, edges, cond, loose_end) -> MetricGraph:
    if loose_end not in ("neumann", "dirichlet"):
        raise GraphParseError(f"loose_end must be 'neumann' or 'dirichlet', got {loose_end!r}")
    ids = [v.id for v in vertices]
    if len(set(ids)) != len(ids):
        raise GraphParseError("duplicate vertex ids")
    eids = [e.id for e in edges]
    if len(set(eids)) != len(eids):
        raise GraphParseError("duplicate edge ids")
    index = {v: k for k, v in enumerate(ids)}

    incidence: list[list[HalfEdge]] = [[] for _ in vertices]
    for j, e in enumerate(edges):
        if not e.length > 0:
            raise NonPositiveLength(f"edge {e.id!r} has length {e.length}")
        for end, vid in ((0, e.init), (1, e.fin)):
            if vid not in index:
                raise DanglingEndpoint(f"edge {e.id!r} references unknown vertex {vid!r}")
            # a loop lands here twice and so contributes two half-edge labels
            incidence[index[vid]].append(HalfEdge(j, end))
        e.density.check_positive(e.length)

    # connectivity by union-find over vertices
    parent = list(range(len(vertices)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in edges:
        parent[find(index[e.init])] = find(index[e.fin])
    if len({find(k) for k in range(len(vertices))}) != 1:
        raise DisconnectedGraph("graph is not connected")

    return MetricGraph(
        vertices, edges, cond, loose_end, tuple(tuple(h) for h in incidence)
    )


def load_graph(path: str | Path) -> MetricGraph:
    """Read a YAML (or JSON) graph description from ``path``."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        spec = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise GraphParseError(f"{path}: {exc}") from exc
    return build_metric_graph(spec)


def graph_to_spec(g: MetricGraph) -> dict[str, Any]:
    """Inverse of :func:`build_metric_graph` (up to default values)."""
    verts = []
    for v in g.vertices:
        d: dict[str, Any] = {"id": v.id, "vol": v.vol}
        if v.condition is not None:
            d["condition"] = str(v.condition)
        verts.append(d)
    edges = []
    for e in g.edges:
        if e.density.is_constant:
            dens = {"kind": "constant", "value": e.density.coeffs[0]}
        else:
            dens = {"kind": "polynomial", "coeffs": list(e.density.coeffs)}
        edges.append(
            {"id": e.id, "init": e.init, "fin": e.fin, "length": e.length, "density": dens}
        )
    return {
        "vertices": verts,
        "edges": edges,
        "condition": str(g.condition),
        "loose_end": g.loose_end,
    }


# ---------------------------------------------------------------------------
# small constructors


def _simple(vertices: Iterable[tuple[str, float]], edges, cond=KIRCHHOFF, loose_end="neumann"):
    verts = tuple(Vertex(vid, vol) for vid, vol in vertices)
    es = tuple(
        Edge(str(i), a, b, float(l), DensityProfile.constant(1.0) if p is None else p)
        for i, (a, b, l, p) in enumerate(edges)
    )
    return _finalize(verts, es, cond, loose_end)


def interval(length: float = 1.0, *, cond: VertexCondition = KIRCHHOFF,
             loose_end: str = "neumann", vol: float = 0.0,
             density: DensityProfile | None = None) -> MetricGraph:
    return _simple([("a", vol), ("b", vol)], [("a", "b", length, density)], cond, loose_end)


def star(n: int = 3, length: float = 1.0, *, cond: VertexCondition = KIRCHHOFF,
         loose_end: str = "neumann", vol: float = 0.0) -> MetricGraph:
    verts = [("c", vol)] + [(f"l{i}", vol) for i in range(n)]
    return _simple(verts, [("c", f"l{i}", length, None) for i in range(n)], cond, loose_end)


def loop(length: float = 1.0, *, cond: VertexCondition = KIRCHHOFF, vol: float = 0.0) -> MetricGraph:
    return _simple([("v", vol)], [("v", "v", length, None)], cond)


def flower(r: int, length: float = 1.0, *, cond: VertexCondition = KIRCHHOFF,
           vol: float = 0.0) -> MetricGraph:
    """One vertex with ``r`` loops: the period cell of an r-generator Cayley graph."""
    return _simple([("v", vol)], [("v", "v", length, None)] * r, cond)

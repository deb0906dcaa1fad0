"""Limit spectra of thin graph-like manifolds for each vertex-volume regime."""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .graph import DIRICHLET, KIRCHHOFF, MetricGraph
from .regimes import ScalingRegime
from .secular import eigenvalues_borderline, eigenvalues_secular
from .spectrum import Spectrum


class MissingVertexSpectra(ValueError):
    pass


def edge_dirichlet_spectrum(graph: MetricGraph, cutoff: float, tol: float = 1e-12) -> Spectrum:
    """Union of the Dirichlet spectra of all edges, taken as separate intervals."""
    if graph.constant_density:
        vals = []
        for e in graph.edges:
            kmax = int(math.floor(e.length * math.sqrt(cutoff) / math.pi))
            vals += [(math.pi * k / e.length) ** 2 for k in range(1, kmax + 1)]
        vals = [v for v in vals if v <= cutoff]
        return Spectrum.from_values(vals, cutoff, rtol=1e-12, atol=1e-12)
    return eigenvalues_secular(graph.with_condition(DIRICHLET), cutoff, tol)


def _vertex_lists(graph: MetricGraph, vertex_spectra) -> list[Sequence[float]]:
    if isinstance(vertex_spectra, Mapping):
        missing = [v.id for v in graph.vertices if v.id not in vertex_spectra]
        if missing:
            raise MissingVertexSpectra(f"no spectrum for vertices {missing}")
        return [vertex_spectra[v.id] for v in graph.vertices]
    lists = list(vertex_spectra)
    if len(lists) != len(graph.vertices):
        raise MissingVertexSpectra("need one spectrum per vertex")
    return lists


def limit_spectrum(graph: MetricGraph, regime: ScalingRegime | str, cutoff: float, *,
                   vertex_spectra=None, tol: float = 1e-12) -> Spectrum:
    """Spectrum of the limit operator for ``regime`` up to ``cutoff``.

    fast
        weighted Kirchhoff Laplacian of the graph.
    slow
        ``|K|`` zero eigenvalues together with the Dirichlet spectra of the edges.
    borderline
        energy-dependent coupling with the vertex volumes stored on the graph.
    nondecay
        edge Dirichlet spectra merged with the supplied closed-vertex spectra
        (a mapping ``vertex id -> eigenvalues`` or one list per vertex).
    """
    tag = regime if isinstance(regime, str) else regime.tag
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if tag == "fast":
        return eigenvalues_secular(graph.with_condition(KIRCHHOFF), cutoff, tol)
    if tag == "borderline":
        return eigenvalues_borderline(graph, cutoff, tol)
    edges = edge_dirichlet_spectrum(graph, cutoff, tol)
    if tag == "slow":
        zero = Spectrum((0.0,), (len(graph.vertices),), (0.0,), cutoff)
        return Spectrum.merge([zero, edges], cutoff)
    if tag == "nondecay":
        if vertex_spectra is None:
            raise MissingVertexSpectra("the nondecay limit needs the vertex spectra")
        parts = [edges]
        for lst in _vertex_lists(graph, vertex_spectra):
            v = np.asarray(lst, dtype=float)
            if np.any(v < 0):
                raise ValueError("vertex eigenvalues must be non-negative")
            parts.append(Spectrum.from_values(v[v <= cutoff], cutoff, rtol=1e-12, atol=1e-12))
        return Spectrum.merge(parts, cutoff, rtol=1e-12)
    raise ValueError(f"unknown regime {tag!r}")

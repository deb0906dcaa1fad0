"""Spectra of quantum graphs, periodic band gaps and thin-manifold limits."""
from .graph import MetricGraph, VertexCondition, build_metric_graph, load_graph
from .secular import eigenvalues_borderline, eigenvalues_secular
from .spectrum import Spectrum

__version__ = "0.1.0"

__all__ = ["MetricGraph", "VertexCondition", "Spectrum", "build_metric_graph", "load_graph",
           "eigenvalues_secular", "eigenvalues_borderline", "__version__"]

"""Convergence of thin-manifold eigenvalues towards the graph limit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..eigsolve import eigsh_lowest
from ..graph import KIRCHHOFF, MetricGraph
from ..limits import limit_spectrum
from ..regimes import ScalingRegime
from ..spectrum import Spectrum
from .assemble import assemble
from .mesh import DEFAULT_VERTEX_VOL, NODE_BUDGET, MeshBudgetError, build_mesh

ZERO_TOL = 1e-8


@dataclass(frozen=True)
class HPolicy:
    """Mesh spacing ``h`` and its refinement ``h / refine`` for the self-convergence check.

    An eigenvalue is certified at a given eps when
    ``|lambda(h) - lambda(h/refine)| <= ratio * |lambda(h/refine) - lambda_limit|``.
    """

    h: float = 0.01
    refine: int = 2
    ratio: float = 0.1
    budget: int = NODE_BUDGET

    def __post_init__(self):
        if not self.h > 0 or self.refine < 2 or not 0 < self.ratio < 1:
            raise ValueError("invalid h policy")


@dataclass(frozen=True)
class EpsRun:
    eps: float
    h: float
    n_nodes: int
    coarse: tuple[float, ...]
    fine: tuple[float, ...]
    self_convergence: tuple[float, ...]


@dataclass(frozen=True)
class ConvergenceReport:
    regime: str
    alpha: float
    eps: tuple[float, ...]
    k: int
    runs: tuple[EpsRun, ...]
    limit: Spectrum
    deviation: tuple[tuple[float, ...], ...]      # [eps][index]
    certified: tuple[tuple[bool, ...], ...]       # [eps][index]
    trend: tuple[str, ...]                        # per index
    notes: tuple[str, ...] = field(default=())

    @property
    def all_certified(self) -> bool:
        return all(all(row) for row in self.certified)

    def values(self, index: int) -> list[float]:
        """Fine-mesh eigenvalue ``index`` (0-based) along the eps list."""
        return [r.fine[index] for r in self.runs]


def effective_graph(graph: MetricGraph, tag: str,
                    default_vertex_vol: float = DEFAULT_VERTEX_VOL) -> MetricGraph:
    """Graph as realised by the mesh: Kirchhoff for fast, default volumes filled in otherwise."""
    if tag == "fast":
        return graph.with_condition(KIRCHHOFF)
    vols = {v.id: (v.vol if v.vol > 0 else default_vertex_vol) for v in graph.vertices}
    return graph.with_volumes(vols)


def _solve(graph: MetricGraph, regime: ScalingRegime, h: float, k: int, budget: int,
           seed: int) -> tuple[np.ndarray, int]:
    mesh = build_mesh(graph, regime, h, budget=budget)
    pair = assemble(mesh)
    r = eigsh_lowest(pair.stiffness, pair.mass, k, tol=1e-9, seed=seed)
    return np.maximum(r.values[:k], 0.0), mesh.n_nodes


def _run_one(args) -> EpsRun:
    graph, regime, policy, k, seed = args
    coarse, _ = _solve(graph, regime, policy.h, k, policy.budget, seed)
    hf = policy.h / policy.refine
    fine, n = _solve(graph, regime, hf, k, policy.budget, seed)
    return EpsRun(regime.eps, hf, n, tuple(map(float, coarse)), tuple(map(float, fine)),
                  tuple(float(abs(a - b)) for a, b in zip(coarse, fine)))


def _limit(graph: MetricGraph, tag: str, k: int) -> Spectrum:
    cut = 50.0
    while True:
        s = limit_spectrum(graph, tag, cut)
        if len(s) >= k + 1:
            return s
        cut *= 2


def _trend(dev: list[float], cert: list[bool]) -> str:
    if not all(cert):
        return "uncertified"
    if all(d <= ZERO_TOL for d in dev):
        return "exact"
    if all(b < a for a, b in zip(dev, dev[1:])):
        return "decreasing"
    return "not-decreasing"


def convergence_study(graph: MetricGraph, regime: ScalingRegime, eps_list, k: int,
                      policy: HPolicy = HPolicy(), *, seed: int = 0,
                      executor=None) -> ConvergenceReport:
    """Lowest ``k`` eigenvalues of ``M_eps`` along ``eps_list`` against the limit.

    Runs for different eps are independent; ``executor`` (anything with
    ``map``) may spread them over workers without changing the result.
    Indices whose self-convergence check fails are reported, not raised.
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps list must be non-empty and strictly decreasing")
    if k < 1:
        raise ValueError("k must be positive")
    g = effective_graph(graph, regime.tag)
    tasks = [(g, regime.at(e), policy, k, seed) for e in eps]
    mapper = map if executor is None else executor.map
    runs = tuple(mapper(_run_one, tasks))
    lim = _limit(g, regime.tag, k)
    lv = lim.expanded()[:k]
    dev, cert = [], []
    for r in runs:
        d = [float(abs(f - l)) for f, l in zip(r.fine, lv)]
        c = [bool(sc <= policy.ratio * di or (di <= ZERO_TOL and sc <= ZERO_TOL))
             for sc, di in zip(r.self_convergence, d)]
        dev.append(tuple(d))
        cert.append(tuple(c))
    trend = tuple(_trend([dev[i][j] for i in range(len(runs))],
                         [cert[i][j] for i in range(len(runs))]) for j in range(k))
    notes = []
    if regime.tag != "fast":
        notes.append("vertex volumes: " + ", ".join(f"{v.id}={v.vol:g}" for v in g.vertices))
    return ConvergenceReport(regime.tag, regime.alpha, tuple(eps), k, runs, lim,
                             tuple(dev), tuple(cert), trend, tuple(notes))


__all__ = ["HPolicy", "EpsRun", "ConvergenceReport", "convergence_study", "effective_graph",
           "MeshBudgetError"]

"""Secular-determinant eigenvalue solver for quantum graphs.

On edge ``j`` an eigenfunction with ``lambda = omega**2`` is written as

    u_j(x) = A_j C_j(x) + B_j S_j(x)

where ``C_j``/``S_j`` are the fundamental solutions with ``(u, u')(0)`` equal
to ``(1, 0)`` and ``(0, 1)`` (``cos(omega x)`` and ``sin(omega x)/omega`` for
constant density).  Continuity plus one coupling row per vertex give a square
system ``T(omega) (A, B) = 0`` of size ``2|J|``.  The basis stays regular at
``omega = 0`` where ``T(0)`` is the constraint system for edgewise-affine
functions, so the zero eigenvalue is a rank computation on the same matrix.

Floquet problems attach a phase ``theta_j`` to every edge: the value and
derivative at the far end ``x = l_j`` are multiplied by ``exp(-i theta_j)``
before entering the vertex conditions.

All derivatives in vertex rows point away from the vertex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .graph import MetricGraph, VertexCondition
from .spectrum import Spectrum
from .transfer import transfer_matrix_edge

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_CHUNK = 200_000 // 4


class ScanBudgetError(RuntimeError):
    """The omega grid needed for the requested cutoff is too large."""


class VariableDensityError(ValueError):
    """A non-constant density was routed to the closed-form secular matrix."""


@dataclass(frozen=True)
class SecularSystem:
    graph: MetricGraph
    condition: VertexCondition | None = None
    phases: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.phases is not None and len(self.phases) != len(self.graph.edges):
            raise ValueError("need one phase per edge")

    @property
    def effective_graph(self) -> MetricGraph:
        return self.graph if self.condition is None else self.graph.with_condition(self.condition)

    @property
    def size(self) -> int:
        return 2 * len(self.graph.edges)


def _as_system(obj) -> SecularSystem:
    return obj if isinstance(obj, SecularSystem) else SecularSystem(obj)


# ---------------------------------------------------------------------------
# assembly


def _vertex_rules(g: MetricGraph) -> list[tuple[str, float]]:
    """Effective (rule, coefficient) per vertex."""
    rules = []
    for k, v in enumerate(g.vertices):
        cond = g.condition_at(k)
        kind = cond.kind
        if kind == "borderline" and v.vol == 0.0:
            kind = "kirchhoff"
        if kind == "delta" and cond.kappa < 0:
            raise ValueError("attractive delta coupling (kappa < 0) gives negative "
                             "eigenvalues, which are not supported")
        if kind == "kirchhoff" and g.degree(k) == 1:
            kind = "loose-" + g.loose_end
        coef = cond.kappa if kind == "delta" else (v.vol if kind == "borderline" else 0.0)
        rules.append((kind, coef))
    return rules


def _edge_blocks(g: MetricGraph, omega: np.ndarray, *, allow_variable: bool):
    """Arrays (M11, M12, M21, M22), each of shape (N, |J|)."""
    N, J = omega.shape[0], len(g.edges)
    out = np.empty((4, N, J))
    for j, e in enumerate(g.edges):
        if e.density.is_constant:
            wl = omega * e.length
            c, s = np.cos(wl), np.sin(wl)
            with np.errstate(invalid="ignore", divide="ignore"):
                sinc = np.where(omega > 0, s / np.where(omega > 0, omega, 1.0), e.length)
            out[0, :, j], out[1, :, j], out[2, :, j], out[3, :, j] = c, sinc, -omega * s, c
        else:
            if not allow_variable:
                raise VariableDensityError(
                    f"edge {e.id!r} has variable density; use the transfer-matrix path"
                )
            for i, w in enumerate(omega):
                m = transfer_matrix_edge(e.density, e.length, float(w))
                out[:, i, j] = m.ravel()
    return out


def _assemble(g: MetricGraph, omega: np.ndarray, phase: np.ndarray | None, *,
              allow_variable: bool = True, rules=None) -> np.ndarray:
    """Stack of normalised secular matrices, shape (N, 2|J|, 2|J|).

    ``phase`` has shape (N, |J|) and holds exp(-i theta_j); ``None`` means
    the untwisted real problem.
    """
    omega = np.asarray(omega, dtype=float)
    N, J = omega.shape[0], len(g.edges)
    n = 2 * J
    rules = _vertex_rules(g) if rules is None else rules
    M11, M12, M21, M22 = _edge_blocks(g, omega, allow_variable=allow_variable)
    dtype = float if phase is None else complex
    ph = np.ones((N, J)) if phase is None else phase
    p0 = np.array([e.density(0.0) for e in g.edges])
    pl = np.array([e.density(e.length) for e in g.edges])
    lam = omega * omega

    def value_row(h):
        r = np.zeros((N, n), dtype=dtype)
        j = h.edge
        if h.end == 0:
            r[:, 2 * j] = 1.0
        else:
            r[:, 2 * j] = ph[:, j] * M11[:, j]
            r[:, 2 * j + 1] = ph[:, j] * M12[:, j]
        return r

    def flux_row(h):
        # p u' with the derivative pointing away from the vertex
        r = np.zeros((N, n), dtype=dtype)
        j = h.edge
        if h.end == 0:
            r[:, 2 * j + 1] = p0[j]
        else:
            r[:, 2 * j] = -ph[:, j] * pl[j] * M21[:, j]
            r[:, 2 * j + 1] = -ph[:, j] * pl[j] * M22[:, j]
        return r

    rows = []
    for k, (kind, coef) in enumerate(rules):
        hs = g.half_edges[k]
        if kind in ("dirichlet", "loose-dirichlet"):
            rows += [value_row(h) for h in hs]
            continue
        if kind == "loose-neumann":
            rows.append(flux_row(hs[0]))
            continue
        ref = value_row(hs[0])
        rows += [value_row(h) - ref for h in hs[1:]]
        row = sum(flux_row(h) for h in hs)
        if kind == "delta":
            row = row - coef * ref
        elif kind == "borderline":
            row = row + (coef * lam)[:, None] * ref
        rows.append(row)
    T = np.stack(rows, axis=1)
    scale = np.maximum(1.0, np.abs(T).max(axis=2))
    return T / scale[:, :, None]


def secular_matrix(sys: SecularSystem | MetricGraph, omega: float) -> np.ndarray:
    """Normalised secular matrix ``T(omega)`` (constant densities only).

    For ``omega > 0`` the kernel dimension equals the multiplicity of
    ``omega**2``; at ``omega = 0`` it equals the multiplicity of 0.  Entries
    are bounded by 1 in absolute value.
    """
    sys = _as_system(sys)
    if omega < 0:
        raise ValueError("omega must be non-negative")
    g = sys.effective_graph
    phase = None
    if sys.phases is not None:
        phase = np.exp(-1j * np.asarray(sys.phases, dtype=float))[None, :]
    return _assemble(g, np.array([float(omega)]), phase, allow_variable=False)[0]


# ---------------------------------------------------------------------------
# root location


def _rel_smin(T: np.ndarray) -> np.ndarray:
    sv = np.linalg.svd(T, compute_uv=False)
    return sv[:, -1] / np.maximum(sv[:, 0], 1.0)


def _batched(fn, idx: np.ndarray, om: np.ndarray) -> np.ndarray:
    if idx.size == 0:
        return np.empty(0)
    parts = [fn(idx[s:s + _CHUNK], om[s:s + _CHUNK]) for s in range(0, idx.size, _CHUNK)]
    return np.concatenate(parts)


def _golden(f, idx, a, b, tol, max_iter=200):
    """Vectorised golden-section minimisation of f(idx, x) on [a, b]."""
    a, b = a.astype(float).copy(), b.astype(float).copy()
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(idx, c), f(idx, d)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        left = fc < fd
        # left: minimum in [a, d]; right: minimum in [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        newx = np.where(left, b - GOLDEN * (b - a), a + GOLDEN * (b - a))
        fnew = f(idx, newx)
        c, d, fc, fd = (np.where(left, newx, d), np.where(left, c, newx),
                        np.where(left, fnew, fd), np.where(left, fc, fnew))
    x = np.where(fc < fd, c, d)
    return x, b - a


def _bisect(f, idx, a, b, tol, max_iter=200):
    """Vectorised bisection of a sign change of real f(idx, x) on [a, b]."""
    a, b = a.astype(float).copy(), b.astype(float).copy()
    fa = f(idx, a)
    for _ in range(max_iter):
        if np.all(b - a <= tol):
            break
        mid = 0.5 * (a + b)
        fm = f(idx, mid)
        same = np.sign(fm) == np.sign(fa)
        a = np.where(same, mid, a)
        fa = np.where(same, fm, fa)
        b = np.where(same, b, mid)
    return 0.5 * (a + b), b - a


def locate_roots(build: Callable[[np.ndarray, np.ndarray], np.ndarray], nprob: int,
                 grid: np.ndarray, tol: float, *, real: bool) -> list[list[tuple[float, int, float]]]:
    """Find all omega > 0 in the grid range where build(idx, omega) is singular.

    Returns, per problem, a sorted list of ``(omega, multiplicity, width)``
    where ``width`` is the final bracket width.  Roots are taken from
    sign changes of det (real systems) refined by bisection, and from grid
    local minima of the relative smallest singular value, refined by golden
    section on ``|det|`` (catches even-order roots, which the sign of det
    cannot see).  Every candidate is confirmed by an SVD at the minimiser.
    """
    G = grid.size
    idx = np.repeat(np.arange(nprob), G)
    om = np.tile(grid, nprob)
    thr = max(1e3 * tol, 1e-10)

    def smin(i, x):
        return _batched(lambda ii, xx: _rel_smin(build(ii, xx)), i, x)

    def det(i, x):
        return _batched(lambda ii, xx: np.linalg.det(build(ii, xx)).real, i, x)

    def absdet(i, x):
        return _batched(lambda ii, xx: np.abs(np.linalg.det(build(ii, xx))), i, x)

    S = smin(idx, om).reshape(nprob, G)
    found: list[list[tuple[float, float]]] = [[] for _ in range(nprob)]

    # grid-local minima (interior points only; omega = 0 is handled separately)
    loc = np.zeros_like(S, dtype=bool)
    loc[:, 1:-1] = (S[:, 1:-1] <= S[:, :-2]) & (S[:, 1:-1] <= S[:, 2:])
    pi_, gi = np.nonzero(loc)
    if pi_.size:
        x, w = _golden(absdet, pi_, grid[gi - 1], grid[gi + 1], tol)
        val = smin(pi_, x)
        for p, xx, ww, vv in zip(pi_, x, w, val):
            if vv <= thr and xx > 1e-8:
                found[p].append((float(xx), float(ww)))

    if real:
        D = det(idx, om).reshape(nprob, G)
        sc = np.sign(D[:, :-1]) * np.sign(D[:, 1:]) < 0
        pi_, gi = np.nonzero(sc)
        if pi_.size:
            x, w = _bisect(det, pi_, grid[gi], grid[gi + 1], tol)
            for p, xx, ww in zip(pi_, x, w):
                if xx > 1e-8:
                    found[p].append((float(xx), float(ww)))

    merged = [_merge_roots(r, tol) for r in found]
    if real:
        # two roots inside one grid cell leave no sign change and may share a
        # single singular-value dip; rescan the sign of det on the grid with
        # points just either side of every known root inserted
        step = float(grid[1] - grid[0]) if G > 1 else 1.0
        delta = max(1e-6 * step, 100 * tol)
        for _ in range(8):
            extra = _interleaved_sign_roots(det, merged, grid, D, delta, tol)
            if not any(extra):
                break
            merged = [_merge_roots(m + e, tol) for m, e in zip(merged, extra)]

    flat_p = np.array([p for p, rs in enumerate(merged) for _ in rs], dtype=int)
    flat_x = np.array([x for rs in merged for x, _ in rs], dtype=float)
    mult = np.zeros(flat_x.size, dtype=int)
    if flat_x.size:
        sv = np.concatenate([
            np.linalg.svd(build(flat_p[s:s + _CHUNK], flat_x[s:s + _CHUNK]), compute_uv=False)
            for s in range(0, flat_x.size, _CHUNK)
        ])
        mult = np.sum(sv <= thr * np.maximum(sv[:, :1], 1.0), axis=1)
    result: list[list[tuple[float, int, float]]] = [[] for _ in range(nprob)]
    pos = 0
    for p, rs in enumerate(merged):
        for x, w in rs:
            if mult[pos] > 0:
                result[p].append((x, int(mult[pos]), w))
            pos += 1
    return result


def _merge_roots(roots: list[tuple[float, float]], tol: float) -> list[tuple[float, float]]:
    """Sort and merge coincident roots, keeping the narrower bracket."""
    out: list[tuple[float, float]] = []
    for x, w in sorted(roots):
        if out and abs(x - out[-1][0]) <= max(1e-8 * max(1.0, x), 10 * tol):
            if w < out[-1][1]:
                out[-1] = (x, w)
        else:
            out.append((x, w))
    return out


def _interleaved_sign_roots(det, merged, grid, D, delta, tol):
    """Roots revealed by det sign changes once ``r -+ delta`` samples are added."""
    lo_all, hi_all, who = [], [], []
    for p, roots in enumerate(merged):
        if not roots:
            continue
        r = np.array([x for x, _ in roots])
        keep = np.min(np.abs(grid[:, None] - r[None, :]), axis=1) > delta
        keep[0] = False                       # omega = 0 is handled by the rank test
        side = np.concatenate([r - delta, r + delta])
        side = side[side > grid[0]]
        xs = np.concatenate([grid[keep], side])
        order = np.argsort(xs)
        xs = xs[order]
        vals = np.concatenate([D[p, keep], det(np.full(side.size, p), side)])[order]
        # never bracket across a known root: consecutive samples r-delta, r+delta
        across = np.zeros(xs.size - 1, dtype=bool)
        for x in r:
            j = np.searchsorted(xs, x)
            if 0 < j < xs.size:
                across[j - 1] = True
        sc = (np.sign(vals[:-1]) * np.sign(vals[1:]) < 0) & ~across
        for j in np.nonzero(sc)[0]:
            lo_all.append(xs[j])
            hi_all.append(xs[j + 1])
            who.append(p)
    extra: list[list[tuple[float, float]]] = [[] for _ in merged]
    if who:
        pi_ = np.array(who)
        x, w = _bisect(det, pi_, np.array(lo_all), np.array(hi_all), tol)
        for p, xx, ww in zip(pi_, x, w):
            extra[p].append((float(xx), float(ww)))
    return extra


def zero_multiplicity(build, nprob: int) -> np.ndarray:
    """Kernel dimension of T(0) for every problem (rank test on affine functions)."""
    T = build(np.arange(nprob), np.zeros(nprob))
    sv = np.linalg.svd(T, compute_uv=False)
    return np.sum(sv <= 1e-10 * np.maximum(sv[:, :1], 1.0), axis=1)


# ---------------------------------------------------------------------------
# public solvers


def default_step(g: MetricGraph) -> float:
    """Grid step in omega: pi / (40 max_j l_j)."""
    return math.pi / (40.0 * max(e.length for e in g.edges))


def weyl_bound(g: MetricGraph) -> float:
    return 2.0 * (len(g.edges) + len(g.vertices))


def _check_args(cutoff: float, tol: float) -> None:
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if tol < 1e-15 * max(1.0, math.sqrt(cutoff)):
        raise ValueError(f"tol={tol} is below the machine-precision floor")


def _make_build(g: MetricGraph, phases: np.ndarray | None):
    rules = _vertex_rules(g)
    allow_var = not g.constant_density

    def build(idx, om):
        ph = None if phases is None else phases[idx]
        return _assemble(g, om, ph, allow_variable=allow_var, rules=rules)

    return build


def _to_spectrum(roots, zero_mult: int, cutoff: float) -> Spectrum:
    vals, mults, res = [], [], []
    if zero_mult:
        vals.append(0.0)
        mults.append(int(zero_mult))
        res.append(0.0)
    for w, m, width in roots:
        lam = w * w
        if lam <= cutoff and (not vals or lam > vals[-1]):
            vals.append(lam)
            mults.append(m)
            res.append((2 * w + width) * width)
    return Spectrum(tuple(vals), tuple(mults), tuple(res), float(cutoff))


def eigenvalues_secular(sys: SecularSystem | MetricGraph, cutoff: float, tol: float = 1e-12, *,
                        step: float | None = None, max_grid: int = 200_000,
                        max_rescans: int = 3) -> Spectrum:
    """All eigenvalues in ``[0, cutoff]`` with multiplicities.

    The omega grid has step ``pi/(40 max l_j)``.  If the eigenvalue count
    violates the Weyl bound ``|N - (L/pi) sqrt(cutoff)| <= 2(|J|+|K|)`` the
    scan is repeated at half the step.
    """
    sys = _as_system(sys)
    _check_args(cutoff, tol)
    g = sys.effective_graph
    phases = None
    real = True
    if sys.phases is not None:
        ph = np.exp(-1j * np.asarray(sys.phases, dtype=float))
        if np.allclose(ph.imag, 0.0, atol=1e-15):
            phases = ph.real[None, :]
        else:
            phases = ph[None, :]
            real = False
    build = _make_build(g, phases)
    h = step or default_step(g)
    wmax = math.sqrt(cutoff)
    spec = None
    for _ in range(max_rescans + 1):
        npts = int(math.ceil(wmax / h)) + 3
        if npts > max_grid:
            raise ScanBudgetError(f"scan needs {npts} grid points (budget {max_grid})")
        grid = h * np.arange(npts)
        roots = locate_roots(build, 1, grid, tol, real=real)[0]
        z = int(zero_multiplicity(build, 1)[0])
        spec = _to_spectrum(roots, z, cutoff)
        weyl = g.total_length / math.pi * wmax
        if abs(spec.count(cutoff) - weyl) <= weyl_bound(g):
            break
        h /= 2
    return spec


def eigenvalues_borderline(sys: SecularSystem | MetricGraph, cutoff: float, tol: float = 1e-12,
                           **kw) -> Spectrum:
    """Spectrum of the energy-dependent coupling ``sum p u' = -lambda vol u(v)``.

    Requires ``vol > 0`` at every vertex of degree >= 2.  At ``lambda = 0``
    the condition reduces to Kirchhoff, which the zero-rank test inherits.
    """
    sys = _as_system(sys)
    g = sys.graph.with_condition(VertexCondition("borderline"))
    for k, v in enumerate(g.vertices):
        if g.degree(k) >= 2 and not v.vol > 0:
            raise ValueError(f"borderline coupling needs vol > 0 at interior vertex {v.id!r}")
    return eigenvalues_secular(SecularSystem(g, None, sys.phases), cutoff, tol, **kw)


def eigenvalues_secular_batch(g: MetricGraph, thetas: Sequence[Sequence[float]], cutoff: float,
                              tol: float = 1e-10, *, step: float | None = None) -> list[Spectrum]:
    """Solve the theta-twisted problem for many phase vectors at once."""
    _check_args(cutoff, tol)
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    if th.shape[1] != len(g.edges):
        raise ValueError("need one phase per edge")
    ph = np.exp(-1j * th)
    real = bool(np.allclose(ph.imag, 0.0, atol=1e-15))
    phases = ph.real if real else ph
    build = _make_build(g, phases)
    h = step or default_step(g)
    grid = h * np.arange(int(math.ceil(math.sqrt(cutoff) / h)) + 3)
    roots = locate_roots(build, th.shape[0], grid, tol, real=real)
    zeros = zero_multiplicity(build, th.shape[0])
    return [_to_spectrum(r, int(z), cutoff) for r, z in zip(roots, zeros)]

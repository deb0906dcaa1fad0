"""Band structures of periodic graphs over finitely generated abelian groups.

The period cell is one vertex with ``r`` loops of length 1 (the Cayley graph
of ``Z^r0 x prod Z_p^r_i``).  A character ``theta`` twists loop ``k`` by
``exp(i theta_k)`` and the eigenvalues ``lambda = omega**2`` solve

    f(omega) = (1/r) sum_k cos(theta_k)

with ``f = cos`` for Kirchhoff coupling and
``f(omega) = cos(omega) - c omega sin(omega) / (2r)`` for the borderline
coupling ``sum u' = -c lambda u(v)``.  In addition ``omega = l pi`` carries
``r - 1`` eigenfunctions for every ``theta`` (flat bands).
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .graph import BORDERLINE, KIRCHHOFF, MetricGraph, flower
from .secular import eigenvalues_secular_batch
from .spectrum import Spectrum

SCAN_STEP = 1e-3
ROOT_XTOL = 1e-12
MAX_SCAN = 10_000_000


class GroupParseError(ValueError):
    pass


class BandBudgetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# groups


@dataclass(frozen=True)
class GroupSpec:
    """``Z^r0 x Z_{p_1}^{r_1} x ...``; order-1 factors stand for loop decorations."""

    r0: int
    torsion: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.r0 < 1:
            raise GroupParseError("the free rank r0 must be at least 1")
        merged: dict[int, int] = {}
        for p, m in self.torsion:
            if p < 1 or m < 0:
                raise GroupParseError(f"invalid cyclic factor Z_{p}^{m}")
            merged[p] = merged.get(p, 0) + m
        object.__setattr__(self, "torsion", tuple(sorted((p, m) for p, m in merged.items() if m)))

    @property
    def r(self) -> int:
        return self.r0 + sum(m for _, m in self.torsion)

    def __str__(self) -> str:
        parts = ["Z" if self.r0 == 1 else f"Z^{self.r0}"]
        parts += [f"Z_{p}" if m == 1 else f"Z_{p}^{m}" for p, m in self.torsion]
        return " x ".join(parts)

    def with_loops(self, n: int = 1) -> "GroupSpec":
        return GroupSpec(self.r0, self.torsion + ((1, n),))

    def finite_thetas(self) -> list[float]:
        """One list entry per finite generator: the allowed phases of that generator."""
        return [p for p, m in self.torsion for _ in range(m)]


_FACTOR = re.compile(r"^z(?:_(\d+))?(?:\^(\d+))?$")


def parse_group(text: str) -> GroupSpec:
    """Parse ``Z^r0 x Z_p^r ...`` (case-insensitive, ``x``/``*``/``×`` separators)."""
    s = text.strip().lower().replace("×", "x").replace("*", "x")
    if not s:
        raise GroupParseError("empty group string")
    r0, tors = 0, []
    for tok in re.split(r"\s*x\s*", s):
        m = _FACTOR.match(tok.replace(" ", ""))
        if not m:
            raise GroupParseError(f"cannot parse group factor {tok!r} in {text!r}")
        p, e = m.group(1), int(m.group(2) or 1)
        if p is None:
            r0 += e
        else:
            if int(p) < 1:
                raise GroupParseError("cyclic orders must be at least 1")
            tors.append((int(p), e))
    return GroupSpec(r0, tuple(tors))


def _mu(p: int) -> float:
    if p == 1:
        return 1.0
    return -1.0 if p % 2 == 0 else -math.cos(math.pi / p)


def dispersion_range(g: GroupSpec) -> tuple[float, float]:
    """Exact range ``[m_min, 1]`` of ``(1/r) sum cos theta_k`` over the dual group."""
    m = (-g.r0 + sum(r * _mu(p) for p, r in g.torsion)) / g.r
    return (max(-1.0, m), 1.0)


# ---------------------------------------------------------------------------
# band structures


@dataclass(frozen=True)
class FlatBand:
    lam: float
    multiplicity: int
    isolated: bool


@dataclass(frozen=True)
class BandStructure:
    """Bands (closed lambda intervals) and flat bands below ``cutoff``.

    Kirchhoff bands are listed per branch, so branches that meet at a point
    appear as two intervals sharing an endpoint.
    """

    group: str
    model: str
    c: float | None
    bands: tuple[tuple[float, float], ...]
    flat_bands: tuple[FlatBand, ...]
    cutoff: float

    def __post_init__(self):
        if self.model not in ("kirchhoff", "borderline"):
            raise ValueError(f"unknown model {self.model!r}")
        for (a, b), (c, _) in zip(self.bands, self.bands[1:]):
            if c < b - 1e-12 * max(1.0, b):
                raise ValueError("bands must be sorted and non-overlapping")
        if any(a > b for a, b in self.bands):
            raise ValueError("band with lower end above upper end")

    def contains(self, lam: float, tol: float = 0.0) -> bool:
        if any(a - tol <= lam <= b + tol for a, b in self.bands):
            return True
        return any(abs(lam - f.lam) <= tol for f in self.flat_bands)

    @property
    def gaps(self) -> "GapReport":
        return find_gaps(self)


def _flat_bands(r: int, bands_omega: list[tuple[float, float]], wmax: float) -> tuple[FlatBand, ...]:
    if r < 2:
        return ()
    out = []
    for l in range(1, int(math.floor(wmax / math.pi)) + 1):
        w = l * math.pi
        inside = any(a - 1e-12 <= w <= b + 1e-12 for a, b in bands_omega)
        out.append(FlatBand(w * w, r - 1, not inside))
    return tuple(out)


def _to_lambda(bands_omega, cutoff):
    wmax = math.sqrt(cutoff)
    return tuple((float(a * a), float(cutoff if b >= wmax else min(b * b, cutoff)))
                 for a, b in bands_omega)


def band_structure_kirchhoff(g: GroupSpec, cutoff: float) -> BandStructure:
    """Closed-form bands ``omega in [2 j pi - a, 2 j pi + a]``, ``a = arccos(m_min)``."""
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    m, _ = dispersion_range(g)
    a = math.acos(m)
    wmax = math.sqrt(cutoff)
    bw = [(0.0, min(a, wmax))]
    j = 1
    while 2 * j * math.pi - a <= wmax:
        c = 2 * j * math.pi
        bw.append((c - a, min(c, wmax)))
        if c < wmax:
            bw.append((c, min(c + a, wmax)))
        j += 1
    return BandStructure(str(g), "kirchhoff", None, _to_lambda(bw, cutoff),
                         _flat_bands(g.r, bw, wmax), float(cutoff))


def borderline_dispersion(omega, r: int, c: float):
    """``cos(omega) - c omega sin(omega) / (2 r)``."""
    omega = np.asarray(omega, dtype=float)
    return np.cos(omega) - c * omega * np.sin(omega) / (2 * r)


def _borderline_deriv(omega, r, c):
    return -np.sin(omega) - c * (np.sin(omega) + omega * np.cos(omega)) / (2 * r)


def band_structure_borderline(g: GroupSpec, c: float, cutoff: float) -> BandStructure:
    """Bands ``{omega**2 : m_min <= f(omega) <= 1}`` for the borderline coupling.

    ``f`` is sampled with step 1e-3.  Each grid cell is split at the critical
    points of ``f`` (roots of ``f'``), so ``f`` is monotone on every piece and
    has at most one crossing of each level there; crossings are refined with
    brentq to 1e-12.  Splitting at critical points catches narrow dips that
    start and end inside one cell, which happen near odd multiples of pi
    when ``c`` is small.
    """
    if not c > 0:
        raise ValueError("borderline coupling needs c > 0")
    if not cutoff > 0:
        raise ValueError("cutoff must be positive")
    r = g.r
    m, _ = dispersion_range(g)
    wmax = math.sqrt(cutoff)
    n = int(math.ceil(wmax / SCAN_STEP))
    if n > MAX_SCAN:
        raise BandBudgetError(f"cutoff {cutoff} needs {n} scan points")
    grid = np.linspace(0.0, wmax, n + 1)

    def f(w):
        return float(borderline_dispersion(w, r, c))

    def df(w):
        return float(_borderline_deriv(w, r, c))

    d = _borderline_deriv(grid, r, c)
    crit = [brentq(df, grid[i], grid[i + 1], xtol=ROOT_XTOL)
            for i in np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)]
    pts = np.union1d(grid, np.asarray(crit, dtype=float))
    fv = borderline_dispersion(pts, r, c)
    breaks = [0.0, wmax]
    for level in (m, 1.0):
        gv = fv - level
        breaks += list(pts[np.abs(gv) <= 1e-14])
        for i in np.flatnonzero(np.sign(gv[:-1]) * np.sign(gv[1:]) < 0):
            breaks.append(brentq(lambda w: f(w) - level, pts[i], pts[i + 1], xtol=ROOT_XTOL))
    breaks = np.unique(np.asarray(breaks))
    bw: list[tuple[float, float]] = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a <= 0:
            continue
        fm = f(0.5 * (a + b))
        if m <= fm <= 1.0:
            if bw and abs(bw[-1][1] - a) <= 1e-13:
                bw[-1] = (bw[-1][0], b)
            else:
                bw.append((a, b))
    return BandStructure(str(g), "borderline", float(c), _to_lambda(bw, cutoff),
                         _flat_bands(r, bw, wmax), float(cutoff))


# ---------------------------------------------------------------------------
# gaps


@dataclass(frozen=True)
class Gap:
    lo: float
    hi: float
    contains_flat_band: bool = False
    truncated: bool = False

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, lam: float) -> bool:
        return self.lo < lam < self.hi


@dataclass(frozen=True)
class GapReport:
    """Band gaps (flat bands flagged), spectral gaps (split at isolated flat
    bands) and points where two bands touch."""

    band_gaps: tuple[Gap, ...] = ()
    spectral_gaps: tuple[Gap, ...] = ()
    touching: tuple[float, ...] = ()

    def around(self, lam: float) -> Gap | None:
        for gp in self.band_gaps:
            if gp.contains(lam):
                return gp
        return None

    def __bool__(self) -> bool:
        return bool(self.band_gaps)


def find_gaps(b: BandStructure, *, rtol: float = 1e-12) -> GapReport:
    """Maximal open intervals of ``(0, cutoff)`` free of bands.

    A gap running into the cutoff is kept and flagged ``truncated``.
    """
    if not b.bands:
        raise ValueError("band structure has no bands")
    merged: list[list[float]] = []
    touching = []
    for lo, hi in b.bands:
        if merged and lo <= merged[-1][1] * (1 + rtol) + rtol:
            if abs(lo - merged[-1][1]) <= rtol * max(1.0, lo) and lo < b.cutoff:
                touching.append(lo)
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    raw = []
    prev = 0.0
    for lo, hi in merged:
        if lo > prev:
            raw.append((prev, lo, False))
        prev = hi
    if prev < b.cutoff * (1 - rtol):
        raw.append((prev, b.cutoff, True))
    iso = sorted(f.lam for f in b.flat_bands if f.isolated)
    band_gaps, spectral = [], []
    for lo, hi, trunc in raw:
        inside = [x for x in iso if lo < x < hi]
        band_gaps.append(Gap(lo, hi, bool(inside), trunc))
        edges = [lo] + inside + [hi]
        for k, (a, c) in enumerate(zip(edges[:-1], edges[1:])):
            spectral.append(Gap(a, c, False, trunc and k == len(edges) - 2))
    return GapReport(tuple(band_gaps), tuple(spectral), tuple(touching))


# ---------------------------------------------------------------------------
# theta sampling


@dataclass(frozen=True)
class ThetaSample:
    theta: tuple[float, ...]
    spectrum: Spectrum


def theta_grid(g: GroupSpec, samples: int) -> np.ndarray:
    """Uniform grid on the torus part times all roots of unity of the finite part."""
    if samples < 16:
        raise ValueError("need at least 16 samples per torus dimension")
    axes = [2 * np.pi * np.arange(samples) / samples] * g.r0
    axes += [2 * np.pi * np.arange(p) / p for p in g.finite_thetas()]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, g.r)


def period_cell(g: GroupSpec, model: str = "kirchhoff", c: float | None = None) -> MetricGraph:
    if model == "kirchhoff":
        return flower(g.r, 1.0, cond=KIRCHHOFF)
    if model == "borderline":
        if c is None or not c > 0:
            raise ValueError("borderline model needs c > 0")
        return flower(g.r, 1.0, cond=BORDERLINE, vol=c)
    raise ValueError(f"unknown model {model!r}")


def theta_sampled_bands(g: GroupSpec, model: str, samples: int, cutoff: float, *,
                        c: float | None = None, tol: float = 1e-10, chunk: int = 2048,
                        thetas: np.ndarray | None = None, executor=None) -> list[ThetaSample]:
    """Solve the twisted cell problem for every theta on the sampling grid.

    ``executor`` (anything with ``map``) spreads chunks over workers; the
    result order follows the grid, whatever the worker count.
    """
    cell = period_cell(g, model, c)
    th = theta_grid(g, samples) if thetas is None else np.atleast_2d(np.asarray(thetas, float))
    chunks = [th[i:i + chunk] for i in range(0, th.shape[0], chunk)]
    args = [(cell, ch, cutoff, tol) for ch in chunks]
    mapper = map if executor is None else executor.map
    out: list[ThetaSample] = []
    for ch, specs in zip(chunks, mapper(_solve_chunk, args)):
        out += [ThetaSample(tuple(float(x) for x in t), s) for t, s in zip(ch, specs)]
    return out


def _solve_chunk(args):
    cell, th, cutoff, tol = args
    return eigenvalues_secular_batch(cell, th, cutoff, tol)


def samples_in_gaps(samples: Sequence[ThetaSample], report: GapReport) -> int:
    """Sampled eigenvalues lying inside a spectral gap by more than their residual bound.

    An eigenvalue at a band edge (theta = pi, say) may land a rounding
    distance inside the open gap; its residual bound covers that.
    """
    n = 0
    for s in samples:
        for lam, res in zip(s.spectrum.values, s.spectrum.residuals):
            r = max(res, 1e-12 * max(1.0, lam))
            n += any(g.lo + r < lam < g.hi - r for g in report.spectral_gaps)
    return n


def dispersion_value(theta: Sequence[float]) -> float:
    return float(np.mean(np.cos(np.asarray(theta, dtype=float))))

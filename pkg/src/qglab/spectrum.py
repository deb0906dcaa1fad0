"""Sorted eigenvalue lists with multiplicities."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in ``[0, cutoff]`` with multiplicities and residual bounds.

    ``values`` is strictly increasing.  The list is certified complete up to
    ``cutoff`` by whoever produced it.
    """

    values: tuple[float, ...]
    multiplicities: tuple[int, ...]
    residuals: tuple[float, ...]
    cutoff: float

    def __post_init__(self):
        n = len(self.values)
        if len(self.multiplicities) != n or len(self.residuals) != n:
            raise ValueError("values, multiplicities and residuals must align")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("spectrum values must be strictly increasing")
        if any(m < 1 for m in self.multiplicities):
            raise ValueError("multiplicities must be positive")
        if any(r < 0 for r in self.residuals):
            raise ValueError("residual bounds must be non-negative")
        if n and self.values[-1] > self.cutoff:
            raise ValueError("eigenvalue above cutoff")

    @classmethod
    def from_values(cls, values: Iterable[float], cutoff: float, *,
                    residuals: Iterable[float] | None = None,
                    rtol: float = 1e-9, atol: float = 1e-12) -> "Spectrum":
        """Group a repeated-by-multiplicity list into distinct values.

        Values closer than ``atol + rtol*|value|`` to the previous group's
        representative are merged; the representative is the group mean.
        """
        vals = np.asarray(list(values), dtype=float)
        res = (np.zeros_like(vals) if residuals is None
               else np.asarray(list(residuals), dtype=float))
        order = np.argsort(vals, kind="stable")
        vals, res = vals[order], res[order]
        keep = vals <= cutoff
        vals, res = vals[keep], res[keep]
        groups: list[list[int]] = []
        for i, v in enumerate(vals):
            if groups and abs(v - vals[groups[-1][0]]) <= atol + rtol * abs(v):
                groups[-1].append(i)
            else:
                groups.append([i])
        return cls(
            tuple(float(np.mean(vals[g])) for g in groups),
            tuple(len(g) for g in groups),
            tuple(float(np.max(res[g]) + np.ptp(vals[g])) for g in groups),
            float(cutoff),
        )

    @classmethod
    def merge(cls, parts: Sequence["Spectrum"], cutoff: float | None = None,
              rtol: float = 1e-9) -> "Spectrum":
        cut = min(p.cutoff for p in parts) if cutoff is None else cutoff
        vals, res = [], []
        for p in parts:
            for v, m, r in zip(p.values, p.multiplicities, p.residuals):
                vals += [v] * m
                res += [r] * m
        return cls.from_values(vals, cut, residuals=res, rtol=rtol)

    def expanded(self) -> np.ndarray:
        """Eigenvalues repeated according to multiplicity."""
        return np.repeat(np.asarray(self.values, dtype=float),
                         np.asarray(self.multiplicities, dtype=int))

    def truncate(self, cutoff: float) -> "Spectrum":
        if cutoff > self.cutoff:
            raise ValueError("cannot extend a spectrum beyond its certified cutoff")
        n = sum(1 for v in self.values if v <= cutoff)
        return Spectrum(self.values[:n], self.multiplicities[:n], self.residuals[:n], float(cutoff))

    def count(self, lam: float) -> int:
        """Counting function N(lam), multiplicity included."""
        return int(sum(m for v, m in zip(self.values, self.multiplicities) if v <= lam))

    def __len__(self) -> int:
        return int(sum(self.multiplicities))

    def isclose(self, other: "Spectrum", rtol: float = 1e-9, atol: float = 1e-12) -> bool:
        if self.multiplicities != other.multiplicities:
            return False
        return all(math.isclose(a, b, rel_tol=rtol, abs_tol=atol)
                   for a, b in zip(self.values, other.values))

"""Vertex-volume scaling regimes for thin graph-like manifolds.

The vertex neighbourhoods shrink like ``eps**alpha`` while edges shrink like
``eps``.  With ``d`` the manifold dimension the regimes are

* fast:       (d-1)/d < alpha <= 1  -> Kirchhoff limit
* borderline: alpha == (d-1)/d      -> energy-dependent coupling
* slow:       0 < alpha < (d-1)/d   -> Dirichlet edges plus |K| zero modes
* nondecay:   vertex volume stays bounded below (alpha = 0 formally)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

DIM = 2
REGIMES = ("fast", "slow", "borderline", "nondecay")
_ALPHA_TOL = 1e-12


class RegimeError(ValueError):
    pass


def classify(alpha: float, d: int = DIM) -> str:
    crit = (d - 1) / d
    if alpha == 0:
        return "nondecay"
    if abs(alpha - crit) <= _ALPHA_TOL:
        return "borderline"
    return "fast" if alpha > crit else "slow"


@dataclass(frozen=True)
class ScalingRegime:
    """Scaling exponents and bottleneck parameters at a fixed ``eps``.

    ``alpha_prime`` is the inner-vertex exponent of the slow regime; it
    defaults to ``alpha`` (homogeneous scaling).  ``r_minus``/``r_plus``
    bound the bottleneck radius (in units of ``eps``) on the edge side.
    """

    tag: str
    alpha: float
    eps: float = 1.0
    alpha_prime: float | None = None
    r_minus: float = 1.0
    r_plus: float = 1.0
    d: int = DIM

    def __post_init__(self):
        if self.tag not in REGIMES:
            raise RegimeError(f"unknown regime {self.tag!r}")
        if not (0 < self.eps <= 1):
            raise RegimeError(f"eps must lie in (0, 1], got {self.eps}")
        if self.r_plus < self.r_minus or self.r_minus <= 0:
            raise RegimeError("need 0 < r_minus <= r_plus")
        a, d = self.alpha, self.d
        crit = (d - 1) / d
        if self.tag == "nondecay":
            if a != 0:
                raise RegimeError("nondecay regime has alpha = 0")
            return
        if not (0 < a <= 1):
            raise RegimeError(f"alpha must lie in (0, 1], got {a}")
        if self.tag == "fast" and not (crit < a <= 1):
            raise RegimeError(f"fast regime needs {crit} < alpha <= 1, got {a}")
        if self.tag == "borderline" and abs(a - crit) > _ALPHA_TOL:
            raise RegimeError(f"borderline regime needs alpha = {crit}, got {a}")
        if self.tag == "slow":
            if not (0 < a < crit):
                raise RegimeError(f"slow regime needs 0 < alpha < {crit}, got {a}")
            ap = self.alpha_prime_eff
            if not (d * a / (d + 2) < ap <= a):
                raise RegimeError(
                    f"slow regime needs {d * a / (d + 2)} < alpha' <= {a}, got {ap}"
                )

    @classmethod
    def from_alpha(cls, alpha: float, eps: float = 1.0, tag: str | None = None, **kw) -> "ScalingRegime":
        return cls(tag or classify(alpha, kw.get("d", DIM)), alpha, eps, **kw)

    def at(self, eps: float) -> "ScalingRegime":
        return ScalingRegime(self.tag, self.alpha, eps, self.alpha_prime,
                             self.r_minus, self.r_plus, self.d)

    @property
    def m(self) -> int:
        return self.d - 1

    @property
    def alpha_prime_eff(self) -> float:
        return self.alpha if self.alpha_prime is None else self.alpha_prime

    @property
    def delta0(self) -> float:
        """Length of the bottleneck stretch where the longitudinal factor may reach 1."""
        return self.eps ** self.alpha

    @property
    def delta_plus(self) -> float:
        """Length over which the bottleneck radius may exceed ``eps * r_plus``."""
        return self.eps ** ((1 - self.alpha) * self.m)

    @property
    def vertex_scale(self) -> float:
        return self.eps ** self.alpha

    def describe(self) -> str:
        return f"{self.tag}(alpha={self.alpha:g}, eps={self.eps:g})"


def borderline_alpha(d: int = DIM) -> float:
    return (d - 1) / d


def is_close_alpha(a: float, b: float) -> bool:
    return math.isclose(a, b, abs_tol=_ALPHA_TOL)

"""Boundary two-curve Green's function factors G1, G2, G3 and their exponents.

Link patterns:
  A1  w+ <-> v+ and w- <-> v-   (G1, alpha1 = 2(12/k - 1))
  A2  w+ <-> w- and v+ <-> v-   (G2, alpha2 = alpha1)
  B   w+ <-> w- and v+ <-> oo   (G3, alpha3 = 12/k - 1)
Points are ordered v- < w- < w+ < v+ (no v- for B).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specialfn import ParameterError, hsle_F, hsle_params

__all__ = [
    "PATTERNS",
    "GreenInputs",
    "Exponents",
    "exponents",
    "alpha_of",
    "g1",
    "g2",
    "g3",
    "green_value",
    "gstar",
    "gstar_face_exponents",
    "martingale_observable",
    "martingale_bound_constant",
]

PATTERNS = ("A1", "A2", "B")
CASE_OF = {"A1": 1, "A2": 2, "B": 3}


def _pattern(p: str) -> str:
    q = str(p).upper()
    if q not in PATTERNS:
        raise ParameterError(f"unknown pattern {p!r}")
    return q


@dataclass(frozen=True)
class GreenInputs:
    pattern: str
    kappa: float
    w_plus: float
    w_minus: float
    v_plus: float
    v_minus: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pattern", _pattern(self.pattern))
        hsle_params(self.kappa)
        if self.pattern == "B":
            if not (self.w_minus < self.w_plus < self.v_plus):
                raise ParameterError("B pattern needs w- < w+ < v+")
        else:
            if self.v_minus is None or not (
                    self.v_minus < self.w_minus < self.w_plus < self.v_plus):
                raise ParameterError("A patterns need v- < w- < w+ < v+")

    @property
    def points(self) -> tuple:
        if self.pattern == "B":
            return (self.w_plus, self.w_minus, self.v_plus)
        return (self.w_plus, self.w_minus, self.v_plus, self.v_minus)

    @property
    def span(self) -> float:
        """Largest modulus among the marked points."""
        return float(max(abs(p) for p in self.points))

    def transformed(self, a: float, b: float) -> "GreenInputs":
        """The configuration under z -> a z + b (a > 0)."""
        vm = None if self.v_minus is None else a * self.v_minus + b
        return GreenInputs(self.pattern, self.kappa, a * self.w_plus + b,
                           a * self.w_minus + b, a * self.v_plus + b, vm)


@dataclass(frozen=True)
class Exponents:
    alpha1: float
    alpha2: float
    alpha3: float
    beta1p: float = 5.0 / 6.0
    beta2p: float = 5.0 / 6.0
    beta3p: float = 4.0 / 5.0


def exponents(kappa: float) -> Exponents:
    hsle_params(kappa)
    a3 = 12.0 / kappa - 1.0
    return Exponents(2.0 * a3, 2.0 * a3, a3)


def alpha_of(pattern: str, kappa: float) -> float:
    e = exponents(kappa)
    return {"A1": e.alpha1, "A2": e.alpha2, "B": e.alpha3}[_pattern(pattern)]


def _arg(x):
    # cross-ratios are in [0, 1] mathematically; trim rounding spill
    return np.clip(x, 0.0, 1.0)


def g1(kappa, wp, wm, vp, vm):
    """G1(w; v) for the A1 pattern; broadcasts over array inputs."""
    e8, e4 = 8.0 / kappa - 1.0, 4.0 / kappa
    wp, wm, vp, vm = (np.asarray(u, dtype=float) for u in (wp, wm, vp, vm))
    pre = (np.abs(wp - vp) ** e8 * np.abs(wp - vm) ** e4
           * np.abs(wm - vm) ** e8 * np.abs(wm - vp) ** e4)
    x = _arg((wp - wm) * (vp - vm) / ((wp - vm) * (vp - wm)))
    return pre / hsle_F(kappa, x)


def g2(kappa, wp, wm, vp, vm):
    """G2(w; v) for the A2 pattern."""
    e8, e4 = 8.0 / kappa - 1.0, 4.0 / kappa
    wp, wm, vp, vm = (np.asarray(u, dtype=float) for u in (wp, wm, vp, vm))
    pre = (np.abs(wp - wm) ** e8 * np.abs(vp - vm) ** e8
           * np.abs(wp - vm) ** e4 * np.abs(wm - vp) ** e4)
    x = _arg((vp - wp) * (wm - vm) / ((wp - vm) * (vp - wm)))
    return pre / hsle_F(kappa, x)


def g3(kappa, wp, wm, vp):
    """G3(w; v+) for the B pattern."""
    e8, e4 = 8.0 / kappa - 1.0, 4.0 / kappa
    wp, wm, vp = (np.asarray(u, dtype=float) for u in (wp, wm, vp))
    pre = np.abs(wp - wm) ** e8 * np.abs(vp - wm) ** e4
    x = _arg((vp - wp) / (vp - wm))
    return pre / hsle_F(kappa, x)


def green_value(gi: GreenInputs) -> float:
    k = gi.kappa
    if gi.pattern == "A1":
        v = g1(k, gi.w_plus, gi.w_minus, gi.v_plus, gi.v_minus)
    elif gi.pattern == "A2":
        v = g2(k, gi.w_plus, gi.w_minus, gi.v_plus, gi.v_minus)
    else:
        v = g3(k, gi.w_plus, gi.w_minus, gi.v_plus)
    return float(v)


def gstar(case: int, r_plus, r_minus, kappa: float):
    """Normalized factor G_j*(r+, r-) on [0, 1]^2.

    The configuration is v+- = +-1, w+ = r+, w- = -r-; for case 3 only v+ = 1
    enters, so G3*(1, 1) = 2^(12/k - 1).
    """
    rp = np.asarray(r_plus, dtype=float)
    rm = np.asarray(r_minus, dtype=float)
    if case == 1:
        return g1(kappa, rp, -rm, 1.0, -1.0)
    if case == 2:
        return g2(kappa, rp, -rm, 1.0, -1.0)
    if case == 3:
        return g3(kappa, rp, -rm, 1.0)
    raise ParameterError(f"case must be 1, 2 or 3, got {case}")


def gstar_face_exponents(case: int, kappa: float) -> tuple[float, float]:
    """Exponents e+-, with G_j* vanishing like (1 - r+-)^{e+-} at the faces r+- = 1."""
    if case == 1:
        e = 8.0 / kappa - 1.0
        return e, e
    if case in (2, 3):
        return 0.0, 0.0
    raise ParameterError(f"case must be 1, 2 or 3, got {case}")


def martingale_observable(case: int, kappa: float, w_plus, w_minus, v_plus, v_minus=None):
    """M_j = G_j evaluated at the current driving and force-point values.

    Requires V- <= W- <= W+ <= V+ (V- unused for case 3).  Degenerate
    states fall out of the formulas as zeros of the prefactors.
    """
    wp, wm, vp = (np.asarray(u, dtype=float) for u in (w_plus, w_minus, v_plus))
    tol = 1e-12 * np.maximum(1.0, np.abs(vp))
    if np.any(wm > wp + tol) or np.any(wp > vp + tol):
        raise ParameterError("ordering W- <= W+ <= V+ violated")
    if case == 3:
        return g3(kappa, wp, wm, vp)
    vm = np.asarray(v_minus, dtype=float)
    if np.any(vm > wm + tol):
        raise ParameterError("ordering V- <= W- violated")
    if case == 1:
        return g1(kappa, wp, wm, vp, vm)
    if case == 2:
        return g2(kappa, wp, wm, vp, vm)
    raise ParameterError(f"case must be 1, 2 or 3, got {case}")


def martingale_bound_constant(kappa: float) -> float:
    """C with M1 <= C |V+ - V-|^{alpha1}: each distance is at most |V+ - V-| and F >= min(F(0), F(1))."""
    return 1.0 / min(1.0, float(hsle_F(kappa, 1.0)))

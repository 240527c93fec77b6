"""Gauss hypergeometric function and Jacobi polynomials.

The hypergeometric part covers the real interval [0, 1], which is all the
hSLE drift and the Green's functions need.  Jacobi polynomials use the
classical normalization P_n(1) = Gamma(alpha+n+1) / (n! Gamma(alpha+1)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "HypParams",
    "JacobiSpec",
    "ParameterError",
    "TruncationError",
    "hsle_params",
    "gauss_2f1",
    "hyp2f1_unit",
    "hsle_F",
    "hsle_dF",
    "hsle_Gtilde",
    "jacobi_table",
    "jacobi_eval",
    "jacobi_deriv",
    "jacobi_norm_sq",
    "jacobi_sup_bound",
    "jacobi_weight",
    "gauss_jacobi",
]

SERIES_TOL = 1e-16
SERIES_RUN = 10
MAX_TERMS = 100_000
# above this argument the series is replaced by the 1-x connection formula
CONNECT_AT = 0.9
ABEL_GAP = 1e-7


class ParameterError(ValueError):
    """Invalid parameters for a special function."""


class TruncationError(ArithmeticError):
    """A series did not meet its tolerance within the term cap."""

    def __init__(self, msg: str, terms: int, last_term: float):
        super().__init__(msg)
        self.terms = terms
        self.last_term = last_term


@dataclass(frozen=True)
class HypParams:
    a: float
    b: float
    c: float

    def __post_init__(self):
        c = self.c
        if c <= 0 and float(c).is_integer():
            raise ParameterError(f"c={c} is a non-positive integer")

    @property
    def excess(self) -> float:
        """c - a - b, the exponent governing behaviour at x = 1."""
        return self.c - self.a - self.b


def _check_kappa(kappa: float) -> None:
    if not (0.0 < kappa < 8.0):
        raise ParameterError(f"kappa={kappa} outside (0, 8)")


def hsle_params(kappa: float) -> HypParams:
    """a = 4/kappa, b = 1 - 4/kappa, c = 8/kappa."""
    _check_kappa(kappa)
    return HypParams(4.0 / kappa, 1.0 - 4.0 / kappa, 8.0 / kappa)


def _series(a, b, c, x, tol=SERIES_TOL, max_terms=MAX_TERMS, run=SERIES_RUN):
    """Sum the Gauss series elementwise.

    An element is done once `run` consecutive terms are each below
    tol * |partial sum|.  Converged elements are dropped from the loop.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    total = np.ones_like(flat)
    term = np.ones_like(flat)
    quiet = np.zeros(flat.shape, dtype=np.int64)
    idx = np.arange(flat.size)
    xs = flat.copy()
    n = 0
    while idx.size:
        if n >= max_terms:
            raise TruncationError(
                f"2F1({a}, {b}; {c}; x) did not converge in {max_terms} terms",
                n, float(np.max(np.abs(term[idx]))))
        term[idx] *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * xs
        total[idx] += term[idx]
        small = np.abs(term[idx]) < tol * np.abs(total[idx])
        quiet[idx] = np.where(small, quiet[idx] + 1, 0)
        keep = quiet[idx] < run
        idx = idx[keep]
        xs = xs[keep]
        n += 1
    return total.reshape(x.shape)


def gauss_2f1(p: HypParams, x, tol=SERIES_TOL, max_terms=MAX_TERMS):
    """Gauss series for 2F1(a, b; c; x) on [0, 1).

    x = 1 is accepted: Gauss summation when c - a - b > 0, otherwise the
    series value at 1 - 1e-7 (Abel limit, usually large).
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > 1):
        raise ParameterError("x must lie in [0, 1]")
    out = np.empty_like(xa)
    one = xa == 1.0
    if np.any(~one):
        out[~one] = _series(p.a, p.b, p.c, xa[~one], tol, max_terms)
    if np.any(one):
        if p.excess > 0:
            out[one] = _gauss_sum(p.a, p.b, p.c)
        else:
            out[one] = hyp2f1_unit(p.a, p.b, p.c, 1.0 - ABEL_GAP)
    return out if out.ndim else float(out)


def _gauss_sum(a, b, c):
    return float(special.gamma(c) * special.gamma(c - a - b)
                 * special.rgamma(c - a) * special.rgamma(c - b))


def _connection(a, b, c, x):
    """2F1 on (0, 1) via the 1 - x connection formula (c - a - b not an integer)."""
    y = 1.0 - x
    e = c - a - b
    g_c = special.gamma(c)
    k1 = g_c * special.gamma(e) * special.rgamma(c - a) * special.rgamma(c - b)
    k2 = g_c * special.gamma(-e) * special.rgamma(a) * special.rgamma(b)
    out = k1 * _series(a, b, 1.0 - e, y)
    if k2 != 0.0:
        out = out + k2 * y ** e * _series(c - a, c - b, 1.0 + e, y)
    return out


def hyp2f1_unit(a: float, b: float, c: float, x):
    """2F1(a, b; c; x) on [0, 1] for real parameters with c > 0.

    Series below CONNECT_AT; above it the connection formula, whose terms
    converge like (1 - x)^n.  When c - a - b sits on an integer the
    connection coefficients have removable poles; those parameters are
    handled by averaging the formula at c -/+ 1e-5 (error O(1e-10)).
    """
    xa = np.asarray(x, dtype=float)
    out = np.empty_like(xa)
    lo = xa <= CONNECT_AT
    if np.any(lo):
        out[lo] = _series(a, b, c, xa[lo])
    hi = ~lo
    if np.any(hi):
        xh = xa[hi]
        res = np.empty_like(xh)
        one = xh >= 1.0
        e = c - a - b
        if np.any(one):
            res[one] = _gauss_sum(a, b, c) if e > 0 else np.inf
        mid = ~one
        if np.any(mid):
            near = abs(e - round(e))
            if near > 1e-4:
                res[mid] = _connection(a, b, c, xh[mid])
            else:
                d = 1e-5
                res[mid] = 0.5 * (_connection(a, b, c + d, xh[mid])
                                  + _connection(a, b, c - d, xh[mid]))
        out[hi] = res
    return out if out.ndim else float(out)


def hsle_F(kappa: float, x):
    """F(x) = 2F1(4/k, 1 - 4/k; 8/k; x) on [0, 1]; continuous and positive."""
    p = hsle_params(kappa)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > 1):
        raise ParameterError("x must lie in [0, 1]")
    return hyp2f1_unit(p.a, p.b, p.c, xa)


def hsle_dF(kappa: float, x):
    """F'(x) = (ab/c) 2F1(a+1, b+1; c+1; x), the term-wise derivative."""
    p = hsle_params(kappa)
    xa = np.asarray(x, dtype=float)
    if p.b == 0.0:
        return np.zeros_like(xa) if xa.ndim else 0.0
    return p.a * p.b / p.c * hyp2f1_unit(p.a + 1, p.b + 1, p.c + 1, xa)


def hsle_Gtilde(kappa: float, x):
    """G~(x) = kappa x F'(x) / F(x) + 2 on [0, 1)."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa >= 1):
        raise ParameterError("x must lie in [0, 1)")
    out = kappa * xa * hsle_dF(kappa, xa) / hsle_F(kappa, xa) + 2.0
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------- Jacobi


@dataclass(frozen=True)
class JacobiSpec:
    alpha: float
    beta: float
    n: int = 0

    def __post_init__(self):
        if not (self.alpha > -1 and self.beta > -1):
            raise ParameterError(f"need alpha, beta > -1, got {self.alpha}, {self.beta}")
        if int(self.n) != self.n or self.n < 0:
            raise ParameterError(f"degree must be a non-negative integer, got {self.n}")


def jacobi_table(nmax: int, alpha: float, beta: float, x) -> np.ndarray:
    """P_0 .. P_nmax at x, stacked on a new leading axis (three-term recurrence)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax == 0:
        return out
    ab = alpha + beta
    out[1] = (alpha + 1.0) + (ab + 2.0) * (x - 1.0) / 2.0
    for n in range(2, nmax + 1):
        k = 2 * n + ab
        a1 = 2 * n * (n + ab) * (k - 2)
        a2 = (k - 1) * (alpha * alpha - beta * beta)
        a3 = (k - 1) * k * (k - 2)
        a4 = 2 * (n + alpha - 1) * (n + beta - 1) * k
        out[n] = ((a2 + a3 * x) * out[n - 1] - a4 * out[n - 2]) / a1
    return out


def jacobi_eval(spec: JacobiSpec, x):
    """P_n^{(alpha, beta)}(x)."""
    v = jacobi_table(spec.n, spec.alpha, spec.beta, x)[spec.n]
    return v if v.ndim else float(v)


def jacobi_deriv(spec: JacobiSpec, x):
    """d/dx P_n = (alpha + beta + n + 1)/2 * P_{n-1}^{(alpha+1, beta+1)}."""
    if spec.n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    lower = JacobiSpec(spec.alpha + 1, spec.beta + 1, spec.n - 1)
    return 0.5 * (spec.alpha + spec.beta + spec.n + 1) * jacobi_eval(lower, x)


def jacobi_weight(alpha: float, beta: float, x):
    """(1 - x)^alpha (1 + x)^beta on (-1, 1), zero outside."""
    x = np.asarray(x, dtype=float)
    inside = (x > -1) & (x < 1)
    xc = np.where(inside, x, 0.0)
    return np.where(inside, (1 - xc) ** alpha * (1 + xc) ** beta, 0.0)


def jacobi_norm_sq(spec: JacobiSpec) -> float:
    """Squared norm of P_n under the weight (1-x)^alpha (1+x)^beta."""
    a, b, n = spec.alpha, spec.beta, spec.n
    if n == 0:
        # (2n+a+b+1) Gamma(n+a+b+1) = Gamma(a+b+2) at n = 0
        lg = special.gammaln(a + 1) + special.gammaln(b + 1) - special.gammaln(a + b + 2)
        return float(2.0 ** (a + b + 1) * np.exp(lg))
    lg = (special.gammaln(n + a + 1) + special.gammaln(n + b + 1)
          - special.gammaln(n + 1) - special.gammaln(n + a + b + 1))
    return float(2.0 ** (a + b + 1) / (2 * n + a + b + 1) * np.exp(lg))


def _end_value(n: int, a: float) -> float:
    # Gamma(a+n+1) / (n! Gamma(a+1))
    return math.exp(math.lgamma(a + n + 1) - math.lgamma(n + 1) - math.lgamma(a + 1))


def jacobi_sup_bound(spec: JacobiSpec) -> float:
    """Sup norm of P_n on [-1, 1]: exact when max(alpha, beta) > -1/2, else an upper bound."""
    a, b, n = spec.alpha, spec.beta, spec.n
    if n == 0:
        return 1.0
    q = max(a, b)
    if q > -0.5:
        return _end_value(n, q)
    tail = math.exp(math.lgamma(q + n + 1) - math.lgamma(n) - math.lgamma(q + 2))
    return _end_value(n, a) + (a + b + n + 1) * tail


def gauss_jacobi(npts: int, alpha: float, beta: float):
    """Nodes and weights for the weight (1-x)^alpha (1+x)^beta on [-1, 1]."""
    x, w = special.roots_jacobi(npts, alpha, beta)
    return x, w

"""The boundary diffusion (R+, R-) on [0, 1]^2.

Two descriptions live here.  The first is direct Euler-Maruyama simulation
of the SDE

    dR_s = s sqrt(k R_s (1 - R_s^2) / (R+ + R-)) dB_s
           + [(2 + r0) - (r_s - r_-s) R_s - (r+ + r- + r0 + 6) R_s^2] / (R+ + R-) dt.

The second is the exact transition density.  In X = R+ - R-, Y = 1 - R+ R-
it expands in the orthogonal polynomials

    v_nm(x, y) = P_m^{(a0, b+2n)}(2y - 1) * y^n P_n^{(a+, a-)}(x / y)

under the weight Psi = (y-x)^a+ (y+x)^a- (1-y)^a0 on |x| < y < 1.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import green
from .drivers import path_rng
from .specialfn import (JacobiSpec, ParameterError, gauss_jacobi, jacobi_norm_sq,
                        jacobi_sup_bound, jacobi_table)

__all__ = [
    "RParams",
    "RState",
    "SpectralBasis",
    "DomainError",
    "ToleranceError",
    "CASE_RHO",
    "case_params",
    "xy_of",
    "psi",
    "vnm_eval",
    "generator_apply",
    "transition_density_xy",
    "transition_density_r",
    "invariant_density_r",
    "relative_deviation_r",
    "delta_quadrature",
    "square_quadrature",
    "cell_probabilities",
    "quasi_invariant_density",
    "normalizer",
    "survival_probability",
    "SurvivalReport",
    "RPath",
    "simulate_r_path",
    "sde_coefficients",
    "simulate_r_endpoints",
    "time_curve_speeds",
    "path_rng",
]


class DomainError(ValueError):
    """A point lies outside the closed triangle |x| <= y <= 1."""


class ToleranceError(ArithmeticError):
    """The truncated series cannot meet the tail tolerance at this time."""

    def __init__(self, msg: str, achieved: float):
        super().__init__(msg)
        self.achieved = achieved


@dataclass(frozen=True)
class RParams:
    kappa: float
    rho0: float
    rho_plus: float
    rho_minus: float

    def __post_init__(self):
        k = self.kappa
        if not (0 < k < 8):
            raise ParameterError(f"kappa={k} outside (0, 8)")
        floor = max(-2.0, k / 2 - 4)
        for r in (self.rho_plus, self.rho_minus):
            if not r > floor:
                raise ParameterError(f"rho+- must exceed {floor}, got {r}")
        if not self.rho0 >= k / 4 - 2:
            raise ParameterError(f"rho0 must be >= {k / 4 - 2}, got {self.rho0}")
        for r in (self.rho_plus, self.rho_minus):
            if not self.rho0 + r >= k / 2 - 4:
                raise ParameterError("rho0 + rho+- must be >= kappa/2 - 4")

    @property
    def rho_sum(self) -> float:
        return self.rho0 + self.rho_plus + self.rho_minus


@dataclass(frozen=True)
class RState:
    r_plus: float
    r_minus: float

    def __post_init__(self):
        for r in (self.r_plus, self.r_minus):
            if not (0.0 <= r <= 1.0):
                raise DomainError(f"R must lie in [0, 1]^2, got {self}")

    @property
    def x(self) -> float:
        return self.r_plus - self.r_minus

    @property
    def y(self) -> float:
        return 1.0 - self.r_plus * self.r_minus


# (rho0, rho+, rho-) for the three Green-function cases
CASE_RHO = {1: (0.0, 2.0, 2.0), 2: (0.0, 2.0, 2.0), 3: (0.0, 2.0, 0.0)}


def case_params(case: int, kappa: float) -> RParams:
    if case not in CASE_RHO:
        raise ParameterError(f"case must be 1, 2 or 3, got {case}")
    r0, rp, rm = CASE_RHO[case]
    return RParams(kappa, r0, rp, rm)


def xy_of(r_plus, r_minus):
    rp = np.asarray(r_plus, dtype=float)
    rm = np.asarray(r_minus, dtype=float)
    return rp - rm, 1.0 - rp * rm


class SpectralBasis:
    """Exponents, eigenvalues, norms and truncation for the density series.

    The series is truncated at total degree N_max, the smallest N whose tail
    bound (sup-norm products squared over norms, times exp((k/2) lambda t0))
    is below tail_tol.
    """

    def __init__(self, params: RParams, t0: float = 0.25, tail_tol: float = 1e-8,
                 n_max: int | None = None):
        self.params = params
        k = params.kappa
        self.kappa = k
        self.alpha0 = 2.0 / k * (params.rho0 + 2) - 1
        self.alpha_plus = 2.0 / k * (params.rho_plus + 2) - 1
        self.alpha_minus = 2.0 / k * (params.rho_minus + 2) - 1
        self.beta = self.alpha_plus + self.alpha_minus + 1
        self.t0 = t0
        self.tail_tol = tail_tol
        self._k_terms = self._degree_terms(80)
        if n_max is None:
            n_max = next(n for n in range(80) if self.tail_bound(t0, n) < tail_tol)
        self.n_max = int(n_max)
        self.modes = [(n, kk - n) for kk in range(self.n_max + 1) for n in range(kk + 1)]
        self.degree = np.array([n + m for n, m in self.modes])
        self.norms = np.array([self.norm_sq(n, m) for n, m in self.modes])
        self.rates = 0.5 * k * self.eigenvalue(self.degree)

    # eigen data
    def eigenvalue(self, k):
        k = np.asarray(k)
        return -k * (k + self.alpha0 + self.beta + 1)

    def eigenvalue_r(self, n):
        n = np.asarray(n)
        return -n * (n + self.beta)

    @property
    def decay_rate(self) -> float:
        """-(k/2) lambda_1 = rho+ + rho- + rho0 + 6."""
        return float(-0.5 * self.kappa * self.eigenvalue(1))

    def norm_sq(self, n: int, m: int) -> float:
        h = jacobi_norm_sq(JacobiSpec(self.alpha0, self.beta + 2 * n, m))
        r = jacobi_norm_sq(JacobiSpec(self.alpha_plus, self.alpha_minus, n))
        return 2.0 ** -(self.alpha0 + self.beta + 2 * n + 1) * h * r

    def sup_bound(self, n: int, m: int) -> float:
        return (jacobi_sup_bound(JacobiSpec(self.alpha0, self.beta + 2 * n, m))
                * jacobi_sup_bound(JacobiSpec(self.alpha_plus, self.alpha_minus, n)))

    def _degree_terms(self, kmax):
        out = np.zeros(kmax + 1)
        for kk in range(kmax + 1):
            s = 0.0
            for n in range(kk + 1):
                s += self.sup_bound(n, kk - n) ** 2 / self.norm_sq(n, kk - n)
            out[kk] = s
        return out

    def tail_bound(self, t: float, n_max: int | None = None) -> float:
        """Bound on the series tail beyond total degree n_max at time t."""
        n = self.n_max if n_max is None else n_max
        ks = np.arange(n + 1, len(self._k_terms))
        if ks.size == 0:
            return 0.0
        expo = 0.5 * self.kappa * self.eigenvalue(ks) * t
        with np.errstate(over="ignore"):
            return float(np.sum(self._k_terms[ks] * np.exp(expo)))

    def check_time(self, t: float) -> None:
        if t <= 0:
            raise ToleranceError(f"t={t} must be positive", math.inf)
        if t < self.t0:
            b = self.tail_bound(t)
            if b >= self.tail_tol:
                raise ToleranceError(
                    f"tail bound {b:.3g} at t={t} exceeds {self.tail_tol:g} with N_max={self.n_max}", b)

    def metadata(self) -> dict:
        return {
            "kappa": self.kappa,
            "rho": [self.params.rho0, self.params.rho_plus, self.params.rho_minus],
            "alpha0": self.alpha0,
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "beta": self.beta,
            "eigenvalues": [float(v) for v in self.eigenvalue(np.arange(self.n_max + 1))],
            "n_max": self.n_max,
            "t0": self.t0,
            "tail_bound": self.tail_bound(self.t0),
        }

    # polynomial evaluation
    def _homogeneous(self, x, y, nmax):
        """Q_n(x, y) = y^n P_n^{(a+, a-)}(x/y) by the homogenized recurrence."""
        a, b = self.alpha_plus, self.alpha_minus
        out = np.empty((nmax + 1,) + x.shape)
        out[0] = 1.0
        if nmax == 0:
            return out
        ab = a + b
        out[1] = ((ab + 2) * x + (a - b) * y) / 2
        for n in range(2, nmax + 1):
            k = 2 * n + ab
            a1 = 2 * n * (n + ab) * (k - 2)
            a2 = (k - 1) * (a * a - b * b)
            a3 = (k - 1) * k * (k - 2)
            a4 = 2 * (n + a - 1) * (n + b - 1) * k
            out[n] = ((a2 * y + a3 * x) * out[n - 1] - a4 * y * y * out[n - 2]) / a1
        return out

    def modes_at(self, x, y, check=True) -> np.ndarray:
        """All v_nm at the points, shape (n_modes,) + x.shape, ordered as self.modes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        if check:
            _check_domain(x, y)
        N = self.n_max
        q = self._homogeneous(x, y, N)
        hs = 2 * y - 1
        by_n = [jacobi_table(N - n, self.alpha0, self.beta + 2 * n, hs) for n in range(N + 1)]
        out = np.empty((len(self.modes),) + x.shape)
        for i, (n, m) in enumerate(self.modes):
            out[i] = by_n[n][m] * q[n]
        return out


def _check_domain(x, y, tol=1e-12):
    if np.any(np.abs(x) > y + tol) or np.any(y > 1 + tol):
        raise DomainError("point outside the triangle |x| <= y <= 1")


def psi(basis: SpectralBasis, x, y):
    """The weight (y-x)^a+ (y+x)^a- (1-y)^a0 inside the triangle, zero outside."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (np.abs(x) < y) & (y < 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = ((y - x) ** basis.alpha_plus * (y + x) ** basis.alpha_minus
             * (1 - y) ** basis.alpha0)
    return np.where(inside, v, 0.0)


def vnm_eval(basis: SpectralBasis, n: int, m: int, x, y):
    """v_nm(x, y); uses the homogeneous form of the r-polynomial so y = 0 is fine."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    _check_domain(x, y)
    q = basis._homogeneous(x, y, n)[n]
    p = jacobi_table(m, basis.alpha0, basis.beta + 2 * n, 2 * y - 1)[m]
    v = p * q
    return v if v.ndim else float(v)


def generator_apply(basis: SpectralBasis, f, x, y, step=1e-4):
    """(2/k) L f at (x, y) by central differences, for the diffusion's generator L."""
    p = basis.params
    k = p.kappa
    s = p.rho_sum + 6
    h = step
    fxx = (f(x + h, y) - 2 * f(x, y) + f(x - h, y)) / h ** 2
    fyy = (f(x, y + h) - 2 * f(x, y) + f(x, y - h)) / h ** 2
    fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h * h)
    fx = (f(x + h, y) - f(x - h, y)) / (2 * h)
    fy = (f(x, y + h) - f(x, y - h)) / (2 * h)
    lf = (k / 2 * (y - x * x) * fxx + k * x * (1 - y) * fxy + k / 2 * y * (1 - y) * fyy
          - (s * x + (p.rho_plus - p.rho_minus)) * fx
          - (s * y - (p.rho_plus + p.rho_minus + 4)) * fy)
    return 2.0 / k * lf


def _coeffs(basis, t, x0, y0, skip_constant=False):
    basis.check_time(t)
    v0 = basis.modes_at(np.array([x0]), np.array([y0]))[:, 0]
    c = v0 / basis.norms * np.exp(basis.rates * t)
    if skip_constant:
        c[0] = 0.0
    return c


def transition_density_xy(basis: SpectralBasis, t: float, frm, to):
    """p_t((x, y), (x*, y*)) for one start and an array of end points."""
    x0, y0 = frm
    xs, ys = (np.asarray(u, dtype=float) for u in to)
    c = _coeffs(basis, t, x0, y0)
    series = np.tensordot(c, basis.modes_at(xs, ys), axes=1)
    out = psi(basis, xs, ys) * series
    return out if out.ndim else float(out)


def transition_density_r(basis: SpectralBasis, t: float, frm, to):
    """Transition density of (R+, R-): p_t in (x, y) times the Jacobian r+* + r-*."""
    rp0, rm0 = _pair(frm)
    rp, rm = (np.asarray(u, dtype=float) for u in to)
    xs, ys = xy_of(rp, rm)
    out = transition_density_xy(basis, t, (rp0 - rm0, 1 - rp0 * rm0), (xs, ys)) * (rp + rm)
    return out if np.ndim(out) else float(out)


def invariant_density_r(basis: SpectralBasis, at):
    rp, rm = (np.asarray(u, dtype=float) for u in _pair(at))
    xs, ys = xy_of(rp, rm)
    out = psi(basis, xs, ys) / basis.norms[0] * (rp + rm)
    return out if np.ndim(out) else float(out)


def relative_deviation_r(basis: SpectralBasis, t: float, frm, to):
    """p_t / p_inf - 1 summed over the non-constant modes (no cancellation)."""
    rp0, rm0 = _pair(frm)
    rp, rm = (np.asarray(u, dtype=float) for u in to)
    xs, ys = xy_of(rp, rm)
    c = _coeffs(basis, t, rp0 - rm0, 1 - rp0 * rm0, skip_constant=True)
    return basis.norms[0] * np.tensordot(c, basis.modes_at(xs, ys), axes=1)


def _pair(p):
    if isinstance(p, RState):
        return p.r_plus, p.r_minus
    a, b = p
    return a, b


# ------------------------------------------------------------ quadrature


def delta_quadrature(basis: SpectralBasis, npts: int = 64):
    """Nodes (x, y) and weights with sum w f = integral of f Psi over the triangle.

    Tensor Gauss-Jacobi in (r, h) = (x/y, y): the weight factors as
    (1-r)^a+ (1+r)^a- dr times h^beta (1-h)^a0 dh.
    """
    r, wr = gauss_jacobi(npts, basis.alpha_plus, basis.alpha_minus)
    s, ws = gauss_jacobi(npts, basis.alpha0, basis.beta)
    h = (1 + s) / 2
    wh = ws * 2.0 ** -(basis.alpha0 + basis.beta + 1)
    R, H = np.meshgrid(r, h, indexing="ij")
    W = np.outer(wr, wh)
    return (R * H).ravel(), H.ravel(), W.ravel()


def _unit_rule(npts, a0, b1):
    """Nodes on (0, 1) and weights for the weight r^a0 (1-r)^b1."""
    s, w = gauss_jacobi(npts, b1, a0)
    return (1 + s) / 2, w * 2.0 ** -(a0 + b1 + 1)


def square_quadrature(npts, a0, bp, bm):
    """Tensor rule on (0,1)^2 for the weight (r+ r-)^a0 (1-r+)^bp (1-r-)^bm.

    Returns nodes, weights, and the weight function at the nodes, so that
    sum(w * f / omega) approximates the plain integral of f.
    """
    rp, wp = _unit_rule(npts, a0, bp)
    rm, wm = _unit_rule(npts, a0, bm)
    P, M = np.meshgrid(rp, rm, indexing="ij")
    W = np.outer(wp, wm)
    omega = (P * M) ** a0 * (1 - P) ** bp * (1 - M) ** bm
    return P.ravel(), M.ravel(), W.ravel(), omega.ravel()


def cell_probabilities(basis: SpectralBasis, t: float | None, frm, bins: int = 32,
                       npts: int = 6) -> np.ndarray:
    """Integrals of the R-density over the cells of a bins x bins grid on [0, 1]^2.

    t=None gives the invariant density.  Cells on the faces use Gauss-Jacobi
    rules carrying the face singularities r^a0 and (1-r)^a+-.
    """
    edges = np.linspace(0.0, 1.0, bins + 1)
    a0 = basis.alpha0

    def axis_rule(i, b1):
        lo, hi = edges[i], edges[i + 1]
        ea = a0 if i == 0 else 0.0
        eb = b1 if i == bins - 1 else 0.0
        s, w = gauss_jacobi(npts, eb, ea)
        u = (1 + s) / 2
        r = lo + (hi - lo) * u
        # the rule integrates g(u) u^ea (1-u)^eb; rescale to r-units
        w = w * 2.0 ** -(ea + eb + 1) * (hi - lo)
        om = ((r - lo) / (hi - lo)) ** ea * ((hi - r) / (hi - lo)) ** eb
        return r, w, om

    rules_p = [axis_rule(i, basis.alpha_plus) for i in range(bins)]
    rules_m = [axis_rule(j, basis.alpha_minus) for j in range(bins)]
    rp_nodes = np.array([r[0] for r in rules_p])  # (bins, npts)
    rm_nodes = np.array([r[0] for r in rules_m])
    wp = np.array([r[1] / r[2] for r in rules_p])
    wm = np.array([r[1] / r[2] for r in rules_m])
    RP = rp_nodes[:, None, :, None] * np.ones((1, bins, 1, npts))
    RM = rm_nodes[None, :, None, :] * np.ones((bins, 1, npts, 1))
    if t is None:
        dens = invariant_density_r(basis, (RP, RM))
    else:
        dens = transition_density_r(basis, t, frm, (RP, RM))
    W = wp[:, None, :, None] * wm[None, :, None, :]
    return np.sum(dens * W, axis=(2, 3))


# ------------------------------------------------- quasi-invariant densities


def _case_basis(basis: SpectralBasis, case: int) -> None:
    want = CASE_RHO.get(case)
    if want is None:
        raise ParameterError(f"case must be 1, 2 or 3, got {case}")
    got = (basis.params.rho0, basis.params.rho_plus, basis.params.rho_minus)
    if tuple(float(v) for v in got) != want:
        raise ParameterError(f"case {case} needs (rho0, rho+, rho-) = {want}, basis has {got}")


@functools.lru_cache(maxsize=32)
def _mode_integrals(kappa, rho, n_max, case, npts):
    """I_nm = integral over (0,1)^2 of Psi(x,y) (r+ + r-) v_nm / G_j*."""
    basis = SpectralBasis(RParams(kappa, *rho), n_max=n_max)
    ep, em = green.gstar_face_exponents(case, kappa)
    bp, bm = basis.alpha_plus - ep, basis.alpha_minus - em
    rp, rm, w, om = square_quadrature(npts, basis.alpha0, bp, bm)
    xs, ys = xy_of(rp, rm)
    f = psi(basis, xs, ys) * (rp + rm) / green.gstar(case, rp, rm, kappa) / om
    v = basis.modes_at(xs, ys)
    out = v @ (w * f)
    if not np.all(np.isfinite(out)):
        raise ParameterError("quadrature of p_inf / G* is not finite")
    return out


def _integrals(basis, case, npts):
    p = basis.params
    return _mode_integrals(basis.kappa, (p.rho0, p.rho_plus, p.rho_minus),
                           basis.n_max, case, npts)


def normalizer(basis: SpectralBasis, case: int, npts: int = 160) -> float:
    """Z_j = integral of p_inf / G_j* over (0, 1)^2."""
    _case_basis(basis, case)
    return float(_integrals(basis, case, npts)[0] / basis.norms[0])


def quasi_invariant_density(basis: SpectralBasis, case: int, at, npts: int = 160):
    """p~_inf = p_inf / (Z_j G_j*)."""
    z = normalizer(basis, case, npts)
    rp, rm = (np.asarray(u, dtype=float) for u in _pair(at))
    out = invariant_density_r(basis, (rp, rm)) / (z * green.gstar(case, rp, rm, basis.kappa))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SurvivalReport:
    t: float
    exact: float
    asymptote: float
    ratio: float
    deviation: float  # ratio - 1, summed directly from the decaying modes


def survival_probability(basis: SpectralBasis, case: int, start, t: float,
                         npts: int = 160) -> SurvivalReport:
    """P[T > t] from the killed transition density against Z_j G_j*(r) e^{-2 alpha_j t}."""
    _case_basis(basis, case)
    rp0, rm0 = _pair(start)
    alpha = green.alpha_of({1: "A1", 2: "A2", 3: "B"}[case], basis.kappa)
    g0 = float(green.gstar(case, rp0, rm0, basis.kappa))
    I = _integrals(basis, case, npts)
    z = I[0] / basis.norms[0]
    asym = z * g0 * math.exp(-2 * alpha * t)
    if t == 0:
        return SurvivalReport(0.0, 1.0, z * g0, 1.0 / (z * g0), 1.0 / (z * g0) - 1.0)
    c = _coeffs(basis, t, rp0 - rm0, 1 - rp0 * rm0, skip_constant=True)
    dev = float(np.dot(c, I) / z)
    exact = asym * (1.0 + dev)
    return SurvivalReport(float(t), exact, asym, 1.0 + dev, dev)


# ------------------------------------------------------------ simulation


@numba.njit(cache=True, nogil=True)
def _coef(kappa, rho0, rhop, rhom, rp, rm):
    """Drift and noise scale of each coordinate (noise signs +1 for R+, -1 for R-)."""
    s6 = rho0 + rhop + rhom + 6.0
    s = rp + rm
    bp = ((2 + rho0) - (rhop - rhom) * rp - s6 * rp * rp) / s
    bm = ((2 + rho0) - (rhom - rhop) * rm - s6 * rm * rm) / s
    sp = math.sqrt(max(kappa * rp * (1 - rp * rp) / s, 0.0))
    sm = math.sqrt(max(kappa * rm * (1 - rm * rm) / s, 0.0))
    return bp, bm, sp, sm


def sde_coefficients(params: RParams, state) -> tuple[float, float, float, float]:
    """(drift+, drift-, sigma+, sigma-) of the R SDE at a state with r+ + r- > 0."""
    rp, rm = _pair(state)
    if not rp + rm > 0:
        raise DomainError("coefficients need r+ + r- > 0")
    return _coef(params.kappa, params.rho0, params.rho_plus, params.rho_minus, float(rp), float(rm))


@numba.njit(cache=True, nogil=True)
def _r_kernel(kappa, rho0, rhop, rhom, rp, rm, t_end, dt, rng, rec_t, rec_p, rec_m):
    t = 0.0
    h = dt
    n = 0
    rejected = 0
    cap = rec_t.shape[0]
    if cap > 0:
        rec_t[0] = 0.0
        rec_p[0] = rp
        rec_m[0] = rm
    status = 0
    while t < t_end:
        hh = min(h, t_end - t)
        z1 = rng.standard_normal()
        z2 = rng.standard_normal()
        sq = math.sqrt(hh)
        bp, bm, sp, sm = _coef(kappa, rho0, rhop, rhom, rp, rm)
        dp = sp * sq * z1 + bp * hh
        dm = -sm * sq * z2 + bm * hh
        np_ = min(max(rp + dp, 0.0), 1.0)
        nm_ = min(max(rm + dm, 0.0), 1.0)
        if np_ + nm_ < 1e-8:
            rejected += 1
            h = hh / 2
            if h < dt * 1e-12:
                status = 1
                break
            continue
        rp = np_
        rm = nm_
        t += hh
        h = dt
        n += 1
        if n < cap:
            rec_t[n] = t
            rec_p[n] = rp
            rec_m[n] = rm
    return rp, rm, n, rejected, status


@dataclass
class RPath:
    t: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    rejected: int
    aborted: bool
    meta: dict = field(default_factory=dict)


def simulate_r_path(params: RParams, start, t_end: float, seed: int, dt: float = 1e-3,
                    index: int = 0) -> RPath:
    """Euler-Maruyama path of the R SDE, clamped to [0, 1]^2."""
    rp, rm = _pair(start)
    if rp + rm <= 0:
        raise DomainError("start needs r+ + r- > 0")
    cap = int(math.ceil(t_end / dt)) + 2
    bt, bp, bm = np.zeros(cap), np.zeros(cap), np.zeros(cap)
    rng = path_rng(seed, index)
    _, _, n, rej, status = _r_kernel(params.kappa, params.rho0, params.rho_plus,
                                     params.rho_minus, float(rp), float(rm),
                                     float(t_end), float(dt), rng, bt, bp, bm)
    k = min(n + 1, cap)
    return RPath(bt[:k].copy(), bp[:k].copy(), bm[:k].copy(), int(rej), bool(status),
                 {"seed": seed, "index": index, "dt": dt})


def simulate_r_endpoints(params: RParams, start, t_end: float, seed: int, n_paths: int,
                         dt: float = 1e-3) -> tuple[np.ndarray, int]:
    """Final states of n_paths independent paths; also returns the abort count."""
    rp, rm = _pair(start)
    out = np.empty((n_paths, 2))
    empty = np.zeros(0)
    aborts = 0
    for i in range(n_paths):
        a, b, _, _, st = _r_kernel(params.kappa, params.rho0, params.rho_plus,
                                   params.rho_minus, float(rp), float(rm), float(t_end),
                                   float(dt), path_rng(seed, i), empty, empty, empty)
        out[i] = a, b
        aborts += st
    return out, aborts


def time_curve_speeds(state, t: float, half_width: float) -> tuple[float, float]:
    """(W_s1)^2 u_s' = R_s (1 - R_s^2) / (R+ + R-) e^{4t} I^2 for s = +, -."""
    rp, rm = _pair(state)
    s = rp + rm
    if not s > 0:
        raise DomainError("time-curve speeds need r+ + r- > 0")
    f = math.exp(4 * t) * half_width ** 2 / s
    return rp * (1 - rp * rp) * f, rm * (1 - rm * rm) * f

"""Euler-Maruyama drivers for SLE_k(rho) and hypergeometric SLE.

Every path runs in one numba kernel that co-evolves the driver and the
images of the marked boundary points.  The driver is held constant on each
step, so the point images follow the exact slit flow of `loewner` and a
recorded path replays bit-for-bit through the zipper.

Step size is h = min(h_max, c d^2 / kappa) with d the distance from the
driver to the nearest force point, floored at h_min = (eps_rel S)^2 where
S is the largest driver-to-point distance.  A point is glued to c_K or d_K
once it is within 2 eps_rel S of the driver or the driver jumps past it.
Both thresholds scale with the configuration, which keeps the integrator
exactly scale-covariant.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .loewner import BoundaryTracker, DriverPath, TrackedPoint, ZipperState
from .specialfn import ParameterError, hsle_Gtilde

__all__ = [
    "StepPolicy",
    "SleKrConfig",
    "HsleConfig",
    "SdeRun",
    "GtildeTable",
    "gtilde_table",
    "path_rng",
    "simulate_sle_kr",
    "simulate_hsle",
    "simulate_hsle_chordal",
    "simulate_conditional_chordal",
    "STOP_REASONS",
    "MODE_SLE_KR",
    "MODE_HSLE_INF",
    "MODE_HSLE_CHORDAL",
    "MODE_CHORDAL",
]

MODE_SLE_KR, MODE_HSLE_INF, MODE_HSLE_CHORDAL, MODE_CHORDAL = 0, 1, 2, 3

STOP_REASONS = ("time-out", "target-separated", "continuation-threshold",
                "cross-ratio-exit", "radius-exceeded", "step-limit")


@dataclass(frozen=True)
class StepPolicy:
    h_max: float = math.inf
    c: float = 0.01
    eps_rel: float = 1e-5
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.h_max > 0 and self.c > 0 and 0 < self.eps_rel < 1 and self.max_steps > 0):
            raise ParameterError(f"invalid step policy {self}")

    def scaled(self, a: float) -> "StepPolicy":
        return StepPolicy(self.h_max * a * a, self.c, self.eps_rel, self.max_steps)


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one path: Philox keyed by (seed, index)."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index) & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ------------------------------------------------------------------ G~


@dataclass(frozen=True)
class GtildeTable:
    """G~ on a uniform grid in s = -log(1 - x), for linear interpolation in numba."""

    kappa: float
    ds: float
    values: np.ndarray

    @property
    def s_max(self) -> float:
        return self.ds * (self.values.size - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        om = 1.0 - x
        out = np.array([_gt_lookup(self.values, self.ds, float(o)) for o in np.ravel(om)])
        return out.reshape(x.shape) if x.ndim else float(out[0])


_TABLES: dict = {}


def gtilde_table(kappa: float, s_max: float = 20.0, n: int = 20001) -> GtildeTable:
    """Cached table of G~ over s in [0, s_max]; beyond s_max the lookup extrapolates log-linearly."""
    key = (float(kappa), s_max, n)
    if key not in _TABLES:
        s = np.linspace(0.0, s_max, n)
        x = -np.expm1(-s)
        vals = np.empty(n)
        vals[:-1] = hsle_Gtilde(kappa, x[:-1])
        vals[-1] = hsle_Gtilde(kappa, min(x[-1], np.nextafter(1.0, 0.0)))
        _TABLES[key] = GtildeTable(float(kappa), s_max / (n - 1), vals)
    return _TABLES[key]


@numba.njit(cache=True, nogil=True)
def _gt_lookup(tab, ds, om):
    # om = 1 - x, computed by the caller from differences (no cancellation)
    if om >= 1.0:
        return tab[0]
    if om <= 0.0:
        om = 1e-300
    s = -math.log(om)
    u = s / ds
    n = tab.size
    if u < n - 1:
        i = int(u)
        f = u - i
        return tab[i] * (1.0 - f) + tab[i + 1] * f
    a = tab[n - 2]
    b = tab[n - 1]
    if a > 0 and b > 0:
        return b * math.exp((u - (n - 1)) * math.log(b / a))
    return b


# ---------------------------------------------------------------- kernel


@numba.njit(cache=True, nogil=True)
def _kernel(mode, kappa, w, X, side, glued, rho, i1, i2, iinf, ibp, ibm,
            t_end, h_max, c_step, eps_rel, x_lo, x_hi, u_stop, max_steps,
            rng, tab, ds, rec_t, rec_w, rec_u):
    """Run one path.  Returns (steps, t, w, stop code, clamp count)."""
    n = X.size
    t = 0.0
    k = 0
    clamps = 0
    sq = math.sqrt(kappa)
    record = rec_t.size > 0
    rec_u_on = rec_u.size > 0
    if record:
        rec_t[0] = 0.0
        rec_w[0] = w
    if rec_u_on:
        rec_u[0] = X[ibp] - X[ibm]
    code = 0
    while True:
        # continuation threshold on each side
        sp = 0.0
        sm = 0.0
        for j in range(2, n):
            if glued[j]:
                if side[j] > 0:
                    sp += rho[j]
                else:
                    sm += rho[j]
        if sp <= -2.0 or sm <= -2.0:
            code = 2
            break
        if mode == 2 or mode == 3:
            if glued[iinf] or (i2 >= 0 and glued[i2]):
                code = 1
                break
        elif mode == 1:
            if i2 >= 0 and glued[i2]:
                code = 1
                break
        if ibp >= 0 and X[ibp] - X[ibm] > u_stop:
            code = 4
            break
        if t >= t_end:
            code = 0
            break
        if k >= max_steps:
            code = 5
            break

        # scale and nearest force point
        S = 0.0
        d = math.inf
        for j in range(n):
            xj = X[j]
            if not math.isfinite(xj):
                continue
            a = abs(w - xj)
            if a > S:
                S = a
            if j < 2:
                continue
            role = False
            if mode == 0:
                role = rho[j] != 0.0
            else:
                role = j == i1 or j == i2 or j == iinf
            if role and a < d:
                d = a

        # drift
        drift = 0.0
        xcr = 0.0
        if mode == 0:
            for j in range(2, n):
                if rho[j] != 0.0 and math.isfinite(X[j]):
                    drift += rho[j] / (w - X[j])
        else:
            if mode == 2 or mode == 3:
                drift += (kappa - 6.0) / (w - X[iinf])
            if mode == 1 or mode == 2:
                x1 = X[i1]
                fin2 = i2 >= 0 and math.isfinite(X[i2])
                x2 = X[i2] if fin2 else 0.0
                if fin2 and x1 == x2:
                    bracket = 0.0
                    om = 1.0
                    xcr = 0.0
                else:
                    bracket = 1.0 / (w - x1)
                    if fin2:
                        bracket -= 1.0 / (w - x2)
                    if mode == 1:
                        if fin2:
                            xcr = (w - x1) / (w - x2)
                            om = (x1 - x2) / (w - x2)
                        else:
                            xcr = 0.0
                            om = 1.0
                    else:
                        xi = X[iinf]
                        if fin2:
                            den = (w - x2) * (x1 - xi)
                            xcr = (w - x1) * (x2 - xi) / den
                            om = (w - xi) * (x1 - x2) / den
                        else:
                            xcr = (x1 - w) / (x1 - xi)
                            om = (w - xi) / (x1 - xi)
                if xcr < x_lo or xcr > x_hi:
                    code = 3
                    break
                if xcr < 0.0 or om <= 0.0:
                    clamps += 1
                    if xcr < 0.0:
                        xcr = 0.0
                        om = 1.0
                if bracket != 0.0:
                    drift += bracket * _gt_lookup(tab, ds, om)

        h_min = (eps_rel * S) ** 2
        h = h_max
        if math.isfinite(d):
            h = min(h, c_step * d * d / kappa)
        if h < h_min:
            h = h_min
        if h > t_end - t:
            h = t_end - t
        if not h > 0.0:
            code = 5
            break
        d4 = 4.0 * h
        for j in range(n):
            xj = X[j]
            if math.isfinite(xj):
                u = side[j] * (xj - w)
                if u < 0.0:
                    u = 0.0
                X[j] = w + side[j] * math.sqrt(u * u + d4)
        w = w + drift * h + sq * math.sqrt(h) * rng.standard_normal()
        t += h
        k += 1
        thr = 2.0 * eps_rel * S
        for j in range(2, n):
            if not glued[j] and math.isfinite(X[j]) and side[j] * (X[j] - w) < thr:
                glued[j] = True
        for j in range(2, n):
            if glued[j]:
                X[j] = X[0] if side[j] > 0 else X[1]
        if record:
            if k < rec_t.size:
                rec_t[k] = t
                rec_w[k] = w
        if rec_u_on and k < rec_u.size:
            rec_u[k] = X[ibp] - X[ibm]
    return k, t, w, code, clamps


# --------------------------------------------------------------- configs


def _parse_point(pos, start):
    """Position on the modified real line -> (x, side, glued)."""
    if isinstance(pos, str):
        p = pos.strip()
        if p in ("w+", "0+"):
            return start, 1.0, True
        if p in ("w-", "0-"):
            return start, -1.0, True
        if p in ("inf", "+inf", "oo"):
            return math.inf, 1.0, False
        if p in ("-inf", "-oo"):
            return -math.inf, -1.0, False
        raise ParameterError(f"cannot parse point {pos!r}")
    x = float(pos)
    if x == start:
        raise ParameterError("a force point at the start needs a w+ or w- side")
    return x, (1.0 if x > start else -1.0), False


@dataclass(frozen=True)
class SleKrConfig:
    kappa: float
    start: float
    force_points: tuple = ()  # ((position, rho), ...)
    strict: bool = True  # enforce the per-side solvability condition

    def __post_init__(self):
        if not (0 < self.kappa < 8):
            raise ParameterError(f"kappa={self.kappa} outside (0, 8)")
        object.__setattr__(self, "force_points",
                           tuple((p, float(r)) for p, r in self.force_points))
        if not self.strict:
            return
        for sgn in (1.0, -1.0):
            tot = sum(r for p, r in self.force_points
                      if _parse_point(p, self.start)[1] == sgn)
            if not tot > -2:
                raise ParameterError(f"sum of rho on side {sgn:+.0f} must exceed -2")

    def to_dict(self) -> dict:
        return {"kind": "sle_kr", "kappa": self.kappa, "start": self.start,
                "force_points": [list(fp) for fp in self.force_points]}


@dataclass(frozen=True)
class HsleConfig:
    """hSLE points.  to-infinity: (w0; v1, v2).  chordal: (w0, w_inf; v1, v2).

    v2 may be +-inf.
    """

    kappa: float
    mode: str
    w0: float
    v1: float
    v2: float
    w_inf: float | None = None

    def __post_init__(self):
        if not (0 < self.kappa < 8):
            raise ParameterError(f"kappa={self.kappa} outside (0, 8)")
        if self.mode == "to-infinity":
            a, b = self.v1 - self.w0, self.v2 - self.w0
            if not ((0 < a <= b) or (b <= a < 0)):
                raise ParameterError("need v1 <= v2 on one side of w0")
        elif self.mode == "chordal":
            if self.w_inf is None or self.w_inf == self.w0:
                raise ParameterError("chordal mode needs w_inf != w0")
            r = self.cross_ratio
            if not (0 < r < 1):
                raise ParameterError(f"cross ratio {r} outside (0, 1)")
        else:
            raise ParameterError(f"unknown mode {self.mode!r}")

    @property
    def cross_ratio(self) -> float:
        w0, wi, v1, v2 = self.w0, self.w_inf, self.v1, self.v2
        if self.mode == "to-infinity":
            return (w0 - v1) / (w0 - v2) if math.isfinite(v2) else 0.0
        if math.isinf(v2):
            return (v1 - w0) / (v1 - wi)
        return (w0 - v1) * (v2 - wi) / ((w0 - v2) * (v1 - wi))

    def scaled(self, a: float, b: float = 0.0) -> "HsleConfig":
        f = (lambda u: a * u + b if u is not None and math.isfinite(u) else u)
        return HsleConfig(self.kappa, self.mode, f(self.w0), f(self.v1), f(self.v2), f(self.w_inf))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = "hsle"
        return {k: (repr(v) if isinstance(v, float) and math.isinf(v) else v) for k, v in d.items()}


# ------------------------------------------------------------------ runs


@dataclass
class SdeRun:
    config: dict
    seed: int
    index: int
    policy: StepPolicy
    driver: DriverPath
    tracker: BoundaryTracker
    stop_reason: str
    clamp_events: int
    labels: tuple = field(default=())
    w_end: float = math.nan  # final driver value, also set when the path is not recorded

    @property
    def n_steps(self) -> int:
        return self.driver.n_steps

    def sidecar(self) -> dict:
        return {"config": self.config, "seed": self.seed, "index": self.index,
                "policy": asdict(self.policy), "stop_reason": self.stop_reason,
                "steps": self.n_steps, "clamp_events": self.clamp_events,
                "final_images": {p.label: p.x for p in self.tracker.points}}

    def save(self, prefix: str) -> None:
        with open(prefix + ".csv", "w") as f:
            f.write(self.driver.to_csv())
        with open(prefix + ".bin", "wb") as f:
            f.write(self.driver.to_bytes())
        with open(prefix + ".json", "w") as f:
            json.dump(self.sidecar(), f, indent=2, sort_keys=True, default=repr)

    def zipper(self) -> ZipperState:
        return ZipperState.from_driver(self.driver)


class _Setup:
    """Point arrays and role indices for the kernel."""

    def __init__(self, start):
        self.start = float(start)
        self.labels = ["w+", "w-"]
        self.x = [self.start, self.start]
        self.side = [1.0, -1.0]
        self.glued = [True, True]
        self.rho = [0.0, 0.0]

    def add(self, label, pos, rho=0.0):
        x, s, g = _parse_point(pos, self.start)
        self.labels.append(label)
        self.x.append(x)
        self.side.append(s)
        self.glued.append(g)
        self.rho.append(float(rho))
        return len(self.x) - 1

    def arrays(self):
        return (np.array(self.x, dtype=float), np.array(self.side, dtype=float),
                np.array(self.glued, dtype=np.bool_), np.array(self.rho, dtype=float))


def _buffers(policy, record):
    m = policy.max_steps + 1 if record else 0
    return np.empty(m), np.empty(m)


def _run(setup, mode, kappa, t_end, seed, index, policy, roles=(-1, -1, -1), bracket=(-1, -1),
         x_band=(-1.0, 2.0), u_stop=math.inf, config=None, record=True, bufs=None,
         rec_u=None):
    X, side, glued, rho = setup.arrays()
    tab = gtilde_table(kappa)
    if bufs is None:
        bufs = _buffers(policy, record)
    rt, rw = bufs
    ru = np.empty(0) if rec_u is None else rec_u
    k, t, w, code, clamps = _kernel(
        mode, float(kappa), setup.start, X, side, glued, rho, roles[0], roles[1], roles[2],
        bracket[0], bracket[1], float(t_end), float(policy.h_max), float(policy.c),
        float(policy.eps_rel), float(x_band[0]), float(x_band[1]), float(u_stop),
        int(policy.max_steps), path_rng(seed, index), tab.values, tab.ds, rt, rw, ru)
    return k, t, w, code, clamps, X, glued


def _make_run(setup, out, kappa, seed, index, policy, config, bufs):
    k, t, w, code, clamps, X, glued = out
    rt, rw = bufs
    if rt.size:
        driver = DriverPath(rt[:k + 1].copy(), rw[:k + 1].copy())
    else:
        driver = DriverPath(np.array([0.0]), np.array([setup.start]))
    tr = BoundaryTracker.__new__(BoundaryTracker)
    tr.start, tr.tol, tr.t, tr.steps = setup.start, 0.0, float(t), int(k)
    tr.points = [TrackedPoint(lab, float(x0), int(s), float(x), bool(g))
                 for lab, x0, s, x, g in zip(setup.labels, setup.x, setup.side, X, glued)]
    return SdeRun(config, int(seed), int(index), policy, driver, tr, STOP_REASONS[code], int(clamps),
                  tuple(setup.labels), float(w))


def simulate_sle_kr(config: SleKrConfig, t_end: float, seed: int, index: int = 0,
                    policy: StepPolicy = StepPolicy(h_max=1e-3)) -> SdeRun:
    """SLE_k(rho) driver: dw = sqrt(k) dB + sum rho_j / (w - X_j) dt."""
    s = _Setup(config.start)
    for j, (p, r) in enumerate(config.force_points):
        s.add(f"v{j + 1}", p, r)
    bufs = _buffers(policy, True)
    out = _run(s, MODE_SLE_KR, config.kappa, t_end, seed, index, policy, bufs=bufs)
    return _make_run(s, out, config.kappa, seed, index, policy, config.to_dict(), bufs)


def simulate_hsle(config: HsleConfig, t_end: float, seed: int, index: int = 0,
                  policy: StepPolicy = StepPolicy(h_max=1e-3)) -> SdeRun:
    """hSLE toward infinity with force points v1, v2."""
    if config.mode != "to-infinity":
        raise ParameterError("simulate_hsle needs a to-infinity configuration")
    s = _Setup(config.w0)
    i1 = s.add("v1", config.v1)
    i2 = s.add("v2", config.v2)
    bufs = _buffers(policy, True)
    out = _run(s, MODE_HSLE_INF, config.kappa, t_end, seed, index, policy, roles=(i1, i2, -1),
               bufs=bufs)
    return _make_run(s, out, config.kappa, seed, index, policy, config.to_dict(), bufs)


def simulate_hsle_chordal(config: HsleConfig, t_end: float, seed: int, index: int = 0,
                          policy: StepPolicy = StepPolicy(h_max=1e-3), extra_points=(),
                          bracket: tuple | None = None, x_band=(-1.0, 2.0),
                          u_stop: float = math.inf, record: bool = True) -> SdeRun:
    """hSLE in the chordal coordinate, from w0 to w_inf, stopped when w_inf or v2 is swallowed.

    extra_points are tracked (label, position) pairs without drift; bracket
    names two tracked labels (right, left) whose image gap may stop the run
    at u_stop.  x_band stops the run when the cross ratio leaves it.
    """
    if config.mode != "chordal":
        raise ParameterError("simulate_hsle_chordal needs a chordal configuration")
    s = _Setup(config.w0)
    iinf = s.add("w_inf", config.w_inf)
    i1 = s.add("v1", config.v1)
    i2 = s.add("v2", config.v2) if math.isfinite(config.v2) else -1
    for lab, p in extra_points:
        s.add(lab, p)
    br = (-1, -1) if bracket is None else tuple(s.labels.index(b) for b in bracket)
    bufs = _buffers(policy, record)
    out = _run(s, MODE_HSLE_CHORDAL, config.kappa, t_end, seed, index, policy,
               roles=(i1, i2, iinf), bracket=br, x_band=x_band, u_stop=u_stop, bufs=bufs)
    return _make_run(s, out, config.kappa, seed, index, policy, config.to_dict(), bufs)


def simulate_conditional_chordal(zipper: ZipperState, start: float, target: float, kappa: float,
                                 t_end: float, seed: int, index: int = 0,
                                 policy: StepPolicy = StepPolicy(h_max=1e-3)) -> SdeRun:
    """Chordal SLE_k from start to target in the slit-mapped domain.

    `start` and `target` are image points (already mapped by the zipper's
    forward map).  The driver is SLE_k(k - 6) with the force point at the
    target.  Hull points map back to the original domain through
    map_point(zipper, ., "inverse").
    """
    if start == target:
        raise ParameterError("mapped endpoints coincide: the first curve swallowed the target")
    s = _Setup(start)
    iinf = s.add("target", target)
    bufs = _buffers(policy, True)
    out = _run(s, MODE_CHORDAL, kappa, t_end, seed, index, policy, roles=(-1, -1, iinf),
               bufs=bufs)
    cfg = {"kind": "conditional_chordal", "kappa": kappa, "start": start, "target": target,
           "zipper_maps": zipper.n_maps}
    return _make_run(s, out, kappa, seed, index, policy, cfg, bufs)

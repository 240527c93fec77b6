"""Chordal Loewner evolution with a piecewise-constant driver.

On each grid interval [t_i, t_{i+1}) the driver is held at c_i = w(t_i) and
the speed at q_i.  The Loewner flow then has the closed form

    g_i(z) = c_i + sqrt((z - c_i)^2 + 4 q_i dt_i),

the map removing a vertical slit of height 2 sqrt(q_i dt_i) at c_i.  Real
points, the capacity and the zipper composition are therefore exact for
the discretized driver; the only approximation is the driver itself.

Boundary points live on the modified real line: a point sitting at the
start w carries a side, w+ or w-, and its image follows d_K or c_K.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "DriverPath",
    "TrackedPoint",
    "BoundaryTracker",
    "HullSummary",
    "ZipperState",
    "HullDomainError",
    "evolve_boundary",
    "hcap2_of",
    "radius_bracket",
    "zipper_trace",
    "map_point",
    "Trace",
    "coarsen",
    "tips",
    "max_tip_modulus",
]


class HullDomainError(ValueError):
    """A point handed to a conformal map lies outside the map's domain."""


# ----------------------------------------------------------------- driver


@dataclass(frozen=True)
class DriverPath:
    """Driver samples w(t_i) on a strictly increasing grid from 0.

    `speed` has one entry per interval (len(times) - 1).
    """

    times: np.ndarray
    values: np.ndarray
    speed: np.ndarray = None

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        w = np.ascontiguousarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != w.shape or t.size == 0:
            raise ValueError("times and values must be equal-length 1-d arrays")
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(w)):
            raise ValueError("driver values must be finite")
        q = self.speed
        q = np.ones(t.size - 1) if q is None else np.broadcast_to(
            np.asarray(q, dtype=float), (t.size - 1,)).copy()
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise ValueError("speed must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "speed", q)

    @classmethod
    def constant(cls, value: float, t_end: float, n: int, speed: float = 1.0) -> "DriverPath":
        t = np.linspace(0.0, t_end, n + 1)
        return cls(t, np.full(n + 1, float(value)), np.full(n, speed))

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def increments(self) -> np.ndarray:
        """Capacity increments q_i dt_i."""
        return self.speed * np.diff(self.times)

    def truncate(self, t: float) -> "DriverPath":
        """The path restricted to [0, t]; t must be a grid time."""
        k = _grid_index(self, t)
        return DriverPath(self.times[:k + 1], self.values[:k + 1], self.speed[:k])

    def scaled(self, a: float) -> "DriverPath":
        """Brownian scaling: positions by a, times by a^2."""
        return DriverPath(self.times * a * a, self.values * a, self.speed)

    def rows(self) -> np.ndarray:
        """(t, w, q) rows; the last row repeats the final speed (1 if empty)."""
        q = np.append(self.speed, self.speed[-1] if self.speed.size else 1.0)
        return np.column_stack([self.times, self.values, q])

    # persistence
    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "w", "q"])
        for r in self.rows():
            wr.writerow([repr(float(v)) for v in r])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DriverPath":
        rd = csv.reader(io.StringIO(text))
        head = next(rd)
        if [h.strip() for h in head] != ["t", "w", "q"]:
            raise ValueError(f"unexpected header {head}")
        a = np.array([[float(v) for v in row] for row in rd if row])
        return cls(a[:, 0], a[:, 1], a[:-1, 2])

    def to_bytes(self) -> bytes:
        return self.rows().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "DriverPath":
        if len(data) % 24:
            raise ValueError("binary driver frame must hold whole (t, w, q) triplets")
        a = np.frombuffer(data, dtype="<f8").reshape(-1, 3)
        return cls(a[:, 0].copy(), a[:, 1].copy(), a[:-1, 2].copy())


def _grid_index(driver: DriverPath, t: float) -> int:
    k = int(np.searchsorted(driver.times, t))
    if k >= driver.times.size or not math.isclose(driver.times[k], t, rel_tol=1e-12, abs_tol=1e-300):
        if k > 0 and math.isclose(driver.times[k - 1], t, rel_tol=1e-12):
            return k - 1
        raise ValueError(f"t={t} is not a grid time of the driver")
    return k


def hcap2_of(driver: DriverPath, t: float) -> float:
    """Half the half-plane capacity at time t: the integral of q up to t."""
    if t < 0 or t > driver.t_end * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, {driver.t_end}]")
    tt = driver.times
    k = int(np.searchsorted(tt, t, side="right")) - 1
    k = min(k, driver.n_steps)
    done = float(np.sum(driver.increments()[:k]))
    if k < driver.n_steps:
        done += driver.speed[k] * (t - tt[k])
    return done


# -------------------------------------------------------- numba kernels


@numba.njit(cache=True, inline="always")
def _upper_root(s, side):
    # principal sqrt with the branch in the closed upper half-plane;
    # on the real axis the sign follows `side`
    r = np.sqrt(s)
    if r.imag < 0 or (r.imag == 0.0 and r.real * side < 0):
        r = -r
    return r


@numba.njit(cache=True)
def _slit_forward(z, c, d4):
    u = z - c
    side = 1.0 if u.real >= 0 else -1.0
    return c + _upper_root(u * u + d4, side)


@numba.njit(cache=True)
def _slit_inverse(w, c, d4):
    u = w - c
    side = 1.0 if u.real >= 0 else -1.0
    return c + _upper_root(u * u - d4, side)


@numba.njit(cache=True)
def _compose_forward(z, cs, d4s, k0, k1):
    for j in range(k0, k1):
        z = _slit_forward(z, cs[j], d4s[j])
    return z


@numba.njit(cache=True)
def _compose_inverse(w, cs, d4s, k):
    for j in range(k - 1, -1, -1):
        w = _slit_inverse(w, cs[j], d4s[j])
    return w


@numba.njit(cache=True)
def _flow_real(x, side, c, d4):
    """Image of a real point on the given side of the slit base c."""
    u = side * (x - c)
    if u < 0.0:
        u = 0.0
    return c + side * math.sqrt(u * u + d4)


@numba.njit(cache=True)
def _evolve(X, side, glued, cs, d4s, w_next, tol):
    """Flow real points through the slit maps; glue points crossed by the driver.

    X[0] and X[1] are the images of w+ and w-.  Returns the step count at
    which each point was glued (-1 if never).
    """
    n = X.size
    when = np.full(n, -1, dtype=np.int64)
    for k in range(cs.size):
        c = cs[k]
        d4 = d4s[k]
        for j in range(n):
            if not math.isfinite(X[j]):
                continue
            X[j] = _flow_real(X[j], side[j], c, d4)
        wn = w_next[k]
        for j in range(2, n):
            if glued[j] or not math.isfinite(X[j]):
                continue
            if side[j] * (X[j] - wn) < tol:
                glued[j] = True
                when[j] = k + 1
        for j in range(2, n):
            if glued[j]:
                X[j] = X[0] if side[j] > 0 else X[1]
    return when


# -------------------------------------------------------------- tracker


@dataclass
class TrackedPoint:
    label: str
    x0: float
    side: int  # +1 right of the start, -1 left
    x: float
    swallowed: bool = False
    swallow_step: int = -1


class BoundaryTracker:
    """Images under g_K of marked boundary points, with w+ / w- always present.

    Points are given as (label, position) with position a real number,
    +-inf, or the strings "w+" / "w-" for the two prime ends at the start.
    """

    def __init__(self, start: float, points=(), tol: float = 1e-9):
        self.start = float(start)
        self.tol = tol
        self.t = 0.0
        self.steps = 0
        self.points: list[TrackedPoint] = [
            TrackedPoint("w+", self.start, +1, self.start),
            TrackedPoint("w-", self.start, -1, self.start),
        ]
        for label, pos in points:
            self.add(label, pos)

    def add(self, label: str, pos) -> None:
        if isinstance(pos, str):
            if pos not in ("w+", "w-"):
                raise ValueError(f"bad position {pos!r}")
            side = 1 if pos == "w+" else -1
            x = self.start
            glued = True
        else:
            x = float(pos)
            if x == self.start:
                raise ValueError("a point at the start needs an explicit w+ or w- side")
            side = 1 if x > self.start else -1
            glued = False
        if self.steps:
            raise ValueError("points can only be added before evolution")
        self.points.append(TrackedPoint(label, x, side, x, glued, 0 if glued else -1))

    def copy(self) -> "BoundaryTracker":
        new = BoundaryTracker.__new__(BoundaryTracker)
        new.start, new.tol, new.t, new.steps = self.start, self.tol, self.t, self.steps
        new.points = [TrackedPoint(**vars(p)) for p in self.points]
        return new

    def __getitem__(self, label: str) -> TrackedPoint:
        for p in self.points:
            if p.label == label:
                return p
        raise KeyError(label)

    @property
    def d_K(self) -> float:
        return self.points[0].x

    @property
    def c_K(self) -> float:
        return self.points[1].x

    def images(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    def _arrays(self):
        X = np.array([p.x for p in self.points], dtype=float)
        side = np.array([p.side for p in self.points], dtype=float)
        glued = np.array([p.swallowed for p in self.points])
        return X, side, glued


def evolve_boundary(driver: DriverPath, tracker: BoundaryTracker, t_end: float) -> BoundaryTracker:
    """Flow the tracker's points from its current time to t_end; returns a new tracker.

    Points crossed by the driver (within tracker.tol) are glued to c_K or
    d_K according to their side and follow it from then on.
    """
    k0 = _grid_index(driver, tracker.t)
    k1 = _grid_index(driver, t_end)
    if k1 < k0:
        raise ValueError("t_end precedes the tracker's time")
    out = tracker.copy()
    if k1 == k0:
        return out
    X, side, glued = out._arrays()
    cs = driver.values[k0:k1]
    d4s = 4.0 * driver.increments()[k0:k1]
    when = _evolve(X, side, glued, cs, d4s, driver.values[k0 + 1:k1 + 1], out.tol)
    for j, p in enumerate(out.points):
        p.x = float(X[j])
        if glued[j] and not p.swallowed:
            p.swallowed = True
            p.swallow_step = int(when[j]) + k0
    out.t = float(driver.times[k1])
    out.steps = k1
    return out


# ----------------------------------------------------------- hull radius


@dataclass(frozen=True)
class HullSummary:
    hcap2: float | None
    radius_lo: float
    radius_hi: float


def radius_bracket(vplus_img: float, vminus_img: float, hcap2: float | None = None) -> HullSummary:
    """Koebe bracket [(V+ - V-)/4, V+ - V-] on diam(K u [v-, v+])."""
    if not vplus_img > vminus_img:
        raise ValueError(f"need V+ > V-, got {vplus_img} <= {vminus_img}")
    u = float(vplus_img - vminus_img)
    return HullSummary(hcap2, u / 4.0, u)


# ---------------------------------------------------------------- zipper


@dataclass(frozen=True)
class ZipperState:
    """Slit bases c_i and 4 x capacity increments of the elementary maps."""

    bases: np.ndarray
    d4: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_driver(cls, driver: DriverPath, t: float | None = None) -> "ZipperState":
        k = driver.n_steps if t is None else _grid_index(driver, t)
        return cls(np.ascontiguousarray(driver.values[:k]),
                   np.ascontiguousarray(4.0 * driver.increments()[:k]))

    @classmethod
    def empty(cls) -> "ZipperState":
        return cls(np.zeros(0), np.zeros(0))

    @property
    def n_maps(self) -> int:
        return self.bases.size

    @property
    def hcap2(self) -> float:
        return float(np.sum(self.d4) / 4.0)


def map_point(zipper: ZipperState, z, direction: str = "forward"):
    """Apply g_K (forward) or f_K = g_K^{-1} (inverse) of the composed slit maps."""
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(zs.imag < 0):
        raise HullDomainError("points must lie in the closed upper half-plane")
    out = np.empty_like(zs)
    n = zipper.n_maps
    if direction == "forward":
        for i, v in enumerate(zs):
            w = _compose_forward(complex(v), zipper.bases, zipper.d4, 0, n)
            if v.imag > 0 and w.imag <= 1e-14 * max(1.0, abs(w)):
                raise HullDomainError(f"{v} lies on the hull")
            out[i] = w
    elif direction == "inverse":
        for i, v in enumerate(zs):
            out[i] = _compose_inverse(complex(v), zipper.bases, zipper.d4, n)
    else:
        raise ValueError("direction must be 'forward' or 'inverse'")
    return out if np.ndim(z) else complex(out[0])


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    points: np.ndarray
    flagged: np.ndarray  # indices whose evaluation was not finite


def zipper_trace(driver: DriverPath, stride: int = 1) -> Trace:
    """Curve points eta(t_k) = f_0 o ... o f_{k-1}(c_{k-1}) for every stride-th k.

    The final grid point is always included.  Cost is O(N^2 / stride).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = driver.n_steps
    ks = np.arange(0, n + 1, stride)
    if ks[-1] != n:
        ks = np.append(ks, n)
    z = ZipperState.from_driver(driver)
    pts = tips(z, ks)
    bad = np.flatnonzero(~np.isfinite(pts))
    return Trace(driver.times[ks], pts, bad)


# ------------------------------------------------------- batched tips


@numba.njit(cache=True, nogil=True)
def _batch_inverse(xr, xi, kk, cs, d4s):
    """Apply f_0 o ... o f_{kk[p]-1} to point p; kk sorted in decreasing order.

    All points sweep the maps together, which keeps the sqrt chains
    independent and lets the loop vectorize.
    """
    m = xr.size
    if m == 0:
        return
    act = 0
    for j in range(kk[0] - 1, -1, -1):
        while act < m and kk[act] > j:
            act += 1
        c = cs[j]
        d4 = d4s[j]
        for p in range(act):
            a = xr[p] - c
            b = xi[p]
            re = a * a - b * b - d4
            im = 2.0 * a * b
            r = math.sqrt(re * re + im * im)
            t = math.sqrt(0.5 * (r + abs(re)))
            tt = t if t > 0.0 else 1.0
            x = t if re >= 0 else abs(im) / (2 * tt)
            y = im / (2 * tt) if re >= 0 else math.copysign(t, im)
            sd = 1.0 if a >= 0 else -1.0
            if y < 0 or (y == 0 and x * sd < 0):
                x = -x
                y = -y
            xr[p] = c + x
            xi[p] = y


@numba.njit(cache=True, nogil=True)
def _coarsen(cs, d4s, scale, eps):
    n = cs.size
    oc = np.empty(n)
    od = np.empty(n)
    ends = np.empty(n, dtype=np.int64)
    m = 0
    acc = 0.0
    mom = 0.0
    for j in range(n):
        acc += d4s[j]
        mom += d4s[j] * cs[j]
        lim = 4.0 * (eps * scale[j]) ** 2
        if acc >= lim or j == n - 1:
            oc[m] = mom / acc if acc > 0 else cs[j]
            od[m] = acc
            ends[m] = j + 1
            m += 1
            acc = 0.0
            mom = 0.0
    return oc[:m], od[:m], ends[:m]


def coarsen(zipper: ZipperState, scale, eps: float = 0.005):
    """Merge consecutive slit maps while their capacity stays below (eps * scale)^2.

    A merged block is one slit at the capacity-weighted mean base, which
    matches the block to first order in its capacity.  `scale` is a
    per-map length (or a scalar).  Returns the coarse zipper and, for each
    coarse map, the number of fine maps it covers cumulatively.
    """
    sc = np.broadcast_to(np.asarray(scale, dtype=float), zipper.bases.shape).copy()
    if zipper.n_maps == 0:
        return zipper, np.zeros(0, dtype=np.int64)
    c, d, ends = _coarsen(zipper.bases, zipper.d4, sc, float(eps))
    return ZipperState(c, d, {"coarsened_from": zipper.n_maps, "eps": eps}), ends


def tips(zipper: ZipperState, ks, outer: ZipperState | None = None) -> np.ndarray:
    """Curve points f_0 o ... o f_{k-1}(c_{k-1}) for each k in ks (k = 0 gives c_0).

    With `outer`, each point is further mapped by outer's full inverse map.
    """
    ks = np.asarray(ks, dtype=np.int64)
    out = np.empty(ks.size, dtype=complex)
    if ks.size == 0:
        return out
    order = np.argsort(-ks, kind="stable")
    kk = ks[order]
    base = zipper.bases
    xr = np.where(kk > 0, base[np.maximum(kk - 1, 0)], base[0] if base.size else 0.0)
    xi = np.zeros(kk.size)
    _batch_inverse(xr, xi, kk, base, zipper.d4)
    if outer is not None and outer.n_maps:
        kk2 = np.full(kk.size, outer.n_maps, dtype=np.int64)
        _batch_inverse(xr, xi, kk2, outer.bases, outer.d4)
    out[order] = xr + 1j * xi
    return out


def max_tip_modulus(zipper: ZipperState, ks=None, outer: ZipperState | None = None) -> float:
    """Largest |eta(t_k)| over the given step counts (all steps by default)."""
    if ks is None:
        ks = np.arange(1, zipper.n_maps + 1)
    pts = tips(zipper, ks, outer)
    return float(np.max(np.abs(pts))) if pts.size else 0.0

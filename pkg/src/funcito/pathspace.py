"""
Exact finite representation of càdlàg paths on [0, T].

A path is a piecewise-linear continuous component sampled on a `TimeGrid`
plus a finite ledger of jumps that sit on grid points::

    ω(t) = cont(t) + Σ_{τ ≤ t} Δ_τ

Because the jumps are explicit, ω = ω^c + ω^d is an exact decomposition and
the quadratic variation of the continuous component can be read off the
grid without any jump detection.

Times supplied by callers are floats; internally everything is done with grid
indices. A float time that lies within a tiny fraction of the smallest grid
step of a grid point is identified with that point, otherwise operations that
need a knot at that time (``stop``, ``bump``, ``ramp``) insert one. The
function represented by the path never changes under such an insertion.

All objects here are immutable.
"""

from __future__ import annotations

import csv
import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError

__all__ = [
    "TimeGrid",
    "CadlagPath",
    "d_infty",
    "align",
]

# a float time within this fraction of the smallest step of a knot is that knot
SNAP_RTOL = 1e-9


def _interp(pts: np.ndarray, vals: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear interpolation; the one formula used everywhere so that values
    at inserted knots match pointwise evaluation bitwise."""
    i = np.clip(np.searchsorted(pts, t, side="right") - 1, 0, pts.size - 2)
    w = (t - pts[i]) / (pts[i + 1] - pts[i])
    return vals[i] + w * (vals[i + 1] - vals[i])


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class TimeGrid:
    """Strictly increasing time points 0 = t_0 < t_1 < ... < t_N = T."""

    __slots__ = ("points", "_tol")

    def __init__(self, points: Sequence[float]):
        pts = np.array(points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DomainError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise DomainError(f"a time grid starts at 0, got {pts[0]!r}")
        steps = np.diff(pts)
        if not np.all(steps > 0) or not np.all(np.isfinite(pts)):
            raise DomainError("grid points must be finite and strictly increasing")
        self.points = _frozen(pts)
        self._tol = SNAP_RTOL * float(steps.min())

    @classmethod
    def uniform(cls, n_steps: int, horizon: float = 1.0) -> "TimeGrid":
        if n_steps < 1:
            raise DomainError("n_steps must be >= 1")
        if not horizon > 0:
            raise DomainError("horizon must be positive")
        return cls(np.linspace(0.0, horizon, n_steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return self.points.size - 1

    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self is other or np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def __repr__(self) -> str:
        return f"TimeGrid(n_steps={self.n_steps}, horizon={self.horizon:g})"

    def check(self, t: float) -> float:
        t = float(t)
        if not (-self._tol <= t <= self.horizon + self._tol) or math.isnan(t):
            raise DomainError(f"time {t!r} outside [0, {self.horizon:g}]")
        return min(max(t, 0.0), self.horizon)

    def find(self, t: float) -> Optional[int]:
        """Index of the grid point identified with `t`, or None."""
        t = self.check(t)
        k = int(np.searchsorted(self.points, t))
        for j in (k - 1, k):
            if 0 <= j < self.points.size and abs(self.points[j] - t) <= self._tol:
                return j
        return None

    def segment(self, t: float) -> int:
        """Index i with t_i <= t < t_{i+1} (i = N when t = T)."""
        k = self.find(t)
        if k is not None:
            return k
        return int(np.searchsorted(self.points, float(t), side="right")) - 1

    def insert(self, times: Iterable[float]) -> Tuple["TimeGrid", np.ndarray]:
        """Grid with `times` added as knots.

        Returns the new grid and an index map sending old knot i to its
        position in the new grid.
        """
        new = sorted({self.check(t) for t in times if self.find(t) is None})
        if not new:
            return self, np.arange(self.points.size)
        pts = np.concatenate([self.points, new])
        order = np.argsort(pts, kind="stable")
        merged = pts[order]
        index_map = np.empty(self.points.size, dtype=np.int64)
        index_map[order[order < self.points.size]] = np.nonzero(order < self.points.size)[0]
        return TimeGrid(merged), index_map

    def union(self, other: "TimeGrid") -> Tuple["TimeGrid", np.ndarray, np.ndarray]:
        if abs(other.horizon - self.horizon) > max(self._tol, other._tol):
            raise DomainError("paths live on different horizons")
        if other == self:
            ident = np.arange(self.points.size)
            return self, ident, ident
        grid, map_self = self.insert(other.points)
        map_other = np.array([grid.find(t) for t in other.points], dtype=np.int64)
        return grid, map_self, map_other


class CadlagPath:
    """Càdlàg path: piecewise-linear continuous part plus a jump ledger.

    Parameters
    ----------
    grid : TimeGrid or sequence of float
        Knots of the continuous component.
    cont : array_like
        Values of the continuous component at the knots.
    jumps : iterable of (time, size), optional
        Jump ledger. Times must be grid points other than 0. Entries at the same
        time are summed; a zero total removes the entry.
    """

    __slots__ = ("grid", "cont", "_jumps", "_jcum")

    def __init__(self, grid, cont, jumps: Iterable[Tuple[float, float]] = ()):
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)
        dense = np.zeros(len(grid))
        for tau, size in jumps:
            k = grid.find(tau)
            if k is None:
                raise DomainError(f"jump time {tau!r} is not a grid point")
            dense[k] += float(size)
        self._init(grid, np.array(cont, dtype=float), dense)

    def _init(self, grid: TimeGrid, cont: np.ndarray, dense: np.ndarray) -> None:
        if cont.shape != (len(grid),):
            raise DomainError(
                f"continuous part has shape {cont.shape}, grid has {len(grid)} points"
            )
        if dense[0] != 0.0:
            raise DomainError("a jump at time 0 has no left limit")
        if not (np.all(np.isfinite(cont)) and np.all(np.isfinite(dense))):
            raise DomainError("path values must be finite")
        self.grid = grid
        self.cont = _frozen(cont)
        self._jumps = _frozen(dense)
        self._jcum = _frozen(np.cumsum(dense))

    @classmethod
    def from_arrays(cls, grid: TimeGrid, cont, jump_sizes=None) -> "CadlagPath":
        """Build from a continuous part and a dense per-knot array of jump sizes."""
        obj = cls.__new__(cls)
        cont = np.array(cont, dtype=float)
        dense = np.zeros(len(grid)) if jump_sizes is None else np.array(jump_sizes, dtype=float)
        if dense.shape != (len(grid),):
            raise DomainError("jump array does not match the grid")
        obj._init(grid, cont, dense)
        return obj

    @classmethod
    def zero(cls, grid: TimeGrid) -> "CadlagPath":
        return cls.from_arrays(grid, np.zeros(len(grid)))

    @classmethod
    def linear(cls, grid: TimeGrid, slope: float = 1.0, start: float = 0.0) -> "CadlagPath":
        return cls.from_arrays(grid, start + slope * grid.points)

    # -- basic accessors -------------------------------------------------

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def jump_sizes(self) -> np.ndarray:
        """Dense array of ledger sizes per knot (zero where there is no jump)."""
        return self._jumps

    @property
    def jump_indices(self) -> np.ndarray:
        return np.flatnonzero(self._jumps)

    @property
    def jumps(self) -> list:
        """The ledger as a list of (time, size) sorted by time."""
        idx = self.jump_indices
        return list(zip(self.grid.points[idx].tolist(), self._jumps[idx].tolist()))

    @property
    def values(self) -> np.ndarray:
        """ω(t_i) at every knot."""
        return self.cont + self._jcum

    @property
    def left_values(self) -> np.ndarray:
        """ω(t_i−) at every knot; the entry at t_0 repeats ω(0)."""
        return self.cont + (self._jcum - self._jumps)

    def is_continuous(self) -> bool:
        return not self._jumps.any()

    def __repr__(self) -> str:
        return f"CadlagPath({self.grid!r}, jumps={len(self.jump_indices)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, CadlagPath):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.cont, other.cont)
            and np.array_equal(self._jumps, other._jumps)
        )

    __hash__ = None

    # -- evaluation ------------------------------------------------------

    def evaluate(self, t: Union[float, np.ndarray]):
        """Value ω(t), right-continuous, linear between knots.

        Accepts a scalar or an array of times.
        """
        if np.ndim(t):
            return np.array([self.evaluate(s) for s in np.ravel(t)]).reshape(np.shape(t))
        k = self.grid.find(t)
        if k is not None:
            return float(self.cont[k] + self._jcum[k])
        t = float(t)
        i = int(np.searchsorted(self.grid.points, t, side="right")) - 1
        c = _interp(self.grid.points, self.cont, np.array([t]))[0]
        return float(c + self._jcum[i])

    __call__ = evaluate

    def jump_at(self, t: float) -> float:
        k = self.grid.find(t)
        return 0.0 if k is None else float(self._jumps[k])

    def left_limit(self, t: float) -> float:
        """ω(t−); undefined at t = 0."""
        if self.grid.check(t) == 0.0:
            raise DomainError("no left limit at t = 0")
        return self.evaluate(t) - self.jump_at(t)

    # -- grid manipulation ------------------------------------------------

    def refine(self, grid: TimeGrid, index_map: Optional[np.ndarray] = None) -> "CadlagPath":
        """Same path on a finer grid containing every current knot."""
        if grid is self.grid or grid == self.grid:
            return self
        if index_map is None:
            index_map = np.array([grid.find(t) for t in self.grid.points], dtype=object)
            if any(k is None for k in index_map):
                raise DomainError("refinement grid must contain every knot")
            index_map = index_map.astype(np.int64)
        cont = _interp(self.grid.points, self.cont, grid.points)
        cont[index_map] = self.cont
        dense = np.zeros(len(grid))
        dense[index_map] = self._jumps
        return CadlagPath.from_arrays(grid, cont, dense)

    def with_knots(self, times: Iterable[float]) -> "CadlagPath":
        grid, index_map = self.grid.insert(times)
        return self.refine(grid, index_map)

    def restrict(self, coarse: TimeGrid) -> "CadlagPath":
        """Sample onto a coarser grid whose knots are a subset of this one.

        The continuous part is subsampled and each jump is moved to the first
        coarse knot at or after it, so values at coarse knots are unchanged.
        """
        pos = [self.grid.find(t) for t in coarse.points]
        if any(k is None for k in pos):
            raise DomainError("coarse grid must be a subset of the path grid")
        pos = np.asarray(pos, dtype=np.int64)
        idx = self.jump_indices
        dense = np.zeros(len(coarse))
        np.add.at(dense, np.searchsorted(pos, idx, side="left"), self._jumps[idx])
        return CadlagPath.from_arrays(coarse, self.cont[pos], dense)

    def _knot(self, t: float) -> Tuple["CadlagPath", int]:
        k = self.grid.find(t)
        if k is not None:
            return self, k
        p = self.with_knots([t])
        return p, p.grid.find(t)

    # -- path operations --------------------------------------------------

    def stop(self, t: float) -> "CadlagPath":
        """The stopped path ω^t = ω(· ∧ t)."""
        p, k = self._knot(t)
        if k == len(p.grid) - 1:
            return p
        cont = p.cont.copy()
        cont[k + 1 :] = cont[k]
        dense = p._jumps.copy()
        dense[k + 1 :] = 0.0
        return CadlagPath.from_arrays(p.grid, cont, dense)

    def stop_before(self, t: float) -> "CadlagPath":
        """ω^{t−}: ω on [0, t), frozen at ω(t−) from t on."""
        if self.grid.check(t) == 0.0:
            raise DomainError("no left limit at t = 0")
        s = self.stop(t)
        k = s.grid.find(t)
        if s._jumps[k] == 0.0:
            return s
        dense = s._jumps.copy()
        dense[k] = 0.0
        return CadlagPath.from_arrays(s.grid, s.cont, dense)

    def bump(self, t: float, h: float) -> "CadlagPath":
        """ω + h·1_{[t,T]}.

        For t > 0 the ledger gains (or merges) a jump of size h at t. At t = 0
        the indicator covers the whole interval and the continuous part is
        shifted instead.
        """
        if h == 0.0:
            return self
        p, k = self._knot(t)
        if k == 0:
            return CadlagPath.from_arrays(p.grid, p.cont + h, p._jumps)
        dense = p._jumps.copy()
        dense[k] += h
        return CadlagPath.from_arrays(p.grid, p.cont, dense)

    def ramp(self, t: float, h: float) -> "CadlagPath":
        """ω^t + χ_{t,h} with χ_{t,h}(s) = (s−t)1_{(t,t+h]}(s) + h1_{(t+h,T]}(s)."""
        if not h > 0:
            raise DomainError("ramp width must be positive")
        t = self.grid.check(t)
        if t + h > self.horizon + self.grid._tol:
            raise DomainError(f"t + h = {t + h!r} exceeds the horizon {self.horizon:g}")
        p = self.with_knots([t, min(t + h, self.horizon)])
        s = p.stop(t)
        k = s.grid.find(t)
        pts = s.grid.points
        chi = np.clip(pts - pts[k], 0.0, h)
        chi[: k + 1] = 0.0
        return CadlagPath.from_arrays(s.grid, s.cont + chi, s._jumps)

    def shift(self, c: float) -> "CadlagPath":
        """ω + c."""
        return CadlagPath.from_arrays(self.grid, self.cont + c, self._jumps)

    def decompose(self) -> Tuple["CadlagPath", "CadlagPath"]:
        """(ω^c, ω^d) with ω = ω^c + ω^d."""
        zeros = np.zeros(len(self.grid))
        return (
            CadlagPath.from_arrays(self.grid, self.cont),
            CadlagPath.from_arrays(self.grid, zeros, self._jumps),
        )

    # -- path statistics -------------------------------------------------

    def sup_norm(self, t: Optional[float] = None) -> float:
        """‖ω‖_t = sup_{s ≤ t} |ω_s|."""
        t = self.horizon if t is None else self.grid.check(t)
        k = self.grid.segment(t)
        vals = np.abs(self.values[: k + 1])
        lefts = np.abs(self.left_values[1 : k + 1])
        m = max(float(vals.max()), float(lefts.max()) if lefts.size else 0.0)
        return max(m, abs(self.evaluate(t)))

    def total_variation(self, t: Optional[float] = None) -> float:
        t = self.horizon if t is None else self.grid.check(t)
        k = self.grid.segment(t)
        tv = math.fsum(np.abs(np.diff(self.cont[: k + 1])))
        if k < len(self.grid) - 1 and self.grid.find(t) is None:
            tv += abs(self.evaluate(t) - self._jcum[k] - self.cont[k])
        return tv + math.fsum(np.abs(self._jumps[: k + 1]))

    def realized_qv_continuous(self, t: Optional[float] = None) -> float:
        """Σ (cont(t_{i+1}) − cont(t_i))² over steps up to t; jumps excluded."""
        t = self.horizon if t is None else self.grid.check(t)
        k = self.grid.segment(t)
        qv = math.fsum(np.diff(self.cont[: k + 1]) ** 2)
        if k < len(self.grid) - 1 and self.grid.find(t) is None:
            qv += (self.evaluate(t) - self._jcum[k] - self.cont[k]) ** 2
        return qv

    # -- arithmetic -------------------------------------------------------

    def _binary(self, other: "CadlagPath", sign: float) -> "CadlagPath":
        a, b = align(self, other)
        return CadlagPath.from_arrays(
            a.grid, a.cont + sign * b.cont, a._jumps + sign * b._jumps
        )

    def __add__(self, other):
        if isinstance(other, CadlagPath):
            return self._binary(other, 1.0)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, CadlagPath):
            return self._binary(other, -1.0)
        return NotImplemented

    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return CadlagPath.from_arrays(self.grid, c * self.cont, c * self._jumps)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # -- serialization ----------------------------------------------------

    def to_csv(self, path) -> None:
        """Write rows ``time,cont,jump`` (jump is 0 except at jump times)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "cont", "jump"])
            for row in zip(self.grid.points, self.cont, self._jumps):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "CadlagPath":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["time", "cont", "jump"]:
                raise DomainError(f"expected header time,cont,jump, got {reader.fieldnames}")
            rows = [(float(r["time"]), float(r["cont"]), float(r["jump"])) for r in reader]
        if not rows:
            raise DomainError("empty path file")
        times, cont, jumps = map(np.array, zip(*rows))
        return cls.from_arrays(TimeGrid(times), cont, jumps)


def align(p: CadlagPath, q: CadlagPath) -> Tuple[CadlagPath, CadlagPath]:
    """Represent two paths on the union of their grids."""
    if p.grid is q.grid or p.grid == q.grid:
        return p, q
    grid, mp, mq = p.grid.union(q.grid)
    return p.refine(grid, mp), q.refine(grid, mq)


def d_infty(t: float, p: CadlagPath, t2: float, p2: CadlagPath) -> float:
    """|t − t2| + sup_{s ≤ T} |p(t ∧ s) − p2(t2 ∧ s)|."""
    t = p.grid.check(t)
    t2 = p2.grid.check(t2)
    diff = p.stop(t) - p2.stop(t2)
    return abs(t - t2) + diff.sup_norm()

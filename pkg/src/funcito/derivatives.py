"""
Finite-difference estimators of functional derivatives.

Each estimator evaluates a difference quotient along a geometric step
schedule h_k = h0·ratio^k and extrapolates h → 0 with a Richardson table.

========================  ==============================================  ==========
estimator                 quotient                                         error model
========================  ==============================================  ==========
horizontal                [f(t+h, ω^t) − f(t, ω)] / h                      h, h², ...
dupire_vertical           [f(t, ω+h1_[t,T]) − f(t, ω−h1_[t,T])] / 2h       h², h⁴, ...
dupire_second             [f(+h) − 2f(ω) + f(−h)] / h²                     h², h⁴, ...
chitashvili_vertical      [f(t+h, ω^t+χ_{t,h}) − f(t+h, ω^t)] / h          h, h², ...
def4_space                [f(t+h, ω) − f(t+h, ω^t)] / (ω_{t+h} − ω_t)      h, h², ...
========================  ==============================================  ==========

One-sided estimators only ever evaluate f at times >= t with h > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import DegenerateIncrementError, DomainError, EvaluationError
from .functionals import Functional
from .pathspace import CadlagPath

__all__ = [
    "StepSchedule",
    "DerivativeEstimate",
    "default_schedule",
    "richardson",
    "horizontal",
    "dupire_vertical",
    "dupire_second",
    "chitashvili_vertical",
    "chitashvili_second",
    "def4_time",
    "def4_space",
    "ESTIMATORS",
]

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class StepSchedule:
    h0: float
    ratio: float = 0.5
    count: int = 6

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.count < 3:
            raise ValueError("a schedule needs at least 3 steps")

    def steps(self) -> np.ndarray:
        return self.h0 * self.ratio ** np.arange(self.count)

    def finer(self) -> "StepSchedule":
        """The same schedule shifted one level down."""
        return StepSchedule(self.h0 * self.ratio, self.ratio, self.count)


def default_schedule(path: CadlagPath) -> StepSchedule:
    return StepSchedule(8.0 * path.grid.mesh(), 0.5, 6)


@dataclass
class DerivativeEstimate:
    value: float
    raw: List[Tuple[float, float]]
    error_indicator: float
    converged: bool
    extrapolants: List[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "error_indicator": self.error_indicator,
            "converged": self.converged,
            "raw": [list(r) for r in self.raw],
        }


def richardson(hs, qs, order: int = 1) -> Tuple[float, List[float]]:
    """Richardson table for q(h) = q0 + c1 h^order + c2 h^{2·order} + ...

    Returns the final diagonal entry and the whole diagonal.
    """
    hs = np.asarray(hs, dtype=float)
    table = [[float(q)] for q in qs]
    for i in range(1, len(hs)):
        for j in range(1, i + 1):
            r = (hs[i - j] / hs[i]) ** order
            prev, cur = table[i - 1][j - 1], table[i][j - 1]
            table[i].append(cur + (cur - prev) / (r - 1.0))
    diag = [row[-1] for row in table]
    return diag[-1], diag


def _estimate(hs, qs, order, tol) -> DerivativeEstimate:
    if not np.all(np.isfinite(qs)):
        raise EvaluationError("non-finite difference quotient")
    value, diag = richardson(hs, qs, order)
    err = abs(diag[-1] - diag[-2])
    return DerivativeEstimate(
        value=value,
        raw=list(zip(map(float, hs), map(float, qs))),
        error_indicator=err,
        converged=bool(err <= tol),
        extrapolants=diag,
    )


def _schedule(p: CadlagPath, s: Optional[StepSchedule]) -> StepSchedule:
    return default_schedule(p) if s is None else s


def _need_room(p: CadlagPath, t: float, h0: float) -> float:
    t = p.grid.check(t)
    if t >= p.horizon:
        raise DomainError("no room for a forward step at t = T")
    if t + h0 > p.horizon * (1 + 1e-12):
        raise DomainError(f"t + h0 = {t + h0:g} exceeds the horizon {p.horizon:g}")
    return t


def horizontal(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """∂_t f(t, ω), the flat-extension derivative."""
    s = _schedule(p, s)
    t = _need_room(p, t, s.h0)
    hs = s.steps()
    stopped = p.stop(t)
    base = f(t, p)
    qs = [(f(t + h, stopped) - base) / h for h in hs]
    return _estimate(hs, qs, 1, tol)


def dupire_vertical(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """∂_ω f(t, ω) from symmetric bumps ω ± h·1_[t,T]."""
    s = _schedule(p, s)
    t = p.grid.check(t)
    hs = s.steps()
    qs = [(f(t, p.bump(t, h)) - f(t, p.bump(t, -h))) / (2.0 * h) for h in hs]
    return _estimate(hs, qs, 2, tol)


def dupire_second(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """∂_ωω f(t, ω) from the central second difference."""
    s = _schedule(p, s)
    t = p.grid.check(t)
    hs = s.steps()
    base = f(t, p)
    qs = [(f(t, p.bump(t, h)) - 2.0 * base + f(t, p.bump(t, -h))) / (h * h) for h in hs]
    return _estimate(hs, qs, 2, tol)


def chitashvili_vertical(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """D_ω f(t, ω), the derivative along the continuous ramp χ_{t,h}."""
    s = _schedule(p, s)
    t = _need_room(p, t, s.h0)
    hs = s.steps()
    stopped = p.stop(t)
    qs = [(f(t + h, p.ramp(t, h)) - f(t + h, stopped)) / h for h in hs]
    return _estimate(hs, qs, 1, tol)


def chitashvili_second(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """D_ωω f = D_ω(D_ω f) by nesting the ramp estimator.

    The inner estimator uses the outer schedule shifted one level finer. The
    result is marked unconverged if any inner estimate failed to converge.
    """
    s = _schedule(p, s)
    inner_s = s.finer()
    inner_ok = []

    def inner(u: float, q: CadlagPath) -> float:
        est = chitashvili_vertical(f, u, q, inner_s, tol)
        inner_ok.append(est.converged)
        return est.value

    # the inner estimate at t + h needs its own forward room
    _need_room(p, t, s.h0 + inner_s.h0)
    outer = chitashvili_vertical(Functional(f"D[{f.name}]", inner), t, p, s, tol)
    outer.converged = outer.converged and all(inner_ok)
    return outer


def def4_time(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """f_t of the pathwise definition; the same limit as the horizontal derivative."""
    return horizontal(f, t, p, s, tol)


def def4_space(
    f: Functional, t: float, p: CadlagPath, s: Optional[StepSchedule] = None, tol: float = DEFAULT_TOL
) -> DerivativeEstimate:
    """f_ω along the path's own increment: [f(t+h, ω) − f(t+h, ω^t)] / (ω_{t+h} − ω_t).

    Meant for paths with a C¹ continuous part and no jumps after t. Raises
    `DegenerateIncrementError` when the increment over some step is
    negligible compared with h.
    """
    s = _schedule(p, s)
    t = _need_room(p, t, s.h0)
    hs = s.steps()
    stopped = p.stop(t)
    base = p(t)
    qs = []
    for h in hs:
        incr = p(t + h) - base
        if abs(incr) <= 1e-10 * h:
            raise DegenerateIncrementError(f"path increment vanishes over [t, t+{h:g}]")
        qs.append((f(t + h, p) - f(t + h, stopped)) / incr)
    return _estimate(hs, qs, 1, tol)


ESTIMATORS = {
    "horizontal": horizontal,
    "dupire": dupire_vertical,
    "dupire2": dupire_second,
    "chit": chitashvili_vertical,
    "chit2": chitashvili_second,
    "def4t": def4_time,
    "def4x": def4_space,
}

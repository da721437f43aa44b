"""
Term-by-term evaluation of change-of-variable formulas on simulated paths.

For a functional f with derivatives f⁰ (time), f¹ and f^{1,1} (space) the
càdlàg functional Itô formula reads

    f(t,X) − f(0,X) = ∫_0^t f⁰(s,X) ds + ∫_0^t f¹(s−,X) dX_s
                      + ½∫_0^t f^{1,1}(s,X) d⟨X^c⟩_s
                      + Σ_{s≤t} [f(s,X) − f(s−,X) − f¹(s−,X) ΔX_s].

`ito_decompose` discretizes every term on the path grid and reports the
residual. The residual is the object of study, so it is never asserted here.

Discretization conventions:

* time integrals use the trapezoid rule on f⁰(t_i) and f⁰(t_{i+1}−);
* the stochastic integral is a left-point sum over continuous increments,
  plus f¹(τ−)·Δ_τ over the jump ledger;
* ⟨X^c⟩ increments are the squared continuous increments of the path; when
  the sample carries a clock the clock version is reported alongside.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .derivatives import (
    StepSchedule,
    chitashvili_vertical,
    dupire_vertical,
    horizontal,
)
from .errors import DomainError
from .functionals import Functional, stieltjes, stieltjes_increments
from .pathspace import CadlagPath, TimeGrid
from .simulate import GeneratorConfig, SemimartingaleSample, approximant

__all__ = [
    "ItoDecomposition",
    "ConvergenceReport",
    "ito_decompose",
    "fv_change_of_variable",
    "ito_convergence",
    "wong_zakai",
    "wong_zakai_ensemble",
    "prop1_check",
    "prop3_check",
    "prop2_check",
    "condition_v_ratio",
    "jump_term_by_ledger",
    "loglog_slope",
]


@dataclass
class ItoDecomposition:
    lhs: float
    time_term: float
    stoch_term: float
    qv_term: float
    jump_term: float
    residual: float
    # ½∫f^{1,1} d⟨M⟩ with the generator's clock, when one is supplied
    qv_term_clock: Optional[float] = None

    @property
    def terms_sum(self) -> float:
        return ((self.time_term + self.stoch_term) + self.qv_term) + self.jump_term

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.lhs))

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / self.scale


@dataclass
class ConvergenceReport:
    levels: List[Tuple[float, float]]
    slope: float
    passed: bool
    tolerance: float
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.levels:
            raise ValueError("a convergence report needs at least one level")

    @property
    def final(self) -> float:
        return self.levels[-1][1]

    def metrics(self) -> List[float]:
        return [m for _, m in self.levels]

    def decreasing(self, strict: bool = True) -> bool:
        m = self.metrics()
        pairs = zip(m, m[1:])
        return all(b < a for a, b in pairs) if strict else all(b <= a for a, b in pairs)

    def as_dict(self) -> dict:
        return {
            "levels": [{"param": p, "metric": m} for p, m in self.levels],
            "slope": self.slope,
            "pass": self.passed,
            "tolerance": self.tolerance,
            **({"details": self.details} if self.details else {}),
        }


def loglog_slope(params: Sequence[float], metrics: Sequence[float]) -> float:
    """Least-squares slope of log(metric) against log(param).

    Returns nan when fewer than two metrics are positive.
    """
    p = np.asarray(params, dtype=float)
    m = np.asarray(metrics, dtype=float)
    ok = m > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(p[ok]), np.log(m[ok]), 1)[0])


def _stopped(X: Union[CadlagPath, SemimartingaleSample], t: Optional[float]):
    """Path stopped at t, its knot index and the clock on the same grid."""
    if isinstance(X, SemimartingaleSample):
        path, clock = X.X, X.clock
    else:
        path, clock = X, None
    if t is None:
        return path, len(path.grid) - 1, clock
    s = path.stop(t)
    k = s.grid.find(t)
    if clock is not None:
        clock = np.interp(s.grid.points, path.grid.points, clock)
        clock[k + 1 :] = clock[k]
    return s, k, clock


def _fsum(a) -> float:
    return math.fsum(np.asarray(a, dtype=float).tolist())


def _time_integral(f0: Functional, path: CadlagPath, k: int) -> float:
    dt = np.diff(path.grid.points)[:k]
    return _fsum(0.5 * (f0.along(path)[:k] + f0.along_left(path)[1 : k + 1]) * dt)


def ito_decompose(
    f: Functional, X: Union[CadlagPath, SemimartingaleSample], t: Optional[float] = None
) -> ItoDecomposition:
    """Evaluate every term of the functional Itô formula on a path.

    Needs oracle components ``dt`` (f⁰), ``chit_v`` (f¹) and ``chit_vv``
    (f^{1,1}); raises `ConfigurationError` otherwise.
    """
    f0 = f.oracle.require("dt")
    f1 = f.oracle.require("chit_v")
    f11 = f.oracle.require("chit_vv")
    path, k, clock = _stopped(X, t)

    F, Fl = f.along(path), f.along_left(path)
    f1v, f1l = f1.along(path), f1.along_left(path)
    f11v = f11.along(path)
    dc = np.diff(path.cont)[:k]
    J = path.jump_sizes[: k + 1]
    jumps = np.flatnonzero(J)

    lhs = float(F[k] - F[0])
    time_term = _time_integral(f0, path, k)
    stoch_term = _fsum(np.concatenate([f1v[:k] * dc, f1l[jumps] * J[jumps]]))
    qv_term = 0.5 * _fsum(f11v[:k] * dc * dc)
    jump_term = _fsum(F[jumps] - Fl[jumps] - f1l[jumps] * J[jumps])
    qv_clock = None
    if clock is not None:
        qv_clock = 0.5 * _fsum(f11v[:k] * np.diff(clock)[:k])
    dec = ItoDecomposition(lhs, time_term, stoch_term, qv_term, jump_term, 0.0, qv_clock)
    dec.residual = lhs - dec.terms_sum
    return dec


def fv_change_of_variable(f: Functional, path: CadlagPath, t: Optional[float] = None) -> ItoDecomposition:
    """Change of variables along a finite-variation path.

        f(t,ω) − f(0,ω) = ∫ f_t ds + ∫ f_ω dω^c + Σ_{s≤t} [f(s,ω) − f(s−,ω)]

    with f_t = oracle ``dt`` and f_ω = oracle ``chit_v``. The dω^c integral is
    the trapezoid rule on the piecewise-linear continuous part. qv_term is 0.
    """
    f0 = f.oracle.require("dt")
    f1 = f.oracle.require("chit_v")
    path, k, _ = _stopped(path, t)
    F, Fl = f.along(path), f.along_left(path)
    dc = np.diff(path.cont)[:k]
    jumps = np.flatnonzero(path.jump_sizes[: k + 1])

    lhs = float(F[k] - F[0])
    time_term = _time_integral(f0, path, k)
    stoch_term = _fsum(0.5 * (f1.along(path)[:k] + f1.along_left(path)[1 : k + 1]) * dc)
    jump_term = _fsum(F[jumps] - Fl[jumps])
    dec = ItoDecomposition(lhs, time_term, stoch_term, 0.0, jump_term, 0.0)
    dec.residual = lhs - dec.terms_sum
    return dec


def jump_term_by_ledger(
    f: Functional, path: CadlagPath, t: Optional[float] = None
) -> List[Tuple[float, float]]:
    """Per-jump contributions f(τ) − f(τ−) − f¹(τ−)Δ_τ, computed pointwise.

    An independent route to the jump term of `ito_decompose`: every entry is
    evaluated with single-point calls on stopped paths.
    """
    f1 = f.oracle.require("chit_v")
    out = []
    for tau, size in path.jumps:
        if t is not None and tau > t:
            break
        before = path.stop_before(tau)
        out.append((tau, f(tau, path) - f(tau, before) - f1(tau, before) * size))
    return out


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def ito_convergence(
    f: Functional,
    generator: GeneratorConfig,
    levels: Sequence[int],
    seeds: Sequence[int],
    tol: float = 0.05,
    threads: int = 1,
) -> ConvergenceReport:
    """Median relative residual of `ito_decompose` at t = T per grid size.

    For each seed a single path is simulated on the finest grid and observed
    on the coarser ones, so successive levels refine the same path. Every
    level must divide the finest one.
    """
    levels = sorted(int(n) for n in levels)
    if len(levels) < 3:
        raise DomainError("need at least 3 grid levels")
    finest = levels[-1]
    if any(finest % n for n in levels):
        raise DomainError("every level must divide the finest level")
    grids = [TimeGrid.uniform(n, generator.horizon) for n in levels]

    def per_seed(seed):
        fine = generator.sample(finest, seed)
        row = []
        for grid in grids:
            sample = fine if grid.n_steps == finest else fine.restrict(grid)
            row.append(ito_decompose(f, sample).relative_residual)
        return row

    table = np.array(_map(per_seed, list(seeds), threads))
    medians = np.median(table, axis=0)
    return ConvergenceReport(
        levels=[(float(n), float(m)) for n, m in zip(levels, medians)],
        slope=loglog_slope(levels, medians),
        passed=bool(medians[-1] <= tol),
        tolerance=tol,
        details={"seeds": len(seeds)},
    )


def _wz_target(f: Functional, sample: SemimartingaleSample, k: int, path: CadlagPath) -> float:
    """∫_0^t f(s−,X) dX + ½∫_0^t f¹(s,X) d⟨X^c⟩ on the sample grid.

    Finite-variation increments are integrated with the trapezoid rule, the
    continuous martingale with left-point sums, and ⟨X^c⟩ is the realized
    quadratic variation of M^c.
    """
    f1 = f.oracle.require("chit_v")
    fv, fl = f.along(path), f.along_left(path)
    fv_part = (sample.A_c + sample.A_d) + sample.M_d
    dfv = np.diff(fv_part.cont)
    dm = np.diff(sample.M_c.cont)
    # same grouping as the Stieltjes functional so that dm = 0 reproduces it bitwise
    trap = 0.5 * (fv[:-1] + fl[1:]) * dfv
    inc = (trap + fv[:-1] * dm) + fl[1:] * path.jump_sizes[1:]
    inc = inc + 0.5 * f1.along(path)[:-1] * dm * dm
    return float(np.cumsum(inc)[k - 1]) if k else 0.0


def wong_zakai(
    f: Functional,
    X: SemimartingaleSample,
    n_levels: Sequence[float] = (4, 16, 64, 256),
    t: Optional[float] = None,
    tol: float = 0.05,
) -> ConvergenceReport:
    """|∫_0^t f(s−,Vⁿ) dVⁿ − (∫_0^t f(s−,X) dX + ½∫_0^t f¹(s,X) d⟨X^c⟩)| per n.

    Vⁿ is `simulate.approximant`, a finite-variation path; the integral along
    it is the ordinary Stieltjes integral of the `stieltjes` functional.
    """
    k = X.grid.n_steps if t is None else X.grid.find(t)
    if k is None:
        raise DomainError("t must be a grid point of the sample")
    F = stieltjes(f)
    target = _wz_target(f, X, k, X.X)
    levels = []
    for n in n_levels:
        V = approximant(X, n)
        levels.append((float(n), abs(float(F.along(V)[k]) - target)))
    metrics = [m for _, m in levels]
    return ConvergenceReport(
        levels=levels,
        slope=loglog_slope(n_levels, metrics),
        passed=bool(metrics[-1] <= tol),
        tolerance=tol,
        details={"target": target, "scale": max(1.0, abs(target))},
    )


def wong_zakai_ensemble(
    f: Functional,
    generator: GeneratorConfig,
    n_steps: int,
    n_levels: Sequence[float],
    seeds: Sequence[int],
    tol: float = 0.05,
    threads: int = 1,
) -> ConvergenceReport:
    """Median over seeds of the `wong_zakai` metric per n."""
    rows = _map(
        lambda s: wong_zakai(f, generator.sample(n_steps, s), n_levels, tol=tol).metrics(),
        list(seeds),
        threads,
    )
    medians = np.median(np.array(rows), axis=0)
    return ConvergenceReport(
        levels=[(float(n), float(m)) for n, m in zip(n_levels, medians)],
        slope=loglog_slope(n_levels, medians),
        passed=bool(medians[-1] <= tol),
        tolerance=tol,
        details={"seeds": len(seeds), "n_steps": n_steps},
    )


@dataclass
class PropositionReport:
    max_time_deviation: float
    max_space_deviation: float
    samples_used: int
    # None when the hypothesis was not probed
    hypothesis_holds: Optional[bool] = None

    def as_dict(self) -> dict:
        return asdict(self)


def prop1_check(
    f: Functional,
    samples: Iterable[Tuple[float, CadlagPath]],
    schedule: Optional[StepSchedule] = None,
) -> PropositionReport:
    """Max |∂_t f − f⁰| and |D_ω f − f¹| over càdlàg samples."""
    f0 = f.oracle.require("dt")
    f1 = f.oracle.require("chit_v")
    dt_dev, dv_dev, n = 0.0, 0.0, 0
    for t, p in samples:
        dt_dev = max(dt_dev, abs(horizontal(f, t, p, schedule).value - f0(t, p)))
        dv_dev = max(dv_dev, abs(chitashvili_vertical(f, t, p, schedule).value - f1(t, p)))
        n += 1
    return PropositionReport(dt_dev, dv_dev, n)


def condition_v_ratio(
    f: Functional, t: float, p: CadlagPath, hs: Sequence[float], first: Optional[Functional] = None
) -> np.ndarray:
    """|f(t, ω^{t−}+h1_[t,T]) − f(t−,ω) − f¹(t−,ω)·h| / h² for each h.

    Bounded ratios as h → 0 are what the quadratic jump condition asks for.
    ``first`` overrides the f¹ used (default: oracle ``chit_v``).
    """
    f1 = first if first is not None else f.oracle.require("chit_v")
    before = p.stop_before(t)
    base, slope = f(t, before), f1(t, before)
    return np.array([abs(f(t, before.bump(t, h)) - base - slope * h) / (h * h) for h in hs])


def prop3_check(
    f: Functional,
    samples: Iterable[Tuple[float, CadlagPath]],
    schedule: Optional[StepSchedule] = None,
    growth: float = 4.0,
) -> PropositionReport:
    """Max |∂_ω f − f¹| over samples continuous at t.

    Also probes the quadratic jump condition: if the ratio of
    `condition_v_ratio` grows by more than ``growth`` across the schedule on
    any sample, ``hypothesis_holds`` is False and the deviation is reported
    without any claim that it should vanish.
    """
    f1 = f.oracle.require("chit_v")
    dev, n, holds = 0.0, 0, True
    for t, p in samples:
        if p.jump_at(t) != 0.0 or t == 0.0:
            continue
        s = schedule if schedule is not None else StepSchedule(8.0 * p.grid.mesh())
        dev = max(dev, abs(dupire_vertical(f, t, p, s).value - f1(t, p)))
        r = condition_v_ratio(f, t, p, s.steps())
        if r[-1] > growth * max(r[0], 1e-12):
            holds = False
        n += 1
    return PropositionReport(0.0, dev, n, hypothesis_holds=holds)


def prop2_check(f: Functional, p: CadlagPath, t: Optional[float] = None) -> float:
    """|f(t,ω) − f(0,ω) − ∫f_t ds − ∫f_ω ω' ds| on a path without jumps.

    f_t and f_ω are the oracle components ``dt`` and ``chit_v``.
    """
    if not p.is_continuous():
        raise DomainError("prop2_check needs a path without jumps")
    return abs(fv_change_of_variable(f, p, t).residual)

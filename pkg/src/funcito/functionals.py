"""
Non-anticipative functionals f(t, ω) and a catalog of test functionals.

Every functional can be evaluated at a single (t, ω) with ``f(t, path)`` and
along a whole path with ``f.along(path)``, which returns f(t_i, ω) at every
knot. ``f.along_left(path)`` returns the time left limits f(t_i−, ω). Catalog
entries override ``along`` with vectorized formulas; the generic versions fall
back to pointwise evaluation.

The time left limit is computed as f(t, ω^{t−}), where ω^{t−} freezes the path
at ω(t−) from t on. For d_∞-continuous functionals this is the left limit of
s ↦ f(s, ω) at t.

Catalog entries carry a `DerivativeOracle` whose fields are themselves
functionals, so a derivative has derivatives of its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, EvaluationError
from .pathspace import CadlagPath

__all__ = [
    "Functional",
    "DerivativeOracle",
    "SmoothFunction",
    "SMOOTH",
    "endpoint",
    "square",
    "identity",
    "running_integral",
    "running_max",
    "jump_functional",
    "stieltjes",
    "time_only",
    "constant",
    "catalog",
    "parse_functional",
    "check_nonanticipative",
    "uniform_functional_convergence",
]


@dataclass(frozen=True)
class DerivativeOracle:
    """Analytic derivatives of a functional, each optional.

    dt      -- horizontal derivative ∂_t f (= f⁰)
    dup_v   -- Dupire vertical derivative ∂_ω f
    dup_vv  -- ∂_ωω f
    chit_v  -- vertical derivative along continuous ramps D_ω f (= f¹)
    chit_vv -- D_ωω f (= f^{1,1})
    chit_t1 -- f^{1,0}, the time derivative of f¹
    """

    dt: Optional["Functional"] = None
    dup_v: Optional["Functional"] = None
    dup_vv: Optional["Functional"] = None
    chit_v: Optional["Functional"] = None
    chit_vv: Optional["Functional"] = None
    chit_t1: Optional["Functional"] = None

    def require(self, name: str) -> "Functional":
        value = getattr(self, name)
        if value is None:
            raise ConfigurationError(f"oracle component {name!r} is not available")
        return value

    def available(self) -> List[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) is not None]


class Functional:
    """A non-anticipative functional f(t, ω).

    Parameters
    ----------
    name : str
        Identifier used in reports.
    func : callable (t, CadlagPath) -> float
        Pointwise evaluation. Must only look at the path up to time t.
    along : callable CadlagPath -> ndarray, optional
        Vectorized evaluation at every knot of the path grid.
    oracle : DerivativeOracle, optional
    """

    def __init__(
        self,
        name: str,
        func: Callable[[float, CadlagPath], float],
        along: Optional[Callable[[CadlagPath], np.ndarray]] = None,
        oracle: Optional[DerivativeOracle] = None,
    ):
        self.name = name
        self._func = func
        self._along = along
        self.oracle = oracle if oracle is not None else DerivativeOracle()

    def __repr__(self) -> str:
        return f"Functional({self.name!r})"

    def __call__(self, t: float, path: CadlagPath) -> float:
        value = float(self._func(path.grid.check(t), path))
        if not math.isfinite(value):
            raise EvaluationError(f"{self.name} is not finite at t={t!r}")
        return value

    def along(self, path: CadlagPath) -> np.ndarray:
        if self._along is not None:
            return np.asarray(self._along(path), dtype=float)
        return np.array([self._func(t, path) for t in path.grid.points])

    def left(self, t: float, path: CadlagPath) -> float:
        """f(t−, ω)."""
        return self(t, path.stop_before(t))

    def along_left(self, path: CadlagPath) -> np.ndarray:
        """f(t_i−, ω) at every knot; the first entry repeats f(0, ω)."""
        out = self.along(path).copy()
        for k in path.jump_indices:
            t = path.grid.points[k]
            out[k] = self._func(t, path.stop_before(t))
        return out

    def with_oracle(self, **components) -> "Functional":
        f = Functional(self.name, self._func, self._along, replace(self.oracle, **components))
        return f


def _at_knot(along: Callable[[CadlagPath], np.ndarray]):
    """Pointwise evaluation from a vectorized one: stop at t, read the knot."""

    def func(t: float, path: CadlagPath) -> float:
        s = path.stop(t)
        return float(along(s)[s.grid.find(t)])

    return func


def _from_along(name: str, along, oracle=None) -> Functional:
    return Functional(name, _at_knot(along), along, oracle)


def constant(c: float, name: Optional[str] = None) -> Functional:
    along = lambda p: np.full(len(p.grid), float(c))
    f = Functional(name or f"const({c:g})", lambda t, p: float(c), along)
    zero = f if c == 0.0 else constant(0.0)
    return f.with_oracle(dt=zero, dup_v=zero, dup_vv=zero, chit_v=zero, chit_vv=zero, chit_t1=zero)


ZERO = constant(0.0, "zero")


@dataclass(frozen=True)
class SmoothFunction:
    """A smooth real function with its first three derivatives."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    # sup |g''| over the real line; inf when unbounded
    d2_bound: float


def _zeros_like(x):
    return np.zeros_like(np.asarray(x, dtype=float))


SMOOTH: Dict[str, SmoothFunction] = {
    "id": SmoothFunction("id", lambda x: np.asarray(x, dtype=float), np.ones_like, _zeros_like, _zeros_like, 0.0),
    "sq": SmoothFunction("sq", np.square, lambda x: 2.0 * np.asarray(x), lambda x: np.full_like(np.asarray(x, dtype=float), 2.0), _zeros_like, 2.0),
    "sin": SmoothFunction("sin", np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), 1.0),
    "cos": SmoothFunction("cos", np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin, 1.0),
    "exp": SmoothFunction("exp", np.exp, np.exp, np.exp, np.exp, math.inf),
    "tanh": SmoothFunction(
        "tanh",
        np.tanh,
        lambda x: 1.0 - np.tanh(x) ** 2,
        lambda x: -2.0 * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
        lambda x: -2.0 * (1.0 - np.tanh(x) ** 2) * (1.0 - 3.0 * np.tanh(x) ** 2),
        4.0 / (3.0 * math.sqrt(3.0)),
    ),
}


def _smooth(g) -> SmoothFunction:
    if isinstance(g, SmoothFunction):
        return g
    try:
        return SMOOTH[g]
    except KeyError:
        raise ConfigurationError(f"unknown smooth function {g!r}; known: {sorted(SMOOTH)}") from None


def _endpoint_only(g: SmoothFunction, which: str, name: str) -> Functional:
    fn = getattr(g, which)
    return _from_along(name, lambda p: fn(p.values))


def endpoint(g="id", name: Optional[str] = None) -> Functional:
    """f(t, ω) = g(ω_t)."""
    g = _smooth(g)
    name = name or f"endpoint[{g.name}]"
    d1 = _endpoint_only(g, "d1", f"{g.name}'(ω_t)")
    d2 = _endpoint_only(g, "d2", f"{g.name}''(ω_t)")
    d3 = _endpoint_only(g, "d3", f"{g.name}'''(ω_t)")
    # the derivative functionals are themselves endpoint functionals
    d2 = d2.with_oracle(dt=ZERO, dup_v=d3, chit_v=d3)
    d1 = d1.with_oracle(dt=ZERO, dup_v=d2, dup_vv=d3, chit_v=d2, chit_vv=d3, chit_t1=ZERO)
    f = _from_along(name, lambda p: g.f(p.values))
    return f.with_oracle(dt=ZERO, dup_v=d1, dup_vv=d2, chit_v=d1, chit_vv=d2, chit_t1=ZERO)


def square() -> Functional:
    """f(t, ω) = ω_t²."""
    return endpoint("sq", name="square")


def identity() -> Functional:
    """f(t, ω) = ω_t."""
    return endpoint("id", name="identity")


def time_only() -> Functional:
    """f(t, ω) = t."""
    one = constant(1.0, "one")
    f = Functional("time", lambda t, p: t, lambda p: p.grid.points.copy())
    return f.with_oracle(dt=one, dup_v=ZERO, dup_vv=ZERO, chit_v=ZERO, chit_vv=ZERO, chit_t1=ZERO)


def _running_integral_along(p: CadlagPath) -> np.ndarray:
    # exact for piecewise-linear segments: trapezoid of ω(t_i) and ω(t_{i+1}−)
    steps = 0.5 * (p.values[:-1] + p.left_values[1:]) * np.diff(p.grid.points)
    return np.concatenate([[0.0], np.cumsum(steps)])


def running_integral() -> Functional:
    """f(t, ω) = ∫_0^t ω_s ds."""
    f = _from_along("running_integral", _running_integral_along)
    return f.with_oracle(
        dt=identity(), dup_v=ZERO, dup_vv=ZERO, chit_v=ZERO, chit_vv=ZERO, chit_t1=ZERO
    )


def _running_max_along(p: CadlagPath) -> np.ndarray:
    seen = np.maximum(p.values, p.left_values)
    return np.maximum.accumulate(seen)


def running_max() -> Functional:
    """f(t, ω) = sup_{s ≤ t} ω_s.

    Only a partial oracle: the vertical derivative is the indicator that ω_t
    attains the running maximum, which is a subgradient choice on the diagonal
    set and exact off it.
    """

    def at_max(p: CadlagPath) -> np.ndarray:
        return (p.values >= _running_max_along(p)).astype(float)

    ind = _from_along("1{ω_t = max}", at_max)
    f = _from_along("running_max", _running_max_along)
    return f.with_oracle(dt=ZERO, dup_v=ind, chit_v=ind)


def jump_functional(g="id") -> Functional:
    """f(t, ω) = g(ω_t) − g(ω_{t−}).

    The Dupire vertical derivative is g'(ω_t) while the ramp derivative D_ω f
    is 0. The horizontal derivative is infinite at jump times of ω; the
    oracle's ``dt`` is the almost-everywhere value 0, which is what a time
    integral sees.
    """
    g = _smooth(g)

    def along(p: CadlagPath) -> np.ndarray:
        return g.f(p.values) - g.f(p.left_values)

    d1 = _endpoint_only(g, "d1", f"{g.name}'(ω_t)")
    d2 = _endpoint_only(g, "d2", f"{g.name}''(ω_t)")
    f = _from_along(f"jump[{g.name}]", along)
    return f.with_oracle(dt=ZERO, dup_v=d1, dup_vv=d2, chit_v=ZERO, chit_vv=ZERO, chit_t1=ZERO)


def stieltjes_increments(
    fv: np.ndarray, fl: np.ndarray, dcont: np.ndarray, jumps: np.ndarray
) -> np.ndarray:
    """Per-step increments of ∫ f(s−) dω on a piecewise-linear path.

    Segment (t_i, t_{i+1}] contributes ½(f(t_i) + f(t_{i+1}−))·Δcont_i plus the
    ledger term f(t_{i+1}−)·Δ_{t_{i+1}}.
    """
    return 0.5 * (fv[:-1] + fl[1:]) * dcont + fl[1:] * jumps[1:]


def stieltjes(integrand: Optional[Functional] = None) -> Functional:
    """F(t, ω) = ∫_0^t f(s−, ω) dω_s along the path.

    The continuous part is integrated with the trapezoid rule on the
    integrand, which is the exact Stieltjes integral whenever the integrand is
    affine in the current value (e.g. f = identity). Jumps contribute
    f(τ−, ω)·Δ_τ.
    """
    f = integrand if integrand is not None else identity()

    def along(p: CadlagPath) -> np.ndarray:
        inc = stieltjes_increments(f.along(p), f.along_left(p), np.diff(p.cont), p.jump_sizes)
        return np.concatenate([[0.0], np.cumsum(inc)])

    dup_v = Functional(
        f"{f.name}(t−)", lambda t, p: f.left(t, p) if t > 0 else f(t, p), f.along_left
    )
    F = _from_along(f"stieltjes[{f.name}]", along)
    return F.with_oracle(
        dt=ZERO,
        dup_v=dup_v,
        dup_vv=ZERO,
        chit_v=f,
        chit_vv=f.oracle.chit_v,
        chit_t1=f.oracle.dt,
    )


def catalog() -> Dict[str, Functional]:
    """Named test functionals."""
    entries = [
        endpoint("exp"),
        endpoint("sin"),
        endpoint("id"),
        square(),
        running_integral(),
        running_max(),
        jump_functional("id"),
        jump_functional("sin"),
        stieltjes(identity()),
        time_only(),
    ]
    return {f.name: f for f in entries}


_ALIASES = {
    "square": square,
    "identity": identity,
    "time": time_only,
    "running_integral": running_integral,
    "running_max": running_max,
}


def parse_functional(spec: str) -> Functional:
    """Build a functional from a string id.

    Examples: ``square``, ``endpoint:g=exp``, ``jump:g=sin``,
    ``stieltjes`` (integrand identity), ``stieltjes:f=square``.
    """
    head, _, rest = spec.strip().partition(":")
    opts = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigurationError(f"malformed option {item!r} in functional id {spec!r}")
            opts[key.strip()] = value.strip()
    if head in _ALIASES:
        if opts:
            raise ConfigurationError(f"functional {head!r} takes no options")
        return _ALIASES[head]()
    if head == "endpoint":
        return endpoint(opts.get("g", "id"))
    if head == "jump":
        return jump_functional(opts.get("g", "id"))
    if head == "stieltjes":
        inner = opts.get("f", "identity")
        return stieltjes(parse_functional(inner.replace(";", ",")))
    raise ConfigurationError(f"unknown functional id {spec!r}")


def check_nonanticipative(f: Functional, samples: Iterable[Tuple[float, CadlagPath]]) -> bool:
    """True iff f(t, ω) == f(t, ω^t) exactly on every sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("need at least one sample")
    return all(f(t, p) == f(t, p.stop(t)) for t, p in samples)


def uniform_functional_convergence(
    f: Functional, paths: Sequence[CadlagPath], limit: CadlagPath
) -> List[float]:
    """sup_{t ≤ T} |f(t, p_n) − f(t, p)| for each p_n.

    The supremum is taken over the union of the knots of p_n and p, where
    piecewise-linear paths attain their extremes.
    """
    from .pathspace import align

    out = []
    for p_n in paths:
        a, b = align(p_n, limit)
        diff = np.abs(f.along(a) - f.along(b))
        diff_left = np.abs(f.along_left(a) - f.along_left(b))
        out.append(float(max(diff.max(), diff_left.max())))
    return out

"""
Semimartingale generators and the approximation sequences built from them.

Samples carry their decomposition X = A^c + A^d + M^c + M^d together with the
clock ⟨M^c⟩, so the approximations can be assembled part by part:

* `exp_smoother` turns the continuous martingale into a finite-variation path
  Mⁿ solving dMⁿ = n(M − Mⁿ) d⟨M⟩;
* `k_process` is the increasing process Kⁿ = n∫(M − Mⁿ)² d⟨M⟩;
* `truncate_jumps` keeps the jumps of size at least 1/n.

Every generator is a pure function of (grid, seed, parameters): it draws from
``numpy.random.default_rng(seed)`` in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .pathspace import CadlagPath, TimeGrid

__all__ = [
    "JumpSpec",
    "SemimartingaleSample",
    "GeneratorConfig",
    "brownian",
    "jump_diffusion",
    "fv_sample",
    "exp_smoother",
    "k_process",
    "truncate_jumps",
    "approximant",
    "random_path",
]

JUMP_LAWS = ("sign", "uniform", "normal")


@dataclass(frozen=True)
class JumpSpec:
    """Compound Poisson jumps: intensity λ and a jump-size law.

    law is one of ``sign`` (±1 with equal probability), ``uniform`` with
    params (a, b), or ``normal`` with params (μ, σ).
    """

    intensity: float
    law: str = "sign"
    params: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.intensity < 0:
            raise DomainError("jump intensity must be >= 0")
        if self.law not in JUMP_LAWS:
            raise DomainError(f"unknown jump law {self.law!r}; expected one of {JUMP_LAWS}")
        need = {"sign": 0, "uniform": 2, "normal": 2}[self.law]
        if len(self.params) != need:
            raise DomainError(f"jump law {self.law!r} takes {need} parameters")
        if self.law == "uniform" and not self.params[0] < self.params[1]:
            raise DomainError("uniform jump law needs a < b")
        if self.law == "normal" and not self.params[1] > 0:
            raise DomainError("normal jump law needs σ > 0")

    def mean(self) -> float:
        if self.law == "sign":
            return 0.0
        if self.law == "uniform":
            a, b = self.params
            return 0.5 * (a + b)
        return float(self.params[0])

    def truncated_mean(self, threshold: float) -> float:
        """E[Δ; |Δ| >= threshold]."""
        c = max(float(threshold), 0.0)
        if self.law == "sign":
            return 0.0
        if self.law == "uniform":
            a, b = self.params
            lo, hi = max(a, -c), min(b, c)
            inside = 0.5 * (hi * hi - lo * lo) / (b - a) if lo < hi else 0.0
            return self.mean() - inside
        mu, sigma = self.params
        nd = NormalDist()
        lo, hi = (-c - mu) / sigma, (c - mu) / sigma
        # E[Δ; |Δ| < c] for Δ ~ N(μ, σ²)
        inside = mu * (nd.cdf(hi) - nd.cdf(lo)) - sigma * (nd.pdf(hi) - nd.pdf(lo))
        return self.mean() - inside

    def compensator_rate(self, threshold: float = 0.0) -> float:
        """Drift λ·E[Δ; |Δ| >= threshold] of the dual predictable projection."""
        return self.intensity * self.truncated_mean(threshold)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.law == "sign":
            return rng.choice(np.array([-1.0, 1.0]), size=size)
        if self.law == "uniform":
            return rng.uniform(self.params[0], self.params[1], size=size)
        return rng.normal(self.params[0], self.params[1], size=size)


@dataclass(frozen=True)
class SemimartingaleSample:
    """A path together with its decomposition and the clock ⟨M^c⟩."""

    X: CadlagPath
    A_c: CadlagPath
    A_d: CadlagPath
    M_c: CadlagPath
    M_d: CadlagPath
    clock: np.ndarray
    jump: Optional[JumpSpec] = None
    compensated: bool = False

    @property
    def grid(self) -> TimeGrid:
        return self.X.grid

    @classmethod
    def assemble(cls, A_c, A_d, M_c, M_d, clock, jump=None, compensated=False):
        X = ((A_c + A_d) + M_c) + M_d
        clock = np.array(clock, dtype=float)
        clock.flags.writeable = False
        return cls(X, A_c, A_d, M_c, M_d, clock, jump, compensated)

    def parts(self):
        return (self.A_c, self.A_d, self.M_c, self.M_d)

    def restrict(self, coarse: TimeGrid) -> "SemimartingaleSample":
        """The same sample observed on a coarser sub-grid."""
        pos = np.array([self.grid.find(t) for t in coarse.points], dtype=np.int64)
        parts = [p.restrict(coarse) for p in self.parts()]
        return SemimartingaleSample.assemble(
            *parts, self.clock[pos], jump=self.jump, compensated=self.compensated
        )

    def to_bytes(self) -> bytes:
        arrays = [self.grid.points, self.clock]
        for p in (self.X,) + self.parts():
            arrays += [p.cont, p.jump_sizes]
        return b"".join(a.tobytes() for a in arrays)


def _brownian_increments(rng, grid: TimeGrid) -> np.ndarray:
    return rng.normal(0.0, 1.0, grid.n_steps) * np.sqrt(np.diff(grid.points))


def brownian(grid: TimeGrid, seed: int) -> SemimartingaleSample:
    """Standard Brownian motion as M^c with ⟨M⟩_t = t."""
    rng = np.random.default_rng(seed)
    W = np.concatenate([[0.0], np.cumsum(_brownian_increments(rng, grid))])
    zero = CadlagPath.zero(grid)
    return SemimartingaleSample.assemble(
        zero, zero, CadlagPath.from_arrays(grid, W), zero, grid.points
    )


def jump_diffusion(
    grid: TimeGrid,
    seed: int,
    drift: float = 0.0,
    jump: Optional[JumpSpec] = None,
    compensated: bool = False,
) -> SemimartingaleSample:
    """Brownian motion plus drift plus compound Poisson jumps.

    Jump counts per step are Poisson(λ·Δt); the jumps of a step are summed and
    placed at its right knot. With ``compensated`` the jump sum goes to M^d
    together with its compensator −λ·E[Δ]·t, otherwise to A^d.
    """
    jump = jump if jump is not None else JumpSpec(0.0)
    rng = np.random.default_rng(seed)
    dW = _brownian_increments(rng, grid)
    counts = rng.poisson(jump.intensity * np.diff(grid.points))
    sizes = jump.draw(rng, int(counts.sum()))
    step = np.repeat(np.arange(grid.n_steps), counts)
    dense = np.zeros(len(grid))
    dense[1:] = np.bincount(step, weights=sizes, minlength=grid.n_steps)

    t = grid.points
    zero = CadlagPath.zero(grid)
    A_c = CadlagPath.from_arrays(grid, drift * t)
    M_c = CadlagPath.from_arrays(grid, np.concatenate([[0.0], np.cumsum(dW)]))
    if compensated:
        A_d = zero
        M_d = CadlagPath.from_arrays(grid, -jump.compensator_rate() * t, dense)
    else:
        A_d = CadlagPath.from_arrays(grid, np.zeros(len(grid)), dense)
        M_d = zero
    return SemimartingaleSample.assemble(A_c, A_d, M_c, M_d, t, jump, compensated)


def fv_sample(path: CadlagPath) -> SemimartingaleSample:
    """A deterministic finite-variation path viewed as a semimartingale."""
    cont, jumps = path.decompose()
    zero = CadlagPath.zero(path.grid)
    return SemimartingaleSample.assemble(cont, jumps, zero, zero, np.zeros(len(path.grid)))


@dataclass(frozen=True)
class GeneratorConfig:
    """Which generator to run and with what parameters."""

    kind: str = "bm"
    horizon: float = 1.0
    drift: float = 0.0
    jump: JumpSpec = field(default_factory=lambda: JumpSpec(0.0))
    compensated: bool = False

    def __post_init__(self):
        if self.kind not in ("bm", "jumpdiff"):
            raise DomainError(f"unknown generator kind {self.kind!r}")

    def sample(self, n_steps: int, seed: int) -> SemimartingaleSample:
        grid = TimeGrid.uniform(n_steps, self.horizon)
        if self.kind == "bm":
            return brownian(grid, seed)
        return jump_diffusion(grid, seed, self.drift, self.jump, self.compensated)


def _check_smoother_input(M: CadlagPath, clock, n) -> np.ndarray:
    if not M.is_continuous():
        raise DomainError("the smoother needs a continuous martingale (empty jump ledger)")
    if M.cont[0] != 0.0:
        raise DomainError("the smoother needs M_0 = 0")
    if n < 1:
        raise DomainError("n must be >= 1")
    clock = np.asarray(clock, dtype=float)
    if clock.shape != M.cont.shape:
        raise DomainError("clock does not match the grid")
    if np.any(np.diff(clock) < 0):
        raise DomainError("clock must be nondecreasing")
    return clock


def exp_smoother(M: CadlagPath, clock, n: float) -> CadlagPath:
    """Mⁿ_t = n∫_0^t M_s exp(−n(⟨M⟩_t − ⟨M⟩_s)) d⟨M⟩_s on the grid.

    Between knots M is linear in clock time, and the error e = Mⁿ − M solves
    de = −n e d⟨M⟩ − dM exactly:

        e_{i+1} = e_i·E_i − ΔM_i·(1 − E_i)/(n Δ⟨M⟩_i),   E_i = exp(−n Δ⟨M⟩_i)

    which is unconditionally stable in n·Δ⟨M⟩. On a step with a flat clock
    Mⁿ does not move.
    """
    clock = _check_smoother_input(M, clock, n)
    m = M.cont.tolist()
    c = clock.tolist()
    out = [0.0] * len(m)
    e = 0.0
    for i in range(len(m) - 1):
        x = n * (c[i + 1] - c[i])
        if x > 0.0:
            decay = math.exp(-x)
            e = e * decay - (m[i + 1] - m[i]) * (-math.expm1(-x) / x)
        else:
            e = e - (m[i + 1] - m[i])
        out[i + 1] = m[i + 1] + e
    return CadlagPath.from_arrays(M.grid, out)


def k_process(M: CadlagPath, clock, n: float, smoothed: Optional[CadlagPath] = None) -> CadlagPath:
    """Kⁿ_t = n∫_0^t (M_s − Mⁿ_s)² d⟨M⟩_s, left-point quadrature on the grid."""
    clock = _check_smoother_input(M, clock, n)
    Mn = exp_smoother(M, clock, n) if smoothed is None else smoothed
    gap = (M.cont - Mn.cont)[:-1]
    K = np.concatenate([[0.0], np.cumsum(n * gap * gap * np.diff(clock))])
    return CadlagPath.from_arrays(M.grid, K)


def truncate_jumps(part: CadlagPath, n: float, jump: Optional[JumpSpec] = None) -> CadlagPath:
    """Keep the ledger entries with |Δ| >= 1/n.

    Without ``jump`` the input must be a pure-jump path. With ``jump`` the
    input is a compensated jump martingale whose continuous part is the
    compensator −λ·E[Δ]·t; the result is compensated with the analytic
    compensator of the retained jumps, −λ·E[Δ; |Δ| >= 1/n]·t.
    """
    if n <= 0:
        raise DomainError("n must be positive")
    threshold = 1.0 / n
    t = part.grid.points
    if jump is None:
        if np.any(part.cont != 0.0):
            raise DomainError("truncate_jumps needs a pure-jump path")
        cont = np.zeros(len(t))
    else:
        expected = -jump.compensator_rate() * t
        if not np.allclose(part.cont, expected, rtol=1e-12, atol=1e-12):
            raise DomainError("continuous part is not the compensator of the jump law")
        cont = -jump.compensator_rate(threshold) * t
    sizes = part.jump_sizes
    kept = np.where(np.abs(sizes) >= threshold, sizes, 0.0)
    return CadlagPath.from_arrays(part.grid, cont, kept)


def approximant(sample: SemimartingaleSample, n: float) -> CadlagPath:
    """Vⁿ = A^c + A^d(n) + Mⁿ + M^d(n), a finite-variation approximation of X."""
    A_d = truncate_jumps(sample.A_d, n) if sample.A_d.jump_indices.size else sample.A_d
    if sample.compensated and sample.jump is not None:
        M_d = truncate_jumps(sample.M_d, n, sample.jump)
    else:
        M_d = truncate_jumps(sample.M_d, n) if sample.M_d.jump_indices.size else sample.M_d
    Mn = exp_smoother(sample.M_c, sample.clock, n)
    return ((sample.A_c + A_d) + Mn) + M_d


def random_path(
    rng: np.random.Generator,
    n_steps: int = 128,
    horizon: float = 1.0,
    n_jumps: int = 3,
    scale: float = 1.0,
) -> CadlagPath:
    """A Brownian-like continuous part plus up to `n_jumps` normal jumps.

    Used for randomized property checks; ``n_jumps = 0`` gives a continuous
    path.
    """
    grid = TimeGrid.uniform(n_steps, horizon)
    inc = rng.normal(0.0, scale * math.sqrt(horizon / n_steps), n_steps)
    cont = np.concatenate([[rng.normal(0.0, scale)], inc]).cumsum()
    dense = np.zeros(n_steps + 1)
    k = int(rng.integers(0, n_jumps + 1)) if n_jumps else 0
    if k:
        idx = rng.choice(np.arange(1, n_steps + 1), size=k, replace=False)
        dense[idx] = rng.normal(0.0, scale, k)
    return CadlagPath.from_arrays(grid, cont, dense)

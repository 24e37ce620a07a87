"""Distributional fixed point of the message recursion.

The stationary message law has CDF h solving

    h(t) = 1[t >= 0] * phi_hat(1 - E_W[h(W - t)])

with W an edge weight and phi_hat the offspring generating function.  Two
independent solvers are provided: fixed-point iteration of a discretised CDF,
and a Monte-Carlo particle pool.  For exponential weights the solution has a
one-parameter closed form solved by bisection.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from .errors import NonConvergenceError
from .laws import DegreeLaw, WeightLaw

__all__ = [
    "CdfGrid",
    "SamplePool",
    "offspring_pgf",
    "degree_pgf",
    "inv_phi_hat",
    "iterate_h",
    "IterateResult",
    "population_dynamics",
    "exp_fixed_point_K",
    "sample_from_cdf",
    "default_grid",
    "kolmogorov_distance",
]


@dataclass(frozen=True)
class CdfGrid:
    """Right-continuous step CDF on a uniform grid over [0, t_max].

    ``values[k]`` is h at t_k = k * step, extended constantly to the right of
    each knot; h(t) = 0 for t < 0.  The mass at zero is ``values[0]``.
    """

    step: float
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if self.step <= 0:
            raise ValueError("step must be positive")
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("need at least two grid values")
        if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
            raise ValueError("CDF values must lie in [0, 1]")
        if np.any(np.diff(vals) < -1e-12):
            raise ValueError("CDF values must be nondecreasing")
        vals = np.clip(vals, 0.0, 1.0)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def t_max(self) -> float:
        return self.step * (self.values.size - 1)

    @property
    def atom(self) -> float:
        """Mass at zero."""
        return float(self.values[0])

    def t(self) -> np.ndarray:
        return np.arange(self.values.size) * self.step

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.floor(t / self.step).astype(np.int64), 0, self.values.size - 1)
        out = np.where(t < 0, 0.0, self.values[idx])
        return out if out.ndim else float(out)

    def masses(self) -> np.ndarray:
        """Probability mass per knot of the discretised law (first entry: atom)."""
        return np.diff(self.values, prepend=0.0)


@dataclass
class SamplePool:
    """Particle representation of the message law."""

    samples: np.ndarray
    sweep_count: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if np.any(self.samples < 0):
            raise ValueError("samples must be nonnegative")

    @property
    def atom(self) -> float:
        """Empirical mass at exactly zero."""
        return float(np.mean(self.samples == 0.0))

    def ecdf(self, t):
        t = np.asarray(t, dtype=float)
        xs = np.sort(self.samples)
        out = np.searchsorted(xs, t, side="right") / xs.size
        return out if out.ndim else float(out)


def kolmogorov_distance(pool: SamplePool, grid: CdfGrid) -> float:
    """Sup distance between the pool's empirical CDF and a grid CDF.

    Both functions are right-continuous steps, so the sup is attained at a
    jump of one of them; it is evaluated at all grid knots and all distinct
    sample values, from the left and from the right.
    """
    xs = np.sort(pool.samples)
    n = xs.size
    ts = grid.t()
    vals = grid.values
    right_at_knots = np.searchsorted(xs, ts, side="right") / n
    left_at_knots = np.searchsorted(xs, ts, side="left") / n
    d1 = float(np.max(np.abs(right_at_knots - vals)))
    d1b = float(np.max(np.abs(left_at_knots[1:] - vals[:-1])))
    xs_u, counts = np.unique(xs, return_counts=True)
    cum = np.cumsum(counts)
    h_at = np.asarray(grid(xs_u))
    # left limits of the grid CDF at the sample points
    idx = np.clip(np.floor(xs_u / grid.step).astype(np.int64), 0, vals.size - 1)
    on_knot = xs_u == idx * grid.step
    h_left = np.where(
        xs_u <= 0.0,
        0.0,
        vals[np.where(on_knot, np.maximum(idx - 1, 0), idx)],
    )
    d2 = float(np.max(np.abs(cum / n - h_at)))
    d3 = float(np.max(np.abs((cum - counts) / n - h_left)))
    return max(d1, d1b, d2, d3)


# ---------------------------------------------------------------------------
# Generating-function helpers
# ---------------------------------------------------------------------------


def offspring_pgf(law: DegreeLaw, x):
    """Offspring generating function phi'(x) / phi'(1) on [0, 1]."""
    return law.phi_hat(x)


def degree_pgf(law: DegreeLaw, x):
    """Generating function of the degree law itself."""
    return law.phi(x)


def inv_phi_hat(law: DegreeLaw, y: float, tol: float = 1e-13) -> float:
    """Generalised inverse inf{x in [0,1] : phi_hat(x) >= y} by bisection.

    The infimum convention makes degenerate laws (constant phi_hat) resolve to
    0, which is the analytically correct branch for downstream densities.
    """
    if not (0.0 <= y <= 1.0):
        raise ValueError("y must be in [0, 1]")
    if law.phi_hat(0.0) >= y:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if law.phi_hat(mid) >= y:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Discretised-CDF fixed point
# ---------------------------------------------------------------------------


def default_grid(weights: WeightLaw, step: float = 1e-3) -> tuple[float, float]:
    """(t_max, step) covering 1.5x the 99.99th weight percentile."""
    return 1.5 * float(weights.quantile(0.9999)), step


class IterateResult(NamedTuple):
    grid: CdfGrid
    residual: float
    iterations: int


def iterate_h(
    law: DegreeLaw,
    weights: WeightLaw,
    grid: tuple[float, float] | None = None,
    tol: float = 1e-10,
    max_iter: int = 2000,
    init: CdfGrid | None = None,
) -> IterateResult:
    """Fixed-point iteration h <- 1[t>=0] * phi_hat(1 - E_W[h(W - t)]).

    h is kept piecewise constant on the grid; the inner expectation uses exact
    weight-law masses of the grid cells against that step function, so every
    iterate is a genuine CDF.  Raises :class:`NonConvergenceError` when the
    sup-norm change stays above ``tol`` for ``max_iter`` iterations.
    """
    if grid is None:
        t_max, step = default_grid(weights)
    else:
        t_max, step = float(grid[0]), float(grid[1])
        if t_max < float(weights.quantile(0.9999)):
            warnings.warn(
                "grid t_max below the 99.99th weight percentile; "
                "truncation error may exceed test tolerances",
                stacklevel=2,
            )
    G = int(math.ceil(t_max / step))
    knots = np.arange(G + 1) * step
    # exact weight mass of every cell [i*step, (i+1)*step) up to 2*t_max
    cell_edges = np.arange(2 * G + 1) * step
    cdf_vals = np.asarray(weights.cdf(cell_edges), dtype=float)
    masses = np.diff(cdf_vals)
    tail = 1.0 - np.asarray(weights.cdf(knots + G * step), dtype=float)

    if init is None:
        v = np.ones(G + 1)
    else:
        v = np.asarray(init(knots), dtype=float).copy()

    residual = math.inf
    for it in range(1, max_iter + 1):
        # E_j = sum_k v_k * mass(cell j+k) + v_G * tail_j
        core = fftconvolve(masses, v[:G][::-1], mode="valid")
        expect = np.clip(core + v[G] * tail, 0.0, 1.0)
        nv = np.asarray(law.phi_hat(1.0 - expect), dtype=float)
        nv = np.maximum.accumulate(np.clip(nv, 0.0, 1.0))
        residual = float(np.max(np.abs(nv - v)))
        v = nv
        if residual < tol:
            return IterateResult(CdfGrid(step, v), residual, it)
    raise NonConvergenceError(
        f"no fixed point after {max_iter} iterations (residual {residual:.3e})",
        residual,
    )


# ---------------------------------------------------------------------------
# Population dynamics
# ---------------------------------------------------------------------------


def population_dynamics(
    law: DegreeLaw,
    weights: WeightLaw,
    pool_size: int = 100_000,
    sweeps: int = 100,
    seed: int = 0,
) -> SamplePool:
    """Monte-Carlo fixed point: particles distributed as the message law.

    Each sweep replaces every particle by max(0, max_i (w_i - Z_i)) with an
    offspring-law number of terms, weights drawn fresh and Z resampled with
    replacement from the previous (frozen) pool.
    """
    if pool_size < 1000:
        raise ValueError("pool_size must be at least 1000")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xD0)))
    pool = np.zeros(pool_size)
    for _ in range(sweeps):
        counts = law.sample_offspring(rng, pool_size)
        total = int(counts.sum())
        vals = weights.sample(rng, total) - pool[rng.integers(0, pool_size, total)]
        # one zero sentinel per particle makes every segment nonempty and
        # folds the outer max(0, .) into the segment maximum
        sizes = counts + 1
        offsets = np.zeros(pool_size, dtype=np.int64)
        np.cumsum(sizes[:-1], out=offsets[1:])
        arr = np.zeros(total + pool_size)
        starts = np.repeat(offsets + 1, counts)
        within = np.arange(total) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
        )
        arr[starts + within] = vals
        pool = np.maximum.reduceat(arr, offsets)
    return SamplePool(samples=pool, sweep_count=sweeps)


# ---------------------------------------------------------------------------
# Exponential closed form
# ---------------------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(128)
_GL_X = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


def exp_fixed_point_K(
    law: DegreeLaw,
    rate: float = 1.0,
    tol: float = 1e-13,
    grid_step: float = 1e-3,
) -> tuple[float, CdfGrid]:
    """Closed-form solution for exponential weights.

    With unit-rate weights the CDF is h(t) = phi_hat(1 - K e^{-t}) where K is
    the unique root of K = integral_0^1 phi_hat(1 - s K) ds (the map is
    continuous and strictly decreasing in K).  For rate lambda the grid is
    h(t) = phi_hat(1 - K e^{-lambda t}); weights scale out of K itself.
    """
    if rate <= 0:
        raise ValueError("rate must be positive")

    def f(K: float) -> float:
        return float(np.dot(_GL_W, law.phi_hat(1.0 - _GL_X * K)))

    lo, hi = 0.0, 1.0
    if f(1.0) >= 1.0:  # constant phi_hat == 1: empty offspring, K = 1
        K = 1.0
    else:
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if f(mid) > mid:
                lo = mid
            else:
                hi = mid
        K = 0.5 * (lo + hi)
    t_max = 1.5 * (-math.log(1e-4) / rate)
    G = int(math.ceil(t_max / grid_step))
    knots = np.arange(G + 1) * grid_step
    vals = np.asarray(law.phi_hat(1.0 - K * np.exp(-rate * knots)), dtype=float)
    vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
    return K, CdfGrid(grid_step, vals)


# ---------------------------------------------------------------------------
# Sampling from a grid CDF
# ---------------------------------------------------------------------------


def sample_from_cdf(h: CdfGrid, count: int, seed: int) -> SamplePool:
    """Inverse-CDF sampling: the atom at zero exactly, the rest interpolated."""
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5C)))
    return SamplePool(samples=_inverse_cdf(h, rng.random(count)), sweep_count=0)


def _inverse_cdf(h: CdfGrid, u: np.ndarray) -> np.ndarray:
    vals = h.values
    out = np.zeros(u.shape)
    cont = u > vals[0]
    if np.any(cont):
        uu = u[cont]
        idx = np.searchsorted(vals, uu, side="left")
        hi_clamped = uu > vals[-1]
        idx = np.clip(idx, 1, vals.size - 1)
        lo_v = vals[idx - 1]
        hi_v = vals[idx]
        span = hi_v - lo_v
        frac = np.where(span > 0, (uu - lo_v) / np.where(span > 0, span, 1.0), 1.0)
        t = (idx - 1 + frac) * h.step
        t[hi_clamped] = h.t_max
        out[cont] = t
    return out

"""Degree and edge-weight distributions.

A :class:`DegreeLaw` is the distribution of the number of neighbours of a
typical vertex.  Alongside sampling it exposes the generating function of the
law and of its size-biased offspring version, which drive every closed-form
quantity in the toolkit.  A :class:`WeightLaw` is a continuous law for edge
weights with an exact CDF, sampler and quantile function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegreeLaw",
    "WeightLaw",
    "Exponential",
    "Uniform",
    "Empirical",
]

_PMF_TOL = 1e-12
_POISSON_TAIL = 1e-12


def _poisson_pmf_vector(rate: float, tail: float = _POISSON_TAIL) -> np.ndarray:
    """Poisson pmf truncated at the smallest D with tail mass below ``tail``."""
    terms = [math.exp(-rate)]
    k = 0
    # accumulate until the remaining tail is provably below the threshold
    while 1.0 - math.fsum(terms) >= tail:
        k += 1
        terms.append(terms[-1] * rate / k)
        if k > 10_000:  # pragma: no cover - absurd rate guard
            raise ValueError(f"Poisson rate {rate} too large to truncate")
    return np.asarray(terms)


@dataclass(frozen=True)
class DegreeLaw:
    """Distribution of vertex degrees, finite pmf or Poisson(rate).

    Exactly one of ``pmf`` / ``poisson_rate`` is set.  Generating functions of
    Poisson laws use the analytic form; only sampling uses the truncated pmf.
    """

    pmf: tuple[float, ...] | None = None
    poisson_rate: float | None = None
    mean: float = field(init=False)

    def __post_init__(self) -> None:
        if (self.pmf is None) == (self.poisson_rate is None):
            raise ValueError("exactly one of pmf / poisson_rate must be given")
        if self.pmf is not None:
            p = np.asarray(self.pmf, dtype=float)
            if p.ndim != 1 or p.size == 0:
                raise ValueError("pmf must be a non-empty vector")
            if np.any(p < 0):
                raise ValueError("pmf entries must be nonnegative")
            if abs(float(p.sum()) - 1.0) > _PMF_TOL:
                raise ValueError(f"pmf must sum to 1 (got {p.sum()!r})")
            m = float(np.dot(np.arange(p.size), p))
        else:
            if self.poisson_rate <= 0:
                raise ValueError("poisson rate must be positive")
            m = float(self.poisson_rate)
        if m <= 0:
            raise ValueError("degree law must have positive mean")
        object.__setattr__(self, "mean", m)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_pmf(cls, probabilities) -> DegreeLaw:
        return cls(pmf=tuple(float(p) for p in probabilities))

    @classmethod
    def poisson(cls, rate: float) -> DegreeLaw:
        return cls(poisson_rate=float(rate))

    @classmethod
    def delta(cls, k: int) -> DegreeLaw:
        """Deterministic degree k (e.g. delta(2) for the two-regular limit)."""
        if k < 1:
            raise ValueError("degenerate degree must be >= 1")
        return cls(pmf=(0.0,) * k + (1.0,))

    # -- generating functions ------------------------------------------------

    def phi(self, x):
        """Generating function of the degree law, evaluated elementwise."""
        x = np.asarray(x, dtype=float)
        if self.poisson_rate is not None:
            out = np.exp(self.poisson_rate * (x - 1.0))
        else:
            coeffs = np.asarray(self.pmf)
            out = np.polynomial.polynomial.polyval(x, coeffs)
        return out if out.ndim else float(out)

    def phi_prime(self, x):
        x = np.asarray(x, dtype=float)
        if self.poisson_rate is not None:
            out = self.poisson_rate * np.exp(self.poisson_rate * (x - 1.0))
        else:
            p = np.asarray(self.pmf)
            coeffs = np.arange(1, p.size) * p[1:]
            out = np.polynomial.polynomial.polyval(x, coeffs)
        return out if out.ndim else float(out)

    def phi_hat(self, x):
        """Offspring generating function: phi'(x) / phi'(1)."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.phi_prime(x)) / self.mean
        return out if out.ndim else float(out)

    # -- offspring law -------------------------------------------------------

    def offspring_pmf(self) -> np.ndarray:
        """Pmf of the number of children of a non-root vertex.

        Entry k is (k+1) * p_{k+1} / mean, the size-biased child count with the
        parent excluded; for Poisson laws this is the same Poisson pmf.
        """
        if self.poisson_rate is not None:
            return _poisson_pmf_vector(self.poisson_rate)
        p = np.asarray(self.pmf)
        ks = np.arange(1, p.size)
        return ks * p[1:] / self.mean

    def pmf_vector(self) -> np.ndarray:
        """Pmf as a vector; Poisson laws truncated at tail mass below 1e-12."""
        if self.poisson_rate is not None:
            return _poisson_pmf_vector(self.poisson_rate)
        return np.asarray(self.pmf)

    def sample_degrees(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Iid draws from the degree law (for root vertices)."""
        return _sample_pmf(self.pmf_vector(), rng, size)

    def sample_offspring(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Iid draws from the offspring law (non-root child counts)."""
        return _sample_pmf(self.offspring_pmf(), rng, size)


def _sample_pmf(pmf: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf[-1] = max(cdf[-1], 1.0)
    return np.searchsorted(cdf, rng.random(size), side="right").astype(np.int64)


class WeightLaw:
    """Continuous edge-weight law: exact CDF, sampler, quantile function.

    Built-in laws are atomless.  Subclasses implement ``cdf``, ``sample``,
    ``quantile`` and ``mean_above`` (the partial expectation E[W 1{W > s}]).
    """

    def cdf(self, t):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def mean_above(self, s):
        raise NotImplementedError

    def mean(self) -> float:
        return float(self.mean_above(-math.inf))


@dataclass(frozen=True)
class Exponential(WeightLaw):
    rate: float = 1.0

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        out = -np.log1p(-q) / self.rate
        return out if out.ndim else float(out)

    def mean_above(self, s):
        s = np.asarray(s, dtype=float)
        sp = np.maximum(s, 0.0)
        out = (sp + 1.0 / self.rate) * np.exp(-self.rate * sp)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class Uniform(WeightLaw):
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if not self.b > self.a:
            raise ValueError("need b > a")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.clip((t - self.a) / (self.b - self.a), 0.0, 1.0)
        return out if out.ndim else float(out)

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        out = self.a + q * (self.b - self.a)
        return out if out.ndim else float(out)

    def mean_above(self, s):
        s = np.asarray(s, dtype=float)
        lo = np.clip(s, self.a, self.b)
        out = (self.b**2 - lo**2) / (2.0 * (self.b - self.a))
        return out if out.ndim else float(out)


class Empirical(WeightLaw):
    """Continuous law interpolating the quantiles of a sample.

    The CDF is piecewise linear through the order statistics (plotting
    positions (i - 1/2) / n), which keeps the law atomless when the samples
    are distinct.  ``mean_above`` is the sample partial mean.
    """

    def __init__(self, samples) -> None:
        xs = np.sort(np.asarray(samples, dtype=float))
        if xs.size < 2:
            raise ValueError("need at least two samples")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("samples must be distinct for an atomless law")
        self.samples = xs
        self._ps = (np.arange(1, xs.size + 1) - 0.5) / xs.size

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.samples, self._ps, left=0.0, right=1.0)
        return out if out.ndim else float(out)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        out = np.interp(q, self._ps, self.samples,
                        left=self.samples[0], right=self.samples[-1])
        return out if out.ndim else float(out)

    def sample(self, rng, size):
        return self.quantile(rng.random(size))

    def mean_above(self, s):
        s = np.asarray(s, dtype=float)
        tail_sums = np.concatenate([np.cumsum(self.samples[::-1])[::-1], [0.0]])
        idx = np.searchsorted(self.samples, s, side="right")
        out = tail_sums[idx] / self.samples.size
        return out if out.ndim else float(out)

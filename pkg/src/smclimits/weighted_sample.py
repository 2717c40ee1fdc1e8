"""Weighted samples and their diagnostics.

A weighted sample is an ordered collection of points, each carrying a
nonnegative importance weight.  All estimators here are self-normalized:
they depend on the weights only through the normalized vector w_i / sum(w),
so rescaling every weight by a common positive constant changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

Point = Any  # a particle: a scalar state or a tuple of states (path)


def weight_total(weights: np.ndarray) -> float:
    """Sum of weights.  numpy's pairwise summation keeps the error compensated."""
    return float(np.sum(weights))


def cv2_of_weights(weights: np.ndarray) -> float:
    """Relative variance of the normalized weights, M^-1 sum (M w_i / W - 1)^2.

    Shared by :meth:`WeightedSample.cv2` and the filter loop so both report
    bit-identical values for the same weight vector.
    """
    w = np.asarray(weights, dtype=float)
    m = w.size
    total = weight_total(w)
    if total <= 0.0:
        raise ValueError("degenerate weights: total weight is zero")
    dev = m * (w / total) - 1.0
    return float(np.sum(dev * dev)) / m


def ess_of_weights(weights: np.ndarray) -> float:
    """Effective sample size, (sum w)^2 / sum w^2, in [1, M]."""
    w = np.asarray(weights, dtype=float)
    total = weight_total(w)
    if total <= 0.0:
        raise ValueError("degenerate weights: total weight is zero")
    return total * total / float(np.sum(w * w))


@dataclass(frozen=True)
class WeightedSample:
    """An immutable weighted sample {(xi_i, w_i)}.

    Parameters
    ----------
    particles : sequence of points
        The ordered particle positions.  A point may be any object; path
        particles are tuples whose length equals the current time index.
    weights : sequence of float
        Nonnegative, finite weights in linear scale, same length as
        ``particles``.

    Raises
    ------
    ValueError
        On length mismatch, negative/non-finite weights, or an all-zero
        weight vector ("degenerate weights": a weighted sample with zero
        total mass has no normalized form and is treated as a hard error,
        never silently reset).
    """

    particles: tuple
    weights: np.ndarray
    total: float = field(init=False)

    def __init__(self, particles: Iterable[Point], weights: Sequence[float] | np.ndarray):
        particles = tuple(particles)
        w = np.array(weights, dtype=float, copy=True)
        if w.ndim != 1 or len(particles) != w.size:
            raise ValueError("particles and weights must be 1-d and of equal length")
        if w.size < 1:
            raise ValueError("a weighted sample holds at least one particle")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        total = weight_total(w)
        if total <= 0.0:
            raise ValueError("degenerate weights: total weight is zero")
        w.setflags(write=False)
        object.__setattr__(self, "particles", particles)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total", total)

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def size(self) -> int:
        return len(self.particles)

    def estimate(self, f: Callable[[Point], float]) -> float:
        """Self-normalized weighted mean, sum(w_i f(xi_i)) / sum(w_i).

        Raises ``ValueError`` ("non-finite integrand") if ``f`` returns a
        non-finite value at any particle.
        """
        vals = np.fromiter((f(p) for p in self.particles), dtype=float, count=self.size)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite integrand")
        return float(np.sum(self.weights * vals)) / self.total

    def ess(self) -> float:
        """Effective sample size, [sum (w_i/W)^2]^-1.

        Equals M for equal weights and 1 when a single weight carries all
        the mass; always satisfies ``ess * (1 + cv2) == M`` up to rounding.
        """
        return ess_of_weights(self.weights)

    def cv2(self) -> float:
        """Squared coefficient of variation of the normalized weights."""
        return cv2_of_weights(self.weights)

    def max_weight_fraction(self) -> float:
        """Largest normalized weight, max_i w_i / W, in (0, 1].

        The sample degenerates as this approaches 1; it must vanish along
        any sequence of consistent samples.
        """
        return float(np.max(self.weights)) / self.total

    def normalize(self) -> "WeightedSample":
        """Return the same sample with weights rescaled to total 1."""
        if self.total == 1.0:
            return self
        return WeightedSample(self.particles, self.weights / self.total)

    def rescaled(self, factor: float) -> "WeightedSample":
        """Return the sample with all weights multiplied by ``factor`` > 0."""
        if factor <= 0.0 or not np.isfinite(factor):
            raise ValueError("rescaling factor must be positive and finite")
        return WeightedSample(self.particles, self.weights * factor)


def equally_weighted(particles: Iterable[Point]) -> WeightedSample:
    """Build a unit-weight sample from a sequence of points."""
    particles = tuple(particles)
    return WeightedSample(particles, np.ones(len(particles)))

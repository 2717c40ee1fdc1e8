"""Brute-force enumeration of resampling outcomes.

For small systems every realization of a resampling scheme can be listed
together with its probability, so conditional moments of the output
average are computed here by literally summing over the outcome space.
Nothing in this module uses the closed-form moment formulas: it is the
independent route the closed forms are checked against.
"""

from __future__ import annotations

import numpy as np

from .resampling import MULTINOMIAL, RESIDUAL, _residual_alloc
from .weighted_sample import WeightedSample


def _all_tuples(n_values: int, length: int) -> np.ndarray:
    """All index tuples of the given length, as a (n_values**length, length) array."""
    if length == 0:
        return np.empty((1, 0), dtype=np.int64)
    grids = np.meshgrid(*([np.arange(n_values)] * length), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def enumerated_moments(
    scheme: str, sample: WeightedSample, f_values: np.ndarray, m_out: int
) -> tuple[float, float]:
    """Exact conditional mean and variance of the output average of f.

    ``f_values`` are the f evaluations at the input particles, in order.
    Every outcome of the scheme is enumerated, so the input must be small
    (the outcome count is m**m_out for multinomial and m**(residual
    draws) for the residual scheme).
    """
    f_values = np.asarray(f_values, dtype=float)
    m = sample.size
    if scheme == MULTINOMIAL:
        p = sample.weights / sample.total
        outcomes = _all_tuples(m, m_out)
        probs = np.prod(p[outcomes], axis=1)
        averages = np.mean(f_values[outcomes], axis=1)
    elif scheme == RESIDUAL:
        floors, probs_res, m_bar = _residual_alloc(sample.weights, sample.total, m_out)
        deterministic = float(np.sum(floors * f_values))
        if probs_res is None:
            return deterministic / m_out, 0.0
        outcomes = _all_tuples(m, m_out - m_bar)
        probs = np.prod(probs_res[outcomes], axis=1)
        averages = (deterministic + np.sum(f_values[outcomes], axis=1)) / m_out
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    mean = float(np.dot(probs, averages))
    second = float(np.dot(probs, averages * averages))
    return mean, second - mean * mean

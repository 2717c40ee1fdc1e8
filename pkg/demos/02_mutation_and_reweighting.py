"""Mutation: moving particles through a proposal kernel and reweighting.

The mutation step draws offspring from a proposal kernel R and multiplies
each weight by W = dL/dR, where L is the target kernel.  Two special cases
make the mechanics transparent:

* pure reweighting (the proposal is the identity) recovers classical
  importance sampling;
* an enumerable two-state kernel lets us check the defining unbiasedness
  property exactly.
"""

import numpy as np

from smclimits import (
    MutationKernelPair,
    WeightedSample,
    equally_weighted,
    mutate,
    reweighting_pair,
)

rng = np.random.default_rng(1)

# --- importance sampling as a mutation -----------------------------------
# Points drawn uniformly on {0, 1}; we want the tilted law (1/3, 2/3).
# Reweighting by the density ratio does the job without moving anything.
ratio = {0: (1 / 3) / 0.5, 1: (2 / 3) / 0.5}
pair = reweighting_pair(lambda x: ratio[x])

points = rng.integers(0, 2, size=100_000)
tilted = mutate(equally_weighted(points.tolist()), pair, 1, rng)
print("estimate of P(X=1) under the tilted law:", tilted.estimate(float))
print("exact value:", 2 / 3)
print()

# --- exact unbiasedness on an enumerable kernel --------------------------
# proposal rows and a nonconstant weight table on {0, 1}
proposal = np.array([[0.7, 0.3], [0.4, 0.6]])
weight = np.array([[2.0, 0.5], [1.0, 3.0]])
cum = np.cumsum(proposal, axis=1)

kernel = MutationKernelPair(
    propose=lambda r, x: int(min(np.searchsorted(cum[x], r.random() * cum[x][-1],
                                                 side="right"), 1)),
    weight=lambda x, y: float(weight[x, y]),
    support=lambda x: [(j, float(proposal[x, j])) for j in range(2)],
)

# The conditional expectation of an offspring's weighted f equals the
# target kernel applied to f -- here checked by direct averaging over many
# draws against the exact enumeration.
parent = 0
f = lambda y: float(y == 1)
exact = kernel.target_expectation(parent, f)

offspring = [kernel.propose(rng, parent) for _ in range(200_000)]
empirical = np.mean([kernel.weight(parent, y) * f(y) for y in offspring])
print("target kernel applied to f (exact enumeration):", exact)
print("empirical mean of W * f over offspring draws:  ", empirical)
print()

# --- multiple offspring ----------------------------------------------------
# Three offspring per particle triple the sample size, parent-major order.
sample = WeightedSample([0, 1], [0.4, 0.6])
out = mutate(sample, kernel, 3, rng)
print("input size 2, offspring count 3 -> output size", out.size)
print("offspring weights:", np.round(out.weights, 3))

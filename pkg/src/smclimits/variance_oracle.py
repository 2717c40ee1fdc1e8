"""Exact asymptotic-variance recursion for the adaptive discrete filter.

For a discrete model every quantity in the filter's central limit theorem
can be computed by finite summation over path space: the smoothing law
psi_k, the second-moment measure gamma_k of the weighted system, the
deterministic resampling indicators epsilon_k implied by the threshold,
the per-step normalizers, and the asymptotic variance functional
sigma_k^2(f).  One step of the recursion composes the mutation rule

    sigma~^2(f) = [ sigma_{k-1}^2( L{f - psi_k(f)} )
                    + gamma_{k-1} R( {W f - R(., W f)}^2 ) ] / normalizer^2
    gamma~(f)   = gamma_{k-1} R( W^2 f ) / normalizer^2

with the multinomial-selection rule applied when the limiting squared
coefficient of variation gamma~(1) - 1 reaches the threshold:

    sigma_k^2(f) = epsilon_k Var_{psi_k}(f) + sigma~^2(f)
    gamma_k      = epsilon_k psi_k + (1 - epsilon_k) gamma~

seeded at step 1 by sigma_1^2 = Var_{psi_1} and gamma_1 = psi_1 (an
i.i.d. draw from the first filter law).  Everything is evaluated by dense
tensor contractions over enumerated paths, so the oracle side of the
acceptance tests carries no Monte Carlo error at all.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .state_space import (
    DEFAULT_PATH_CAP,
    OPTIMAL,
    PRIOR,
    RESAMPLE_MOVE,
    DiscreteHMM,
    move_matrices,
)

BOUNDARY_MARGIN = 0.1


@dataclass(frozen=True)
class _StepOps:
    """Tensor form of one mutation step's proposal kernel and weight.

    ``apply_rw(h, p)`` maps a function h over length-k paths to the
    function x -> R(x, W^p h) over length-(k-1) paths; ``push_w2`` is the
    adjoint carrying a measure forward with density W^2.
    """

    apply_rw: Callable[[np.ndarray, int], np.ndarray]
    push_w2: Callable[[np.ndarray], np.ndarray]


def _step_ops(model: DiscreteHMM, k: int, proposal_kind: str) -> _StepOps:
    q = model.transition
    g = model.likelihoods[k - 1]
    if proposal_kind == PRIOR or (proposal_kind == RESAMPLE_MOVE and k < 3):

        def apply_rw(h, p):
            return np.einsum("...ij,ij->...i", h, q * (g**p)[None, :])

        def push_w2(meas):
            return np.einsum("...i,ij->...ij", meas, q * (g**2)[None, :])

    elif proposal_kind == OPTIMAL:
        tilted = q * g[None, :]
        norms = np.sum(tilted, axis=1)
        if np.any(norms <= 0.0):
            raise ValueError("optimal kernel undefined: a transition row has zero tilted mass")
        r_opt = tilted / norms[:, None]

        def apply_rw(h, p):
            return np.einsum("...ij,ij->...i", h, r_opt * (norms**p)[:, None])

        def push_w2(meas):
            return np.einsum("...i,ij->...ij", meas, r_opt * (norms**2)[:, None])

    elif proposal_kind == RESAMPLE_MOVE:
        mats = move_matrices(model, k, n_moves=1)

        def apply_rw(h, p):
            return np.einsum("ecm,mj,...emj->...ec", mats, q * (g**p)[None, :], h)

        def push_w2(meas):
            return np.einsum("...ec,ecm,mj->...emj", meas, mats, q * (g**2)[None, :])

    else:
        raise ValueError(f"unknown proposal kind {proposal_kind!r}")
    return _StepOps(apply_rw=apply_rw, push_w2=push_w2)


@dataclass(frozen=True)
class _StepState:
    psi: np.ndarray           # smoothing law over paths at this step
    gamma: np.ndarray         # second-moment measure, same indexing
    epsilon: int | None       # resampling indicator; None at step 1
    normalizer: float         # previous law carried through the target kernel
    ess_limit: float | None   # limiting squared CV of the mutated weights
    ops: _StepOps | None      # kernel operators of the step's mutation


@dataclass(frozen=True)
class VarianceRecursionState:
    """The recursion's history up to the current step (immutable)."""

    model: DiscreteHMM
    proposal_kind: str
    steps: tuple[_StepState, ...]

    @property
    def k(self) -> int:
        return len(self.steps)

    @property
    def psi(self) -> np.ndarray:
        return self.steps[-1].psi

    @property
    def gamma(self) -> np.ndarray:
        return self.steps[-1].gamma

    @property
    def epsilons(self) -> tuple:
        return tuple(s.epsilon for s in self.steps[1:])

    @property
    def normalizers(self) -> tuple:
        return tuple(s.normalizer for s in self.steps[1:])

    def path_function(self, f, k: int | None = None) -> np.ndarray:
        """Coerce f to a dense array over length-k paths.

        Accepts a full path array, a length-n table of the terminal
        coordinate, or a callable on path tuples.
        """
        k = self.k if k is None else k
        shape = (self.model.n_states,) * k
        if callable(f):
            out = np.empty(shape)
            for idx in np.ndindex(shape):
                out[idx] = f(idx)
            return out
        f = np.asarray(f, dtype=float)
        if f.shape == shape:
            return f
        if f.ndim == 1 and f.size == self.model.n_states:
            return np.broadcast_to(f, shape).copy()
        raise ValueError("f must be a terminal table, a path array, or a callable")

    def sigma2(self, f) -> float:
        """The asymptotic variance sigma_k^2(f) at the current step."""
        return self._sigma2(self.k, self.path_function(f))

    def _sigma2(self, j: int, f: np.ndarray) -> float:
        entry = self.steps[j - 1]
        mean = float(np.sum(entry.psi * f))
        var = float(np.sum(entry.psi * (f - mean) ** 2))
        if j == 1:
            return var
        prev = self.steps[j - 2]
        # The fluctuation added by the mutation draw acts on the centered
        # function: the CLT statement fixes mean-zero f up front, and only
        # the centered form annihilates constants.
        centered = f - mean
        second = entry.ops.apply_rw(centered * centered, 2)
        first = entry.ops.apply_rw(centered, 1)  # also the carried L(f - mean)
        mutation_term = float(np.sum(prev.gamma * (second - first * first)))
        carried = self._sigma2(j - 1, first)
        base = (carried + mutation_term) / entry.normalizer**2
        return entry.epsilon * var + base


def recursion_init(model: DiscreteHMM, cap: int = DEFAULT_PATH_CAP) -> VarianceRecursionState:
    """Step-1 state: psi_1 = gamma_1 = first filter law, variance functional Var_{psi_1}."""
    if model.n_states > cap:
        raise ValueError("path space too large")
    psi = model.initial * model.likelihoods[0]
    psi = psi / np.sum(psi)
    step = _StepState(psi=psi, gamma=psi, epsilon=None, normalizer=1.0, ess_limit=None, ops=None)
    return VarianceRecursionState(model, "", (step,))


def mutated_cv2_limit(
    state: VarianceRecursionState, model: DiscreteHMM, proposal_kind: str
) -> float:
    """Limiting squared CV of the weights after the next mutation.

    This is what the adaptive trigger's empirical squared CV converges to,
    and the quantity the resampling indicator compares with the threshold.
    """
    k = state.k + 1
    ops = _step_ops(model, k, proposal_kind)
    ones = np.ones((model.n_states,) * k)
    normalizer = float(np.sum(state.psi * ops.apply_rw(ones, 1)))
    gamma_total = float(np.sum(state.gamma * ops.apply_rw(ones, 2))) / normalizer**2
    return gamma_total - 1.0


def ess_limit(state: VarianceRecursionState, model: DiscreteHMM, proposal_kind: str) -> float:
    """Alias of :func:`mutated_cv2_limit`; always nonnegative."""
    return mutated_cv2_limit(state, model, proposal_kind)


def recursion_step(
    state: VarianceRecursionState,
    model: DiscreteHMM,
    proposal_kind: str,
    kappa2: float,
    cap: int = DEFAULT_PATH_CAP,
) -> VarianceRecursionState:
    """Advance the recursion by one mutation-selection step.

    ``kappa2`` may be ``math.inf`` (never resample) or 0 (the threshold is
    always reached).  A warning is emitted when the limiting trigger
    statistic sits within 10% of the threshold: there the deterministic
    indicator stops predicting the finite-population decision reliably.
    """
    k = state.k + 1
    if k > model.horizon:
        raise ValueError("no observations left: the recursion already reached the horizon")
    if model.n_states**k > cap:
        raise ValueError("path space too large")
    ops = _step_ops(model, k, proposal_kind)
    ones = np.ones((model.n_states,) * k)
    normalizer = float(np.sum(state.psi * ops.apply_rw(ones, 1)))
    gamma_total = float(np.sum(state.gamma * ops.apply_rw(ones, 2))) / normalizer**2
    epsilon = 1 if gamma_total >= 1.0 + kappa2 else 0
    if math.isfinite(kappa2):
        proximity = abs(gamma_total - (1.0 + kappa2)) / (1.0 + kappa2)
        if proximity < BOUNDARY_MARGIN:
            warnings.warn(
                f"trigger statistic within {proximity:.1%} of the threshold at step {k}; "
                "finite-population decisions may disagree with the indicator",
                RuntimeWarning,
                stacklevel=2,
            )
    kernel = model.transition * model.likelihoods[k - 1][None, :]
    psi = np.einsum("...i,ij->...ij", state.psi, kernel)
    psi = psi / np.sum(psi)
    if epsilon:
        gamma = psi
    else:
        gamma = ops.push_w2(state.gamma) / normalizer**2
    step = _StepState(
        psi=psi,
        gamma=gamma,
        epsilon=epsilon,
        normalizer=normalizer,
        ess_limit=gamma_total - 1.0,
        ops=ops,
    )
    return VarianceRecursionState(model, proposal_kind, state.steps + (step,))


def run_recursion(
    model: DiscreteHMM,
    proposal_kind: str,
    kappa2: float,
    horizon: int | None = None,
    cap: int = DEFAULT_PATH_CAP,
) -> VarianceRecursionState:
    """Run the recursion from step 1 through ``horizon``."""
    horizon = model.horizon if horizon is None else horizon
    state = recursion_init(model, cap)
    for _ in range(2, horizon + 1):
        state = recursion_step(state, model, proposal_kind, kappa2, cap)
    return state


def variance_table(
    model: DiscreteHMM,
    proposal_kind: str,
    kappa2: float,
    functions: Sequence[tuple[str, np.ndarray]],
    horizon: int | None = None,
    cap: int = DEFAULT_PATH_CAP,
) -> list[dict]:
    """Per-step record of the recursion: indicators, normalizers, variances.

    ``functions`` is a sequence of (name, terminal table) pairs; each row
    reports sigma_k^2 for every requested function at that step.
    """
    horizon = model.horizon if horizon is None else horizon
    state = recursion_init(model, cap)
    rows = []

    def row_for(s: VarianceRecursionState) -> dict:
        last = s.steps[-1]
        entry = {
            "k": s.k,
            "epsilon": last.epsilon,
            "normalizer": last.normalizer,
            "cv2_limit": last.ess_limit,
            "gamma_total": float(np.sum(s.gamma)),
        }
        for name, table in functions:
            entry[f"sigma2[{name}]"] = s.sigma2(np.asarray(table, dtype=float))
        return entry

    rows.append(row_for(state))
    for _ in range(2, horizon + 1):
        state = recursion_step(state, model, proposal_kind, kappa2, cap)
        rows.append(row_for(state))
    return rows

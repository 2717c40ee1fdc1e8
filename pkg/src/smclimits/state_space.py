"""State-space models and the adaptive particle filter for their smoothing laws.

The object of interest is the joint smoothing distribution: the conditional
law of the state path x_{1:k} given a fixed observation record.  Particles
are full paths; at step k each particle is extended by one coordinate
through a proposal kernel and reweighted, and the system is rejuvenated by
resampling whenever the weight skewness crosses the policy's threshold.

Three proposal kernels are built in:

* ``prior``    - extend with the state transition; the incremental weight
  is the new state's observation likelihood.
* ``optimal``  - extend with the transition tilted by the likelihood; the
  incremental weight is the predictive likelihood of the observation given
  the parent's last state, constant over that parent's offspring.
* ``resample_move`` - first rejuvenate the path's last coordinate with a
  Metropolis-Hastings move that leaves the previous smoothing law
  invariant, then extend as the prior kernel does.

For discrete models everything is exactly enumerable, which the oracle
modules rely on; a scalar linear-Gaussian model is included for
continuous-state smoke tests with Kalman-filter reference values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import MutationKernelPair
from .resampling import ResamplingPolicy, resample_indices
from .weighted_sample import WeightedSample, cv2_of_weights, ess_of_weights

PRIOR = "prior"
OPTIMAL = "optimal"
RESAMPLE_MOVE = "resample_move"
PROPOSAL_KINDS = (PRIOR, OPTIMAL, RESAMPLE_MOVE)

DEFAULT_PATH_CAP = 4096


@dataclass(frozen=True)
class DiscreteHMM:
    """A finite-state hidden Markov model with a fixed observation record.

    Parameters
    ----------
    initial : array (n,)
        Initial state distribution.
    transition : array (n, n)
        Row-stochastic transition matrix.
    likelihoods : array (horizon, n)
        ``likelihoods[k-1][x]`` is the observation likelihood at step k in
        state x.  All entries must be strictly positive: positive
        likelihoods keep every weight function bounded on the finite state
        space, so every bounded test function is admissible for the limit
        theorems the oracles certify.
    """

    initial: np.ndarray
    transition: np.ndarray
    likelihoods: np.ndarray

    def __init__(self, initial, transition, likelihoods):
        initial = np.array(initial, dtype=float)
        transition = np.array(transition, dtype=float)
        likelihoods = np.array(likelihoods, dtype=float)
        n = initial.size
        if n < 2:
            raise ValueError("a discrete model needs at least two states")
        if transition.shape != (n, n):
            raise ValueError("transition matrix shape must match the state count")
        if likelihoods.ndim != 2 or likelihoods.shape[1] != n:
            raise ValueError("likelihood table must be (horizon, n_states)")
        if abs(float(np.sum(initial)) - 1.0) > 1e-12 or np.any(initial < 0.0):
            raise ValueError("initial distribution must be a probability vector")
        rows = np.sum(transition, axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12) or np.any(transition < 0.0):
            raise ValueError("transition rows must be probability vectors")
        if not np.all(likelihoods > 0.0):
            raise ValueError("likelihoods must be strictly positive")
        for a in (initial, transition, likelihoods):
            a.setflags(write=False)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "likelihoods", likelihoods)

    @property
    def n_states(self) -> int:
        return self.initial.size

    @property
    def horizon(self) -> int:
        return self.likelihoods.shape[0]

    def to_dict(self) -> dict:
        return {
            "type": "discrete_hmm",
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "likelihoods": self.likelihoods.tolist(),
        }


def random_likelihood_table(
    horizon: int, n_states: int, obs_seed: int, low: float = 0.3, high: float = 3.0
) -> np.ndarray:
    """Draw a strictly positive likelihood table from a pinned seed.

    Entries are independent Uniform(low, high); the same seed always
    yields the same observation record, and reports echo the table so the
    record is auditable.
    """
    rng = np.random.default_rng(np.random.SeedSequence(obs_seed))
    return rng.uniform(low, high, size=(horizon, n_states))


@dataclass(frozen=True)
class LinearGaussianSSM:
    """Scalar AR(1) state with additive Gaussian observation noise.

    The state starts from its stationary law (|ar_coeff| < 1 required) and
    evolves as x_k = ar_coeff * x_{k-1} + N(0, state_std^2); observations
    are y_k = x_k + N(0, obs_std^2).  Used for continuous-state smoke
    tests; the Kalman filter supplies exact reference moments.
    """

    ar_coeff: float
    state_std: float
    obs_std: float
    observations: np.ndarray

    def __init__(self, ar_coeff, state_std, obs_std, observations):
        observations = np.array(observations, dtype=float)
        if not (state_std > 0.0 and obs_std > 0.0):
            raise ValueError("noise standard deviations must be positive")
        if not abs(ar_coeff) < 1.0:
            raise ValueError("|ar_coeff| < 1 is required for a stationary start")
        observations.setflags(write=False)
        object.__setattr__(self, "ar_coeff", float(ar_coeff))
        object.__setattr__(self, "state_std", float(state_std))
        object.__setattr__(self, "obs_std", float(obs_std))
        object.__setattr__(self, "observations", observations)

    @property
    def horizon(self) -> int:
        return self.observations.size

    @property
    def stationary_var(self) -> float:
        return self.state_std**2 / (1.0 - self.ar_coeff**2)

    def simulate_observations(self, horizon: int, obs_seed: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(obs_seed))
        x = rng.normal(0.0, math.sqrt(self.stationary_var))
        ys = np.empty(horizon)
        for k in range(horizon):
            if k > 0:
                x = self.ar_coeff * x + rng.normal(0.0, self.state_std)
            ys[k] = x + rng.normal(0.0, self.obs_std)
        return ys

    def kalman_filter(self) -> tuple[np.ndarray, np.ndarray]:
        """Filtered means and variances E[x_k | y_{1:k}], Var[x_k | y_{1:k}]."""
        means = np.empty(self.horizon)
        variances = np.empty(self.horizon)
        pred_mean, pred_var = 0.0, self.stationary_var
        for k, y in enumerate(self.observations):
            gain = pred_var / (pred_var + self.obs_std**2)
            mean = pred_mean + gain * (y - pred_mean)
            var = (1.0 - gain) * pred_var
            means[k], variances[k] = mean, var
            pred_mean = self.ar_coeff * mean
            pred_var = self.ar_coeff**2 * var + self.state_std**2
        return means, variances

    def to_dict(self) -> dict:
        return {
            "type": "linear_gaussian",
            "ar_coeff": self.ar_coeff,
            "state_std": self.state_std,
            "obs_std": self.obs_std,
            "observations": self.observations.tolist(),
        }


# ---------------------------------------------------------------------------
# Proposal kernels (path particles are tuples of state indices / scalars)
# ---------------------------------------------------------------------------


def _check_step(model, k: int) -> None:
    if not 2 <= k <= model.horizon:
        raise ValueError(f"step {k} outside 2..{model.horizon}")


def _normal_logpdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (x - mean) ** 2 / var - 0.5 * math.log(2.0 * math.pi * var)


def _lgssm_prior(model: LinearGaussianSSM, k: int) -> MutationKernelPair:
    y = model.observations[k - 1]
    tau2 = model.obs_std**2

    def propose(rng, x):
        return x + (model.ar_coeff * x[-1] + model.state_std * rng.standard_normal(),)

    return MutationKernelPair(
        propose=propose,
        weight=lambda x, yy: math.exp(_normal_logpdf(y, yy[-1], tau2)),
    )


def _lgssm_optimal(model: LinearGaussianSSM, k: int) -> MutationKernelPair:
    y = model.observations[k - 1]
    sx2, tau2 = model.state_std**2, model.obs_std**2
    post_var = sx2 * tau2 / (sx2 + tau2)
    pred_var = sx2 + tau2

    def propose(rng, x):
        mean = post_var * (model.ar_coeff * x[-1] / sx2 + y / tau2)
        return x + (mean + math.sqrt(post_var) * rng.standard_normal(),)

    return MutationKernelPair(
        propose=propose,
        weight=lambda x, yy: math.exp(_normal_logpdf(y, model.ar_coeff * x[-1], pred_var)),
    )


def move_matrices(model: DiscreteHMM, k: int, n_moves: int = 1) -> np.ndarray:
    """Metropolis-Hastings matrices rejuvenating coordinate k-1 before step k.

    Element [e, c, m] is the chance that the path's last coordinate moves
    from c to m when the coordinate before it is e.  The move proposes
    uniformly over states and accepts with the ratio of the target
    conditional t_e(x) = transition[e, x] * likelihood_{k-1}(x); by
    detailed balance each matrix leaves t_e invariant.  ``n_moves``
    composes the move with itself.
    """
    _check_step(model, k)
    if k < 3:
        raise ValueError("the path move needs at least two past coordinates")
    n = model.n_states
    g_prev = model.likelihoods[k - 2]
    mats = np.empty((n, n, n))
    for e in range(n):
        t = model.transition[e] * g_prev
        accept = np.ones((n, n))
        pos = t > 0.0
        # rows with t[c] > 0 accept with min(1, t[m]/t[c]); rows at a
        # null point of the target accept everything
        accept[pos, :] = np.minimum(1.0, t[None, :] / t[pos, None])
        p = accept / n
        np.fill_diagonal(p, 0.0)
        np.fill_diagonal(p, 1.0 - p.sum(axis=1))
        mats[e] = np.linalg.matrix_power(p, n_moves) if n_moves != 1 else p
    return mats


def prior_proposal(model: DiscreteHMM | LinearGaussianSSM, k: int) -> MutationKernelPair:
    """Extend the path with the state transition; weight by the likelihood."""
    _check_step(model, k)
    if isinstance(model, LinearGaussianSSM):
        return _lgssm_prior(model, k)
    q = model.transition
    cum = np.cumsum(q, axis=1)
    g = model.likelihoods[k - 1]

    def propose(rng, x):
        row = cum[x[-1]]
        j = int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), q.shape[1] - 1))
        return x + (j,)

    return MutationKernelPair(
        propose=propose,
        weight=lambda x, y: float(g[y[-1]]),
        support=lambda x: [(x + (j,), float(q[x[-1], j])) for j in range(q.shape[1])],
    )


def optimal_proposal(model: DiscreteHMM | LinearGaussianSSM, k: int) -> MutationKernelPair:
    """Extend with the likelihood-tilted transition.

    The proposal law is proportional to transition[x_{k-1}, .] * g_k(.)
    and the incremental weight is its normalizer, the predictive
    likelihood sum_j transition[x_{k-1}, j] g_k(j): it depends on the
    parent's last state only, never on the offspring.
    """
    _check_step(model, k)
    if isinstance(model, LinearGaussianSSM):
        return _lgssm_optimal(model, k)
    g = model.likelihoods[k - 1]
    tilted = model.transition * g[None, :]
    norms = np.sum(tilted, axis=1)
    if np.any(norms <= 0.0):
        raise ValueError("optimal kernel undefined: a transition row has zero tilted mass")
    probs = tilted / norms[:, None]
    cum = np.cumsum(probs, axis=1)

    def propose(rng, x):
        row = cum[x[-1]]
        j = int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), probs.shape[1] - 1))
        return x + (j,)

    return MutationKernelPair(
        propose=propose,
        weight=lambda x, y: float(norms[x[-1]]),
        support=lambda x: [(x + (j,), float(probs[x[-1], j])) for j in range(probs.shape[1])],
    )


def resample_move_proposal(
    model: DiscreteHMM, k: int, n_moves: int = 1
) -> MutationKernelPair:
    """Move the path's last coordinate, then extend as the prior kernel.

    The move is a Metropolis-Hastings pass (see :func:`move_matrices`)
    whose target is the smoothing law's conditional of coordinate k-1
    given coordinate k-2, so the previous smoothing law stays invariant;
    the incremental weight is again the new state's likelihood.  With
    ``n_moves=0``, or at steps with fewer than two past coordinates, the
    pair reduces to the plain prior extension (flagged as degenerate in
    the latter case).
    """
    _check_step(model, k)
    if not isinstance(model, DiscreteHMM):
        raise ValueError("the path move is only available for discrete models")
    if k < 3:
        base = prior_proposal(model, k)
        return MutationKernelPair(
            propose=base.propose,
            weight=base.weight,
            support=base.support,
            degenerate_move=True,
        )
    if n_moves == 0:
        return prior_proposal(model, k)
    n = model.n_states
    q = model.transition
    cum_q = np.cumsum(q, axis=1)
    g = model.likelihoods[k - 1]
    mats = move_matrices(model, k, n_moves)
    cum_mats = np.cumsum(mats, axis=2)

    def propose(rng, x):
        e, c = x[-2], x[-1]
        row = cum_mats[e, c]
        m = int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), n - 1))
        row = cum_q[m]
        j = int(min(np.searchsorted(row, rng.random() * row[-1], side="right"), n - 1))
        return x[:-1] + (m, j)

    def support(x):
        e, c = x[-2], x[-1]
        out = []
        for m in range(n):
            pm = mats[e, c, m]
            if pm == 0.0:
                continue
            for j in range(n):
                if q[m, j] > 0.0:
                    out.append((x[:-1] + (m, j), float(pm * q[m, j])))
        return out

    return MutationKernelPair(
        propose=propose,
        weight=lambda x, y: float(g[y[-1]]),
        support=support,
    )


def make_proposal(model, k: int, kind: str) -> MutationKernelPair:
    if kind == PRIOR:
        return prior_proposal(model, k)
    if kind == OPTIMAL:
        return optimal_proposal(model, k)
    if kind == RESAMPLE_MOVE:
        return resample_move_proposal(model, k)
    raise ValueError(f"unknown proposal kind {kind!r}")


# ---------------------------------------------------------------------------
# Exact smoothing oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathDistribution:
    """An exact distribution over length-k state paths, one axis per step."""

    probs: np.ndarray  # shape (n,) * k, sums to 1

    @property
    def steps(self) -> int:
        return self.probs.ndim

    def marginal(self, step: int) -> np.ndarray:
        """Marginal law of coordinate ``step`` (1-based)."""
        axes = tuple(a for a in range(self.probs.ndim) if a != step - 1)
        return np.sum(self.probs, axis=axes)

    def expect_terminal(self, f_table: np.ndarray) -> float:
        """Expectation of a function of the terminal coordinate."""
        return float(np.dot(self.marginal(self.steps), np.asarray(f_table, dtype=float)))

    def expect_path(self, f: Callable[[tuple], float]) -> float:
        """Expectation of an arbitrary path functional (enumerates all paths)."""
        total = 0.0
        for idx in np.ndindex(self.probs.shape):
            total += self.probs[idx] * f(idx)
        return float(total)

    def variance_terminal(self, f_table: np.ndarray) -> float:
        marg = self.marginal(self.steps)
        f_table = np.asarray(f_table, dtype=float)
        mean = float(np.dot(marg, f_table))
        return float(np.dot(marg, (f_table - mean) ** 2))


def exact_joint_smoothing(
    model: DiscreteHMM, k: int, cap: int = DEFAULT_PATH_CAP
) -> PathDistribution:
    """The joint smoothing law over paths of length k, by direct summation.

    Proportional to initial(x_1) g_1(x_1) * prod_j transition(x_{j-1}, x_j)
    g_j(x_j), normalized over all n^k paths.  Raises "path space too
    large" beyond the enumeration cap.
    """
    if not 1 <= k <= model.horizon:
        raise ValueError(f"step {k} outside 1..{model.horizon}")
    if model.n_states**k > cap:
        raise ValueError("path space too large")
    psi = model.initial * model.likelihoods[0]
    psi = psi / np.sum(psi)
    for j in range(2, k + 1):
        kernel = model.transition * model.likelihoods[j - 1][None, :]
        psi = np.einsum("...i,ij->...ij", psi, kernel)
        psi = psi / np.sum(psi)
    return PathDistribution(psi)


def forward_backward_marginals(model: DiscreteHMM, k: int) -> np.ndarray:
    """Smoothing marginals P(x_j | record up to k) via scaled alpha/beta passes.

    Independent of the path-sum route; used to cross-check
    :func:`exact_joint_smoothing` and free of the enumeration cap.
    """
    if not 1 <= k <= model.horizon:
        raise ValueError(f"step {k} outside 1..{model.horizon}")
    n = model.n_states
    alphas = np.empty((k, n))
    a = model.initial * model.likelihoods[0]
    alphas[0] = a / np.sum(a)
    for j in range(1, k):
        a = (alphas[j - 1] @ model.transition) * model.likelihoods[j]
        alphas[j] = a / np.sum(a)
    betas = np.empty((k, n))
    betas[k - 1] = 1.0
    for j in range(k - 2, -1, -1):
        b = model.transition @ (model.likelihoods[j + 1] * betas[j + 1])
        betas[j] = b / np.sum(b)
    marg = alphas * betas
    return marg / np.sum(marg, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# The adaptive filter
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    """Diagnostics and the particle system at one filter step.

    ``ess``, ``cv2`` and ``max_weight_fraction`` describe the *mutated*
    (pre-selection) weights, which is what the trigger inspects;
    ``paths``/``weights`` hold the post-selection system.  Weights carry
    an arbitrary common scale (the log of each step's true normalizing
    increment is kept separately in ``log_increment``), which leaves every
    self-normalized quantity untouched.
    """

    step: int
    ess: float
    cv2: float
    resampled: bool
    log_increment: float
    max_weight_fraction: float
    paths: np.ndarray
    weights: np.ndarray

    def as_weighted_sample(self) -> WeightedSample:
        particles = [tuple(int(s) for s in row) for row in self.paths] \
            if np.issubdtype(self.paths.dtype, np.integer) \
            else [tuple(float(s) for s in row) for row in self.paths]
        return WeightedSample(particles, self.weights)


@dataclass
class SmcTrace:
    """The full history of one filter run."""

    model: DiscreteHMM | LinearGaussianSSM
    proposal_kind: str
    policy: ResamplingPolicy
    records: list[StepRecord] = field(default_factory=list)

    @property
    def step(self) -> int:
        return len(self.records)

    @property
    def current(self) -> StepRecord:
        return self.records[-1]

    def sample_at(self, step: int) -> WeightedSample:
        return self.records[step - 1].as_weighted_sample()

    def terminal_estimate(self, f) -> float:
        """Weighted estimate of a terminal-coordinate function.

        ``f`` is either a table indexed by the discrete state or a callable
        applied to the terminal coordinate.
        """
        rec = self.current
        last = rec.paths[:, -1]
        if callable(f):
            vals = np.array([f(v) for v in last], dtype=float)
        else:
            vals = np.asarray(f, dtype=float)[last]
        total = float(np.sum(rec.weights))
        return float(np.sum(rec.weights * vals)) / total

    def decisions(self) -> list[bool]:
        return [r.resampled for r in self.records[1:]]

    def cv2_by_step(self) -> list[float]:
        return [r.cv2 for r in self.records]

    def ess_by_step(self) -> list[float]:
        return [r.ess for r in self.records]

    def n_resamples(self) -> int:
        return sum(r.resampled for r in self.records)

    def log_normalizer(self) -> float:
        return float(sum(r.log_increment for r in self.records))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def _rows_categorical(cum_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row of a cumulative-probability matrix."""
    u = rng.random(cum_rows.shape[0]) * cum_rows[:, -1]
    idx = np.sum(cum_rows <= u[:, None], axis=1)
    return np.minimum(idx, cum_rows.shape[1] - 1)


def smc_init(
    model: DiscreteHMM | LinearGaussianSSM,
    m: int,
    proposal_kind: str,
    policy: ResamplingPolicy,
    rng: np.random.Generator,
) -> SmcTrace:
    """Start a run with m i.i.d. draws from the exact first filter law.

    For the discrete model that law is the categorical proportional to
    initial * g_1; for the linear-Gaussian model it is the conjugate
    normal posterior of x_1 given y_1.  Starting from the first *filter*
    (not the prior) is what the step-1 hypothesis of the variance
    recursion assumes.
    """
    if m < 1:
        raise ValueError("particle count must be >= 1")
    if proposal_kind not in PROPOSAL_KINDS:
        raise ValueError(f"unknown proposal kind {proposal_kind!r}")
    if isinstance(model, DiscreteHMM):
        first = model.initial * model.likelihoods[0]
        norm = float(np.sum(first))
        cum = np.cumsum(first)
        idx = np.searchsorted(cum, rng.random(m) * cum[-1], side="right")
        paths = np.minimum(idx, model.n_states - 1).astype(np.int64)[:, None]
    else:
        v0 = model.stationary_var
        tau2 = model.obs_std**2
        post_var = v0 * tau2 / (v0 + tau2)
        post_mean = v0 * model.observations[0] / (v0 + tau2)
        norm = math.exp(-0.5 * model.observations[0] ** 2 / (v0 + tau2)) / math.sqrt(
            2.0 * math.pi * (v0 + tau2)
        )
        paths = (post_mean + math.sqrt(post_var) * rng.standard_normal(m))[:, None]
    weights = np.ones(m)
    record = StepRecord(
        step=1,
        ess=float(m),
        cv2=0.0,
        resampled=False,
        log_increment=math.log(norm),
        max_weight_fraction=1.0 / m,
        paths=paths,
        weights=weights,
    )
    return SmcTrace(model, proposal_kind, policy, [record])


def _mutate_discrete(model, kind, k, paths, rng):
    """Extend every path by one coordinate; return new paths and log-weights."""
    n = model.n_states
    g = model.likelihoods[k - 1]
    last = paths[:, -1]
    if kind == PRIOR or (kind == RESAMPLE_MOVE and k < 3):
        cum = np.cumsum(model.transition, axis=1)
        new = _rows_categorical(cum[last], rng)
        log_inc = np.log(g[new])
    elif kind == OPTIMAL:
        tilted = model.transition * g[None, :]
        norms = np.sum(tilted, axis=1)
        if np.any(norms <= 0.0):
            raise ValueError("optimal kernel undefined: a transition row has zero tilted mass")
        cum = np.cumsum(tilted / norms[:, None], axis=1)
        new = _rows_categorical(cum[last], rng)
        log_inc = np.log(norms[last])
    elif kind == RESAMPLE_MOVE:
        g_prev = model.likelihoods[k - 2]
        prev = paths[:, -2]
        current = last.copy()
        # one uniform-proposal MH pass on the last past coordinate
        proposals = rng.integers(0, n, size=paths.shape[0])
        t_prop = model.transition[prev, proposals] * g_prev[proposals]
        t_cur = model.transition[prev, current] * g_prev[current]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(t_cur > 0.0, t_prop / np.where(t_cur > 0.0, t_cur, 1.0), np.inf)
        accept = rng.random(paths.shape[0]) < ratio
        current[accept] = proposals[accept]
        paths = paths.copy()
        paths[:, -1] = current
        cum = np.cumsum(model.transition, axis=1)
        new = _rows_categorical(cum[current], rng)
        log_inc = np.log(g[new])
    else:
        raise ValueError(f"unknown proposal kind {kind!r}")
    return np.hstack([paths, new[:, None]]), log_inc


def _mutate_lgssm(model, kind, k, paths, rng):
    y = model.observations[k - 1]
    sx2, tau2 = model.state_std**2, model.obs_std**2
    last = paths[:, -1]
    m = paths.shape[0]
    if kind == PRIOR:
        new = model.ar_coeff * last + model.state_std * rng.standard_normal(m)
        log_inc = -0.5 * (y - new) ** 2 / tau2 - 0.5 * math.log(2.0 * math.pi * tau2)
    elif kind == OPTIMAL:
        post_var = sx2 * tau2 / (sx2 + tau2)
        post_mean = post_var * (model.ar_coeff * last / sx2 + y / tau2)
        new = post_mean + math.sqrt(post_var) * rng.standard_normal(m)
        pred_var = sx2 + tau2
        log_inc = -0.5 * (y - model.ar_coeff * last) ** 2 / pred_var - 0.5 * math.log(
            2.0 * math.pi * pred_var
        )
    else:
        raise ValueError("the path move is only available for discrete models")
    return np.hstack([paths, new[:, None]]), log_inc


def smc_step(
    trace: SmcTrace,
    model: DiscreteHMM | LinearGaussianSSM,
    proposal_kind: str,
    policy: ResamplingPolicy,
    rng: np.random.Generator,
) -> SmcTrace:
    """Advance the trace by one mutation-selection step.

    Mutation extends every particle once and multiplies its weight by the
    incremental weight (accumulated in log scale and re-exponentiated
    against the step's maximum, so long products cannot underflow).  The
    selection decision compares the mutated weights' squared coefficient
    of variation with the policy's threshold.
    """
    k = trace.step + 1
    if k > model.horizon:
        raise ValueError("no observations left: the trace already reached the horizon")
    rec = trace.current
    weights = rec.weights
    if isinstance(model, DiscreteHMM):
        paths, log_inc = _mutate_discrete(model, proposal_kind, k, rec.paths, rng)
    else:
        paths, log_inc = _mutate_lgssm(model, proposal_kind, k, rec.paths, rng)
    shift = float(np.max(log_inc))
    if not np.isfinite(shift):
        raise ValueError("weight collapse: non-finite incremental weights")
    mutated = weights * np.exp(log_inc - shift)
    total = float(np.sum(mutated))
    old_total = float(np.sum(weights))
    if not (total > 0.0 and np.isfinite(total)):
        raise ValueError("weight collapse: all mutated weights vanished")
    log_increment = shift + math.log(total / old_total)
    cv2 = cv2_of_weights(mutated)
    ess = ess_of_weights(mutated)
    max_frac = float(np.max(mutated)) / total
    fire = policy.should_fire(cv2)
    if fire:
        m_out = policy.output_size(paths.shape[0])
        idx = resample_indices(mutated, m_out, policy.scheme, rng)
        paths = paths[idx]
        new_weights = np.ones(m_out)
    else:
        new_weights = mutated
    trace.records.append(
        StepRecord(
            step=k,
            ess=ess,
            cv2=cv2,
            resampled=fire,
            log_increment=log_increment,
            max_weight_fraction=max_frac,
            paths=paths,
            weights=new_weights,
        )
    )
    return trace


def smc_run(
    model: DiscreteHMM | LinearGaussianSSM,
    proposal_kind: str,
    policy: ResamplingPolicy,
    m: int,
    seed,
    horizon: int | None = None,
) -> SmcTrace:
    """Run the filter from step 1 through ``horizon`` (default: all steps)."""
    rng = as_rng(seed)
    horizon = model.horizon if horizon is None else horizon
    if not 1 <= horizon <= model.horizon:
        raise ValueError(f"horizon outside 1..{model.horizon}")
    trace = smc_init(model, m, proposal_kind, policy, rng)
    for _ in range(2, horizon + 1):
        smc_step(trace, model, proposal_kind, policy, rng)
    return trace

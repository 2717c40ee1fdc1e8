"""Monte Carlo replication engine and statistical checks at desk scale.

The limit statements certified here are asymptotic; the harness reproduces
them empirically by running many independent filter replicates at growing
particle counts and comparing against exact oracles:

* the law-of-large-numbers check fits the error-decay rate over a grid of
  particle counts (slope -1/2 in log2-log2) and requires the largest
  normalized weight to keep shrinking;
* the central-limit check standardizes the scaled errors by the exact
  recursion variance and applies a one-sample Kolmogorov-Smirnov test;
* the counterexample run reproduces the two-atom limit of the residual
  scheme's deterministically copied part when the regularity condition is
  violated, certifying non-convergence in probability.

Every replicate draws its generator from (master seed, particle count,
replicate index), so reports are pure functions of their configuration at
any worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._version import __version__
from .resampling import ResamplingPolicy
from .state_space import (
    DiscreteHMM,
    LinearGaussianSSM,
    exact_joint_smoothing,
    smc_run,
)

# ---------------------------------------------------------------------------
# Normal CDF, Kolmogorov-Smirnov
# ---------------------------------------------------------------------------


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def kolmogorov_sf(t: float, min_terms: int = 10) -> float:
    """Survival function of the Kolmogorov distribution.

    The alternating series 2 sum_j (-1)^(j-1) exp(-2 j^2 t^2), summed until
    the terms fall below double precision (at least ``min_terms`` of them).
    Below t = 0.2 the value is 1 to double precision (the left tail decays
    like exp(-pi^2 / (8 t^2))) and the series is not usable, so 1 is
    returned directly.
    """
    if t <= 0.2:
        return 1.0
    total = 0.0
    for j in range(1, 100001):
        term = math.exp(-2.0 * j * j * t * t)
        total += term if j % 2 == 1 else -term
        if j >= min_terms and term < 1e-16:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(values: Sequence[float]) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against the standard normal.

    Returns the statistic D_n = sup |F_n - Phi| (computed by the sorted
    sample formula) and the asymptotic p-value Q(sqrt(n) D_n).
    """
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    if n < 10:
        raise ValueError("the KS test needs at least 10 values")
    cdf = np.array([normal_cdf(x) for x in v])
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1) / n))
    d = max(d_plus, d_minus)
    return d, kolmogorov_sf(math.sqrt(n) * d)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TerminalFunction:
    """A test function of the path's terminal coordinate.

    ``indicator`` is 1 on one state; ``affine`` is a * state + b (state
    index for discrete models, state value for the linear-Gaussian one);
    ``table`` gives explicit per-state values for discrete models.
    """

    name: str
    kind: str = "indicator"
    state: int = 0
    a: float = 1.0
    b: float = 0.0
    values: tuple | None = None

    def table_for(self, model: DiscreteHMM) -> np.ndarray:
        n = model.n_states
        if self.kind == "indicator":
            table = np.zeros(n)
            table[self.state] = 1.0
            return table
        if self.kind == "affine":
            return self.a * np.arange(n, dtype=float) + self.b
        if self.kind == "table":
            table = np.asarray(self.values, dtype=float)
            if table.shape != (n,):
                raise ValueError("table length must match the state count")
            return table
        raise ValueError(f"unknown function kind {self.kind!r}")

    def callable_for(self):
        if self.kind != "affine":
            raise ValueError("continuous models support affine functions only")
        return lambda x: self.a * x + self.b

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == "indicator":
            d["state"] = self.state
        elif self.kind == "affine":
            d["a"] = self.a
            d["b"] = self.b
        elif self.kind == "table":
            d["values"] = list(self.values)
        return d


def policy_to_dict(policy: ResamplingPolicy) -> dict:
    return {
        "scheme": policy.scheme,
        "trigger": policy.trigger,
        "kappa2": "inf" if math.isinf(policy.kappa2) else policy.kappa2,
        "ell": policy.ratio,
    }


def policy_from_dict(d: dict) -> ResamplingPolicy:
    kappa2 = d.get("kappa2", 0.0)
    if kappa2 == "inf":
        kappa2 = math.inf
    return ResamplingPolicy(
        scheme=d.get("scheme", "multinomial"),
        trigger=d.get("trigger", "always"),
        kappa2=float(kappa2),
        ratio=float(d.get("ell", 1.0)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a replication experiment depends on."""

    model: DiscreteHMM | LinearGaussianSSM
    proposal_kind: str
    policy: ResamplingPolicy
    horizon: int
    functions: tuple[TerminalFunction, ...]
    particle_counts: tuple[int, ...]
    replicates: int
    seed: int

    def __post_init__(self):
        if len(self.functions) < 1:
            raise ValueError("at least one test function is required")
        counts = self.particle_counts
        if any(b <= a for a, b in zip(counts, counts[1:])):
            raise ValueError("particle counts must be strictly increasing")
        if self.replicates < 1:
            raise ValueError("at least one replicate is required")
        if not 1 <= self.horizon <= self.model.horizon:
            raise ValueError("horizon exceeds the model's observation record")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "proposal": self.proposal_kind,
            "policy": policy_to_dict(self.policy),
            "experiment": {
                "horizon": self.horizon,
                "functions": [f.to_dict() for f in self.functions],
                "m_list": list(self.particle_counts),
                "replicates": self.replicates,
                "seed": self.seed,
            },
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def truth(self, fn: TerminalFunction) -> float:
        if isinstance(self.model, DiscreteHMM):
            law = exact_joint_smoothing(self.model, self.horizon)
            return law.expect_terminal(fn.table_for(self.model))
        means, _ = self.model.kalman_filter()
        if fn.kind != "affine":
            raise ValueError("truth unavailable: continuous models support affine functions only")
        return fn.a * float(means[self.horizon - 1]) + fn.b


# ---------------------------------------------------------------------------
# Replication
# ---------------------------------------------------------------------------


def _replicate_row(task: tuple[ExperimentConfig, int, int, dict]) -> dict:
    config, m, r, truths = task
    seed = np.random.SeedSequence([config.seed, m, r])
    trace = smc_run(
        config.model, config.proposal_kind, config.policy, m, seed, horizon=config.horizon
    )
    estimates = {}
    for fn in config.functions:
        if isinstance(config.model, DiscreteHMM):
            estimates[fn.name] = trace.terminal_estimate(fn.table_for(config.model))
        else:
            estimates[fn.name] = trace.terminal_estimate(fn.callable_for())
    primary = config.functions[0].name
    final = trace.current
    return {
        "m": m,
        "replicate": r,
        "estimate": estimates[primary],
        "scaled_error": math.sqrt(m) * (estimates[primary] - truths[primary]),
        "final_ess": final.ess,
        "n_resamples": trace.n_resamples(),
        "final_max_weight_fraction": final.max_weight_fraction,
        "estimates": estimates,
        "scaled_errors": {
            name: math.sqrt(m) * (est - truths[name]) for name, est in estimates.items()
        },
        "cv2_by_step": trace.cv2_by_step(),
        "ess_by_step": trace.ess_by_step(),
        "decisions": [int(b) for b in trace.decisions()],
    }


def aggregate_rows(
    rows: Sequence[dict], functions: Sequence[TerminalFunction]
) -> list[dict]:
    """Per-particle-count aggregates; a symmetric function of the rows."""
    by_m: dict[int, list[dict]] = {}
    for row in rows:
        by_m.setdefault(row["m"], []).append(row)
    out = []
    for m in sorted(by_m):
        group = by_m[m]
        entry: dict = {"m": m, "replicates": len(group)}
        for fn in functions:
            errs = np.array([row["scaled_errors"][fn.name] for row in group])
            entry[f"rmse[{fn.name}]"] = float(np.sqrt(np.mean((errs / math.sqrt(m)) ** 2)))
            entry[f"mean_scaled_error[{fn.name}]"] = float(np.mean(errs))
            entry[f"var_scaled_error[{fn.name}]"] = (
                float(np.var(errs, ddof=1)) if len(group) > 1 else 0.0
            )
        entry["median_final_max_weight_fraction"] = float(
            np.median([row["final_max_weight_fraction"] for row in group])
        )
        cv2 = np.array([row["cv2_by_step"] for row in group])
        entry["mean_cv2_by_step"] = [float(x) for x in np.mean(cv2, axis=0)]
        patterns: dict[str, int] = {}
        for row in group:
            key = "".join(str(d) for d in row["decisions"])
            patterns[key] = patterns.get(key, 0) + 1
        entry["decision_patterns"] = dict(sorted(patterns.items()))
        out.append(entry)
    return out


@dataclass(frozen=True)
class ExperimentReport:
    """The full, reproducible outcome of one replication experiment."""

    config: dict
    config_hash: str
    version: str
    truths: dict
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)

    def rows_at(self, m: int) -> list[dict]:
        return [row for row in self.rows if row["m"] == m]

    def scaled_errors(self, m: int, function: str | None = None) -> np.ndarray:
        if function is None:
            return np.array([row["scaled_error"] for row in self.rows_at(m)])
        return np.array([row["scaled_errors"][function] for row in self.rows_at(m)])

    def csv_lines(self) -> list[str]:
        lines = ["m,replicate,estimate,scaled_error,final_ess,n_resamples"]
        for row in self.rows:
            lines.append(
                f"{row['m']},{row['replicate']},{row['estimate']!r},"
                f"{row['scaled_error']!r},{row['final_ess']!r},{row['n_resamples']}"
            )
        return lines

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "version": self.version,
            "truths": self.truths,
            "aggregates": self.aggregates,
        }


def run_replicates(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """Run every (particle count, replicate) pair and aggregate.

    Replicates are independent given their derived streams, so any worker
    count yields the identical report; results are reduced in (count,
    replicate) order regardless of completion order.
    """
    truths = {fn.name: config.truth(fn) for fn in config.functions}
    tasks = [
        (config, m, r, truths)
        for m in config.particle_counts
        for r in range(config.replicates)
    ]
    if workers > 1:
        try:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_replicate_row, tasks, chunksize=8))
        except (OSError, PermissionError):  # no subprocess support: same result serially
            rows = [_replicate_row(t) for t in tasks]
    else:
        rows = [_replicate_row(t) for t in tasks]
    return ExperimentReport(
        config=config.to_dict(),
        config_hash=config.config_hash(),
        version=__version__,
        truths=truths,
        rows=rows,
        aggregates=aggregate_rows(rows, config.functions),
    )


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlnCheck:
    slope: float
    passed: bool
    slope_in_band: bool
    max_fraction_decreasing: bool
    rmse_by_m: dict
    median_max_fraction_by_m: dict


def lln_check(
    report: ExperimentReport,
    function: str | None = None,
    band: tuple[float, float] = (-0.6, -0.4),
) -> LlnCheck:
    """Fit the error-decay rate and check the smallness diagnostic.

    Requires at least four particle counts spanning a factor of 16 (four
    doublings).  Passes when the log2 RMSE / log2 M slope lies in ``band``
    and the median final-step maximum weight fraction strictly decreases
    with the particle count.
    """
    counts = sorted({row["m"] for row in report.rows})
    if len(counts) < 4 or math.log2(counts[-1] / counts[0]) < 4.0:
        raise ValueError("the rate fit needs >= 4 particle counts spanning a factor of 16")
    if function is None:
        function = next(iter(report.truths))
    rmse = {}
    medians = {}
    for m in counts:
        errs = report.scaled_errors(m, function) / math.sqrt(m)
        rmse[m] = float(np.sqrt(np.mean(errs**2)))
        medians[m] = float(
            np.median([row["final_max_weight_fraction"] for row in report.rows_at(m)])
        )
    slope = float(
        np.polyfit(np.log2(counts), np.log2([rmse[m] for m in counts]), 1)[0]
    )
    in_band = band[0] <= slope <= band[1]
    decreasing = all(
        medians[a] > medians[b] for a, b in zip(counts, counts[1:])
    )
    return LlnCheck(
        slope=slope,
        passed=in_band and decreasing,
        slope_in_band=in_band,
        max_fraction_decreasing=decreasing,
        rmse_by_m=rmse,
        median_max_fraction_by_m=medians,
    )


@dataclass(frozen=True)
class CltCheck:
    var_ratio: float
    ks_stat: float
    ks_p: float
    passed: bool
    n: int


def clt_check(
    report: ExperimentReport,
    sigma2_oracle: float,
    m: int | None = None,
    function: str | None = None,
    ratio_band: tuple[float, float] = (0.8, 1.25),
    min_p: float = 0.01,
) -> CltCheck:
    """Compare scaled errors with the exact asymptotic variance.

    The variance ratio must fall in ``ratio_band`` and the KS p-value of
    the standardized errors must reach ``min_p``.  A zero-variance oracle
    is only coherent when every scaled error vanishes (constant test
    function); anything else is flagged as an error.
    """
    counts = sorted({row["m"] for row in report.rows})
    if m is None:
        if len(counts) != 1:
            raise ValueError("specify the particle count when several were run")
        m = counts[0]
    errors = report.scaled_errors(m, function)
    if errors.size < 200:
        raise ValueError("the CLT check needs at least 200 replicates")
    if sigma2_oracle == 0.0:
        if np.all(errors == 0.0):
            return CltCheck(var_ratio=1.0, ks_stat=0.0, ks_p=1.0, passed=True, n=errors.size)
        raise ValueError("zero-variance oracle with nonzero errors")
    var_ratio = float(np.var(errors, ddof=1)) / sigma2_oracle
    stat, p = ks_test(errors / math.sqrt(sigma2_oracle))
    passed = ratio_band[0] <= var_ratio <= ratio_band[1] and p >= min_p
    return CltCheck(var_ratio=var_ratio, ks_stat=stat, ks_p=p, passed=passed, n=errors.size)


# ---------------------------------------------------------------------------
# The residual-scheme counterexample
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CounterexampleResult:
    values: np.ndarray        # the copied-average statistic, one per replicate
    mean_weights: np.ndarray  # per-replicate average weight (tends to 1)


def counterexample_run(m: int, replicates: int, seed: int) -> CounterexampleResult:
    """Reproduce the oscillating deterministic part of residual resampling.

    Each replicate draws m i.i.d. points taking value 1/2 with probability
    2/3 and value 2 with probability 1/3, weights each point by its own
    value, and evaluates the deterministically copied average
    (1/m) sum_i floor(m w_i / W) f(x_i) with f the identity.  The atoms of
    the point drawn at 2 sit on either side of an integer expected copy
    count, so the statistic converges in law to a two-point distribution
    on {2/3, 4/3} instead of converging in probability.
    """
    values = np.empty(replicates)
    mean_weights = np.empty(replicates)
    for r in range(replicates):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        draws = np.where(rng.random(m) < 2.0 / 3.0, 0.5, 2.0)
        total = float(np.sum(draws))
        floors = np.floor(m * draws / total)
        values[r] = float(np.dot(floors, draws)) / m
        mean_weights[r] = total / m
    return CounterexampleResult(values=values, mean_weights=mean_weights)


def summarize_counterexample(values: np.ndarray, half_width: float = 0.05) -> dict:
    """Mass near the two limit atoms and the tightest width-0.1 window."""
    values = np.sort(np.asarray(values, dtype=float))
    n = values.size
    low = float(np.mean(np.abs(values - 2.0 / 3.0) <= half_width))
    high = float(np.mean(np.abs(values - 4.0 / 3.0) <= half_width))
    window = 2.0 * half_width
    best = 0
    for i, v in enumerate(values):
        j = int(np.searchsorted(values, v + window, side="right"))
        best = max(best, j - i)
    return {
        "n": int(n),
        "mass_at_low_atom": low,
        "mass_at_high_atom": high,
        "max_window_mass": best / n,
    }

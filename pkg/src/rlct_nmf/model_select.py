"""Free energy by thermodynamic integration, slopes in ``log n``, and sBIC-style rank choice.

The free energy ``F = -log int phi(theta) prod_i p(W_i | theta) dtheta`` obeys
``d/d beta [-log Z(beta)] = -E_beta[log L]`` for the tempered posterior
``phi L^beta``, so ``F`` is minus the integral of that expectation over
``beta`` in ``[0, 1]``. Expectations at ``beta > 0`` come from tempered
Metropolis chains; at ``beta = 0`` the prior is sampled directly. The same
draws also give stepping-stone ratios ``Z(beta_k+1) / Z(beta_k)``, which are
the default because they stay accurate when the rise near ``beta = 0`` is too
sharp for the ladder.

The sBIC score is ``-max log L + lambda_bar log n`` where ``max log L`` is the
best value the posterior sampler visited and ``lambda_bar`` is the closed-form
NMF bound with the working estimate ``H0_hat = min(H, M, N)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import seeding
from .bayes_nmf import (
    ChainConfig,
    Dataset,
    PriorBox,
    _Job,
    _loglik_from_mean,
    _run_jobs,
    _Stats,
    default_prior,
    generate_dataset,
    log_likelihood,
)
from .divergences import Family
from .errors import ValidationError
from .rlct_core import ModelDims, TrueStructure, nmf_rlct_bound

__all__ = [
    "default_ladder",
    "FreeEnergyEstimate",
    "estimate_free_energy",
    "LambdaFit",
    "fit_lambda_from_free_energy",
    "FreeEnergyExperiment",
    "free_energy_experiment",
    "SbicReport",
    "sbic_penalty",
    "select_from_scores",
    "sbic_select",
]

LADDER_RUNGS = 16
FE_CHAIN = ChainConfig(burn_in=3000, n_samples=1000, thinning=3, n_chains=2)
N_BATCHES = 20


def default_ladder(rungs: int = LADDER_RUNGS) -> np.ndarray:
    """``beta_k = (k / rungs)**2`` for ``k = 0..rungs``; dense near 0 where the integrand moves most."""
    return (np.arange(rungs + 1) / rungs) ** 2


RULES = ("stepping-stone", "trapezoid")


def _check_rule(rule: str) -> str:
    if rule not in RULES:
        raise ValidationError(f"rule must be one of {RULES}, got {rule!r}")
    return rule


def _check_ladder(ladder) -> np.ndarray:
    beta = np.asarray(ladder, dtype=float)
    if beta.ndim != 1 or beta.size < 11:
        raise ValidationError("ladder needs at least 10 rungs (11 temperatures)")
    if beta[0] != 0.0 or beta[-1] != 1.0 or np.any(np.diff(beta) <= 0):
        raise ValidationError("ladder must increase strictly from 0 to 1")
    return beta


def _trapezoid_weights(beta: np.ndarray) -> np.ndarray:
    w = np.zeros_like(beta)
    d = np.diff(beta)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class FreeEnergyEstimate:
    n: int
    f_value: float
    stderr: float
    ladder_size: int
    seed: int
    truth_loglik: float | None = None  # sum_i log q(W_i) when the truth is known
    method: str = "ThermodynamicIntegration"
    rule: str = "stepping-stone"
    f_trapezoid: float | None = None
    f_stepping_stone: float | None = None
    rung_means: list[float] = field(default_factory=list)
    rung_stderr: list[float] = field(default_factory=list)
    acceptance: list[float] = field(default_factory=list)

    @property
    def adjusted(self) -> float:
        """``F + sum_i log q(W_i)``, the part that grows like ``lambda log n``."""
        if self.truth_loglik is None:
            raise ValidationError("truth log-likelihood unknown for this estimate")
        return self.f_value + self.truth_loglik

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "f_value": self.f_value,
            "stderr": self.stderr,
            "method": self.method,
            "rule": self.rule,
            "f_trapezoid": self.f_trapezoid,
            "f_stepping_stone": self.f_stepping_stone,
            "ladder_size": self.ladder_size,
            "seed": self.seed,
            "truth_loglik": self.truth_loglik,
            "rung_means": self.rung_means,
            "rung_stderr": self.rung_stderr,
        }


def _batch_mean_stderr(samples: np.ndarray) -> float:
    """Standard error of the pooled mean from per-chain batch means."""
    chains, length = samples.shape
    b = max(1, min(N_BATCHES, length))
    usable = (length // b) * b
    means = samples[:, :usable].reshape(chains, b, -1).mean(axis=2).ravel()
    if means.size < 2:
        return 0.0
    return float(means.std(ddof=1) / math.sqrt(means.size))


@dataclass
class _Plan:
    """One free-energy integral awaiting its tempered chains."""

    dataset: Dataset
    stats: _Stats
    key: tuple[int, ...]
    job_slice: slice = slice(0, 0)


def _prior_loglik(stats: _Stats, family: Family, lo, hi, M, N, H, draws: int, rng) -> np.ndarray:
    theta = lo + (hi - lo) * rng.random((draws, lo.size))
    X = theta[:, : M * H].reshape(draws, M, H)
    Y = theta[:, M * H:].reshape(draws, H, N)
    ll = _loglik_from_mean(family, stats.n, stats.total, stats.const, X @ Y)
    if not np.all(np.isfinite(ll)):
        raise ValidationError("prior draws hit zero likelihood; raise the prior lower edge")
    return ll[None]


def _log_mean_exp(x: np.ndarray) -> tuple[float, float]:
    """``log mean exp(x)`` over ``(chains, length)`` draws and its delta-method stderr."""
    top = float(x.max())
    w = np.exp(x - top)
    mean = float(w.mean())
    return top + math.log(mean), _batch_mean_stderr(w) / mean


def _solve_plans(plans: list[_Plan], prior: PriorBox, H: int, beta: np.ndarray,
                 config: ChainConfig, seed: int, workers: int, prior_draws: int,
                 rule: str) -> list[FreeEnergyEstimate]:
    family = plans[0].dataset.family
    M, N = plans[0].dataset.shape
    lo, hi = prior.bounds(M, N, H)
    jobs: list[_Job] = []
    for plan in plans:
        start = len(jobs)
        for k in range(1, beta.size):
            jobs.extend(_Job(family, plan.stats, float(beta[k]), plan.key + (k, c), seeding.TEMPER)
                        for c in range(config.n_chains))
        plan.job_slice = slice(start, len(jobs))
    init = lo if np.all(hi == lo) else None
    results = _run_jobs(jobs, lo, hi, M, N, H, config, seed, init, workers) if jobs else []
    w = _trapezoid_weights(beta)
    out = []
    for plan in plans:
        chains = results[plan.job_slice]
        rng = seeding.generator(seed, seeding.PRIOR, *plan.key)
        rungs = [_prior_loglik(plan.stats, family, lo, hi, M, N, H, prior_draws, rng)]
        for k in range(1, beta.size):
            rungs.append(np.stack([c.loglik for c in chains[(k - 1) * config.n_chains:
                                                            k * config.n_chains]]))
        means = np.array([float(ll.mean()) for ll in rungs])
        ses = np.array([_batch_mean_stderr(ll) for ll in rungs])
        f_trap = -float(np.sum(w * means))
        se_trap = float(math.sqrt(np.sum((w * ses) ** 2)))
        # stepping stones: Z(b_k+1)/Z(b_k) = E_{b_k}[L^(b_k+1 - b_k)], from the same draws
        steps = [_log_mean_exp((beta[k + 1] - beta[k]) * rungs[k]) for k in range(beta.size - 1)]
        f_ss = -sum(v for v, _ in steps)
        se_ss = math.sqrt(sum(e * e for _, e in steps))
        f, se = (f_ss, se_ss) if rule == "stepping-stone" else (f_trap, se_trap)
        truth_ll = None
        ds = plan.dataset
        if ds.truth is not None and ds.truth.A is not None:
            truth_ll = log_likelihood(family, ds.observations, ds.truth.product)
        out.append(FreeEnergyEstimate(ds.n, f, se, beta.size - 1, seed, truth_ll, rule=rule,
                                      f_trapezoid=f_trap, f_stepping_stone=f_ss,
                                      rung_means=means.tolist(), rung_stderr=ses.tolist(),
                                      acceptance=[c.acceptance_rate for c in chains]))
    return out


def estimate_free_energy(dataset: Dataset, prior: PriorBox, H: int, ladder=None, *,
                         seed: int, chain_config: ChainConfig | None = None,
                         replication: int = 0, workers: int = 1,
                         prior_draws: int = 20000,
                         rule: str = "stepping-stone") -> FreeEnergyEstimate:
    """Thermodynamic-integration estimate of ``F`` over the temperature ``ladder``.

    Every rung ``beta_k > 0`` runs ``chain_config.n_chains`` tempered chains;
    ``beta = 0`` uses ``prior_draws`` exact prior draws. The rung draws are
    combined either by stepping stones (default), which multiply the ratios
    ``Z(beta_k+1) / Z(beta_k)`` estimated by importance weights, or by the
    trapezoid rule on ``E_beta[log L]``. Both values are kept on the result.
    The trapezoid under-integrates the sharp rise near ``beta = 0`` and so
    overstates ``F`` by an amount that grows with ``n``.

    With no observations ``F`` is exactly 0 and the stderr is 0.
    """
    rule = _check_rule(rule)
    seed = seeding.check_seed(seed)
    M, N = dataset.shape
    ModelDims(M, N, H)
    if H < 1:
        raise ValidationError("H must be >= 1")
    beta = _check_ladder(default_ladder() if ladder is None else ladder)
    config = chain_config or FE_CHAIN
    if dataset.n == 0:
        truth_ll = 0.0 if dataset.truth is not None else None
        return FreeEnergyEstimate(0, 0.0, 0.0, beta.size - 1, seed, truth_ll)
    lo, _ = prior.bounds(M, N, H)
    if dataset.family.needs_positive_mean and np.any(lo <= 0):
        raise ValidationError(f"{dataset.family.value} family needs a prior lower bound > 0")
    plan = _Plan(dataset, _Stats.of(dataset.family, dataset.observations), (replication,))
    return _solve_plans([plan], prior, H, beta, config, seed, workers, prior_draws, rule)[0]


# --- slope in log n -----------------------------------------------------------


@dataclass
class LambdaFit:
    lambda_hat: float
    stderr: float
    n_values: list[int]
    values: list[float]

    def to_dict(self) -> dict:
        return {"lambda_hat": self.lambda_hat, "stderr": self.stderr,
                "n_values": self.n_values, "values": self.values}


def _ols_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = x.size - 2
    se = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else 0.0
    return slope, se


def fit_lambda_from_free_energy(estimates) -> LambdaFit:
    """Least-squares slope of ``F(n) + sum log q(W_i)`` against ``log n``.

    ``estimates`` holds :class:`FreeEnergyEstimate` objects with a known truth
    log-likelihood, or ``(n, adjusted_value)`` pairs. The stderr combines the
    regression residual spread with the propagated Monte Carlo error.
    """
    ns, vals, ses = [], [], []
    for e in estimates:
        if isinstance(e, FreeEnergyEstimate):
            ns.append(e.n)
            vals.append(e.adjusted)
            ses.append(e.stderr)
        else:
            n, v = e
            ns.append(int(n))
            vals.append(float(v))
            ses.append(0.0)
    if len(set(ns)) < 3 or min(ns) < 1:
        raise ValidationError("need estimates at 3 or more distinct positive n")
    x = np.log(np.array(ns, dtype=float))
    y = np.array(vals)
    slope, se_resid = _ols_slope(x, y)
    xc = x - x.mean()
    se_mc = math.sqrt(float(np.sum((xc / (xc @ xc)) ** 2 * np.square(ses))))
    return LambdaFit(slope, math.hypot(se_resid, se_mc), ns, vals)


@dataclass
class FreeEnergyExperiment:
    """Per-replication slopes from nested datasets, averaged."""

    family: str
    M: int
    N: int
    H: int
    H0: int
    n_values: list[int]
    replications: int
    seed: int
    lambda_hat: float
    stderr: float
    slopes: list[float]
    estimates: list[list[FreeEnergyEstimate]]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "dims": {"M": self.M, "N": self.N, "H": self.H},
            "H0": self.H0,
            "n_values": self.n_values,
            "replications": self.replications,
            "seed": self.seed,
            "lambda_hat": self.lambda_hat,
            "stderr": self.stderr,
            "slopes": self.slopes,
            "estimates": [[e.to_dict() for e in row] for row in self.estimates],
        }


def free_energy_experiment(family: Family | str, truth: TrueStructure, n_values: Sequence[int],
                           replications: int, *, seed: int, H: int | None = None,
                           prior: PriorBox | None = None, ladder=None,
                           chain_config: ChainConfig | None = None, workers: int = 1,
                           prior_draws: int = 20000,
                           rule: str = "stepping-stone") -> FreeEnergyExperiment:
    """Estimate ``lambda`` from ``F`` at several ``n``, one nested dataset per replication.

    Replication ``r`` draws ``max(n_values)`` observations from data stream
    ``r`` and uses prefixes for the smaller ``n``, so the fluctuation of the
    truth log-likelihood largely cancels within each slope.
    """
    family = Family(family)
    seed = seeding.check_seed(seed)
    rule = _check_rule(rule)
    if truth.A is None:
        raise ValidationError("truth factors A and B are required")
    n_values = sorted(int(n) for n in n_values)
    if len(set(n_values)) < 3 or n_values[0] < 1:
        raise ValidationError("need 3 or more distinct positive n")
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    M, N = truth.product.shape
    H = truth.H0 if H is None else H
    prior = prior or default_prior(family, truth)
    beta = _check_ladder(default_ladder() if ladder is None else ladder)
    config = chain_config or FE_CHAIN
    plans = []
    for r in range(replications):
        full = generate_dataset(family, truth, n_values[-1], seed, stream=r)
        for n in n_values:
            ds = full.head(n)
            plans.append(_Plan(ds, _Stats.of(family, ds.observations), (r, n)))
    results = _solve_plans(plans, prior, H, beta, config, seed, workers, prior_draws, rule)
    rows = [results[r * len(n_values):(r + 1) * len(n_values)] for r in range(replications)]
    slopes = [fit_lambda_from_free_energy(row).lambda_hat for row in rows]
    arr = np.array(slopes)
    if replications > 1:
        se = float(arr.std(ddof=1) / math.sqrt(replications))
    else:
        se = fit_lambda_from_free_energy(rows[0]).stderr
    return FreeEnergyExperiment(family.value, M, N, H, truth.H0, n_values, replications, seed,
                                float(arr.mean()), se, slopes, rows)


# --- sBIC -------------------------------------------------------------------


def sbic_penalty(M: int, N: int, H: int, h0: int | None = None):
    """Closed-form NMF bound used as the penalty; ``h0`` defaults to ``min(H, M, N)``."""
    h0 = min(H, M, N) if h0 is None else h0
    return nmf_rlct_bound(ModelDims(M, N, H), TrueStructure(h0)).value


def select_from_scores(scores: dict[int, float]) -> int:
    """Candidate with the smallest score; exact ties go to the smaller ``H``."""
    if not scores:
        raise ValidationError("no candidate scores")
    best = min(scores.values())
    return min(h for h, s in scores.items() if s == best)


@dataclass
class SbicReport:
    n: int
    candidates: list[int]
    max_loglik: dict[int, float]
    penalty: dict[int, str]
    scores: dict[int, float]
    selected: int
    alt_scores: dict[int, dict[int, float]]
    seed: int
    h0_rule: str = "min(H, M, N)"
    note: str = ("minimal instantiation: max visited log-likelihood plus closed-form "
                 "bound times log n; no averaging over sub-models")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "candidates": self.candidates,
            "selected": self.selected,
            "h0_rule": self.h0_rule,
            "seed": self.seed,
            "per_H": [
                {"H": h, "max_loglik": self.max_loglik[h], "penalty": self.penalty[h],
                 "score": self.scores[h],
                 "scores_by_h0": {str(k): v for k, v in self.alt_scores[h].items()}}
                for h in self.candidates
            ],
            "note": self.note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["H", "score"])
        for h in self.candidates:
            w.writerow([h, format(self.scores[h], ".17g")])
        return buf.getvalue()


def sbic_select(dataset: Dataset, candidate_H_list: Sequence[int], prior: PriorBox, *,
                seed: int, chain_config: ChainConfig | None = None, replication: int = 0,
                workers: int = 1) -> SbicReport:
    """Score every candidate rank and pick the smallest score."""
    seed = seeding.check_seed(seed)
    candidates = sorted(set(int(h) for h in candidate_H_list))
    if not candidates:
        raise ValidationError("candidate list is empty")
    if candidates[0] < 1:
        raise ValidationError("candidate ranks must be >= 1")
    if dataset.n < 2:
        raise ValidationError("sBIC needs at least 2 observations")
    M, N = dataset.shape
    config = chain_config or ChainConfig()
    stats = _Stats.of(dataset.family, dataset.observations)
    logn = math.log(dataset.n)
    max_ll, penalty, scores, alt = {}, {}, {}, {}
    for H in candidates:
        lo, hi = prior.bounds(M, N, H)
        if dataset.family.needs_positive_mean and np.any(lo <= 0):
            raise ValidationError(f"{dataset.family.value} family needs a prior lower bound > 0")
        jobs = [_Job(dataset.family, stats, 1.0, (replication, H, c)) for c in range(config.n_chains)]
        chains = _run_jobs(jobs, lo, hi, M, N, H, config, seed, None, workers)
        best = max(c.max_loglik for c in chains)
        lam = sbic_penalty(M, N, H)
        max_ll[H] = best
        penalty[H] = str(lam)
        scores[H] = -best + float(lam) * logn
        alt[H] = {h0: -best + float(sbic_penalty(M, N, H, h0)) * logn
                  for h0 in range(0, min(H, M, N) + 1)}
    return SbicReport(dataset.n, candidates, max_ll, penalty, scores,
                      select_from_scores(scores), alt, seed)

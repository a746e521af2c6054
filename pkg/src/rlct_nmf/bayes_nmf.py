"""Bayesian NMF by random-walk Metropolis on a box prior.

Observations ``W_i`` are ``M x N`` matrices drawn entrywise from one family
with mean ``XY``. The uniform prior on a box makes the Metropolis ratio equal
to the likelihood ratio (raised to ``beta`` for tempered targets). Each family's
log-likelihood depends on the data only through ``n`` and ``sum_i W_i``, so a
step costs the same for any sample size.

Many chains are advanced together as one batch. Every chain owns a PCG64
substream keyed by ``(seed, CHAIN, replication, chain)`` and consumes it in
fixed blocks, so a chain's trajectory does not depend on which other chains
share its batch or on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import seeding
from .divergences import Family
from .errors import ValidationError
from .rlct_core import ModelDims, TrueStructure

__all__ = [
    "PriorBox",
    "default_prior",
    "ParamPoint",
    "Dataset",
    "generate_dataset",
    "log_likelihood",
    "ChainConfig",
    "ChainResult",
    "run_chain",
    "run_chains",
    "log_predictive",
    "GEstimate",
    "generalization_error",
    "estimate_generalization_error",
]

BLOCK = 256  # steps of randomness drawn per chain at a time; part of the seed contract


# --- prior, parameters, data ------------------------------------------------


@dataclass(frozen=True)
class PriorBox:
    """Uniform prior on ``[lower, upper]`` for every entry of ``X`` and ``Y``.

    ``lower``/``upper`` may also be flat arrays over ``(vec X, vec Y)``; equal
    bounds pin a coordinate, which is how a point-mass prior is expressed.
    """

    lower: float | np.ndarray
    upper: float | np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)):
            raise ValidationError("prior bounds must be finite")
        if np.any(lo < 0):
            raise ValidationError("prior lower bound must be >= 0")
        if np.any(hi < lo) or (lo.ndim == 0 and hi.ndim == 0 and not hi > lo):
            raise ValidationError(f"need upper > lower, got [{self.lower}, {self.upper}]")

    @classmethod
    def point(cls, X, Y) -> "PriorBox":
        theta = np.concatenate([np.ravel(X), np.ravel(Y)]).astype(float)
        return cls(theta, theta.copy())

    def bounds(self, M: int, N: int, H: int) -> tuple[np.ndarray, np.ndarray]:
        d = H * (M + N)
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (d,)).copy()
        return lo, hi

    def log_volume(self, M: int, N: int, H: int) -> float:
        lo, hi = self.bounds(M, N, H)
        w = hi - lo
        return float(np.sum(np.log(w[w > 0])))

    def to_dict(self) -> dict:
        def enc(v):
            a = np.asarray(v)
            return float(a) if a.ndim == 0 else a.tolist()
        return {"lower": enc(self.lower), "upper": enc(self.upper)}


def default_prior(family: Family | str, truth: TrueStructure | None = None) -> PriorBox:
    """Box ``[eps, c]`` with ``c = 2 max(1, entries of A, B, AB)``.

    ``eps`` is 0 for the Gaussian family and ``1e-3 c`` for the positive ones.
    """
    family = Family(family)
    top = 1.0
    if truth is not None and truth.A is not None and truth.H0 > 0:
        top = max(top, float(truth.A.max()), float(truth.B.max()), float(truth.product.max()))
    c = 2.0 * top
    return PriorBox(1e-3 * c if family.needs_positive_mean else 0.0, c)


@dataclass(frozen=True)
class ParamPoint:
    X: np.ndarray
    Y: np.ndarray

    @property
    def product(self) -> np.ndarray:
        return self.X @ self.Y

    def flat(self) -> np.ndarray:
        return np.concatenate([self.X.ravel(), self.Y.ravel()])


@dataclass
class Dataset:
    """``n`` observed ``M x N`` matrices stacked as an ``(n, M, N)`` array."""

    family: Family
    observations: np.ndarray
    truth: TrueStructure | None = None
    seed: int | None = None
    truncated: bool = False

    def __post_init__(self):
        self.family = Family(self.family)
        obs = np.asarray(self.observations, dtype=float)
        if obs.ndim != 3:
            raise ValidationError(f"observations must be (n, M, N), got shape {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise ValidationError("observations must be finite")
        if self.family is not Family.GAUSSIAN and np.any(obs < 0):
            raise ValidationError(f"{self.family.value} observations must be non-negative")
        if self.family is Family.POISSON and np.any(obs != np.round(obs)):
            raise ValidationError("poisson observations must be integers")
        self.observations = obs

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.observations.shape[1:]

    def head(self, n: int) -> "Dataset":
        """The first ``n`` observations; nested prefixes share randomness."""
        return Dataset(self.family, self.observations[:n], self.truth, self.seed, self.truncated)


def generate_dataset(family: Family | str, truth: TrueStructure, n: int, seed: int,
                     *, truncate_gaussian: bool = False, stream: int = 0) -> Dataset:
    """Draw ``n`` independent matrices with entrywise mean ``AB``.

    Gaussian draws have unit variance and are not truncated unless
    ``truncate_gaussian`` is set, in which case negative draws are resampled.
    """
    family = Family(family)
    if truth.A is None:
        raise ValidationError("generating data needs the truth factors A and B")
    if n < 0:
        raise ValidationError("n must be non-negative")
    mean = truth.product
    if family.needs_positive_mean and np.any(mean <= 0):
        raise ValidationError(f"{family.value} family needs a strictly positive mean AB")
    rng = seeding.generator(seed, seeding.DATA, stream)
    shape = (n,) + mean.shape
    if family is Family.GAUSSIAN:
        W = mean + rng.standard_normal(shape)
        if truncate_gaussian:
            bad = W < 0
            while bad.any():
                W[bad] = (np.broadcast_to(mean, shape) + rng.standard_normal(shape))[bad]
                bad = W < 0
    elif family is Family.POISSON:
        W = rng.poisson(np.broadcast_to(mean, shape)).astype(float)
    else:
        W = rng.exponential(np.broadcast_to(mean, shape))
    return Dataset(family, W, truth, seed, truncate_gaussian)


# --- likelihood ---------------------------------------------------------------


@dataclass(frozen=True)
class _Stats:
    """Sufficient statistics of a dataset for one family."""

    n: int
    total: np.ndarray  # sum of observations, (M, N)
    const: float       # data-only part of the log-likelihood

    @classmethod
    def of(cls, family: Family, W: np.ndarray) -> "_Stats":
        W = np.asarray(W, dtype=float)
        if W.ndim == 2:
            W = W[None]
        n = W.shape[0]
        total = W.sum(axis=0) if n else np.zeros(W.shape[1:])
        if family is Family.GAUSSIAN:
            const = -0.5 * float(np.sum(W**2))
        elif family is Family.POISSON:
            const = -float(np.sum(special.gammaln(W + 1.0)))
        else:
            const = 0.0
        return cls(n, total, const)


def _loglik_from_mean(family: Family, n, total, const, mu) -> np.ndarray:
    """Log-likelihood for a batch of means ``mu`` of shape ``(B, M, N)``.

    ``n``, ``total`` and ``const`` broadcast over the batch.
    """
    n = np.asarray(n, dtype=float)
    if family is Family.GAUSSIAN:
        return const + np.sum(total * mu, axis=(-2, -1)) - 0.5 * n * np.sum(mu * mu, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        if family is Family.POISSON:
            out = (const + np.sum(special.xlogy(total, mu), axis=(-2, -1))
                   - n * np.sum(mu, axis=(-2, -1)))
        else:
            out = -n * np.sum(np.log(mu), axis=(-2, -1)) - np.sum(total / mu, axis=(-2, -1))
    return np.where(np.isnan(out), -np.inf, out)


def log_likelihood(family: Family | str, W, point) -> float:
    """``sum_i log p(W_i | X, Y)`` for one matrix or an ``(n, M, N)`` stack.

    ``point`` is a :class:`ParamPoint` or a mean matrix ``XY``. Poisson and
    exponential values are full log-densities; the Gaussian one omits the
    ``-MN/2 log(2 pi)`` term per observation, so it is 0 at zero residual.
    """
    family = Family(family)
    mu = point.product if isinstance(point, ParamPoint) else np.asarray(point, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape[-2:] != mu.shape:
        raise ValidationError(f"observation shape {W.shape[-2:]} != mean shape {mu.shape}")
    if family.needs_positive_mean and np.any(mu <= 0):
        raise ValidationError(f"{family.value} family needs a strictly positive mean")
    s = _Stats.of(family, W)
    return float(_loglik_from_mean(family, s.n, s.total, s.const, mu[None])[0])


# --- sampler ------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConfig:
    """Random-walk Metropolis settings.

    The step size adapts during burn-in only (Robbins-Monro on its log,
    targeting ``target_accept``), then stays fixed.
    """

    burn_in: int = 5000
    n_samples: int = 2000
    thinning: int = 5
    n_chains: int = 4
    init_step: float | None = None
    target_accept: float = 0.3

    def __post_init__(self):
        if self.burn_in < 0 or self.n_samples < 1 or self.thinning < 1 or self.n_chains < 1:
            raise ValidationError(f"invalid chain config {self}")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "burn_in": self.burn_in,
            "n_samples": self.n_samples,
            "thinning": self.thinning,
            "n_chains": self.n_chains,
            "init_step": self.init_step,
            "target_accept": self.target_accept,
        }


@dataclass
class ChainResult:
    """Retained draws of one chain plus its diagnostics."""

    M: int
    N: int
    H: int
    theta: np.ndarray        # (n_samples, d)
    loglik: np.ndarray       # untempered log-likelihood of each retained draw
    acceptance_rate: float   # post burn-in
    step_size: float
    max_loglik: float        # best untempered log-likelihood visited anywhere
    argmax: np.ndarray
    beta: float = 1.0

    @property
    def X(self) -> np.ndarray:
        return self.theta[:, : self.M * self.H].reshape(-1, self.M, self.H)

    @property
    def Y(self) -> np.ndarray:
        return self.theta[:, self.M * self.H:].reshape(-1, self.H, self.N)

    @property
    def means(self) -> np.ndarray:
        return self.X @ self.Y

    @property
    def points(self) -> list[ParamPoint]:
        return [ParamPoint(x, y) for x, y in zip(self.X, self.Y)]


@dataclass
class _Job:
    family: Family
    stats: _Stats
    beta: float
    key: tuple[int, ...]
    purpose: int = seeding.CHAIN


def _reflect(theta, lo, hi):
    w = hi - lo
    pinned = w <= 0
    period = np.where(pinned, 1.0, 2.0 * w)
    y = np.mod(theta - lo, period)
    y = np.where(y > w, period - y, y)
    return np.where(pinned, lo, lo + y)


def _run_batch(jobs: list[_Job], lo, hi, M, N, H, config: ChainConfig, seed: int,
               init: np.ndarray | None = None) -> list[ChainResult]:
    B, d = len(jobs), H * (M + N)
    family = jobs[0].family
    rngs = [seeding.generator(seed, job.purpose, *job.key) for job in jobs]
    n = np.array([j.stats.n for j in jobs], dtype=float)[:, None, None]
    total = np.stack([j.stats.total for j in jobs])
    const = np.array([j.stats.const for j in jobs])
    beta = np.array([j.beta for j in jobs])

    def loglik(theta):
        X = theta[:, : M * H].reshape(B, M, H)
        Y = theta[:, M * H:].reshape(B, H, N)
        return _loglik_from_mean(family, n[:, 0, 0], total, const, X @ Y)

    width = hi - lo
    if init is None:
        theta = lo + width * np.stack([r.random(d) for r in rngs])
    else:
        theta = np.broadcast_to(np.asarray(init, dtype=float), (B, d)).copy()
    ll = loglik(theta)
    live = width > 0
    step0 = config.init_step if config.init_step is not None else (
        0.1 * float(width[live].mean()) if live.any() else 0.0)
    log_step = np.full(B, math.log(step0) if step0 > 0 else 0.0)
    frozen_step = step0 <= 0

    total_steps = config.burn_in + config.n_samples * config.thinning
    kept_theta = np.empty((B, config.n_samples, d))
    kept_ll = np.empty((B, config.n_samples))
    best_ll = ll.copy()
    best_theta = theta.copy()
    accepted = np.zeros(B)
    k = 0
    for start in range(0, total_steps, BLOCK):
        z = np.stack([r.standard_normal((BLOCK, d)) for r in rngs], axis=1)
        u = np.stack([r.random(BLOCK) for r in rngs], axis=1)
        for i in range(min(BLOCK, total_steps - start)):
            t = start + i
            step = 0.0 if frozen_step else np.exp(log_step)[:, None]
            prop = _reflect(theta + step * z[i], lo, hi)
            ll_prop = loglik(prop)
            with np.errstate(invalid="ignore"):
                log_ratio = beta * (ll_prop - ll)
            # beta = 0 targets the prior; 0 * -inf must still reject impossible points
            log_ratio = np.where(np.isneginf(ll_prop), -np.inf, np.nan_to_num(log_ratio, nan=0.0))
            acc = np.log(u[i]) < log_ratio
            theta = np.where(acc[:, None], prop, theta)
            ll = np.where(acc, ll_prop, ll)
            better = ll > best_ll
            if better.any():
                best_ll = np.where(better, ll, best_ll)
                best_theta = np.where(better[:, None], theta, best_theta)
            if t < config.burn_in:
                if not frozen_step:
                    gain = (t + 1.0) ** -0.6
                    log_step += gain * (np.minimum(1.0, np.exp(np.minimum(log_ratio, 0.0)))
                                        - config.target_accept)
            else:
                accepted += acc
                j = t - config.burn_in
                if (j + 1) % config.thinning == 0:
                    kept_theta[:, k] = theta
                    kept_ll[:, k] = ll
                    k += 1
    post = max(1, total_steps - config.burn_in)
    step_final = np.zeros(B) if frozen_step else np.exp(log_step)
    return [
        ChainResult(M, N, H, kept_theta[b], kept_ll[b], float(accepted[b] / post),
                    float(step_final[b]), float(best_ll[b]), best_theta[b], float(beta[b]))
        for b in range(B)
    ]


def _run_jobs(jobs, lo, hi, M, N, H, config, seed, init=None, workers: int = 1):
    if workers <= 1 or len(jobs) < 2:
        return _run_batch(jobs, lo, hi, M, N, H, config, seed, init)
    parts = np.array_split(np.arange(len(jobs)), min(workers, len(jobs)))
    with ThreadPoolExecutor(workers) as pool:
        futs = [pool.submit(_run_batch, [jobs[i] for i in p], lo, hi, M, N, H, config, seed, init)
                for p in parts]
        out = []
        for f in futs:
            out.extend(f.result())
    return out


def _check_init(init, lo, hi):
    if init is None:
        return None
    theta = init.flat() if isinstance(init, ParamPoint) else np.ravel(np.asarray(init, dtype=float))
    if theta.shape != lo.shape:
        raise ValidationError(f"initial point has {theta.size} coordinates, expected {lo.size}")
    if np.any(theta < lo) or np.any(theta > hi):
        raise ValidationError("initial point lies outside the prior box (zero prior density)")
    return theta


def run_chains(dataset: Dataset, prior: PriorBox, H: int, config: ChainConfig, seed: int, *,
               beta: float = 1.0, replication: int = 0, init=None,
               workers: int = 1) -> list[ChainResult]:
    """``config.n_chains`` independent chains on one dataset."""
    M, N = dataset.shape
    ModelDims(M, N, H)
    if H < 1:
        raise ValidationError("H must be >= 1 to sample")
    seed = seeding.check_seed(seed)
    lo, hi = prior.bounds(M, N, H)
    if dataset.family.needs_positive_mean and np.any(lo <= 0) and dataset.n > 0:
        raise ValidationError(f"{dataset.family.value} family needs a prior lower bound > 0")
    init = _check_init(init, lo, hi)
    stats = _Stats.of(dataset.family, dataset.observations) if dataset.n else \
        _Stats(0, np.zeros((M, N)), 0.0)
    jobs = [_Job(dataset.family, stats, beta, (replication, c)) for c in range(config.n_chains)]
    return _run_jobs(jobs, lo, hi, M, N, H, config, seed, init, workers)


def run_chain(dataset: Dataset, prior: PriorBox, H: int, config: ChainConfig, seed: int, *,
              beta: float = 1.0, chain: int = 0, replication: int = 0, init=None) -> ChainResult:
    """One random-walk Metropolis chain (the chain with index ``chain``)."""
    one = ChainConfig(config.burn_in, config.n_samples, config.thinning, chain + 1,
                      config.init_step, config.target_accept)
    return run_chains(dataset, prior, H, one, seed, beta=beta, replication=replication,
                      init=init)[chain]


# --- prediction and generalization error ------------------------------------


def _features(family: Family, mu: np.ndarray):
    """Write ``log p(W | mu) = W . a(mu) + b(mu) + c(W)``; return ``(a, b)`` per sample."""
    S = mu.shape[0]
    flat = mu.reshape(S, -1)
    if family is Family.GAUSSIAN:
        return flat, -0.5 * np.sum(flat * flat, axis=1)
    if family is Family.POISSON:
        return np.log(flat), -np.sum(flat, axis=1)
    return -1.0 / flat, -np.sum(np.log(flat), axis=1)


def _data_term(family: Family, W: np.ndarray) -> np.ndarray:
    flat = W.reshape(W.shape[0], -1)
    if family is Family.GAUSSIAN:
        return -0.5 * np.sum(flat * flat, axis=1)
    if family is Family.POISSON:
        return -np.sum(special.gammaln(flat + 1.0), axis=1)
    return np.zeros(flat.shape[0])


def log_predictive(W, posterior_samples, family: Family | str, chunk: int = 512):
    """``log mean_s p(W | X_s, Y_s)`` for one matrix or a stack of test matrices.

    ``posterior_samples`` is a list of :class:`ParamPoint`, a list of
    :class:`ChainResult` (pooled) or an ``(S, M, N)`` array of means.
    """
    family = Family(family)
    mu = _as_means(posterior_samples)
    if mu.shape[0] == 0:
        raise ValidationError("need at least one posterior sample")
    W = np.asarray(W, dtype=float)
    single = W.ndim == 2
    if single:
        W = W[None]
    if W.shape[1:] != mu.shape[1:]:
        raise ValidationError(f"observation shape {W.shape[1:]} != mean shape {mu.shape[1:]}")
    a, b = _features(family, mu)
    out = np.empty(W.shape[0])
    flat = W.reshape(W.shape[0], -1)
    for s in range(0, W.shape[0], chunk):
        logits = flat[s:s + chunk] @ a.T
        logits += b
        top = logits.max(axis=1, keepdims=True)
        logits -= top
        np.exp(logits, out=logits)
        out[s:s + chunk] = np.log(logits.sum(axis=1)) + top[:, 0]
    out += _data_term(family, W) - math.log(mu.shape[0])
    return float(out[0]) if single else out


def _as_means(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples if samples.ndim == 3 else samples[None]
    samples = list(samples)
    if samples and isinstance(samples[0], ChainResult):
        return np.concatenate([c.means for c in samples])
    if samples and isinstance(samples[0], ParamPoint):
        return np.stack([p.product for p in samples])
    return np.asarray(samples, dtype=float).reshape(len(samples), *np.shape(samples[0])) \
        if samples else np.empty((0, 1, 1))


def _test_draws(family: Family, mean: np.ndarray, count: int, rng) -> np.ndarray:
    shape = (count,) + mean.shape
    if family is Family.GAUSSIAN:
        # antithetic pairs: still distributed as q, with the linear term cancelled
        half = rng.standard_normal(((count + 1) // 2,) + mean.shape)
        return (mean + np.concatenate([half, -half]))[:count]
    if family is Family.POISSON:
        return rng.poisson(np.broadcast_to(mean, shape)).astype(float)
    return rng.exponential(np.broadcast_to(mean, shape))


def generalization_error(family: Family | str, truth: TrueStructure, posterior_samples,
                         test_draws: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo ``G = E_q[log q(W) - log p(W | data)]`` and its standard error."""
    family = Family(family)
    mean = truth.product
    W = _test_draws(family, mean, test_draws, rng)
    a, b = _features(family, mean[None])
    log_q = W.reshape(W.shape[0], -1) @ a[0] + b[0] + _data_term(family, W)
    diff = log_q - log_predictive(W, posterior_samples, family)
    if family is Family.GAUSSIAN:
        half = (test_draws + 1) // 2
        pairs = np.zeros(half)
        pairs[: test_draws - half] += diff[half:]
        pairs += diff[:half]
        # pair means are iid; the stderr must use them rather than single draws
        counts = np.full(half, 2.0)
        counts[test_draws - half:] = 1.0
        pm = pairs / counts
        return float(diff.mean()), float(pm.std(ddof=1) / math.sqrt(half)) if half > 1 else 0.0
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(len(diff)))


@dataclass
class GEstimate:
    """Generalization error averaged over replications (fresh data and chains each)."""

    family: str
    M: int
    N: int
    H: int
    H0: int
    n: int
    g_mean: float
    stderr: float
    replications: int
    posterior_samples_per_chain: int
    chains: int
    test_draws: int
    seed: int
    per_replication: list[float] = field(default_factory=list)
    acceptance: list[float] = field(default_factory=list)

    @property
    def n_g(self) -> float:
        return self.n * self.g_mean

    @property
    def n_stderr(self) -> float:
        return self.n * self.stderr

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "dims": {"M": self.M, "N": self.N, "H": self.H},
            "H0": self.H0,
            "n": self.n,
            "g_mean": self.g_mean,
            "stderr": self.stderr,
            "n_times_g": self.n_g,
            "n_times_stderr": self.n_stderr,
            "replications": self.replications,
            "posterior_samples_per_chain": self.posterior_samples_per_chain,
            "chains": self.chains,
            "test_draws": self.test_draws,
            "seed": self.seed,
            "per_replication": self.per_replication,
            "acceptance_min": min(self.acceptance) if self.acceptance else None,
            "acceptance_max": max(self.acceptance) if self.acceptance else None,
        }


def estimate_generalization_error(family: Family | str, truth: TrueStructure, n: int,
                                  replications: int, chain_config: ChainConfig | None = None,
                                  mc_test_draws: int = 10**4, *, seed: int, H: int | None = None,
                                  prior: PriorBox | None = None, workers: int = 1,
                                  truncate_gaussian: bool = False) -> GEstimate:
    """Average ``G`` over independent replications of (dataset, chains, test draws).

    Replication ``r`` uses data stream ``r``, chain streams ``(r, c)`` and test
    stream ``r``, so the estimate for a given replication count is reproducible
    and extending the count only appends replications.
    """
    family = Family(family)
    seed = seeding.check_seed(seed)
    config = chain_config or ChainConfig()
    if truth.A is None:
        raise ValidationError("truth factors A and B are required")
    M, N = truth.product.shape
    H = truth.H0 if H is None else H
    if replications < 1:
        raise ValidationError("replications must be >= 1")
    prior = prior or default_prior(family, truth)
    lo, hi = prior.bounds(M, N, H)
    datasets = [generate_dataset(family, truth, n, seed, stream=r,
                                 truncate_gaussian=truncate_gaussian)
                for r in range(replications)]
    jobs = []
    for r, ds in enumerate(datasets):
        stats = _Stats.of(family, ds.observations) if n else _Stats(0, np.zeros((M, N)), 0.0)
        jobs.extend(_Job(family, stats, 1.0, (r, c)) for c in range(config.n_chains))
    init = None
    if np.all(hi == lo):
        init = lo
    results = _run_jobs(jobs, lo, hi, M, N, H, config, seed, init, workers)
    per_rep, acceptance = [], []
    for r in range(replications):
        chains = results[r * config.n_chains:(r + 1) * config.n_chains]
        rng = seeding.generator(seed, seeding.TEST, r)
        g, _ = generalization_error(family, truth, chains, mc_test_draws, rng)
        per_rep.append(g)
        acceptance.extend(c.acceptance_rate for c in chains)
    g_arr = np.array(per_rep)
    se = float(g_arr.std(ddof=1) / math.sqrt(replications)) if replications > 1 else float("nan")
    return GEstimate(family.value, M, N, H, truth.H0, n, float(g_arr.mean()), se, replications,
                     config.n_samples, config.n_chains, mc_test_draws, seed, per_rep, acceptance)

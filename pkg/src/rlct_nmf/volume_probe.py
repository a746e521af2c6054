"""Numeric threshold estimates from the scaling of level-set volumes.

For ``K(X, Y) = ||XY - AB||^2`` on a box ``[0, c]^(MH + HN)``, the volume
``V(t) = vol{K <= t}`` behaves like ``t^lambda (log 1/t)^(m-1)`` as
``t -> 0``. Hit-or-miss sampling gives ``V(t)`` at many thresholds from one
sample stream; the log-log slope over the lowest well-populated decade
estimates ``lambda``. The multiplicity ``m`` is unknown, so the log factor
biases the slope slightly low when ``m > 1``; ``r_squared`` is reported so the
caller can see curvature.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import seeding
from .errors import EstimationError, ValidationError
from .rlct_core import Kind, ModelDims, TrueStructure, check_feasible, nmf_rlct_bound

__all__ = [
    "VolumeScan",
    "SlopeFit",
    "BoundCheck",
    "default_box_upper",
    "default_thresholds",
    "estimate_volume",
    "fit_lambda",
    "check_bound",
]

PER_DECADE = 12
CHUNK_SIZE = 1 << 16


def default_box_upper(truth: TrueStructure) -> float:
    """``2 max(1, max entry of AB)`` keeps the true parameter inside the box."""
    prod = truth.product
    top = 1.0 if prod is None or prod.size == 0 else max(1.0, float(prod.max()))
    return 2.0 * top


def default_thresholds(t_max: float = 1.0, decades: int = 10,
                       per_decade: int = PER_DECADE) -> np.ndarray:
    """Log-spaced thresholds, ``per_decade`` per decade, largest first."""
    k = np.arange(decades * per_decade + 1)
    return t_max * 10.0 ** (-k / per_decade)


@dataclass
class VolumeScan:
    """Hit counts of ``K <= t`` for each threshold, largest threshold first."""

    M: int
    N: int
    H: int
    H0: int
    thresholds: np.ndarray
    hits: np.ndarray
    sample_count: int
    seed: int
    box_upper: float
    per_decade: int = PER_DECADE
    chunk_size: int = CHUNK_SIZE

    @property
    def dim(self) -> int:
        return self.H * (self.M + self.N)

    @property
    def box_volume(self) -> float:
        return self.box_upper ** self.dim

    @property
    def fractions(self) -> np.ndarray:
        return self.hits / self.sample_count

    @property
    def volumes(self) -> np.ndarray:
        return self.box_volume * self.fractions

    @property
    def stderr(self) -> np.ndarray:
        p = self.fractions
        return self.box_volume * np.sqrt(p * (1.0 - p) / self.sample_count)

    def to_dict(self) -> dict:
        return {
            "dims": {"M": self.M, "N": self.N, "H": self.H},
            "H0": self.H0,
            "sample_count": self.sample_count,
            "seed": self.seed,
            "box_upper": self.box_upper,
            "box_volume": self.box_volume,
            "per_decade": self.per_decade,
            "chunk_size": self.chunk_size,
            "thresholds": self.thresholds.tolist(),
            "hits": self.hits.tolist(),
            "volumes": self.volumes.tolist(),
            "stderr": self.stderr.tolist(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "volume", "stderr", "hits"])
            for t, v, s, h in zip(self.thresholds, self.volumes, self.stderr, self.hits):
                w.writerow([format(t, ".17g"), format(v, ".17g"), format(s, ".17g"), int(h)])


def _count_chunk(args) -> np.ndarray:
    seed, index, size, M, N, H, AB, c, thresholds = args
    rng = seeding.generator(seed, seeding.VOLUME, index)
    theta = rng.uniform(0.0, c, size=(size, H * (M + N)))
    X = theta[:, : M * H].reshape(size, M, H)
    Y = theta[:, M * H:].reshape(size, H, N)
    K = np.sum((X @ Y - AB) ** 2, axis=(1, 2))
    K.sort()
    return np.searchsorted(K, thresholds, side="right")


def estimate_volume(dims: ModelDims, truth: TrueStructure, *, seed: int,
                    box_upper: float | None = None, thresholds=None,
                    samples: int = 10**6, workers: int = 1,
                    chunk_size: int = CHUNK_SIZE) -> VolumeScan:
    """Hit-or-miss estimate of ``V(t)`` under the uniform distribution on the box.

    Samples are split into fixed-size chunks, each drawn from its own
    substream, so the result does not depend on ``workers``.
    """
    check_feasible(dims, truth)
    if dims.H < 1:
        raise ValidationError("volume scan needs H >= 1")
    seed = seeding.check_seed(seed)
    if truth.A is None:
        if truth.H0 != 0:
            raise ValidationError("truth factors A, B are required when H0 > 0")
        truth = TrueStructure.zero(dims.M, dims.N)
    AB = truth.product
    c = default_box_upper(truth) if box_upper is None else float(box_upper)
    if not c > 0:
        raise ValidationError(f"box upper bound must be positive, got {c}")
    if AB.size and AB.max() >= c * c * dims.H:
        raise ValidationError(f"AB has an entry >= c^2 H = {c * c * dims.H}; not reachable in the box")
    if samples < 1:
        raise ValidationError("samples must be positive")
    t = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=float)
    t = np.sort(t)[::-1]
    if t.size == 0 or t.min() <= 0:
        raise ValidationError("thresholds must be positive")

    sizes = [chunk_size] * (samples // chunk_size)
    if samples % chunk_size:
        sizes.append(samples % chunk_size)
    jobs = [(seed, i, s, dims.M, dims.N, dims.H, AB, c, t) for i, s in enumerate(sizes)]
    hits = np.zeros(t.size, dtype=np.int64)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            for h in pool.map(_count_chunk, jobs):
                hits += h
    else:
        for job in jobs:
            hits += _count_chunk(job)
    return VolumeScan(dims.M, dims.N, dims.H, truth.H0, t, hits, samples, seed, c,
                      chunk_size=chunk_size)


@dataclass
class SlopeFit:
    lambda_hat: float
    stderr: float
    fit_window: tuple[float, float]
    r_squared: float
    n_points: int
    min_hits: int
    low_hits: bool = False

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "stderr": self.stderr,
            "fit_window": list(self.fit_window),
            "r_squared": self.r_squared,
            "n_points": self.n_points,
            "min_hits": self.min_hits,
            "low_hits": self.low_hits,
        }


def _gls_slope(logt, logp, n, iterations: int = 5):
    """Generalised least squares with the covariance of cumulative hit counts.

    All thresholds come from one sample stream, so
    ``cov(log p_i, log p_j) = (1/max(p_i, p_j) - 1) / n``. The covariance is
    evaluated at the fitted fractions, not the observed ones; weights built
    from the noisy observations bias the slope low when counts are small.
    """
    X = np.column_stack([np.ones_like(logt), logt])
    p = np.exp(logp)
    for _ in range(iterations):
        cov = (1.0 / np.maximum.outer(p, p) - 1.0) / n
        cov += np.eye(len(p)) * 1e-12 * np.trace(cov) / len(p)
        ci_X = np.linalg.solve(cov, X)
        info = X.T @ ci_X
        beta = np.linalg.solve(info, ci_X.T @ logp)
        p = np.minimum(np.exp(X @ beta), 1.0)
    var = np.linalg.inv(info)
    return float(beta[1]), float(math.sqrt(max(var[1, 1], 0.0)))


def fit_lambda(scan: VolumeScan, min_hits: int = 100) -> SlopeFit:
    """Slope of ``log V`` against ``log t`` over the lowest decade with enough hits.

    The window is the smallest threshold with at least ``min_hits`` hits and
    every threshold up to ten times it. Without such a threshold the top
    decade of nonzero counts is used and ``low_hits`` is set.
    """
    order = np.argsort(scan.thresholds)
    t = scan.thresholds[order]
    h = scan.hits[order]
    nonzero = h > 0
    if nonzero.sum() < 4:
        raise EstimationError(
            "fewer than 4 thresholds have hits; increase samples or thresholds",
            {"thresholds": t.tolist(), "hits": h.tolist(), "sample_count": scan.sample_count},
        )
    rich = np.nonzero(h >= min_hits)[0]
    low = rich.size == 0
    if low:
        t_lo = t[nonzero][-1] / 10.0
        sel = nonzero & (t >= t_lo * (1 - 1e-9))
    else:
        t_lo = t[rich[0]]
        sel = (t >= t_lo * (1 - 1e-9)) & (t <= 10.0 * t_lo * (1 + 1e-9))
    if sel.sum() < 4:
        raise EstimationError(
            "fit window holds fewer than 4 thresholds",
            {"window": [float(t_lo), float(10 * t_lo)], "points": int(sel.sum())},
        )
    tw, hw = t[sel], h[sel]
    p = hw / scan.sample_count
    logt, logp = np.log(tw), np.log(p)
    slope, se = _gls_slope(logt, logp, scan.sample_count)
    ols = np.polyfit(logt, logp, 1)
    resid = logp - np.polyval(ols, logt)
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(slope, se, (float(tw[0]), float(tw[-1])), r2, int(sel.sum()),
                    int(hw.min()), low)


@dataclass
class BoundCheck:
    lambda_hat: float
    stderr: float
    bound: Fraction
    kind: Kind
    source: str
    within_bound: bool
    matches_exact: bool | None = field(default=None)

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "stderr": self.stderr,
            "bound": str(self.bound),
            "bound_float": float(self.bound),
            "kind": self.kind.value,
            "source": self.source,
            "within_bound": self.within_bound,
            "matches_exact": self.matches_exact,
        }


def check_bound(dims: ModelDims, truth: TrueStructure, fit: SlopeFit,
                exact_tol: float = 0.15) -> BoundCheck:
    """Compare a fitted slope with the closed form.

    ``within_bound`` is ``lambda_hat <= bound + 3 stderr``. For exact cases
    ``matches_exact`` is ``|lambda_hat - lambda| <= max(exact_tol, 3 stderr)``.
    """
    value = nmf_rlct_bound(dims, truth)
    margin = 3.0 * fit.stderr
    within = fit.lambda_hat <= float(value.value) + margin
    matches = None
    if value.kind is Kind.EXACT:
        matches = abs(fit.lambda_hat - float(value.value)) <= max(exact_tol, margin)
    return BoundCheck(fit.lambda_hat, fit.stderr, value.value, value.kind,
                      value.source.value, within, matches)


def scan_to_json(scan: VolumeScan, fit: SlopeFit | None = None) -> str:
    out = {"scan": scan.to_dict()}
    if fit is not None:
        out["fit"] = fit.to_dict()
    return json.dumps(out, indent=2)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlct_nmf import seeding
from rlct_nmf.bayes_nmf import (
    ChainConfig,
    Dataset,
    ParamPoint,
    PriorBox,
    default_prior,
    estimate_generalization_error,
    generalization_error,
    generate_dataset,
    log_likelihood,
    log_predictive,
    run_chain,
    run_chains,
)
from rlct_nmf.errors import ValidationError
from rlct_nmf.rlct_core import TrueStructure

A2 = np.array([[1.0], [0.6]])
B2 = np.array([[0.8, 1.2]])
TRUTH = TrueStructure(1, A2, B2)
FAST = ChainConfig(burn_in=1000, n_samples=500, thinning=2, n_chains=2)


def scalar_truth(v):
    return TrueStructure(1, np.array([[v]]), np.array([[1.0]]))


# --- data -------------------------------------------------------------------


def test_empty_dataset():
    ds = generate_dataset("gaussian", TRUTH, 0, seed=1)
    assert ds.n == 0 and ds.shape == (2, 2)


def test_gaussian_sample_mean():
    ds = generate_dataset("gaussian", scalar_truth(1.0), 10**4, seed=3)
    assert abs(ds.observations.mean() - 1.0) <= 4 / math.sqrt(10**4)


def test_poisson_sample_variance():
    ds = generate_dataset("poisson", scalar_truth(3.0), 10**4, seed=3)
    assert abs(ds.observations.var(ddof=1) - 3.0) <= 0.2
    assert np.all(ds.observations == np.round(ds.observations))


def test_truncated_gaussian_is_nonnegative():
    ds = generate_dataset("gaussian", scalar_truth(0.2), 2000, seed=3, truncate_gaussian=True)
    assert ds.observations.min() >= 0 and ds.truncated


def test_nested_prefixes():
    big = generate_dataset("exponential", TRUTH, 50, seed=9)
    small = generate_dataset("exponential", TRUTH, 20, seed=9)
    assert np.array_equal(big.head(20).observations, small.observations)


def test_positive_family_rejects_zero_mean():
    with pytest.raises(ValidationError):
        generate_dataset("poisson", TrueStructure(0, np.zeros((2, 0)), np.zeros((0, 2))), 5, seed=1)
    with pytest.raises(ValidationError):
        Dataset("poisson", np.array([[[1.5]]]))


# --- likelihood ---------------------------------------------------------------


def test_loglik_examples():
    X, Y = np.array([[1.0]]), np.array([[2.0]])
    p = ParamPoint(X, Y)
    assert log_likelihood("gaussian", np.array([[2.0]]), p) == 0.0
    W = np.array([[1.0, 1.0]])
    p2 = ParamPoint(np.array([[1.0]]), np.array([[0.0, 2.0]]))
    assert log_likelihood("gaussian", W, p2) == pytest.approx(-1.0)
    expected = 2 * math.log(2) - 2 - math.log(2)
    assert log_likelihood("poisson", np.array([[2.0]]), p) == pytest.approx(expected, abs=1e-14)


def test_loglik_sums_over_stack():
    ds = generate_dataset("exponential", TRUTH, 7, seed=2)
    mu = np.full((2, 2), 0.9)
    total = sum(log_likelihood("exponential", w, mu) for w in ds.observations)
    assert log_likelihood("exponential", ds.observations, mu) == pytest.approx(total)


def test_loglik_domain_errors():
    with pytest.raises(ValidationError):
        log_likelihood("poisson", np.array([[1.0]]), np.array([[0.0]]))
    with pytest.raises(ValidationError):
        log_likelihood("gaussian", np.ones((2, 2)), np.ones((2, 3)))


# --- sampler ----------------------------------------------------------------


def test_posterior_concentrates():
    ds = generate_dataset("gaussian", TRUTH, 1000, seed=5)
    chains = run_chains(ds, default_prior("gaussian", TRUTH), 1, FAST, seed=5)
    mean = np.concatenate([c.means for c in chains]).mean(axis=0)
    assert np.max(np.abs(mean - TRUTH.product)) <= 5 / math.sqrt(1000) * 4


def test_prior_only_mean():
    ds = generate_dataset("gaussian", TRUTH, 0, seed=1)
    prior = PriorBox(0.0, 2.0)
    cfg = ChainConfig(burn_in=500, n_samples=4000, thinning=5, n_chains=4)
    chains = run_chains(ds, prior, 1, cfg, seed=2)
    theta = np.concatenate([c.theta for c in chains])
    assert np.all(np.abs(theta.mean(axis=0) - 1.0) < 0.1)


def test_chain_determinism():
    ds = generate_dataset("poisson", TRUTH, 30, seed=4)
    prior = default_prior("poisson", TRUTH)
    a = run_chain(ds, prior, 1, FAST, seed=8)
    b = run_chain(ds, prior, 1, FAST, seed=8)
    c = run_chain(ds, prior, 1, FAST, seed=9)
    assert np.array_equal(a.theta, b.theta)
    assert not np.array_equal(a.theta, c.theta)


def test_chain_independent_of_batch_and_workers():
    ds = generate_dataset("gaussian", TRUTH, 30, seed=4)
    prior = default_prior("gaussian", TRUTH)
    cfg = ChainConfig(burn_in=300, n_samples=100, thinning=2, n_chains=3)
    serial = run_chains(ds, prior, 1, cfg, seed=8)
    parallel = run_chains(ds, prior, 1, cfg, seed=8, workers=3)
    single = run_chain(ds, prior, 1, cfg, seed=8, chain=2)
    for s, p in zip(serial, parallel):
        assert np.array_equal(s.theta, p.theta)
    assert np.array_equal(serial[2].theta, single.theta)


def test_start_outside_box_rejected():
    ds = generate_dataset("gaussian", TRUTH, 10, seed=1)
    prior = PriorBox(0.0, 2.0)
    with pytest.raises(ValidationError):
        run_chain(ds, prior, 1, FAST, seed=1, init=np.array([3.0, 1.0, 1.0, 1.0]))


def test_positive_family_needs_positive_lower_edge():
    ds = generate_dataset("poisson", TRUTH, 10, seed=1)
    with pytest.raises(ValidationError):
        run_chain(ds, PriorBox(0.0, 2.0), 1, FAST, seed=1)


@settings(max_examples=15, deadline=None)
@given(family=st.sampled_from(["gaussian", "poisson", "exponential"]),
       H=st.integers(1, 3), seed=st.integers(0, 2**32))
def test_posterior_in_box(family, H, seed):
    ds = generate_dataset(family, TRUTH, 20, seed=seed)
    prior = default_prior(family, TRUTH)
    cfg = ChainConfig(burn_in=100, n_samples=100, thinning=1, n_chains=2)
    lo, hi = prior.bounds(2, 2, H)
    for chain in run_chains(ds, prior, H, cfg, seed=seed):
        assert np.all(chain.theta >= lo) and np.all(chain.theta <= hi)
        assert np.all(chain.argmax >= lo) and np.all(chain.argmax <= hi)
        assert chain.max_loglik >= chain.loglik.max()


@pytest.mark.parametrize("family", ["gaussian", "poisson", "exponential"])
def test_acceptance_after_adaptation(family):
    ds = generate_dataset(family, TRUTH, 200, seed=6)
    for H in (1, 2):
        chains = run_chains(ds, default_prior(family, TRUTH), H, FAST, seed=6)
        for c in chains:
            assert 0.15 <= c.acceptance_rate <= 0.5


# --- predictive and G ---------------------------------------------------------


def test_log_predictive_single_and_identical():
    W = np.array([[1.3, 0.2], [0.7, 2.0]])
    p = ParamPoint(A2, B2)
    for fam in ("gaussian", "poisson", "exponential"):
        Wf = np.round(W) if fam == "poisson" else W
        ll = log_likelihood(fam, Wf, p)
        assert log_predictive(Wf, [p], fam) == pytest.approx(ll, abs=1e-12)
        assert log_predictive(Wf, [p, p], fam) == pytest.approx(ll, abs=1e-12)


def test_log_predictive_mixture():
    # Gaussian with scalar means 0 and m where the likelihood ratio is exactly 3
    W = np.array([[0.0]])
    m = math.sqrt(2 * math.log(3))
    p_low = ParamPoint(np.array([[1.0]]), np.array([[m]]))
    p_high = ParamPoint(np.array([[1.0]]), np.array([[0.0]]))
    L = math.exp(log_likelihood("gaussian", W, p_low))
    assert log_likelihood("gaussian", W, p_high) == pytest.approx(math.log(3 * L))
    assert log_predictive(W, [p_low, p_high], "gaussian") == pytest.approx(math.log(2 * L))


def test_log_predictive_empty():
    with pytest.raises(ValidationError):
        log_predictive(np.ones((1, 1)), [], "gaussian")


@pytest.mark.parametrize("family", ["gaussian", "poisson", "exponential"])
def test_point_prior_gives_zero_g(family):
    prior = PriorBox.point(A2, B2)
    cfg = ChainConfig(burn_in=10, n_samples=20, thinning=1, n_chains=2)
    est = estimate_generalization_error(family, TRUTH, 25, 3, cfg, 2000, seed=1, prior=prior)
    assert abs(est.g_mean) < 1e-12


def test_g_matches_half_squared_distance_for_gaussian():
    # with a point predictive the Gaussian G is exactly ||m - AB||^2 / 2
    m = TRUTH.product + 0.1
    g, se = generalization_error("gaussian", TRUTH, m[None], 10**4, seeding.generator(1, 4))
    assert g == pytest.approx(0.5 * 4 * 0.01, abs=1e-12)


def test_g_estimate_small_run():
    est = estimate_generalization_error("gaussian", TRUTH, 100, 4, FAST, 2000, seed=3)
    assert est.replications == 4 and len(est.per_replication) == 4
    assert est.g_mean >= -3 * est.stderr
    again = estimate_generalization_error("gaussian", TRUTH, 100, 4, FAST, 2000, seed=3)
    assert again.per_replication == est.per_replication
    d = est.to_dict()
    assert d["n_times_g"] == pytest.approx(100 * est.g_mean)

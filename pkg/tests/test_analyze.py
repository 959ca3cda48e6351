"""Outcome models and Rubin pooling."""

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import expit

from ordsens.analyze import (OutcomeFit, compute_icc, fit_linear,
                             fit_logistic, fit_logistic_random_intercept,
                             fit_outcome, pool_rubin)
from ordsens.exceptions import SchemaError

from conftest import synth_clustered, synth_flat


def _logit_data(n=800, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.integers(0, 2, n).astype(float),
                         rng.normal(size=n)])
    beta = np.array([-0.4, 0.9, -0.6])
    y = (rng.uniform(size=n) < expit(X @ beta)).astype(np.float64)
    return X, y, beta


def test_logistic_matches_generic_optimizer():
    X, y, _ = _logit_data()
    fit = fit_logistic(X, y)
    assert fit.converged

    def nll(b):
        z = X @ b
        return -(y @ z - np.logaddexp(0, z).sum())

    res = minimize(nll, np.zeros(3), method="BFGS", tol=1e-12)
    np.testing.assert_allclose(fit.coef, res.x, atol=1e-6)
    # observed-information standard errors
    p = expit(X @ fit.coef)
    info = X.T @ (X * (p * (1 - p))[:, None])
    np.testing.assert_allclose(fit.vcov, np.linalg.inv(info), rtol=1e-6)


def test_logistic_two_by_two_closed_form():
    # saturated 2x2 table: slope is the log odds ratio of the cell counts
    y = np.repeat([1, 0, 1, 0], [30, 70, 55, 45]).astype(np.float64)
    x = np.repeat([0, 0, 1, 1], [30, 70, 55, 45]).astype(np.float64)
    X = np.column_stack([np.ones_like(x), x])
    fit = fit_logistic(X, y)
    want_slope = np.log(55 / 45) - np.log(30 / 70)
    np.testing.assert_allclose(fit.coef, [np.log(30 / 70), want_slope],
                               atol=1e-8)


def test_linear_matches_lstsq():
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=200)
    fit = fit_linear(X, y)
    want, *_ = np.linalg.lstsq(X, y, rcond=None)
    np.testing.assert_allclose(fit.coef, want, rtol=1e-10)
    resid = y - X @ want
    s2 = resid @ resid / (200 - 3)
    np.testing.assert_allclose(fit.vcov, s2 * np.linalg.inv(X.T @ X),
                               rtol=1e-10)


def test_glmm_detects_inert_clusters():
    ds = synth_clustered(n_clusters=10, cluster_size=80, seed=5, miss=0.0,
                         u_sd=0.0)
    fit = fit_outcome(ds, ds.x1, model="glmm-logit-ri")
    assert fit.sigma_u < 0.15
    flat = fit_outcome(ds, ds.x1, model="glm-logit")
    np.testing.assert_allclose(fit.coef, flat.coef, atol=0.05)


def test_glmm_recovers_cluster_spread():
    ds = synth_clustered(n_clusters=40, cluster_size=60, seed=7, miss=0.0,
                         u_sd=0.8)
    fit = fit_outcome(ds, ds.x1, model="glmm-logit-ri")
    assert fit.converged
    assert 0.5 < fit.sigma_u < 1.1
    assert fit.extra["icc"] == pytest.approx(compute_icc(fit.sigma_u))


def test_fit_outcome_dispatch_errors(flat_ds):
    full = flat_ds.complete_with(np.ones(flat_ds.n_missing, dtype=np.int64))
    with pytest.raises(SchemaError):
        fit_outcome(flat_ds, full, model="glmm-logit-ri")   # no clusters
    with pytest.raises(SchemaError):
        fit_outcome(flat_ds, full, model="banana")


def test_icc_formula_values():
    assert compute_icc(0.0) == 0.0
    np.testing.assert_allclose(compute_icc(1.0), 1 / (1 + np.pi**2 / 3),
                               rtol=1e-12)
    with pytest.raises(SchemaError):
        compute_icc(-0.1)


def _fits_from(est_rows, var_rows, model="glm-logit"):
    names = [f"b{j}" for j in range(len(est_rows[0]))]
    return [OutcomeFit(coef=np.asarray(e, float), se=np.sqrt(np.asarray(v, float)),
                       vcov=np.diag(v), names=names, model=model,
                       loglik=0.0, converged=True, n_obs=10)
            for e, v in zip(est_rows, var_rows)]


def test_pool_rubin_hand_oracle():
    fits = _fits_from([[1.0], [1.2], [1.4]], [[0.04], [0.04], [0.04]])
    pe = pool_rubin(fits)
    assert abs(pe.qbar[0] - 1.2) < 1e-12
    assert abs(pe.W[0] - 0.04) < 1e-12
    assert abs(pe.B[0] - 0.04) < 1e-12
    assert abs(pe.T[0] - (0.04 + (4 / 3) * 0.04)) < 1e-12
    assert abs(pe.df[0] - 6.125) < 1e-12


def test_pool_rubin_identical_copies_short_circuit():
    fits = _fits_from([[0.7, -1.1]] * 4, [[0.01, 0.09]] * 4)
    pe = pool_rubin(fits)
    np.testing.assert_array_equal(pe.qbar, [0.7, -1.1])
    np.testing.assert_array_equal(pe.B, [0.0, 0.0])
    np.testing.assert_allclose(pe.W, [0.01, 0.09], rtol=1e-15)
    assert np.all(np.isinf(pe.df))
    np.testing.assert_allclose(pe.ci_hi - pe.qbar, 1.959963985 * pe.se,
                               rtol=1e-6)


def test_pool_rubin_total_at_least_within():
    rng = np.random.default_rng(8)
    fits = _fits_from(rng.normal(size=(5, 3)), rng.uniform(0.01, 1, (5, 3)))
    pe = pool_rubin(fits)
    assert np.all(pe.T >= pe.W)
    assert pe.odds_ratio is not None
    np.testing.assert_allclose(pe.odds_ratio, np.exp(pe.qbar), rtol=1e-12)


def test_pool_rubin_linear_has_no_odds_ratios():
    fits = _fits_from([[1.0], [2.0]], [[0.1], [0.1]], model="linear")
    assert pool_rubin(fits).odds_ratio is None


def test_pool_rubin_layout_checks():
    with pytest.raises(SchemaError):
        pool_rubin(_fits_from([[1.0]], [[0.1]]))
    a = _fits_from([[1.0], [2.0]], [[0.1], [0.1]])
    b = _fits_from([[1.0, 2.0], [2.0, 3.0]], [[0.1, 0.1], [0.1, 0.1]])
    with pytest.raises(SchemaError):
        pool_rubin([a[0], b[1]])

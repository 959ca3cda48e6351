"""Outcome models and Rubin's-rules pooling.

Three outcome fits share the OutcomeFit container: logistic GLM by IRLS,
logistic random-intercept GLMM by adaptive Gauss-Hermite quadrature over the
scalar cluster intercept, and ordinary least squares for continuous outcomes.
pool_rubin combines M fits into pooled estimates with classic Rubin degrees
of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, roots_hermite
from scipy.stats import t as t_dist

from . import _kernels as kern
from .data import Dataset, analysis_design
from .exceptions import ConvergenceError, SchemaError, SeparationError

GLM_TOL = 1e-8
GLM_MAX_ITER = 50
SEPARATION_BOUND = 30.0
GLMM_NODES = 15
_SD_BOUNDARY = 1e-4


@dataclass
class OutcomeFit:
    coef: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    names: list
    model: str                  # "glm-logit" | "glmm-logit-ri" | "linear"
    loglik: float
    converged: bool
    n_obs: int
    sigma_u: float | None = None    # random-intercept SD (glmm only)
    boundary: bool = False          # sigma_u pinned at 0
    extra: dict = field(default_factory=dict)


@dataclass
class PooledEstimate:
    """Per-coefficient Rubin's-rules summary over M imputations."""

    names: list
    M: int
    model: str
    qbar: np.ndarray
    W: np.ndarray               # within-imputation variance
    B: np.ndarray               # between-imputation variance
    T: np.ndarray               # total variance
    df: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    p: np.ndarray
    odds_ratio: np.ndarray | None = None
    or_lo: np.ndarray | None = None
    or_hi: np.ndarray | None = None


def fit_logistic(X, y, names=None, max_iter=GLM_MAX_ITER, tol=GLM_TOL) -> OutcomeFit:
    """Logistic GLM by IRLS; vcov is the inverse observed information."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    beta = np.zeros(d)
    converged = False
    H = None
    for _ in range(max_iter):
        z = X @ beta
        p = expit(z)
        w = np.maximum(p * (1.0 - p), 1e-10)
        H = X.T @ (w[:, None] * X)
        g = X.T @ (y - p)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise SchemaError(f"singular design in logistic fit: {exc}") from exc
        beta = beta + step
        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationError("logistic fit diverged; data look separated")
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    z = X @ beta
    p = expit(z)
    w = np.maximum(p * (1.0 - p), 1e-10)
    H = X.T @ (w[:, None] * X)
    vcov = np.linalg.inv(H)
    vcov = (vcov + vcov.T) / 2.0
    ll = float(np.sum(y * z - np.logaddexp(0.0, z)))
    if names is None:
        names = [f"b{j}" for j in range(d)]
    return OutcomeFit(coef=beta, se=np.sqrt(np.diag(vcov)), vcov=vcov,
                      names=list(names), model="glm-logit", loglik=ll,
                      converged=converged, n_obs=n)


def fit_linear(X, y, names=None) -> OutcomeFit:
    """Least squares with the classical covariance s^2 (X'X)^-1."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < d:
        raise SchemaError("rank-deficient design in linear fit")
    resid = y - X @ beta
    rss = float(resid @ resid)
    s2 = rss / (n - d)
    vcov = s2 * np.linalg.inv(X.T @ X)
    vcov = (vcov + vcov.T) / 2.0
    s2_ml = rss / n
    ll = -0.5 * n * (np.log(2.0 * np.pi * s2_ml) + 1.0) if s2_ml > 0 else np.inf
    if names is None:
        names = [f"b{j}" for j in range(d)]
    return OutcomeFit(coef=beta, se=np.sqrt(np.diag(vcov)), vcov=vcov,
                      names=list(names), model="linear", loglik=float(ll),
                      converged=True, n_obs=n, extra={"sigma2": s2})


def _glmm_neg_loglik_factory(X, y, cluster, n_nodes):
    """Closure computing the negative AGQ marginal log likelihood.

    Rows are sorted by cluster once; per-cluster modes warm-start from the
    previous evaluation, so repeated calls during optimization stay cheap.
    """
    order = np.argsort(cluster, kind="stable")
    Xs = np.ascontiguousarray(X[order])
    ys = np.ascontiguousarray(y[order], dtype=np.float64)
    cs = cluster[order]
    G = int(cs.max())
    starts = np.searchsorted(cs, np.arange(1, G + 1)).astype(np.int64)
    if np.unique(cs).size != G:
        raise SchemaError("every cluster needs at least one row")
    rows0 = cs - 1
    nodes, weights = roots_hermite(n_nodes)
    log_w = np.log(weights)
    state = {"v": np.zeros(G)}

    def neg_loglik(params):
        beta = params[:-1]
        sd = params[-1]
        xb = np.ascontiguousarray(Xs @ beta)
        if sd < 1e-8:
            return -float(np.sum(ys * xb - np.logaddexp(0.0, xb)))
        inv_var = 1.0 / (sd * sd)
        v = state["v"].copy()
        curv = None
        for _ in range(80):
            score, info = kern.bern_score_info(
                np.ascontiguousarray(xb + v[rows0]), ys, starts)
            curv = info + inv_var
            step = (score - v * inv_var) / curv
            np.clip(step, -5.0, 5.0, out=step)
            v += step
            if np.max(np.abs(step)) < 1e-11:
                break
        state["v"] = v.copy()
        tau = 1.0 / np.sqrt(curv)
        V = v[:, None] + np.sqrt(2.0) * tau[:, None] * nodes[None, :]
        z = np.ascontiguousarray(xb[:, None] + V[rows0])
        sums = kern.bern_loglik_sums(z, ys, starts)
        integrand = sums - V * V * (0.5 * inv_var) + log_w[None, :] + (nodes * nodes)[None, :]
        peak = integrand.max(axis=1)
        lse = peak + np.log(np.exp(integrand - peak[:, None]).sum(axis=1))
        ll = float(np.sum(lse + np.log(np.sqrt(2.0) * tau))
                   - G * (np.log(sd) + 0.5 * np.log(2.0 * np.pi)))
        return -ll

    return neg_loglik, G


def _numeric_hessian(fun, x, h_scale=1e-4):
    d = x.shape[0]
    h = h_scale * np.maximum(1.0, np.abs(x))
    H = np.empty((d, d))
    f0 = fun(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        H[i, i] = (fun(x + ei) - 2.0 * f0 + fun(x - ei)) / (h[i] * h[i])
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (fun(x + ei + ej) - fun(x + ei - ej)
                                 - fun(x - ei + ej) + fun(x - ei - ej)) / (4.0 * h[i] * h[j])
    return H


def fit_logistic_random_intercept(X, y, cluster, names=None, n_nodes=GLMM_NODES,
                                  start=None, max_iter=200) -> OutcomeFit:
    """Random-intercept logistic regression by adaptive Gauss-Hermite quadrature.

    The scalar intercept per cluster is integrated out on `n_nodes` nodes
    centered and scaled at each cluster's conditional mode. (beta, sd) are
    maximized with L-BFGS-B under sd >= 0; a boundary estimate sd ~ 0 is
    reported with the `boundary` flag and GLM-based covariance.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    cluster = np.ascontiguousarray(cluster, dtype=np.int64)
    n, d = X.shape
    if cluster.shape != (n,):
        raise SchemaError("cluster length does not match design")
    neg_loglik, G = _glmm_neg_loglik_factory(X, y, cluster, n_nodes)
    if G < 2:
        raise SchemaError("need at least 2 clusters")
    if start is not None:
        x0 = np.asarray(start, dtype=float)
        if x0.shape != (d + 1,):
            raise SchemaError("start vector must have length p + 1")
        x0 = x0.copy()
        x0[-1] = max(x0[-1], 0.05)
    else:
        glm0 = fit_logistic(X, y, names=names)
        x0 = np.concatenate([glm0.coef, [0.3]])
    bounds = [(None, None)] * d + [(0.0, None)]
    res = minimize(neg_loglik, x0, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "ftol": 1e-11, "gtol": 1e-6})
    params = res.x
    sd = float(params[-1])
    ll = -float(res.fun)
    if names is None:
        names = [f"b{j}" for j in range(d)]
    boundary = sd < _SD_BOUNDARY
    if boundary:
        glm = fit_logistic(X, y, names=names)
        return OutcomeFit(coef=glm.coef, se=glm.se, vcov=glm.vcov,
                          names=list(names), model="glmm-logit-ri",
                          loglik=glm.loglik, converged=bool(res.success),
                          n_obs=n, sigma_u=0.0, boundary=True,
                          extra={"icc": 0.0, "n_nodes": n_nodes})
    H = _numeric_hessian(neg_loglik, params)
    try:
        vcov_full = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"GLMM information not invertible: {exc}") from exc
    vcov_full = (vcov_full + vcov_full.T) / 2.0
    diag = np.diag(vcov_full)
    if np.any(diag[:d] <= 0):
        raise ConvergenceError("GLMM covariance has nonpositive variances")
    vcov = vcov_full[:d, :d]
    fit = OutcomeFit(coef=params[:d].copy(), se=np.sqrt(diag[:d]), vcov=vcov,
                     names=list(names), model="glmm-logit-ri", loglik=ll,
                     converged=bool(res.success), n_obs=n, sigma_u=sd,
                     boundary=False,
                     extra={"icc": compute_icc(sd), "n_nodes": n_nodes,
                            "sd_se": float(np.sqrt(diag[-1])) if diag[-1] > 0 else float("nan")})
    return fit


def fit_outcome(ds: Dataset, x1_full: np.ndarray, model: str,
                n_nodes=GLMM_NODES, start=None) -> OutcomeFit:
    """Fit the declared outcome model on one completed copy of the dataset."""
    X, names = analysis_design(ds, x1_full)
    if model == "glm-logit":
        if not ds.y_binary:
            raise SchemaError("glm-logit needs a binary outcome")
        return fit_logistic(X, ds.y, names=names)
    if model == "glmm-logit-ri":
        if not ds.y_binary:
            raise SchemaError("glmm-logit-ri needs a binary outcome")
        if ds.cluster is None:
            raise SchemaError("glmm-logit-ri needs a cluster column")
        return fit_logistic_random_intercept(X, ds.y, ds.cluster, names=names,
                                             n_nodes=n_nodes, start=start)
    if model == "linear":
        return fit_linear(X, ds.y, names=names)
    raise SchemaError(f"unknown model kind {model!r}")


def compute_icc(sigma_u: float) -> float:
    """Latent-logistic intraclass correlation sd^2 / (sd^2 + pi^2/3)."""
    if sigma_u < 0:
        raise SchemaError("random-intercept SD must be nonnegative")
    v = sigma_u * sigma_u
    return v / (v + np.pi * np.pi / 3.0)


def pool_rubin(fits: list) -> PooledEstimate:
    """Rubin's rules over M fits with identical coefficient layout.

    qbar is the mean estimate, W the mean squared SE, B the sample variance
    of estimates (ddof=1), T = W + (1 + 1/M) B. Classic degrees of freedom
    (M-1)(1 + W/((1+1/M)B))^2; B = 0 falls back to normal quantiles. ORs are
    attached for logit-family fits.
    """
    if len(fits) < 2:
        raise SchemaError("pooling needs at least 2 fits")
    names = fits[0].names
    model = fits[0].model
    for f in fits[1:]:
        if f.names != names or f.model != model:
            raise SchemaError("fits have mismatched coefficient layouts")
    M = len(fits)
    est = np.vstack([f.coef for f in fits])
    ses = np.vstack([f.se for f in fits])
    qbar = est.mean(axis=0)
    W = (ses * ses).mean(axis=0)
    B = est.var(axis=0, ddof=1)
    # when all copies agree bit for bit the exact pooled values are the
    # shared ones; the float mean would perturb them by rounding
    same_est = (est == est[0]).all(axis=0)
    qbar = np.where(same_est, est[0], qbar)
    B = np.where(same_est, 0.0, B)
    same_se = (ses == ses[0]).all(axis=0)
    W = np.where(same_se, ses[0] * ses[0], W)
    T = W + (1.0 + 1.0 / M) * B
    with np.errstate(divide="ignore"):
        df = np.where(B > 0,
                      (M - 1) * (1.0 + W / ((1.0 + 1.0 / M) * np.where(B > 0, B, 1.0))) ** 2,
                      np.inf)
    se = np.sqrt(T)
    tq = t_dist.ppf(0.975, df)
    ci_lo = qbar - tq * se
    ci_hi = qbar + tq * se
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.abs(qbar) / se
    p = np.where(se > 0, 2.0 * t_dist.sf(stat, df), np.where(qbar == 0, 1.0, 0.0))
    pooled = PooledEstimate(names=list(names), M=M, model=model, qbar=qbar,
                            W=W, B=B, T=T, df=df, se=se, ci_lo=ci_lo,
                            ci_hi=ci_hi, p=p)
    if model in ("glm-logit", "glmm-logit-ri"):
        pooled.odds_ratio = np.exp(qbar)
        pooled.or_lo = np.exp(ci_lo)
        pooled.or_hi = np.exp(ci_hi)
    return pooled

"""Cumulative-link ordinal regression by Newton-Raphson.

The model for codes k = 1..K with linear predictor eta = W beta (no
intercept; the K-1 strictly increasing thresholds zeta absorb it) is

    P(code <= k) = F(zeta_k - eta)

with F the probit (default) or logit link. The fitter maximises the exact
likelihood with analytic gradient and Hessian, reports the observed-information
covariance, and exposes proper-imputation parameter draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logit as logit_fn
from scipy.special import ndtri

from . import _kernels as kern
from .data import Dataset, imputation_design
from .exceptions import ConvergenceError, DrawError, SchemaError, SeparationError

_LINK_IDS = {"probit": kern.LINK_PROBIT, "logit": kern.LINK_LOGIT}

GRAD_TOL = 1e-8
MAX_ITER = 100
SEPARATION_BOUND = 30.0


@dataclass
class ParamDraw:
    """One set of ordinal model parameters (a posterior-style draw or a fit)."""

    beta: np.ndarray
    zeta: np.ndarray
    link: str
    K: int


@dataclass
class OrdinalFit:
    beta: np.ndarray          # (p,)
    zeta: np.ndarray          # (K-1,) strictly increasing
    vcov: np.ndarray          # (p+K-1, p+K-1) inverse observed information
    loglik: float
    link: str
    K: int
    names: list
    converged: bool
    n_iter: int
    n_obs: int

    def params(self) -> ParamDraw:
        return ParamDraw(beta=self.beta.copy(), zeta=self.zeta.copy(),
                         link=self.link, K=self.K)


def _check_link(link: str) -> int:
    if link not in _LINK_IDS:
        raise SchemaError(f"link must be one of {sorted(_LINK_IDS)}, got {link!r}")
    return _LINK_IDS[link]


def linear_predictor(params, W: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(W, dtype=np.float64) @ params.beta


def category_probs(params, W: np.ndarray) -> np.ndarray:
    """(n, K) matrix of category probabilities under `params`."""
    link_id = _check_link(params.link)
    eta = linear_predictor(params, W)
    if link_id == kern.LINK_PROBIT:
        from scipy.special import ndtr as F
    else:
        from scipy.special import expit as F
    cum = F(params.zeta[None, :] - eta[:, None])        # (n, K-1)
    probs = np.empty((eta.shape[0], params.K))
    probs[:, 0] = cum[:, 0]
    probs[:, 1:-1] = np.diff(cum, axis=1)
    probs[:, -1] = 1.0 - cum[:, -1]
    return np.clip(probs, 0.0, 1.0)


def _ll_grad_hess(W, codes, zeta, beta, link_id, want_hess=True):
    eta = np.ascontiguousarray(W @ beta)
    p, fa, fb, dfa, dfb = kern.cum_link_terms(
        eta, np.ascontiguousarray(zeta), codes, link_id)
    ll = float(np.log(p).sum())
    ga, gb = fa / p, fb / p
    Km1 = zeta.shape[0]
    n = W.shape[0]
    # bound-indicator blocks: row i hits upper threshold code_i, lower code_i - 1
    Ea = np.zeros((n, Km1))
    Eb = np.zeros((n, Km1))
    up = codes <= Km1
    Ea[np.flatnonzero(up), codes[up] - 1] = 1.0
    dn = codes >= 2
    Eb[np.flatnonzero(dn), codes[dn] - 2] = 1.0
    Ga = np.hstack([-W, Ea])
    Gb = np.hstack([-W, Eb])
    S = ga[:, None] * Ga - gb[:, None] * Gb
    grad = S.sum(axis=0)
    if not want_hess:
        return ll, grad, None
    H = (Ga.T @ ((dfa / p)[:, None] * Ga)
         - Gb.T @ ((dfb / p)[:, None] * Gb)
         - S.T @ S)
    return ll, grad, H


def loglik_and_gradient(W, codes, K, beta, zeta, link="probit"):
    """Exact log likelihood and gradient at (beta, zeta); order (beta, zeta)."""
    link_id = _check_link(link)
    W = np.ascontiguousarray(W, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    beta = np.asarray(beta, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if zeta.shape[0] != K - 1:
        raise SchemaError("zeta length must be K - 1")
    ll, grad, _ = _ll_grad_hess(W, codes, zeta, beta, link_id, want_hess=False)
    return ll, grad


def _init_zeta(codes, K, link_id):
    counts = np.bincount(codes, minlength=K + 1)[1:K + 1]
    cum = np.cumsum(counts)[:-1] / codes.shape[0]
    return ndtri(cum) if link_id == kern.LINK_PROBIT else logit_fn(cum)


def fit_cumulative(W, codes, K, link="probit", names=None,
                   max_iter=MAX_ITER, tol=GRAD_TOL) -> OrdinalFit:
    """Maximum likelihood fit of the cumulative link model.

    W is the (n, p) design without intercept, codes are 1..K and every
    category must occur at least once (thresholds are unidentified
    otherwise). Raises SeparationError when any parameter passes +-30 on the
    link scale and SchemaError on rank-deficient designs.
    """
    link_id = _check_link(link)
    W = np.ascontiguousarray(W, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    n, p = W.shape
    if codes.shape != (n,):
        raise SchemaError("codes length does not match design")
    if K <= 2:
        raise SchemaError("K must exceed 2")
    counts = np.bincount(codes, minlength=K + 1)
    if codes.size and (codes.min() < 1 or codes.max() > K):
        raise SchemaError("codes outside 1..K")
    if (counts[1:K + 1] == 0).any():
        empty = [k for k in range(1, K + 1) if counts[k] == 0]
        raise SchemaError(f"categories {empty} absent; thresholds unidentified")
    if p and np.linalg.matrix_rank(W) < p:
        raise SchemaError("design matrix is rank deficient")

    beta = np.zeros(p)
    zeta = _init_zeta(codes, K, link_id)
    ll, grad, H = _ll_grad_hess(W, codes, zeta, beta, link_id)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular information matrix: {exc}") from exc
        scale = 1.0
        accepted = False
        for _ in range(40):
            beta_c = beta + scale * step[:p]
            zeta_c = zeta + scale * step[p:]
            if np.all(np.diff(zeta_c) > 0):
                ll_c, grad_c, H_c = _ll_grad_hess(W, codes, zeta_c, beta_c, link_id)
                if np.isfinite(ll_c) and ll_c > ll - 1e-10:
                    beta, zeta, ll, grad, H = beta_c, zeta_c, ll_c, grad_c, H_c
                    accepted = True
                    break
            scale *= 0.5
        if not accepted:
            raise ConvergenceError("step halving failed to find an uphill step")
        bound = max(np.max(np.abs(beta), initial=0.0), np.max(np.abs(zeta)))
        if bound > SEPARATION_BOUND:
            raise SeparationError(
                f"parameter magnitude {bound:.1f} exceeds {SEPARATION_BOUND}; "
                "data are (quasi-)separated")
    else:
        converged = np.max(np.abs(grad)) < tol

    try:
        vcov = np.linalg.inv(-H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"observed information not invertible: {exc}") from exc
    vcov = (vcov + vcov.T) / 2.0
    if names is None:
        names = [f"b{j}" for j in range(p)]
    full_names = list(names) + [f"zeta_{k}" for k in range(1, K)]
    return OrdinalFit(beta=beta, zeta=zeta, vcov=vcov, loglik=ll, link=link,
                      K=K, names=full_names, converged=converged, n_iter=it,
                      n_obs=n)


def fit_imputation_model(ds: Dataset, link="probit", x1_full=None) -> OrdinalFit:
    """Fit x1 ~ Y + other covariates.

    With `x1_full` None the fit uses the observed rows only (the MAR
    imputation model); passing a completed code vector fits all rows (the
    adjustment model refit).
    """
    W, names = imputation_design(ds)
    if x1_full is None:
        obs = ~ds.miss
        return fit_cumulative(W[obs], ds.x1[obs], ds.K, link=link, names=names)
    return fit_cumulative(W, x1_full, ds.K, link=link, names=names)


def draw_params(fit: OrdinalFit, rng: np.random.Generator,
                max_tries: int = 100) -> ParamDraw:
    """Proper-imputation draw from the approximate parameter posterior.

    Samples N(theta_hat, vcov) and rejects draws whose thresholds are not
    strictly increasing. Raises DrawError after `max_tries` rejections.
    """
    p = fit.beta.shape[0]
    mean = np.concatenate([fit.beta, fit.zeta])
    for _ in range(max_tries):
        draw = rng.multivariate_normal(mean, fit.vcov, method="svd")
        zeta = draw[p:]
        if np.all(np.diff(zeta) > 0):
            return ParamDraw(beta=draw[:p], zeta=zeta, link=fit.link, K=fit.K)
    raise DrawError(f"no draw with increasing thresholds in {max_tries} tries")

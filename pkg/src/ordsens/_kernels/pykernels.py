"""Numpy reference implementation of the hot kernels.

The compiled extension in `_ckernels.pyx` mirrors these functions one for one
(same formulas, same special functions, same branch structure). Anything that
is per-row transcendental work in the inner loops of the ordinal fitter, the
Gibbs sampler or the random-intercept quadrature lives here; matrix assembly
stays in the calling modules where BLAS already does the heavy lifting.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, ndtr, ndtri

LINK_PROBIT = 0
LINK_LOGIT = 1

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
_PROB_FLOOR = 1e-300


def cum_link_terms(eta, zeta, codes, link):
    """Per-row interval terms of a cumulative link likelihood.

    For row i in category k (1-based) with linear predictor eta_i, the
    interval bounds on the link scale are a = zeta_k - eta (upper, +inf for
    k = K) and b = zeta_{k-1} - eta (lower, -inf for k = 1).

    Returns (p, fa, fb, dfa, dfb): the interval probability F(a) - F(b)
    floored at 1e-300, the density at both bounds, and the density
    derivative at both bounds (0 at infinite bounds).
    """
    zext = np.concatenate(([-np.inf], np.asarray(zeta, dtype=float), [np.inf]))
    a = zext[codes] - eta
    b = zext[codes - 1] - eta
    if link == LINK_PROBIT:
        pa, pb = ndtr(a), ndtr(b)
        with np.errstate(invalid="ignore"):
            fa = np.where(np.isfinite(a), np.exp(-0.5 * a * a) * _INV_SQRT_2PI, 0.0)
            fb = np.where(np.isfinite(b), np.exp(-0.5 * b * b) * _INV_SQRT_2PI, 0.0)
            dfa = np.where(np.isfinite(a), -a * fa, 0.0)
            dfb = np.where(np.isfinite(b), -b * fb, 0.0)
    elif link == LINK_LOGIT:
        pa, pb = expit(a), expit(b)
        fa = pa * (1.0 - pa)
        fb = pb * (1.0 - pb)
        dfa = fa * (1.0 - 2.0 * pa)
        dfb = fb * (1.0 - 2.0 * pb)
    else:
        raise ValueError(f"unknown link id {link}")
    p = np.maximum(pa - pb, _PROB_FLOOR)
    return p, fa, fb, dfa, dfb


def truncnorm_unit(mu, lo, hi, u):
    """Inverse-CDF draws from N(mu, 1) truncated to (lo, hi].

    `u` supplies the uniforms (one per element), so the caller controls the
    stream. Intervals lying entirely above the mean are reflected into the
    lower tail first, where ndtr keeps precision down to ~1e-300; results are
    clamped into the interval to absorb quantile round-off.
    """
    mu = np.asarray(mu, dtype=float)
    refl = (lo - mu) >= 0.0
    mu2 = np.where(refl, -mu, mu)
    lo2 = np.where(refl, -hi, lo)
    hi2 = np.where(refl, -lo, hi)
    u2 = np.where(refl, 1.0 - u, u)
    plo = ndtr(lo2 - mu2)
    phi = ndtr(hi2 - mu2)
    p = plo + u2 * (phi - plo)
    p = np.clip(p, _PROB_FLOOR, 1.0 - 1e-16)
    x = mu2 + ndtri(p)
    x = np.where(refl, -x, x)
    return np.clip(x, lo, hi)


def classify_smallest_k(theta, zeta_star):
    """Assign each latent value the smallest category k with theta <= zeta*_k.

    zeta_star need not be sorted (threshold shifts can break monotonicity);
    values exceeding every threshold land in category K. Returns 1-based
    int64 codes.
    """
    theta = np.asarray(theta, dtype=float)
    zs = np.asarray(zeta_star, dtype=float)
    K = zs.size + 1
    hit = theta[:, None] <= zs[None, :]
    any_hit = hit.any(axis=1)
    first = hit.argmax(axis=1)
    return np.where(any_hit, first + 1, K).astype(np.int64)


def _softplus(z):
    # log(1 + exp(z)) without overflow, matching np.logaddexp(0, z)
    return np.logaddexp(0.0, z)


def bern_loglik_sums(z, y, starts):
    """Per-cluster Bernoulli log likelihood sums for a matrix of predictors.

    z is (n, J) linear predictors (rows sorted by cluster), y is (n,) in
    {0, 1}, starts holds each cluster's first row index. Returns the (G, J)
    matrix of within-cluster sums of y*z - log(1 + exp(z)).
    """
    terms = y[:, None] * z - _softplus(z)
    return np.add.reduceat(terms, starts, axis=0)


def bern_score_info(z, y, starts):
    """Per-cluster score and information sums of a Bernoulli log likelihood.

    Returns (score, info): within-cluster sums of (y - p) and p*(1 - p)
    where p = expit(z). Used by the per-cluster mode search.
    """
    p = expit(z)
    score = np.add.reduceat(y - p, starts)
    info = np.add.reduceat(p * (1.0 - p), starts)
    return score, info

"""MAR multiple imputation of the ordinal covariate.

Two engines produce an ImputationSet of M completed x1 columns:

* impute_mar_flat: proper single-level MI. One ordinal fit on the observed
  rows, then per copy a parameter draw from the approximate posterior and a
  categorical draw per missing row.
* impute_mar_hier: cluster random-intercept MI via a latent-probit Gibbs
  sampler (truncated-normal latents, conjugate normal cluster intercepts,
  uniform threshold updates). Imputations are taken from one chain after
  burn-in, `between` sweeps apart.

Flat per-row draws are keyed by row content (see streams.row_uniform), so an
imputed value depends only on the row's own (Y, covariates, cluster) and the
copy's parameter draw, not on where the row sits in the file.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from . import _kernels as kern
from . import streams
from .data import Dataset, imputation_design
from .exceptions import ConvergenceError, DivergenceError, SchemaError
from .ordinal import category_probs, draw_params, fit_imputation_model


@dataclass
class GibbsConfig:
    burn_in: int = 1000
    between: int = 100
    seed: int | None = None
    divergence_bound: float = 40.0

    def __post_init__(self):
        if self.burn_in < 0:
            raise SchemaError("burn_in must be >= 0")
        if self.between < 1:
            raise SchemaError("between must be >= 1")
        if self.divergence_bound <= 0:
            raise SchemaError("divergence_bound must be positive")


@dataclass
class ImputationSet:
    """M completed x1 columns; observed entries identical across copies."""

    codes: np.ndarray          # (M, n) int64 complete columns
    miss: np.ndarray           # (n,) bool mask copied from the dataset
    M: int
    method: str                # "flat" | "hierarchical"
    link: str
    seed: int
    provenance: list = field(default_factory=list)

    def imputed_block(self) -> np.ndarray:
        """(M, n_missing) view of the imputed entries only."""
        return self.codes[:, self.miss]

    def check_against(self, ds: Dataset):
        if self.codes.shape != (self.M, ds.n) or not np.array_equal(self.miss, ds.miss):
            raise SchemaError("imputation set does not match dataset")
        if np.any(self.codes[:, ~ds.miss] != ds.x1[~ds.miss]):
            raise SchemaError("observed entries differ from the dataset")
        blk = self.imputed_block()
        if blk.size and (blk.min() < 1 or blk.max() > ds.K):
            raise SchemaError("imputed codes outside 1..K")


def _content_fields(ds: Dataset, row: int) -> tuple:
    cl = int(ds.cluster[row]) if ds.cluster is not None else 0
    return (float(ds.y[row]), *(int(v) for v in ds.covs[row]), cl)


def _occurrences(contents) -> np.ndarray:
    seen: dict = {}
    occ = np.zeros(len(contents), dtype=np.int64)
    for j, key in enumerate(contents):
        occ[j] = seen.get(key, 0)
        seen[key] = occ[j] + 1
    return occ


def impute_mar_flat(ds: Dataset, M: int, seed: int, link: str = "probit") -> ImputationSet:
    """Proper MI under MAR with a single-level ordinal imputation model."""
    if M < 2:
        raise SchemaError("M must be at least 2")
    fit = fit_imputation_model(ds, link=link)
    if not fit.converged:
        raise ConvergenceError("imputation model did not converge")
    W, _ = imputation_design(ds)
    mis = np.flatnonzero(ds.miss)
    Wmis = W[mis]
    contents = [_content_fields(ds, int(i)) for i in mis]
    occ = _occurrences(contents)
    codes = np.tile(ds.x1, (M, 1))
    prov = []
    for m in range(1, M + 1):
        rng = streams.substream(seed, streams.IMPUTE, m)
        draw = draw_params(fit, rng)
        if mis.size:
            cum = np.cumsum(category_probs(draw, Wmis), axis=1)
            u = np.array([streams.row_uniform(seed, (streams.IMPUTE, m),
                                              contents[j] + (int(occ[j]),))
                          for j in range(mis.size)])
            codes[m - 1, mis] = 1 + (u[:, None] > cum[:, :-1]).sum(axis=1)
        prov.append({"copy": m, "stream": ["impute", m],
                     "beta": draw.beta.tolist(), "zeta": draw.zeta.tolist()})
    return ImputationSet(codes=codes, miss=ds.miss.copy(), M=M, method="flat",
                         link=link, seed=seed, provenance=prov)


def impute_mar_hier(ds: Dataset, M: int, config: GibbsConfig | None = None,
                    seed: int | None = None) -> ImputationSet:
    """Cluster random-intercept MI via a latent-probit Gibbs sampler.

    Latent residual variance is fixed at 1 (probit identification). The
    cluster intercept variance gets an inverse-gamma(0.5, 0.5) prior. The
    chain is initialized from the flat ordinal fit on observed rows.
    """
    config = config or GibbsConfig()
    if seed is None:
        seed = config.seed
    if seed is None:
        raise SchemaError("a seed is required (argument or GibbsConfig.seed)")
    if M < 2:
        raise SchemaError("M must be at least 2")
    if ds.cluster is None or ds.n_clusters < 2:
        raise SchemaError("hierarchical imputation needs a cluster column with G >= 2")
    obs = ~ds.miss
    cat_rows = [np.flatnonzero(obs & (ds.x1 == k)) for k in range(1, ds.K + 1)]
    if any(rows.size == 0 for rows in cat_rows):
        raise SchemaError("every category must be observed at least once")

    init = fit_imputation_model(ds, link="probit")
    if not init.converged:
        raise ConvergenceError("initialization fit did not converge")
    W, _ = imputation_design(ds)
    n, p = W.shape
    G = ds.n_clusters
    clus0 = ds.cluster - 1
    n_g = np.bincount(clus0, minlength=G).astype(float)
    # fixed-effect update is conjugate given latents; factor W'W once
    L = cholesky(W.T @ W, lower=True)

    beta = init.beta.copy()
    zeta = init.zeta.copy()
    u = np.zeros(G)
    tau2 = 1.0
    rng = streams.substream(seed, streams.IMPUTE)
    mis_idx = np.flatnonzero(ds.miss)
    out = np.tile(ds.x1, (M, 1))
    prov = [{"init_beta": beta.tolist(), "init_zeta": zeta.tolist(),
             "config": asdict(config)}]
    total = config.burn_in + config.between * M
    taken = 0
    for sweep in range(1, total + 1):
        eta = W @ beta
        mu = np.ascontiguousarray(eta + u[clus0])
        zext = np.concatenate(([-np.inf], zeta, [np.inf]))
        lo = np.where(ds.miss, -np.inf, zext[np.maximum(ds.x1 - 1, 0)])
        hi = np.where(ds.miss, np.inf, zext[ds.x1])
        theta = kern.truncnorm_unit(mu, np.ascontiguousarray(lo),
                                    np.ascontiguousarray(hi), rng.random(n))
        peak = float(np.abs(theta).max())
        if peak > config.divergence_bound:
            raise DivergenceError(
                f"latent magnitude {peak:.1f} exceeded {config.divergence_bound} "
                f"at sweep {sweep}")
        resid = theta - eta
        prec = n_g + 1.0 / tau2
        u = (np.bincount(clus0, weights=resid, minlength=G) / prec
             + rng.standard_normal(G) / np.sqrt(prec))
        tau2 = 1.0 / rng.gamma(0.5 + G / 2.0, 1.0 / (0.5 + 0.5 * float(u @ u)))
        mean_beta = cho_solve((L, True), W.T @ (theta - u[clus0]))
        beta = mean_beta + solve_triangular(L.T, rng.standard_normal(p), lower=False)
        new_zeta = np.empty(ds.K - 1)
        for k in range(ds.K - 1):
            lo_k = theta[cat_rows[k]].max()
            hi_k = theta[cat_rows[k + 1]].min()
            new_zeta[k] = lo_k + rng.random() * (hi_k - lo_k)
        zeta = new_zeta
        if sweep > config.burn_in and (sweep - config.burn_in) % config.between == 0:
            taken += 1
            if mis_idx.size:
                out[taken - 1, mis_idx] = kern.classify_smallest_k(
                    np.ascontiguousarray(theta[mis_idx]), zeta)
            prov.append({"copy": taken, "sweep": sweep})
            if taken == M:
                break
    return ImputationSet(codes=out, miss=ds.miss.copy(), M=M,
                         method="hierarchical", link="probit", seed=seed,
                         provenance=prov)

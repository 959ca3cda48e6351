"""Shared builders for small synthetic datasets."""

import numpy as np
import pytest
from scipy.special import expit

from ordsens.data import Dataset


def synth_flat(n=400, K=4, seed=0, miss=0.25, y_type="binary"):
    """One-covariate dataset with x1 mildly predictive of y and MCAR holes.

    Every ordinal category is forced to appear among observed rows so the
    cumulative fit is identified.
    """
    rng = np.random.default_rng(seed)
    x2 = rng.integers(1, 4, size=n).astype(np.int64)
    x1 = rng.integers(1, K + 1, size=n).astype(np.int64)
    eta = -0.4 + 0.5 * (x1 - (K + 1) / 2.0) + 0.3 * (x2 - 2)
    if y_type == "binary":
        y = (rng.uniform(size=n) < expit(eta)).astype(np.float64)
    else:
        y = eta + rng.normal(size=n)
    m = rng.uniform(size=n) < miss
    for k in range(1, K + 1):           # keep each category observed somewhere
        rows = np.flatnonzero((x1 == k) & ~m)
        if rows.size == 0:
            m[np.flatnonzero(x1 == k)[0]] = False
    x1m = x1.copy()
    x1m[m] = 0
    return Dataset(y=y, x1=x1m, miss=m, K=K, covs=x2[:, None],
                   cov_names=("X2",), cov_levels=(3,),
                   y_binary=(y_type == "binary"))


def synth_clustered(n_clusters=8, cluster_size=60, K=3, seed=0, miss=0.25,
                    u_sd=0.5):
    rng = np.random.default_rng(seed)
    n = n_clusters * cluster_size
    cluster = np.repeat(np.arange(1, n_clusters + 1, dtype=np.int64),
                        cluster_size)
    u = u_sd * rng.normal(size=n_clusters)
    x2 = rng.integers(1, 4, size=n).astype(np.int64)
    x1 = rng.integers(1, K + 1, size=n).astype(np.int64)
    eta = -0.3 + 0.5 * (x1 - (K + 1) / 2.0) + 0.2 * (x2 - 2) + u[cluster - 1]
    y = (rng.uniform(size=n) < expit(eta)).astype(np.float64)
    m = rng.uniform(size=n) < miss
    for k in range(1, K + 1):
        rows = np.flatnonzero((x1 == k) & ~m)
        if rows.size == 0:
            m[np.flatnonzero(x1 == k)[0]] = False
    x1m = x1.copy()
    x1m[m] = 0
    return Dataset(y=y, x1=x1m, miss=m, K=K, covs=x2[:, None],
                   cov_names=("X2",), cov_levels=(3,),
                   cluster=cluster, n_clusters=n_clusters)


@pytest.fixture
def flat_ds():
    return synth_flat()


@pytest.fixture
def clustered_ds():
    return synth_clustered()

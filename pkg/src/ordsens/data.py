"""Dataset container, schema checks and CSV round-trips.

The data model is deliberately narrow: one ordinal covariate x1 (integer
codes 1..K) that may be missing, an outcome Y (binary or continuous), any
number of nominal covariates with dense 1-based codes, and an optional
cluster id column. Only x1 may contain missing entries; the missing token in
CSV files is an empty field or the string NA.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import SchemaError

MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class StratumKey:
    """A stratum is one level of one variable (nominal covariate or cluster)."""

    var: str
    level: int

    def label(self) -> str:
        return f"{self.var}={self.level}"


@dataclass
class Dataset:
    y: np.ndarray                 # (n,) float64; values in {0,1} when y_binary
    x1: np.ndarray                # (n,) int64 codes 1..K; 0 where missing
    miss: np.ndarray              # (n,) bool, True where x1 is unobserved
    K: int
    covs: np.ndarray              # (n, C) int64 nominal codes, 1-based
    cov_names: tuple = ()
    cov_levels: tuple = ()
    y_binary: bool = True
    cluster: np.ndarray | None = None   # (n,) int64 codes 1..G, or None
    n_clusters: int = 0

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.x1 = np.ascontiguousarray(self.x1, dtype=np.int64)
        self.miss = np.ascontiguousarray(self.miss, dtype=bool)
        self.covs = np.ascontiguousarray(self.covs, dtype=np.int64)
        if self.covs.ndim != 2:
            self.covs = self.covs.reshape(len(self.y), -1)
        if self.cluster is not None:
            self.cluster = np.ascontiguousarray(self.cluster, dtype=np.int64)
        n = self.y.shape[0]
        if not (self.x1.shape == (n,) and self.miss.shape == (n,)
                and self.covs.shape[0] == n):
            raise SchemaError("column lengths differ")
        if self.K <= 2:
            raise SchemaError(f"K must exceed 2, got {self.K}")
        if np.any(self.x1[self.miss] != 0):
            raise SchemaError("missing entries must carry code 0")
        obs = self.x1[~self.miss]
        if obs.size and (obs.min() < 1 or obs.max() > self.K):
            raise SchemaError("observed x1 codes outside 1..K")
        if self.y_binary and not np.isin(self.y, (0.0, 1.0)).all():
            raise SchemaError("binary outcome must be coded 0/1")
        if not np.isfinite(self.y).all():
            raise SchemaError("outcome contains non-finite values")
        if len(self.cov_names) != self.covs.shape[1]:
            raise SchemaError("cov_names does not match covariate count")
        if not self.cov_levels:
            self.cov_levels = tuple(
                int(self.covs[:, j].max()) if n else 0
                for j in range(self.covs.shape[1]))
        for j, L in enumerate(self.cov_levels):
            col = self.covs[:, j]
            if n and (col.min() < 1 or col.max() > L):
                raise SchemaError(f"covariate {self.cov_names[j]} codes outside 1..{L}")
        if self.cluster is not None:
            if self.cluster.shape != (n,):
                raise SchemaError("cluster column length differs")
            if not self.n_clusters:
                self.n_clusters = int(self.cluster.max()) if n else 0
            if n and (self.cluster.min() < 1 or self.cluster.max() > self.n_clusters):
                raise SchemaError("cluster codes outside 1..G")
            if n and self.n_clusters < 2:
                raise SchemaError("need at least 2 clusters")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_missing(self) -> int:
        return int(self.miss.sum())

    def x1_observed(self) -> np.ndarray:
        return self.x1[~self.miss]

    def complete_with(self, codes_for_missing: np.ndarray) -> np.ndarray:
        """Full x1 vector with `codes_for_missing` filled into missing slots."""
        out = self.x1.copy()
        out[self.miss] = codes_for_missing
        return out

    def drop_missing(self) -> "Dataset":
        """Complete-case subset (rows with observed x1)."""
        keep = ~self.miss
        return replace(
            self,
            y=self.y[keep], x1=self.x1[keep], miss=self.miss[keep],
            covs=self.covs[keep],
            cluster=None if self.cluster is None else self.cluster[keep],
            n_clusters=0 if self.cluster is None else self.n_clusters,
        )


def resolve_stratum_var(ds: Dataset, var: str):
    """Return (codes, n_levels) for a stratum variable name.

    Valid names are the nominal covariates and the literal "cluster".
    """
    if var == "cluster":
        if ds.cluster is None:
            raise SchemaError("dataset has no cluster column")
        return ds.cluster, ds.n_clusters
    if var in ds.cov_names:
        j = ds.cov_names.index(var)
        return ds.covs[:, j], ds.cov_levels[j]
    raise SchemaError(f"unknown stratum variable {var!r}")


def missing_rate(ds: Dataset, by: str | None = None):
    """Overall missing proportion of x1, or a per-level dict when `by` is set."""
    if by is None:
        return float(ds.miss.mean())
    codes, L = resolve_stratum_var(ds, by)
    return {lev: float(ds.miss[codes == lev].mean()) for lev in range(1, L + 1)}


def dummies(codes: np.ndarray, levels: int) -> np.ndarray:
    """Treatment-coded indicator columns for levels 2..`levels` (1 is reference)."""
    out = np.zeros((codes.shape[0], levels - 1), dtype=np.float64)
    for lev in range(2, levels + 1):
        out[:, lev - 2] = codes == lev
    return out


def imputation_design(ds: Dataset):
    """Design matrix of the imputation model x1 ~ Y + other covariates.

    No intercept column: the cumulative-link thresholds absorb it. Returns
    (W, names) with the outcome first and dummy-coded covariates after it.
    """
    cols = [ds.y[:, None]]
    names = ["Y"]
    for j, name in enumerate(ds.cov_names):
        cols.append(dummies(ds.covs[:, j], ds.cov_levels[j]))
        names.extend(f"{name}={lev}" for lev in range(2, ds.cov_levels[j] + 1))
    return np.ascontiguousarray(np.hstack(cols)), names


def analysis_design(ds: Dataset, x1_full: np.ndarray):
    """Design matrix of the outcome model Y ~ x1 + other covariates.

    x1 and the nominal covariates are dummy coded with category 1 as
    reference; an intercept column comes first. `x1_full` must be a completed
    code vector (no zeros).
    """
    if np.any(x1_full < 1):
        raise SchemaError("analysis design needs a completed x1 vector")
    cols = [np.ones((ds.n, 1)), dummies(x1_full, ds.K)]
    names = ["(intercept)"] + [f"X1={lev}" for lev in range(2, ds.K + 1)]
    for j, name in enumerate(ds.cov_names):
        cols.append(dummies(ds.covs[:, j], ds.cov_levels[j]))
        names.extend(f"{name}={lev}" for lev in range(2, ds.cov_levels[j] + 1))
    return np.ascontiguousarray(np.hstack(cols)), names


def _parse_cell(text: str, column: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise SchemaError(f"non-numeric value {text!r} in column {column}, "
                          f"row {row}") from None


def load_csv(path, schema: dict) -> Dataset:
    """Read a dataset from CSV under a schema dict.

    Schema keys: y, x1 (column names), k (category count), y_type
    ("binary" or "continuous"), covariates (list of column names, optional),
    cluster (column name, optional). Missing x1 cells are empty or NA;
    missing values anywhere else are rejected.
    """
    for key in ("y", "x1", "k"):
        if key not in schema:
            raise SchemaError(f"schema is missing required key {key!r}")
    y_name, x1_name = schema["y"], schema["x1"]
    K = int(schema["k"])
    cov_names = list(schema.get("covariates", ()))
    cluster_name = schema.get("cluster")
    y_binary = schema.get("y_type", "binary") == "binary"

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        wanted = [y_name, x1_name] + cov_names + ([cluster_name] if cluster_name else [])
        for name in wanted:
            if name not in header:
                raise SchemaError(f"{path}: column {name!r} not found")
        idx = {name: header.index(name) for name in wanted}
        rows = list(reader)

    n = len(rows)
    if n == 0:
        raise SchemaError(f"{path}: no data rows")
    y = np.empty(n)
    x1 = np.zeros(n, dtype=np.int64)
    miss = np.zeros(n, dtype=bool)
    covs = np.zeros((n, len(cov_names)), dtype=np.int64)
    cluster = np.zeros(n, dtype=np.int64) if cluster_name else None
    for i, row in enumerate(rows):
        cells = {name: row[j].strip() for name, j in idx.items()}
        if cells[x1_name] in MISSING_TOKENS:
            miss[i] = True
        else:
            x1[i] = _int_cell(cells[x1_name], x1_name, i)
        for name in wanted:
            if name != x1_name and cells[name] in MISSING_TOKENS:
                raise SchemaError(f"missing value in column {name}, row {i}; "
                                  "only x1 may be missing")
        y[i] = _parse_cell(cells[y_name], y_name, i)
        for j, name in enumerate(cov_names):
            covs[i, j] = _int_cell(cells[name], name, i)
        if cluster is not None:
            cluster[i] = _int_cell(cells[cluster_name], cluster_name, i)

    obs = x1[~miss]
    present = np.unique(obs)
    if not np.array_equal(present, np.arange(1, K + 1)):
        raise SchemaError(f"{path}: observed x1 categories {present.tolist()} "
                          f"are not dense 1..{K}")
    for j, name in enumerate(cov_names):
        lev = np.unique(covs[:, j])
        if not np.array_equal(lev, np.arange(1, lev.max() + 1)):
            raise SchemaError(f"{path}: covariate {name} codes are not dense 1-based")
    if cluster is not None:
        lev = np.unique(cluster)
        if not np.array_equal(lev, np.arange(1, lev.max() + 1)):
            raise SchemaError(f"{path}: cluster codes are not dense 1-based")
    return Dataset(y=y, x1=x1, miss=miss, K=K, covs=covs,
                   cov_names=tuple(cov_names),
                   cov_levels=tuple(int(covs[:, j].max()) for j in range(covs.shape[1])),
                   y_binary=y_binary, cluster=cluster,
                   n_clusters=int(cluster.max()) if cluster is not None else 0)


def _int_cell(text: str, column: str, row: int) -> int:
    val = _parse_cell(text, column, row)
    if val != int(val):
        raise SchemaError(f"column {column}, row {row}: {text!r} is not an integer code")
    return int(val)


def _format_y(val: float, binary: bool) -> str:
    return str(int(val)) if binary else repr(float(val))


def write_csv(ds: Dataset, path, y_name="Y", x1_name="X1", cluster_name="cluster"):
    """Write a dataset; missing x1 cells become NA. Returns the schema dict."""
    header = [y_name, x1_name] + list(ds.cov_names)
    if ds.cluster is not None:
        header.append(cluster_name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(ds.n):
            row = [_format_y(ds.y[i], ds.y_binary),
                   "NA" if ds.miss[i] else str(int(ds.x1[i]))]
            row += [str(int(v)) for v in ds.covs[i]]
            if ds.cluster is not None:
                row.append(str(int(ds.cluster[i])))
            w.writerow(row)
    schema = {"y": y_name, "x1": x1_name, "k": ds.K,
              "y_type": "binary" if ds.y_binary else "continuous",
              "covariates": list(ds.cov_names)}
    if ds.cluster is not None:
        schema["cluster"] = cluster_name
    return schema


def write_long_imputations(path, miss_rows: np.ndarray, codes: np.ndarray):
    """Write imputed codes in long form: one (imputation, row, x1) line per entry."""
    codes = np.asarray(codes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["imputation", "row", "x1"])
        for m in range(codes.shape[0]):
            for r, c in zip(miss_rows, codes[m]):
                w.writerow([m + 1, int(r), int(c)])


def read_long_imputations(path):
    """Inverse of write_long_imputations. Returns (miss_rows, codes (M, n_mis))."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["imputation", "row", "x1"]:
            raise SchemaError(f"{path}: not a long-form imputation file")
        recs = [(int(m), int(r), int(c)) for m, r, c in reader]
    if not recs:
        raise SchemaError(f"{path}: no imputed entries")
    M = max(m for m, _, _ in recs)
    first = sorted(r for m, r, _ in recs if m == 1)
    rows = np.asarray(first, dtype=np.int64)
    pos = {r: i for i, r in enumerate(first)}
    codes = np.zeros((M, len(first)), dtype=np.int64)
    seen = np.zeros((M, len(first)), dtype=bool)
    for m, r, c in recs:
        if r not in pos:
            raise SchemaError(f"{path}: row {r} absent from imputation 1")
        codes[m - 1, pos[r]] = c
        seen[m - 1, pos[r]] = True
    if not seen.all():
        raise SchemaError(f"{path}: imputations do not cover the same rows")
    return rows, codes

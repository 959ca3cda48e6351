"""Synthetic data designs, outcome-dependent masking and the Monte Carlo loop.

A ScenarioConfig bundles everything one simulation study needs: the data
generating process, the masking rules that create missingness in x1, the
threshold-shift scenarios to compare against MAR, and the replication
counts. `run_monte_carlo` executes the full pipeline per replication
(generate, mask, impute, adjust, analyze, pool) and aggregates relative
bias, empirical SD and CI coverage per method.

All randomness is derived from the master seed and the replication index,
so reports are reproducible bit for bit regardless of worker count.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .adjust import DeltaSpec, adjust
from .analyze import fit_outcome, pool_rubin
from .data import Dataset, StratumKey, resolve_stratum_var
from .exceptions import (ConvergenceError, DivergenceError, DrawError,
                         SchemaError, SeparationError)
from .impute import GibbsConfig, impute_mar_flat, impute_mar_hier
from .ordinal import fit_imputation_model
from .streams import GENERATE, IMPUTE, MASK, REPLICATE, child_seed, substream

DESIGNS = ("nonhier-extreme", "hier-extreme",
           "nonhier-intermediate", "nonhier-continuous")

_OUTCOME_CONDITIONS = ("y=1", "y=0", "y>0", "y<0")

# condition pairs that can never select the same row
_DISJOINT = {("y=1", "y=0"), ("y=1", "y<0"), ("y=0", "y>0"),
             ("y=0", "y<0"), ("y>0", "y<0")}

_Z975 = float(norm.ppf(0.975))

_REP_ERRORS = (ConvergenceError, DivergenceError, DrawError,
               SchemaError, SeparationError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class MnarRule:
    """One masking rule: hide `prop` of the x1 cells equal to `category`
    among rows satisfying the outcome condition (optionally within one
    stratum)."""

    outcome: str                    # "y=1" | "y=0" | "y>0" | "y<0"
    category: int
    prop: float
    stratum: StratumKey | None = None

    def __post_init__(self):
        if self.outcome not in _OUTCOME_CONDITIONS:
            raise SchemaError(f"unknown outcome condition {self.outcome!r}")
        if not 0.0 <= self.prop <= 1.0:
            raise SchemaError("masking proportion must lie in [0, 1]")
        if self.category < 1:
            raise SchemaError("rule category must be a positive code")

    def eligible(self, ds: Dataset) -> np.ndarray:
        if self.outcome == "y=1":
            cond = ds.y == 1.0
        elif self.outcome == "y=0":
            cond = ds.y == 0.0
        elif self.outcome == "y>0":
            cond = ds.y > 0.0
        else:
            cond = ds.y < 0.0
        cond = cond & (ds.x1 == self.category)
        if self.stratum is not None:
            codes, _ = resolve_stratum_var(ds, self.stratum.var)
            cond = cond & (codes == self.stratum.level)
        return cond

    def to_json_obj(self) -> dict:
        obj = {"outcome": self.outcome, "category": self.category,
               "prop": self.prop}
        if self.stratum is not None:
            obj["stratum"] = self.stratum.label()
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MnarRule":
        stratum = None
        if obj.get("stratum") is not None:
            label = str(obj["stratum"])
            if "=" not in label:
                raise SchemaError(f"stratum label {label!r} is not VAR=LEVEL")
            var, _, lev = label.partition("=")
            stratum = StratumKey(var, int(lev))
        return cls(outcome=str(obj["outcome"]), category=int(obj["category"]),
                   prop=float(obj["prop"]), stratum=stratum)


def _rules_may_overlap(a: MnarRule, b: MnarRule) -> bool:
    if a.category != b.category:
        return False
    if (a.outcome, b.outcome) in _DISJOINT or (b.outcome, a.outcome) in _DISJOINT:
        return False
    if (a.stratum is not None and b.stratum is not None
            and a.stratum.var == b.stratum.var
            and a.stratum.level != b.stratum.level):
        return False
    return True


def apply_mnar(ds: Dataset, rules, rng: np.random.Generator,
               exact: bool = False) -> Dataset:
    """Mask x1 entries according to `rules` and return the masked dataset.

    Each rule draws independently over its eligible cells (Bernoulli by
    default; `exact` hides a fixed rounded count via subsampling). Rules
    whose cells could coincide are rejected up front, so the masked
    proportion per rule is exactly what the rule says.
    """
    if ds.n_missing:
        raise SchemaError("masking expects a complete dataset")
    rules = tuple(rules)
    for r in rules:
        if r.category > ds.K:
            raise SchemaError(f"rule category {r.category} exceeds K={ds.K}")
        if r.stratum is not None:
            codes, n_lev = resolve_stratum_var(ds, r.stratum.var)
            if not 1 <= r.stratum.level <= n_lev:
                raise SchemaError(
                    f"stratum {r.stratum.label()} has no such level")
    for i in range(len(rules)):
        for j in range(i + 1, len(rules)):
            if _rules_may_overlap(rules[i], rules[j]):
                raise SchemaError(
                    f"masking rules {i} and {j} can select the same cells")
    miss = np.zeros(ds.n, dtype=bool)
    for r in rules:
        idx = np.flatnonzero(r.eligible(ds))
        if idx.size == 0:
            continue
        if exact:
            k = int(round(r.prop * idx.size))
            sel = idx[rng.permutation(idx.size)[:k]]
        else:
            sel = idx[rng.random(idx.size) < r.prop]
        miss[sel] = True
    x1 = ds.x1.copy()
    x1[miss] = 0
    return replace(ds, x1=x1, miss=miss)


@dataclass
class ScenarioConfig:
    """Full description of one simulation scenario."""

    name: str
    design: str
    n: int
    K: int
    y_type: str                      # "binary" | "continuous"
    beta0: float
    beta_x1: tuple                   # length K, reference entry 0
    beta_x2: tuple                   # length x2_levels, reference entry 0
    x1_logits: tuple                 # x2_levels rows of K multinomial logits
    x2_levels: int = 4
    model: str = "glm-logit"         # outcome model for analysis
    link: str = "probit"             # imputation model link
    R: int = 100
    M: int = 10
    seed: int = 0                    # default master seed, CLI may override
    mnar_rules: tuple = ()
    delta_scenarios: dict = field(default_factory=dict)
    n_clusters: int = 0
    cluster_size: int = 0
    u_sd: float = 0.0
    gibbs_burn_in: int = 1000
    gibbs_between: int = 100
    exact_mask: bool = False

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise SchemaError(f"unknown design {self.design!r}")
        if self.y_type not in ("binary", "continuous"):
            raise SchemaError(f"unknown y_type {self.y_type!r}")
        if self.K <= 2:
            raise SchemaError("K must exceed 2")
        self.beta_x1 = tuple(float(v) for v in self.beta_x1)
        self.beta_x2 = tuple(float(v) for v in self.beta_x2)
        if len(self.beta_x1) != self.K or self.beta_x1[0] != 0.0:
            raise SchemaError("beta_x1 must have length K with leading 0")
        if len(self.beta_x2) != self.x2_levels or self.beta_x2[0] != 0.0:
            raise SchemaError("beta_x2 must have length x2_levels with leading 0")
        self.x1_logits = tuple(tuple(float(v) for v in row)
                               for row in self.x1_logits)
        if (len(self.x1_logits) != self.x2_levels
                or any(len(row) != self.K for row in self.x1_logits)):
            raise SchemaError("x1_logits must be x2_levels rows of K values")
        if self.is_hier:
            if self.n != self.n_clusters * self.cluster_size:
                raise SchemaError("n must equal n_clusters * cluster_size")
            if self.model != "glmm-logit-ri":
                raise SchemaError("hierarchical designs use glmm-logit-ri")
        if self.y_type == "continuous" and self.model != "linear":
            raise SchemaError("continuous outcomes use the linear model")
        self.mnar_rules = tuple(self.mnar_rules)
        for name, spec in self.delta_scenarios.items():
            if not isinstance(spec, DeltaSpec):
                raise SchemaError(f"scenario {name!r} is not a DeltaSpec")

    @property
    def is_hier(self) -> bool:
        return self.n_clusters > 0

    def coef_names(self) -> tuple:
        return ("(intercept)",
                *(f"X1={k}" for k in range(2, self.K + 1)),
                *(f"X2={l}" for l in range(2, self.x2_levels + 1)))

    def true_coef(self) -> np.ndarray:
        return np.concatenate(([self.beta0],
                               self.beta_x1[1:], self.beta_x2[1:]))

    def method_names(self) -> tuple:
        return ("SIMULATED", "CC", "MAR", *self.delta_scenarios)

    def to_json_obj(self) -> dict:
        obj = {
            "name": self.name, "design": self.design, "n": self.n,
            "K": self.K, "y_type": self.y_type, "beta0": self.beta0,
            "beta_x1": list(self.beta_x1), "beta_x2": list(self.beta_x2),
            "x2_levels": self.x2_levels,
            "x1_logits": [list(r) for r in self.x1_logits],
            "model": self.model, "link": self.link,
            "R": self.R, "M": self.M, "seed": self.seed,
            "mnar_rules": [r.to_json_obj() for r in self.mnar_rules],
            "delta_scenarios": {k: v.to_json_obj()
                                for k, v in self.delta_scenarios.items()},
            "exact_mask": self.exact_mask,
        }
        if self.is_hier:
            obj["hier"] = {"n_clusters": self.n_clusters,
                           "cluster_size": self.cluster_size,
                           "u_sd": self.u_sd,
                           "gibbs_burn_in": self.gibbs_burn_in,
                           "gibbs_between": self.gibbs_between}
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioConfig":
        hier = obj.get("hier") or {}
        return cls(
            name=str(obj["name"]), design=str(obj["design"]),
            n=int(obj["n"]), K=int(obj["K"]), y_type=str(obj["y_type"]),
            beta0=float(obj["beta0"]),
            beta_x1=obj["beta_x1"], beta_x2=obj["beta_x2"],
            x1_logits=obj["x1_logits"],
            x2_levels=int(obj.get("x2_levels", len(obj["beta_x2"]))),
            model=str(obj.get("model", "glm-logit")),
            link=str(obj.get("link", "probit")),
            R=int(obj.get("R", 100)), M=int(obj.get("M", 10)),
            seed=int(obj.get("seed", 0)),
            mnar_rules=tuple(MnarRule.from_json_obj(r)
                             for r in obj.get("mnar_rules", ())),
            delta_scenarios={str(k): DeltaSpec.from_json_obj(v)
                             for k, v in obj.get("delta_scenarios", {}).items()},
            n_clusters=int(hier.get("n_clusters", 0)),
            cluster_size=int(hier.get("cluster_size", 0)),
            u_sd=float(hier.get("u_sd", 0.0)),
            gibbs_burn_in=int(hier.get("gibbs_burn_in", 1000)),
            gibbs_between=int(hier.get("gibbs_between", 100)),
            exact_mask=bool(obj.get("exact_mask", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_json_obj(json.loads(text))


def _categorical(rng: np.random.Generator, probs: np.ndarray, n: int) -> np.ndarray:
    """n draws of 1-based codes from one probability row."""
    cum = np.cumsum(np.asarray(probs, dtype=np.float64))
    u = rng.random(n)
    return (1 + (u[:, None] > cum[None, :-1]).sum(axis=1)).astype(np.int64)


def generate(config: ScenarioConfig, rng: np.random.Generator) -> Dataset:
    """Draw one complete dataset from the scenario's generating process.

    Draw order is fixed (X2, x1, cluster effects, Y) so a given generator
    state always yields the same table.
    """
    n = config.n
    L = config.x2_levels
    x2 = rng.integers(1, L + 1, size=n).astype(np.int64)
    logits = np.asarray(config.x1_logits, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=1, keepdims=True)
    cum = np.cumsum(probs, axis=1)[x2 - 1]            # (n, K) per-row cdf
    u = rng.random(n)
    x1 = (1 + (u[:, None] > cum[:, :-1]).sum(axis=1)).astype(np.int64)

    bx1 = np.asarray(config.beta_x1)
    bx2 = np.asarray(config.beta_x2)
    eta = config.beta0 + bx1[x1 - 1] + bx2[x2 - 1]
    cluster = None
    if config.is_hier:
        cluster = np.repeat(np.arange(1, config.n_clusters + 1, dtype=np.int64),
                            config.cluster_size)
        u_g = config.u_sd * rng.standard_normal(config.n_clusters)
        eta = eta + u_g[cluster - 1]
    if config.y_type == "binary":
        y = (rng.random(n) < expit(eta)).astype(np.float64)
    else:
        y = eta + rng.standard_normal(n)
    return Dataset(y=y, x1=x1, miss=np.zeros(n, dtype=bool), K=config.K,
                   covs=x2[:, None], cov_names=("X2",), cov_levels=(L,),
                   y_binary=(config.y_type == "binary"),
                   cluster=cluster, n_clusters=config.n_clusters)


@dataclass
class MonteCarloReport:
    """Aggregated simulation results, one row block per method."""

    name: str
    design: str
    model: str
    seed: int
    R: int                       # replications aggregated (failures excluded)
    M: int
    coef_names: tuple
    true_coef: np.ndarray
    methods: tuple
    est_mean: dict               # method -> (d,) mean point estimate
    rel_bias_pct: dict           # method -> (d,) percent relative bias
    emp_sd: dict                 # method -> (d,) sd of point estimates
    coverage: dict               # method -> (d,) 95% CI coverage
    failures: tuple = ()
    icc_mean: dict = field(default_factory=dict)
    imp_y_coef_masked_mean: float = float("nan")
    imp_y_coef_full_mean: float = float("nan")
    runtime_s: float = 0.0

    @property
    def imp_y_bias_pct(self) -> float:
        """Percent inflation of the imputation-model Y coefficient caused
        by outcome-dependent masking."""
        return 100.0 * (self.imp_y_coef_masked_mean
                        / self.imp_y_coef_full_mean - 1.0)

    def rows(self):
        """Long-format rows for the report CSV."""
        out = []
        for m in self.methods:
            for j, cname in enumerate(self.coef_names):
                out.append({
                    "method": m,
                    "coefficient": cname,
                    "rel_bias_pct": float(self.rel_bias_pct[m][j]),
                    "emp_sd": float(self.emp_sd[m][j]),
                    "coverage": float(self.coverage[m][j]),
                })
        return out

    def to_json_obj(self) -> dict:
        obj = {
            "name": self.name, "design": self.design, "model": self.model,
            "seed": self.seed, "R": self.R, "M": self.M,
            "coef_names": list(self.coef_names),
            "true_coef": [float(v) for v in self.true_coef],
            "methods": list(self.methods),
            "est_mean": {k: [float(x) for x in v]
                         for k, v in self.est_mean.items()},
            "rel_bias_pct": {k: [float(x) for x in v]
                             for k, v in self.rel_bias_pct.items()},
            "emp_sd": {k: [float(x) for x in v]
                       for k, v in self.emp_sd.items()},
            "coverage": {k: [float(x) for x in v]
                         for k, v in self.coverage.items()},
            "n_failed": len(self.failures),
            "failures": list(self.failures),
            "imp_y_coef_masked_mean": self.imp_y_coef_masked_mean,
            "imp_y_coef_full_mean": self.imp_y_coef_full_mean,
        }
        if self.icc_mean:
            obj["icc_mean"] = {k: float(v) for k, v in self.icc_mean.items()}
        return obj


def _check_converged(fit):
    if not fit.converged:
        raise ConvergenceError(f"{fit.model} fit did not converge")
    return fit


def _single_result(fit, true):
    est = fit.coef
    lo = est - _Z975 * fit.se
    hi = est + _Z975 * fit.se
    return {"est": est, "cover": (lo <= true) & (true <= hi),
            "icc": fit.extra.get("icc")}


def _pooled_result(fits, true):
    pe = pool_rubin(fits)
    iccs = [f.extra["icc"] for f in fits if "icc" in f.extra]
    icc = float(np.mean(iccs)) if iccs else None
    return {"est": pe.qbar, "cover": (pe.ci_lo <= true) & (true <= pe.ci_hi),
            "icc": icc}


def _replication(config: ScenarioConfig, seed: int, rep: int, M: int,
                 methods: tuple) -> dict:
    """Run one replication end to end; returns per-method results."""
    true = config.true_coef()
    full = generate(config, substream(seed, GENERATE, rep))
    masked = apply_mnar(full, config.mnar_rules,
                        substream(seed, MASK, rep), exact=config.exact_mask)
    rep_seed = child_seed(seed, REPLICATE, rep)

    out = {}
    start = None
    if "SIMULATED" in methods:
        fit = _check_converged(fit_outcome(full, full.x1, model=config.model))
        out["SIMULATED"] = _single_result(fit, true)
        if config.model == "glmm-logit-ri":
            start = np.concatenate([fit.coef, [max(fit.sigma_u, 0.05)]])
    if "CC" in methods:
        cc = masked.drop_missing()
        fit = _check_converged(
            fit_outcome(cc, cc.x1, model=config.model, start=start))
        out["CC"] = _single_result(fit, true)

    # ordinal imputation-model Y coefficient, masked vs full data (the
    # outcome-dependent masking inflates it)
    imp_masked = fit_imputation_model(masked, link=config.link)
    imp_full = fit_imputation_model(full, link=config.link)
    out["_imp_y"] = (float(imp_masked.beta[0]), float(imp_full.beta[0]))

    need_imps = "MAR" in methods or any(s in methods
                                        for s in config.delta_scenarios)
    if need_imps:
        if config.is_hier:
            gibbs = GibbsConfig(burn_in=config.gibbs_burn_in,
                                between=config.gibbs_between)
            imps = impute_mar_hier(masked, M, config=gibbs,
                                   seed=child_seed(rep_seed, IMPUTE))
        else:
            imps = impute_mar_flat(masked, M, seed=rep_seed, link=config.link)

    def fit_copies(codes):
        fits = []
        s = start
        for m in range(M):
            f = _check_converged(fit_outcome(
                masked, codes[m], model=config.model, start=s))
            if config.model == "glmm-logit-ri" and not f.boundary:
                s = np.concatenate([f.coef, [max(f.sigma_u, 0.05)]])
            fits.append(f)
        return fits

    if "MAR" in methods:
        out["MAR"] = _pooled_result(fit_copies(
            np.stack([masked.complete_with(b)
                      for b in imps.imputed_block()])), true)
    for i, (sname, spec) in enumerate(config.delta_scenarios.items(), 1):
        if sname not in methods:
            continue
        adj = adjust(imps, masked, spec, seed=child_seed(rep_seed, i),
                     link=config.link)
        out[sname] = _pooled_result(fit_copies(adj.codes), true)
    return out


def _replication_safe(args):
    config, seed, rep, M, methods = args
    try:
        return rep, _replication(config, seed, rep, M, methods), None
    except _REP_ERRORS as exc:
        return rep, None, f"{type(exc).__name__}: {exc}"


def run_monte_carlo(config: ScenarioConfig, seed: int | None = None,
                    R: int | None = None, M: int | None = None,
                    methods=None, threads: int = 1,
                    progress=None) -> MonteCarloReport:
    """Replicate the scenario R times and aggregate per-method summaries.

    A replication that fails (non-convergence, separation, a divergent
    chain) is dropped from every method so comparisons stay paired; more
    than 2% failures abort the run. Results are identical for any
    `threads` value.
    """
    t0 = time.perf_counter()
    seed = config.seed if seed is None else int(seed)
    R = config.R if R is None else int(R)
    M = config.M if M is None else int(M)
    methods = config.method_names() if methods is None else tuple(methods)
    for m in methods:
        if m not in config.method_names():
            raise SchemaError(f"unknown method {m!r}")
    if R < 1:
        raise SchemaError("R must be positive")

    jobs = [(config, seed, rep, M, methods) for rep in range(R)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_replication_safe, jobs, chunksize=1))
    else:
        raw = []
        for job in jobs:
            raw.append(_replication_safe(job))
            if progress is not None:
                progress(len(raw), R)
    raw.sort(key=lambda t: t[0])

    failures = tuple({"rep": rep, "error": err}
                     for rep, _, err in raw if err is not None)
    if len(failures) > 0.02 * R:
        raise ConvergenceError(
            f"{len(failures)} of {R} replications failed; first: "
            f"{failures[0]['error']}")
    results = [res for _, res, err in raw if err is None]

    true = config.true_coef()
    d = true.size
    est_mean, rel_bias, emp_sd, coverage, icc_mean = {}, {}, {}, {}, {}
    for m in methods:
        est = np.array([r[m]["est"] for r in results])
        cov = np.array([r[m]["cover"] for r in results], dtype=np.float64)
        mean = est.mean(axis=0)
        est_mean[m] = mean
        with np.errstate(divide="ignore", invalid="ignore"):
            rel_bias[m] = np.where(np.abs(true) > 1e-12,
                                   100.0 * (mean - true) / true, np.nan)
        emp_sd[m] = est.std(axis=0, ddof=1) if est.shape[0] > 1 \
            else np.full(d, np.nan)
        coverage[m] = cov.mean(axis=0)
        iccs = [r[m]["icc"] for r in results if r[m]["icc"] is not None]
        if iccs:
            icc_mean[m] = float(np.mean(iccs))

    imp_pairs = np.array([r["_imp_y"] for r in results])
    return MonteCarloReport(
        name=config.name, design=config.design, model=config.model,
        seed=int(seed), R=len(results), M=M,
        coef_names=config.coef_names(), true_coef=true, methods=methods,
        est_mean=est_mean, rel_bias_pct=rel_bias, emp_sd=emp_sd,
        coverage=coverage, failures=failures, icc_mean=icc_mean,
        imp_y_coef_masked_mean=float(imp_pairs[:, 0].mean()),
        imp_y_coef_full_mean=float(imp_pairs[:, 1].mean()),
        runtime_s=time.perf_counter() - t0,
    )


@dataclass
class LookalikeConfig:
    """Generator for a registry-shaped dataset: 6 clusters of very unequal
    size, a 3-level ordinal severity score with cluster-specific missingness,
    a 3-level nominal covariate and a binary outcome."""

    n: int
    cluster_shares_pct: tuple        # per-cluster share of n, percent
    cluster_missing_pct: tuple       # per-cluster masked share of x1, percent
    target_missing_count: int        # exact total masked cells
    x1_probs: tuple                  # length-3 category distribution
    cov_probs: tuple                 # nominal covariate distribution
    beta0: float
    beta_x1: tuple                   # length 3, reference entry 0
    beta_cov: tuple                  # matches cov_probs, reference entry 0
    u_sd: float
    M: int = 5
    seed: int = 0
    gibbs_burn_in: int = 500
    gibbs_between: int = 50
    delta: DeltaSpec | None = None

    def __post_init__(self):
        if len(self.cluster_shares_pct) != len(self.cluster_missing_pct):
            raise SchemaError("cluster share and missing lists differ in length")
        if len(self.x1_probs) != 3 or len(self.beta_x1) != 3:
            raise SchemaError("the severity score has 3 categories")
        if len(self.beta_cov) != len(self.cov_probs):
            raise SchemaError("beta_cov must match cov_probs")
        if self.beta_x1[0] != 0.0 or self.beta_cov[0] != 0.0:
            raise SchemaError("reference coefficients must be 0")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LookalikeConfig":
        delta = obj.get("delta")
        return cls(
            n=int(obj["n"]),
            cluster_shares_pct=tuple(float(v) for v in obj["cluster_shares_pct"]),
            cluster_missing_pct=tuple(float(v) for v in obj["cluster_missing_pct"]),
            target_missing_count=int(obj["target_missing_count"]),
            x1_probs=tuple(float(v) for v in obj["x1_probs"]),
            cov_probs=tuple(float(v) for v in obj["cov_probs"]),
            beta0=float(obj["beta0"]),
            beta_x1=tuple(float(v) for v in obj["beta_x1"]),
            beta_cov=tuple(float(v) for v in obj["beta_cov"]),
            u_sd=float(obj["u_sd"]),
            M=int(obj.get("M", 5)),
            seed=int(obj.get("seed", 0)),
            gibbs_burn_in=int(obj.get("gibbs_burn_in", 500)),
            gibbs_between=int(obj.get("gibbs_between", 50)),
            delta=None if delta is None else DeltaSpec.from_json_obj(delta),
        )


def _apportion(total: int, shares_pct) -> np.ndarray:
    """Integer counts summing to `total`, one per share; rounding drift is
    absorbed by the largest share."""
    shares = np.asarray(shares_pct, dtype=np.float64)
    counts = np.round(shares / 100.0 * total).astype(np.int64)
    counts[int(np.argmax(shares))] += total - counts.sum()
    if counts.min() < 1:
        raise SchemaError("a cluster share rounded to zero rows")
    return counts


def generate_lookalike(config: LookalikeConfig,
                       rng: np.random.Generator) -> Dataset:
    """Draw the registry-shaped dataset with exact cluster sizes and an
    exact total number of masked cells."""
    counts = _apportion(config.n, config.cluster_shares_pct)
    G = counts.size
    cluster = np.repeat(np.arange(1, G + 1, dtype=np.int64), counts)
    n = config.n
    cov = _categorical(rng, config.cov_probs, n)
    x1 = _categorical(rng, config.x1_probs, n)
    u_g = config.u_sd * rng.standard_normal(G)
    eta = (config.beta0 + np.asarray(config.beta_x1)[x1 - 1]
           + np.asarray(config.beta_cov)[cov - 1] + u_g[cluster - 1])
    y = (rng.random(n) < expit(eta)).astype(np.float64)

    # exact per-cluster masked counts, drift fixed on the largest cluster
    k = np.round(np.asarray(config.cluster_missing_pct) / 100.0
                 * counts).astype(np.int64)
    k[int(np.argmax(counts))] += config.target_missing_count - k.sum()
    if np.any(k < 0) or np.any(k > counts):
        raise SchemaError("per-cluster missing counts are infeasible")
    miss = np.zeros(n, dtype=bool)
    stops = np.cumsum(counts)
    for g in range(G):
        lo = stops[g] - counts[g]
        sel = lo + rng.permutation(counts[g])[:k[g]]
        miss[sel] = True
    x1 = x1.copy()
    x1[miss] = 0
    return Dataset(y=y, x1=x1, miss=miss, K=3,
                   covs=cov[:, None], cov_names=("AGEGRP",),
                   cov_levels=(len(config.cov_probs),), y_binary=True,
                   cluster=cluster, n_clusters=G)


def load_scenario(path: str):
    """Read a scenario JSON; returns a ScenarioConfig or LookalikeConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("design") == "lookalike":
        return LookalikeConfig.from_json_obj(obj)
    return ScenarioConfig.from_json_obj(obj)

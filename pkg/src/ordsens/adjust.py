"""Threshold-shift delta adjustment of MAR imputations.

Each MAR-completed copy is turned into an MNAR-scenario copy in three moves:
refit the ordinal model on the completed data (all rows), perturb each missing
row's linear predictor with N(0, sigma2) noise into a latent value, and
reclassify that latent through thresholds shifted by the stratum's delta
vector. Shifted thresholds are used as given, without reordering; when a
shift breaks monotonicity the smallest-k rule below keeps classification
total and assigns the emptied categories zero mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kern
from . import streams
from .data import Dataset, StratumKey, imputation_design, resolve_stratum_var
from .exceptions import ConvergenceError, SchemaError
from .impute import ImputationSet
from .ordinal import fit_imputation_model

DEFAULT_SIGMA2 = 1.2


@dataclass
class DeltaSpec:
    """Sensitivity parameters: threshold shifts (length K-1) and sigma2.

    `default_delta` applies to every missing row without a more specific
    per-stratum entry. All per-stratum keys must reference the same variable
    (one nominal covariate or the cluster column).
    """

    default_delta: np.ndarray | None = None
    per_stratum: dict = field(default_factory=dict)   # StratumKey -> vector
    sigma2: float = DEFAULT_SIGMA2

    def __post_init__(self):
        if self.default_delta is not None:
            self.default_delta = np.asarray(self.default_delta, dtype=float)
        self.per_stratum = {k: np.asarray(v, dtype=float)
                            for k, v in self.per_stratum.items()}
        if self.sigma2 <= 0:
            raise SchemaError("sigma2 must be positive")
        if self.default_delta is None and not self.per_stratum:
            raise SchemaError("spec needs a default delta or per-stratum entries")
        varnames = {k.var for k in self.per_stratum}
        if len(varnames) > 1:
            raise SchemaError(f"per-stratum deltas span several variables: "
                              f"{sorted(varnames)}; exactly one is allowed")

    @property
    def stratum_var(self) -> str | None:
        for key in self.per_stratum:
            return key.var
        return None

    def validate_for(self, ds: Dataset):
        lengths = [v.shape[0] for v in self.per_stratum.values()]
        if self.default_delta is not None:
            lengths.append(self.default_delta.shape[0])
        for length in lengths:
            if length != ds.K - 1:
                raise SchemaError(f"delta length {length} does not match K-1 = {ds.K - 1}")
        var = self.stratum_var
        if var is None:
            return
        _, L = resolve_stratum_var(ds, var)
        for key in self.per_stratum:
            if not 1 <= key.level <= L:
                raise SchemaError(f"stratum {key.label()} references an absent category")

    def delta_for_level(self, level: int) -> np.ndarray:
        var = self.stratum_var
        if var is not None:
            key = StratumKey(var, int(level))
            if key in self.per_stratum:
                return self.per_stratum[key]
        if self.default_delta is None:
            raise SchemaError(f"no delta for stratum level {level} and no default")
        return self.default_delta

    def to_json_obj(self) -> dict:
        obj: dict = {"sigma2": self.sigma2}
        if self.default_delta is not None:
            obj["default"] = self.default_delta.tolist()
        if self.per_stratum:
            obj["strata"] = {k.label(): v.tolist() for k, v in self.per_stratum.items()}
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DeltaSpec":
        if not isinstance(obj, dict):
            raise SchemaError("delta spec must be a JSON object")
        per = {}
        for label, vec in obj.get("strata", {}).items():
            var, _, level = label.partition("=")
            if not level:
                raise SchemaError(f"bad stratum label {label!r}; expected VAR=LEVEL")
            try:
                per[StratumKey(var, int(level))] = vec
            except ValueError:
                raise SchemaError(f"stratum level in {label!r} is not an integer") from None
        return cls(default_delta=obj.get("default"), per_stratum=per,
                   sigma2=float(obj.get("sigma2", DEFAULT_SIGMA2)))

    @classmethod
    def from_json(cls, text: str) -> "DeltaSpec":
        return cls.from_json_obj(json.loads(text))


@dataclass
class AdjustedImputationSet:
    """MNAR-adjusted copies plus the shifted thresholds used per copy."""

    codes: np.ndarray          # (M, n) complete columns
    miss: np.ndarray
    M: int
    spec: DeltaSpec
    zeta_star: list            # per copy: {"zeta_hat": [...], "shifted": {label: [...]}}
    method: str = "delta-adjust"
    link: str = "probit"
    seed: int = 0
    provenance: list = field(default_factory=list)

    def imputed_block(self) -> np.ndarray:
        return self.codes[:, self.miss]


def classify_latent(theta, zeta_star):
    """Smallest k in 1..K-1 with theta <= zeta*_k, else K.

    Coincides with interval membership (zeta*_{k-1}, zeta*_k] when zeta* is
    increasing; for non-monotone shifts the emptied categories get no rows.
    Accepts a scalar or an array of latents.
    """
    zs = np.ascontiguousarray(zeta_star, dtype=np.float64)
    arr = np.ascontiguousarray(np.atleast_1d(np.asarray(theta, dtype=np.float64)))
    out = kern.classify_smallest_k(arr, zs)
    if np.isscalar(theta) or np.asarray(theta).ndim == 0:
        return int(out[0])
    return out


def adjust(imps: ImputationSet, ds: Dataset, spec: DeltaSpec, seed: int,
           link: str = "probit") -> AdjustedImputationSet:
    """Algorithm: refit per copy, perturb latents, shift thresholds, reclassify."""
    imps.check_against(ds)
    spec.validate_for(ds)
    mis = np.flatnonzero(ds.miss)
    W, _ = imputation_design(ds)
    Wmis = W[mis]
    sigma = float(np.sqrt(spec.sigma2))
    var = spec.stratum_var
    if var is not None:
        lev_codes, L = resolve_stratum_var(ds, var)
        lev_mis = lev_codes[mis]
        levels = np.arange(1, L + 1)
    out = imps.codes.copy()
    zeta_star = []
    prov = []
    for m in range(1, imps.M + 1):
        refit = fit_imputation_model(ds, link=link, x1_full=imps.codes[m - 1])
        if not refit.converged:
            raise ConvergenceError(f"adjustment refit did not converge on copy {m}")
        rng = streams.substream(seed, streams.ADJUST, m)
        theta = Wmis @ refit.beta + sigma * rng.standard_normal(mis.size)
        record = {"zeta_hat": refit.zeta.tolist(), "shifted": {}}
        if var is None:
            zs = refit.zeta + spec.delta_for_level(0)
            record["shifted"]["all"] = zs.tolist()
            if mis.size:
                out[m - 1, mis] = classify_latent(theta, zs)
        else:
            for lev in levels:
                rows = lev_mis == lev
                zs = refit.zeta + spec.delta_for_level(int(lev))
                record["shifted"][f"{var}={lev}"] = zs.tolist()
                if rows.any():
                    out[m - 1, mis[rows]] = classify_latent(theta[rows], zs)
        zeta_star.append(record)
        prov.append({"copy": m, "stream": ["adjust", m],
                     "refit_beta": refit.beta.tolist()})
    return AdjustedImputationSet(codes=out, miss=imps.miss.copy(), M=imps.M,
                                 spec=spec, zeta_star=zeta_star, link=link,
                                 seed=seed, provenance=prov)

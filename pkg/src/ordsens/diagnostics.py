"""Imputed-category profiles and plausibility screening for delta choices.

The selection of a sensitivity vector is external to the data, but candidate
vectors can still be screened: average the imputed-category distribution of
the missing cells under each candidate, compare the profiles against the MAR
baseline, and flag candidates that collapse onto one category or that do not
move the distribution at all.
"""

from dataclasses import dataclass

import numpy as np

from .adjust import DeltaSpec, adjust
from .data import Dataset, resolve_stratum_var
from .exceptions import SchemaError
from .streams import child_seed

__all__ = [
    "CategoryProfile", "missing_category_profile", "delta_grid_scan",
    "plausibility_flags", "total_variation", "profile_rows",
]

DEGENERATE_AT = 0.995     # single-category share that flags a profile
NEAR_MAR_TV = 0.02        # TV distance to MAR below which delta did nothing


@dataclass(frozen=True)
class CategoryProfile:
    """Average imputed-category distribution among missing cells."""

    scenario: str
    stratum: str | None        # "VAR=LEVEL" or None for the overall profile
    proportions: tuple         # length K, mean over copies, sums to 1
    n_missing: int             # missing cells contributing

    def __post_init__(self):
        p = np.asarray(self.proportions, dtype=np.float64)
        if p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise SchemaError("profile proportions must be a simplex vector")


def _freq_profile(block: np.ndarray, K: int) -> np.ndarray:
    # mean over copies of the per-copy category frequency vector
    M = block.shape[0]
    counts = np.zeros(K, dtype=np.float64)
    for m in range(M):
        counts += np.bincount(block[m] - 1, minlength=K)
    p = counts / (M * block.shape[1])
    return p / p.sum()


def missing_category_profile(imps, ds: Dataset, stratum: str | None = None,
                             scenario: str | None = None):
    """Per-(scenario, stratum) mean category distribution of imputed cells.

    `imps` is an ImputationSet or AdjustedImputationSet consistent with `ds`.
    With `stratum` naming a covariate, one profile per level that contains
    missing cells is returned; the overall profile is always first.
    """
    if ds.n_missing == 0:
        raise SchemaError("dataset has no missing cells to profile")
    if imps.codes.shape[1] != ds.n or not np.array_equal(imps.miss, ds.miss):
        raise SchemaError("imputation set does not match dataset")
    if scenario is None:
        scenario = "MAR" if imps.method in ("flat", "hierarchical") else "MNAR"

    block = imps.imputed_block()
    out = [CategoryProfile(scenario, None,
                           tuple(_freq_profile(block, ds.K)),
                           int(ds.n_missing))]
    if stratum is not None:
        col, levels = resolve_stratum_var(ds, stratum)
        col = col[ds.miss]
        for lev in range(1, levels + 1):
            sel = col == lev
            if not sel.any():
                continue
            out.append(CategoryProfile(
                scenario, f"{stratum}={lev}",
                tuple(_freq_profile(block[:, sel], ds.K)), int(sel.sum())))
    return out


def delta_grid_scan(ds: Dataset, imps, specs, seed: int,
                    link: str = "probit", stratum: str | None = None):
    """Adjust once per candidate spec and profile the result.

    `specs` maps scenario label -> DeltaSpec (a plain list gets labels
    delta1, delta2, ...). Returns profiles for every candidate, in input
    order, each candidate adjusted on an independent substream of `seed`.
    """
    if not isinstance(specs, dict):
        specs = {f"delta{i + 1}": s for i, s in enumerate(specs)}
    profiles = []
    for i, (label, spec) in enumerate(specs.items(), 1):
        if not isinstance(spec, DeltaSpec):
            raise SchemaError(f"candidate {label!r} is not a DeltaSpec")
        adj = adjust(imps, ds, spec, seed=child_seed(seed, i), link=link)
        profiles.extend(missing_category_profile(adj, ds, stratum=stratum,
                                                 scenario=label))
    return profiles


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise SchemaError("profiles have different lengths")
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# rule grammar: SUM < SUM or SUM > SUM, where SUM is terms joined by "+",
# and a term is prop[k], mar[k], or a number. Rules live in config files.

def _parse_side(text: str, prop, mar):
    total = 0.0
    for raw in text.split("+"):
        term = raw.strip()
        if not term:
            raise SchemaError(f"empty term in rule side {text!r}")
        for name, vec in (("prop", prop), ("mar", mar)):
            if term.startswith(name + "[") and term.endswith("]"):
                if vec is None:
                    raise SchemaError("rule references mar[] but no MAR "
                                      "profile was given")
                try:
                    k = int(term[len(name) + 1:-1])
                except ValueError as exc:
                    raise SchemaError(f"bad category index in {term!r}") from exc
                if not 1 <= k <= len(vec):
                    raise SchemaError(f"category {k} out of range in {term!r}")
                total += vec[k - 1]
                break
        else:
            try:
                total += float(term)
            except ValueError as exc:
                raise SchemaError(f"cannot parse rule term {term!r}") from exc
    return total


def _rule_holds(rule: str, prop, mar) -> bool:
    for op in ("<", ">"):
        if op in rule:
            lhs, _, rhs = rule.partition(op)
            left = _parse_side(lhs, prop, mar)
            right = _parse_side(rhs, prop, mar)
            return left < right if op == "<" else left > right
    raise SchemaError(f"rule {rule!r} has no comparison operator")


def plausibility_flags(profiles, mar_profiles=None, rules=(),
                       degenerate_at: float = DEGENERATE_AT,
                       near_mar_tv: float = NEAR_MAR_TV):
    """Screen candidate profiles; returns one dict per raised flag.

    Flags: DEGENERATE (one category holds >= `degenerate_at` of the mass),
    NEAR_MAR (TV distance to the matching-stratum MAR profile below
    `near_mar_tv`), and RULE for every violated ordering rule. Rules are
    strings over prop[k] / mar[k] sums, e.g. "prop[5] > prop[1]".
    """
    mar_by_stratum = {}
    if mar_profiles is not None:
        if isinstance(mar_profiles, CategoryProfile):
            mar_profiles = [mar_profiles]
        mar_by_stratum = {p.stratum: np.asarray(p.proportions)
                          for p in mar_profiles}

    flags = []
    for prof in profiles:
        p = np.asarray(prof.proportions)
        where = {"scenario": prof.scenario, "stratum": prof.stratum}
        top = int(np.argmax(p))
        if p[top] >= degenerate_at:
            flags.append({**where, "flag": "DEGENERATE",
                          "detail": f"category {top + 1} holds "
                                    f"{p[top]:.4f} of the mass"})
        mar = mar_by_stratum.get(prof.stratum)
        if mar is not None:
            tv = total_variation(p, mar)
            if tv < near_mar_tv:
                flags.append({**where, "flag": "NEAR_MAR",
                              "detail": f"TV distance to MAR {tv:.4f}"})
        for rule in rules:
            if not _rule_holds(str(rule), p, mar):
                flags.append({**where, "flag": "RULE",
                              "detail": f"violated: {rule}"})
    return flags


def profile_rows(profiles):
    """Long-format rows (scenario, stratum, category, proportion, n)."""
    rows = []
    for prof in profiles:
        for k, v in enumerate(prof.proportions, 1):
            rows.append({"scenario": prof.scenario,
                         "stratum": prof.stratum or "",
                         "category": k, "proportion": float(v),
                         "n_missing": prof.n_missing})
    return rows

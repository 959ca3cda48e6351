"""Command-line entry point wiring the pipeline stages together.

Subcommands: fit, impute, adjust, analyze, pool, diagnose, simulate,
replicate-table. Every run writes its data outputs plus a manifest
(manifest.json in the output directory) recording the subcommand, a
platform-stable hash of the effective configuration, the master seed,
module versions and wall time. Identical configuration and seed give
byte-identical data outputs; only the manifest's wall time may differ.

Exit codes: 0 success, 1 user error (flags, files, schemas), 2 numeric
failure (non-convergence, separation, divergent chains). Errors are
reported as one JSON object on stderr.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from ._kernels import IMPL_NAME
from .adjust import DeltaSpec, adjust
from .analyze import OutcomeFit, fit_outcome, pool_rubin
from .data import (Dataset, load_csv, read_long_imputations,
                   write_csv, write_long_imputations)
from .diagnostics import (delta_grid_scan, missing_category_profile,
                          plausibility_flags, profile_rows)
from .exceptions import OrdsensError, SchemaError
from .impute import GibbsConfig, ImputationSet, impute_mar_flat, impute_mar_hier
from .ordinal import fit_imputation_model
from .simlab import LookalikeConfig, ScenarioConfig, load_scenario, run_monte_carlo

_CONFIG_DIR = Path(__file__).parent / "configs"
_DESIGN_FILES = {
    "nonhier-extreme": "nonhier_extreme.json",
    "hier-extreme": "hier_extreme.json",
    "nonhier-intermediate": "nonhier_intermediate.json",
    "nonhier-continuous": "nonhier_continuous.json",
    "lookalike": "lookalike.json",
}


class UsageError(SchemaError):
    """Bad command line; distinct only so argparse failures map to exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared plumbing

def _threads(args) -> int:
    if getattr(args, "threads", 0):
        return max(1, args.threads)
    env = os.environ.get("ORDSENS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"ORDSENS_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _config_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _load_dataset(args) -> tuple:
    """Dataset plus the schema dict actually used (for the manifest)."""
    if args.schema:
        schema = _read_json(args.schema)
    else:
        if args.k is None:
            raise UsageError("--k is required when --schema is not given")
        schema = {"y": args.y_col, "x1": args.x1_col, "k": args.k,
                  "y_type": args.y_type, "covariates": args.covariate or []}
        if args.cluster_col:
            schema["cluster"] = args.cluster_col
    try:
        ds = load_csv(args.data, schema)
    except FileNotFoundError:
        raise UsageError(f"file not found: {args.data}") from None
    return ds, schema


def _load_imputations(path, ds: Dataset, link: str) -> ImputationSet:
    rows, block = read_long_imputations(path)
    expected = np.flatnonzero(ds.miss)
    if not np.array_equal(rows, expected):
        raise SchemaError(f"{path}: imputed row indices do not match the "
                          "dataset's missing cells")
    codes = np.tile(ds.x1, (block.shape[0], 1))
    codes[:, ds.miss] = block
    imps = ImputationSet(codes=codes, miss=ds.miss.copy(), M=block.shape[0],
                         method="file", link=link, seed=0)
    imps.check_against(ds)
    return imps


def _delta_from_json(obj) -> DeltaSpec:
    if not isinstance(obj, dict):
        raise SchemaError("delta spec must be a JSON object")
    return DeltaSpec.from_json_obj(obj)


def _write_rows(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pooled_rows(pe):
    rows = []
    logit_family = pe.odds_ratio is not None
    for j, name in enumerate(pe.names):
        row = {
            "coefficient": name,
            "estimate": float(pe.qbar[j]),
            "se": float(pe.se[j]),
            "ci_lo": float(pe.ci_lo[j]),
            "ci_hi": float(pe.ci_hi[j]),
            "p": float(pe.p[j]),
            "W": float(pe.W[j]),
            "B": float(pe.B[j]),
            "T": float(pe.T[j]),
            "df": float(pe.df[j]),
            "odds_ratio": float(pe.odds_ratio[j]) if logit_family else "",
            "or_lo": float(pe.or_lo[j]) if logit_family else "",
            "or_hi": float(pe.or_hi[j]) if logit_family else "",
        }
        rows.append(row)
    return rows


_POOLED_FIELDS = ["coefficient", "estimate", "se", "ci_lo", "ci_hi", "p",
                  "W", "B", "T", "df", "odds_ratio", "or_lo", "or_hi"]


def _pooled_json(pe):
    obj = {"M": pe.M, "model": pe.model, "ci": "t-quantile",
           "coefficients": _pooled_rows(pe)}
    for row in obj["coefficients"]:
        for key in ("odds_ratio", "or_lo", "or_hi"):
            if row[key] == "":
                row[key] = None
    return obj


def _rebase_levels(levels: int, ref: int):
    """Level order with `ref` first; identity when ref is already 1."""
    if not 1 <= ref <= levels:
        raise UsageError(f"reference level {ref} outside 1..{levels}")
    return [ref] + [l for l in range(1, levels + 1) if l != ref]


def _recode(codes: np.ndarray, order) -> np.ndarray:
    lut = np.zeros(len(order) + 1, dtype=np.int64)
    for new, old in enumerate(order, 1):
        lut[old] = new
    return lut[codes]


# ---------------------------------------------------------------------------
# subcommand handlers; each returns (outputs, effective_config, master_seed)

def _cmd_fit(args, out_dir: Path):
    ds, schema = _load_dataset(args)
    fit = fit_imputation_model(ds, link=args.link)
    payload = {
        "model": "cumulative-" + args.link,
        "n_obs": fit.n_obs,
        "converged": bool(fit.converged),
        "loglik": float(fit.loglik),
        "coefficients": {n: float(v) for n, v in zip(fit.names, fit.beta)},
        "thresholds": [float(z) for z in fit.zeta],
    }
    out = out_dir / "fit.json"
    _dump_json(out, payload)
    cfg = {"data": str(args.data), "schema": schema, "link": args.link}
    return [out], cfg, None


def _cmd_impute(args, out_dir: Path):
    ds, schema = _load_dataset(args)
    if args.hier:
        gibbs = GibbsConfig(burn_in=args.burn_in, between=args.between)
        imps = impute_mar_hier(ds, args.M, config=gibbs, seed=args.seed)
    else:
        imps = impute_mar_flat(ds, args.M, seed=args.seed, link=args.link)
    outputs = []
    out = out_dir / "imputations.csv"
    write_long_imputations(out, np.flatnonzero(ds.miss), imps.imputed_block())
    outputs.append(out)
    if args.per_copy:
        for m in range(imps.M):
            completed = ds.complete_with(imps.imputed_block()[m])
            copy = Dataset(y=ds.y, x1=completed, miss=np.zeros(ds.n, bool),
                           K=ds.K, covs=ds.covs, cov_names=ds.cov_names,
                           cov_levels=ds.cov_levels, y_binary=ds.y_binary,
                           cluster=ds.cluster, n_clusters=ds.n_clusters)
            path = out_dir / f"imputation_{m + 1}.csv"
            write_csv(copy, path)
            outputs.append(path)
    cfg = {"data": str(args.data), "schema": schema, "M": args.M,
           "link": args.link, "hier": bool(args.hier),
           "burn_in": args.burn_in, "between": args.between}
    return outputs, cfg, args.seed


def _cmd_adjust(args, out_dir: Path):
    ds, schema = _load_dataset(args)
    imps = _load_imputations(args.imputations, ds, args.link)
    spec_obj = _read_json(args.delta)
    spec = _delta_from_json(spec_obj)
    adj = adjust(imps, ds, spec, seed=args.seed, link=args.link)
    out = out_dir / "adjusted.csv"
    write_long_imputations(out, np.flatnonzero(ds.miss), adj.imputed_block())
    zeta_out = out_dir / "zeta_star.json"
    _dump_json(zeta_out, {"sigma2": spec.sigma2, "per_copy": adj.zeta_star})
    cfg = {"data": str(args.data), "schema": schema,
           "imputations": str(args.imputations), "delta": spec.to_json_obj(),
           "link": args.link}
    return [out, zeta_out], cfg, args.seed


def _analyze_fits(ds, imps, args):
    x1_order = _rebase_levels(ds.K, args.x1_ref)
    cov_orders = {}
    for item in args.cov_ref or []:
        name, _, lev = item.partition("=")
        if name not in ds.cov_names:
            raise UsageError(f"--cov-ref names unknown covariate {name!r}")
        j = ds.cov_names.index(name)
        cov_orders[j] = _rebase_levels(ds.cov_levels[j],
                                       int(lev) if lev else 1)
    if cov_orders:
        covs = ds.covs.copy()
        for j, order in cov_orders.items():
            covs[:, j] = _recode(covs[:, j], order)
        ds = Dataset(y=ds.y, x1=ds.x1, miss=ds.miss, K=ds.K, covs=covs,
                     cov_names=ds.cov_names, cov_levels=ds.cov_levels,
                     y_binary=ds.y_binary, cluster=ds.cluster,
                     n_clusters=ds.n_clusters)

    names = ["(intercept)"]
    names += [f"X1={lev}" for lev in x1_order[1:]]
    for j, cname in enumerate(ds.cov_names):
        order = cov_orders.get(j, list(range(1, ds.cov_levels[j] + 1)))
        names += [f"{cname}={lev}" for lev in order[1:]]

    fits = []
    for m in range(imps.M):
        completed = _recode(ds.complete_with(imps.imputed_block()[m]), x1_order)
        fit = fit_outcome(ds, completed, model=args.model)
        fit.names = list(names)
        fits.append(fit)
    return fits


def _cmd_analyze(args, out_dir: Path):
    ds, schema = _load_dataset(args)
    imps = _load_imputations(args.imputations, ds, "probit")
    fits = _analyze_fits(ds, imps, args)
    pe = pool_rubin(fits)
    csv_out = out_dir / "pooled.csv"
    _write_rows(csv_out, _POOLED_FIELDS, _pooled_rows(pe))
    json_out = out_dir / "pooled.json"
    _dump_json(json_out, _pooled_json(pe))
    cfg = {"data": str(args.data), "schema": schema,
           "imputations": str(args.imputations), "model": args.model,
           "x1_ref": args.x1_ref, "cov_ref": args.cov_ref or []}
    return [csv_out, json_out], cfg, None


def _cmd_pool(args, out_dir: Path):
    with open(args.estimates, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"imputation", "coefficient", "estimate", "variance"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise SchemaError(f"{args.estimates}: need columns {sorted(need)}")
        recs = list(reader)
    if not recs:
        raise SchemaError(f"{args.estimates}: no rows")
    by_copy: dict = {}
    for rec in recs:
        by_copy.setdefault(int(rec["imputation"]), []).append(rec)
    names = [rec["coefficient"] for rec in by_copy[min(by_copy)]]
    fits = []
    for m in sorted(by_copy):
        rows = by_copy[m]
        if [r["coefficient"] for r in rows] != names:
            raise SchemaError("imputations disagree on coefficient layout")
        coef = np.array([float(r["estimate"]) for r in rows])
        var = np.array([float(r["variance"]) for r in rows])
        if np.any(var < 0):
            raise SchemaError("negative variance in estimates file")
        fits.append(OutcomeFit(coef=coef, se=np.sqrt(var),
                               vcov=np.diag(var), names=names,
                               model=args.model, loglik=float("nan"),
                               converged=True, n_obs=0))
    pe = pool_rubin(fits)
    csv_out = out_dir / "pooled.csv"
    _write_rows(csv_out, _POOLED_FIELDS, _pooled_rows(pe))
    json_out = out_dir / "pooled.json"
    _dump_json(json_out, _pooled_json(pe))
    cfg = {"estimates": str(args.estimates), "model": args.model}
    return [csv_out, json_out], cfg, None


def _cmd_diagnose(args, out_dir: Path):
    ds, schema = _load_dataset(args)
    imps = _load_imputations(args.imputations, ds, args.link)
    grid_obj = _read_json(args.grid)
    if not isinstance(grid_obj, dict) or not grid_obj:
        raise SchemaError(f"{args.grid}: expected a non-empty object of "
                          "label -> delta spec")
    specs = {label: _delta_from_json(o) for label, o in grid_obj.items()}
    mar = missing_category_profile(imps, ds, stratum=args.stratum,
                                   scenario="MAR")
    scanned = delta_grid_scan(ds, imps, specs, seed=args.seed,
                              link=args.link, stratum=args.stratum)
    rules = _read_json(args.rules) if args.rules else []
    if not isinstance(rules, list):
        raise SchemaError(f"{args.rules}: expected a JSON list of rules")
    flags = plausibility_flags(scanned, mar_profiles=mar, rules=rules)

    profiles_out = out_dir / "profiles.csv"
    _write_rows(profiles_out,
                ["scenario", "stratum", "category", "proportion", "n_missing"],
                profile_rows(mar + scanned))
    flags_out = out_dir / "flags.json"
    _dump_json(flags_out, flags)
    cfg = {"data": str(args.data), "schema": schema,
           "imputations": str(args.imputations),
           "grid": {k: v.to_json_obj() for k, v in specs.items()},
           "rules": rules, "stratum": args.stratum, "link": args.link}
    return [profiles_out, flags_out], cfg, args.seed


def _scenario_from_args(args) -> tuple:
    if bool(args.config) == bool(args.design):
        raise UsageError("give exactly one of --config or --design")
    if args.config:
        cfg = load_scenario(args.config)
    else:
        if args.design not in _DESIGN_FILES:
            raise UsageError(f"unknown design {args.design!r}; choose from "
                             f"{sorted(_DESIGN_FILES)}")
        cfg = load_scenario(str(_CONFIG_DIR / _DESIGN_FILES[args.design]))
    if isinstance(cfg, LookalikeConfig):
        raise UsageError("the look-alike config describes a single dataset, "
                         "not a replication design; use a scenario config")
    if args.R is not None and args.R < 1:
        raise UsageError("--R must be positive")
    if args.M is not None and args.M < 2:
        raise UsageError("--M must be at least 2")
    return cfg, args.R, args.M


def _run_scenario(args):
    cfg, R, M = _scenario_from_args(args)
    seed = cfg.seed if args.seed is None else args.seed
    report = run_monte_carlo(cfg, seed=seed, R=R, M=M,
                             threads=_threads(args))
    effective = cfg.to_json_obj()
    if R is not None:
        effective["R"] = R
    if M is not None:
        effective["M"] = M
    effective["seed"] = seed
    return report, effective, seed


def _cmd_simulate(args, out_dir: Path):
    report, effective, seed = _run_scenario(args)
    csv_out = out_dir / "report.csv"
    _write_rows(csv_out, ["method", "coefficient", "rel_bias_pct",
                          "emp_sd", "coverage"], report.rows())
    json_out = out_dir / "report.json"
    _dump_json(json_out, report.to_json_obj())
    return [csv_out, json_out], effective, seed


def _cmd_replicate_table(args, out_dir: Path):
    report, effective, seed = _run_scenario(args)
    out = out_dir / "table.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "coefficient", *report.methods])
        for metric, block in (("rel_bias_pct", report.rel_bias_pct),
                              ("emp_sd", report.emp_sd),
                              ("coverage", report.coverage)):
            for j, cname in enumerate(report.coef_names):
                w.writerow([metric, cname,
                            *(repr(float(block[m][j])) for m in report.methods)])
    return [out], effective, seed


# ---------------------------------------------------------------------------
# argument surface

def _add_data_flags(p):
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--schema", help="schema JSON (overrides the flags below)")
    p.add_argument("--y-col", default="Y")
    p.add_argument("--x1-col", default="X1")
    p.add_argument("--k", type=int, help="number of ordinal categories")
    p.add_argument("--y-type", choices=("binary", "continuous"),
                   default="binary")
    p.add_argument("--covariate", action="append",
                   help="nominal covariate column; repeatable")
    p.add_argument("--cluster-col", help="cluster column for hierarchical data")


def build_parser() -> _Parser:
    top = _Parser(prog="ordsens",
                  description="Delta-adjusted multiple imputation for an "
                              "MNAR ordinal covariate")
    top.add_argument("--version", action="version", version=__version__)
    sub = top.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("fit", help="fit the ordinal imputation model "
                                   "on observed rows")
    _add_data_flags(p)
    p.add_argument("--link", choices=("probit", "logit"), default="probit")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("impute", help="multiple imputation under MAR")
    _add_data_flags(p)
    p.add_argument("--M", type=int, default=10)
    p.add_argument("--link", choices=("probit", "logit"), default="probit")
    p.add_argument("--hier", action="store_true",
                   help="cluster random-intercept Gibbs imputer")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--between", type=int, default=100)
    p.add_argument("--per-copy", action="store_true",
                   help="also write one completed CSV per imputation")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=_cmd_impute)

    p = sub.add_parser("adjust", help="shift thresholds and reclassify "
                                      "imputed cells under a delta spec")
    _add_data_flags(p)
    p.add_argument("--imputations", required=True, help="long-form CSV")
    p.add_argument("--delta", required=True, help="delta spec JSON")
    p.add_argument("--link", choices=("probit", "logit"), default="probit")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=_cmd_adjust)

    p = sub.add_parser("analyze", help="fit the outcome model per copy "
                                       "and pool")
    _add_data_flags(p)
    p.add_argument("--imputations", required=True, help="long-form CSV")
    p.add_argument("--model",
                   choices=("glm-logit", "glmm-logit-ri", "linear"),
                   default="glm-logit")
    p.add_argument("--x1-ref", type=int, default=1,
                   help="reference category for the ordinal covariate")
    p.add_argument("--cov-ref", action="append", metavar="NAME=LEVEL",
                   help="reference level override for a nominal covariate")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("pool", help="Rubin's rules over per-copy estimates")
    p.add_argument("--estimates", required=True,
                   help="CSV with imputation, coefficient, estimate, variance")
    p.add_argument("--model", default="glm-logit",
                   help="model label attached to the pooled output")
    p.set_defaults(handler=_cmd_pool)

    p = sub.add_parser("diagnose", help="profile imputed categories under "
                                        "candidate delta vectors")
    _add_data_flags(p)
    p.add_argument("--imputations", required=True, help="long-form CSV")
    p.add_argument("--grid", required=True,
                   help="JSON object: scenario label -> delta spec")
    p.add_argument("--rules", help="JSON list of ordering rules")
    p.add_argument("--stratum", help="stratify profiles by this covariate")
    p.add_argument("--link", choices=("probit", "logit"), default="probit")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(handler=_cmd_diagnose)

    for name, handler, blurb in (
            ("simulate", _cmd_simulate,
             "run a replication study; long-form report CSV"),
            ("replicate-table", _cmd_replicate_table,
             "run a replication study; method-by-coefficient table CSV")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="scenario config JSON")
        p.add_argument("--design", help="shipped design name: "
                       + ", ".join(sorted(_DESIGN_FILES)))
        p.add_argument("--R", type=int, help="replication count override")
        p.add_argument("--M", type=int, help="imputation count override")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int, default=0,
                       help="worker cap (default: ORDSENS_THREADS or all cores)")
        p.set_defaults(handler=handler)

    for p in sub.choices.values():
        p.add_argument("--out-dir", default=".", dest="out_dir",
                       help="directory for outputs and manifest.json")

    return top


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        if not argv:
            parser.print_usage(sys.stderr)
            return 1
        args = parser.parse_args(argv)
        if not getattr(args, "handler", None):
            parser.print_usage(sys.stderr)
            return 1
        out_dir = Path(getattr(args, "out_dir", ".") or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        outputs, effective, seed = args.handler(args, out_dir)
        manifest = {
            "subcommand": args.command,
            "config_hash": _config_hash(effective),
            "master_seed": seed,
            "module_versions": {
                "ordsens": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": ".".join(map(str, sys.version_info[:3])),
            },
            "kernel_backend": IMPL_NAME,
            "wall_time_s": round(time.perf_counter() - t0, 3),
            "outputs": [str(Path(p).name) for p in outputs],
        }
        _dump_json(out_dir / "manifest.json", manifest)
        return 0
    except UsageError as exc:
        _fail("usage", exc)
        return 1
    except SchemaError as exc:
        _fail("schema", exc)
        return 1
    except OrdsensError as exc:
        _fail(type(exc).__name__, exc)
        return 2
    except OSError as exc:
        _fail("io", exc)
        return 1


def _fail(kind, exc):
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

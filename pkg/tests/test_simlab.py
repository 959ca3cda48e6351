"""Scenario generation, masking, and the replication harness."""

import numpy as np
import pytest
from scipy.special import expit

from ordsens import simlab
from ordsens.exceptions import SchemaError
from ordsens.simlab import (LookalikeConfig, MnarRule, ScenarioConfig,
                            apply_mnar, generate, generate_lookalike,
                            load_scenario, run_monte_carlo)
from ordsens.streams import GENERATE, substream

CONFIG_DIR = "src/ordsens/configs"


def _mini_config(**over):
    base = dict(
        name="mini", design="nonhier-extreme", n=500, K=3, y_type="binary",
        beta0=-0.5, beta_x1=(0.0, 0.8, -0.6), beta_x2=(0.0, 0.5, 0.2, -0.3),
        x1_logits=[[0.0, -0.3, 0.2]] * 4,
        model="glm-logit", link="probit", R=3, M=3, seed=1,
        mnar_rules=(MnarRule("y=1", 1, 0.3), MnarRule("y=0", 3, 0.3)),
        delta_scenarios={"MNAR1": simlab.DeltaSpec(default_delta=[0.0, -1.0])},
    )
    base.update(over)
    return ScenarioConfig(**base)


def test_scenario_json_round_trip():
    cfg = _mini_config()
    back = ScenarioConfig.from_json_obj(cfg.to_json_obj())
    assert back.name == cfg.name and back.seed == cfg.seed
    assert back.R == cfg.R and back.M == cfg.M
    np.testing.assert_array_equal(back.beta_x1, cfg.beta_x1)
    assert [r.outcome for r in back.mnar_rules] == ["y=1", "y=0"]
    assert set(back.delta_scenarios) == {"MNAR1"}


def test_shipped_configs_load():
    for name in ("nonhier_extreme", "hier_extreme", "nonhier_intermediate",
                 "nonhier_continuous"):
        cfg = load_scenario(f"{CONFIG_DIR}/{name}.json")
        assert isinstance(cfg, ScenarioConfig)
        assert cfg.n in (1000, 2000) and cfg.M in (10, 20)
        assert cfg.design == name.replace("_", "-")
    look = load_scenario(f"{CONFIG_DIR}/lookalike.json")
    assert isinstance(look, LookalikeConfig)


def test_generate_marginal_outcome_rate():
    # with all slopes zero the outcome rate is expit(beta0)
    cfg = _mini_config(n=200_000, beta_x1=(0.0, 0.0, 0.0),
                       beta_x2=(0.0, 0.0, 0.0, 0.0), beta0=-1.5)
    ds = generate(cfg, substream(3, GENERATE, 1))
    want = expit(-1.5)
    se = np.sqrt(want * (1 - want) / cfg.n)
    assert abs(ds.y.mean() - want) < 4 * se


def test_generate_category_distribution_follows_logits():
    logits = [0.0, 1.0, -1.0]
    cfg = _mini_config(n=200_000, x1_logits=[logits] * 4)
    ds = generate(cfg, substream(4, GENERATE, 1))
    want = np.exp(logits) / np.exp(logits).sum()
    got = np.bincount(ds.x1, minlength=4)[1:] / cfg.n
    np.testing.assert_allclose(got, want, atol=0.006)


def test_apply_mnar_masks_only_eligible_cells():
    cfg = _mini_config(n=50_000)
    full = generate(cfg, substream(5, GENERATE, 1))
    masked = apply_mnar(full, cfg.mnar_rules, substream(5, 2, 1))
    hit = masked.miss
    # every masked cell was eligible under one of the two rules
    elig = ((full.y == 1) & (full.x1 == 1)) | ((full.y == 0) & (full.x1 == 3))
    assert np.all(elig[hit])
    # Bernoulli masking: per-rule rate within 4 binomial SEs of 0.3
    for cond, cat in ((1, 1), (0, 3)):
        cells = (full.y == cond) & (full.x1 == cat)
        rate = hit[cells].mean()
        se = np.sqrt(0.3 * 0.7 / cells.sum())
        assert abs(rate - 0.3) < 4 * se


def test_apply_mnar_exact_subsampling():
    cfg = _mini_config(n=20_000)
    full = generate(cfg, substream(6, GENERATE, 1))
    masked = apply_mnar(full, cfg.mnar_rules, substream(6, 2, 1), exact=True)
    for cond, cat in ((1, 1), (0, 3)):
        cells = (full.y == cond) & (full.x1 == cat)
        want = int(round(0.3 * cells.sum()))
        assert masked.miss[cells].sum() == want


def test_apply_mnar_rejects_overlapping_rules():
    cfg = _mini_config()
    full = generate(cfg, substream(7, GENERATE, 1))
    rules = (MnarRule("y=1", 1, 0.2), MnarRule("y=1", 1, 0.3))
    with pytest.raises(SchemaError):
        apply_mnar(full, rules, substream(7, 2, 1))


def test_mnar_rule_stratum_restriction():
    cfg = _mini_config(n=30_000)
    full = generate(cfg, substream(8, GENERATE, 1))
    from ordsens.data import StratumKey
    rules = (MnarRule("y=1", 1, 0.5, stratum=StratumKey("X2", 2)),)
    masked = apply_mnar(full, rules, substream(8, 2, 1))
    outside = masked.miss & (full.covs[:, 0] != 2)
    assert outside.sum() == 0
    inside = (full.y == 1) & (full.x1 == 1) & (full.covs[:, 0] == 2)
    assert masked.miss[inside].mean() == pytest.approx(0.5, abs=0.05)


def test_run_monte_carlo_deterministic():
    cfg = _mini_config(n=400, R=3, M=3)
    a = run_monte_carlo(cfg)
    b = run_monte_carlo(cfg)
    for m in a.methods:
        np.testing.assert_array_equal(a.est_mean[m], b.est_mean[m])
        np.testing.assert_array_equal(a.coverage[m], b.coverage[m])
    assert a.failures == ()


def test_run_monte_carlo_thread_invariant():
    cfg = _mini_config(n=400, R=4, M=3)
    a = run_monte_carlo(cfg, threads=1)
    b = run_monte_carlo(cfg, threads=2)
    for m in a.methods:
        np.testing.assert_array_equal(a.est_mean[m], b.est_mean[m])


def test_run_monte_carlo_seed_override_and_validation():
    cfg = _mini_config(n=400, R=2, M=3)
    a = run_monte_carlo(cfg)                    # uses cfg.seed
    b = run_monte_carlo(cfg, seed=cfg.seed)
    np.testing.assert_array_equal(a.est_mean["MAR"], b.est_mean["MAR"])
    with pytest.raises(SchemaError):
        run_monte_carlo(cfg, methods=("BOGUS",))


def test_no_masking_makes_cc_exact():
    cfg = _mini_config(n=400, R=3, M=2, mnar_rules=(), delta_scenarios={})
    rep = run_monte_carlo(cfg)
    np.testing.assert_array_equal(rep.est_mean["CC"], rep.est_mean["SIMULATED"])
    np.testing.assert_array_equal(rep.est_mean["MAR"], rep.est_mean["SIMULATED"])


def test_report_rows_layout():
    cfg = _mini_config(n=400, R=2, M=2)
    rep = run_monte_carlo(cfg)
    rows = rep.rows()
    assert len(rows) == len(rep.methods) * len(rep.coef_names)
    assert set(rows[0]) == {"method", "coefficient", "rel_bias_pct",
                            "emp_sd", "coverage"}
    obj = rep.to_json_obj()
    assert obj["name"] == "mini" and "est_mean" in obj


def test_generate_hier_cluster_layout():
    cfg = _mini_config(design="hier-extreme", model="glmm-logit-ri", n=600,
                       n_clusters=6, cluster_size=100, u_sd=0.4)
    ds = generate(cfg, substream(9, GENERATE, 1))
    assert ds.n_clusters == 6
    np.testing.assert_array_equal(np.bincount(ds.cluster)[1:], [100] * 6)


def test_lookalike_exact_shapes():
    cfg = load_scenario(f"{CONFIG_DIR}/lookalike.json")
    ds = generate_lookalike(cfg, substream(cfg.seed, GENERATE, 1))
    assert ds.n == cfg.n
    assert int(ds.miss.sum()) == cfg.target_missing_count
    sizes = np.bincount(ds.cluster)[1:]
    want = np.round(np.asarray(cfg.cluster_shares_pct) / 100 * cfg.n)
    assert np.abs(sizes - want).max() <= 1       # apportionment rounding
    got = np.bincount(ds.x1[~ds.miss], minlength=4)[1:] / (~ds.miss).sum()
    np.testing.assert_allclose(got, cfg.x1_probs, atol=0.02)

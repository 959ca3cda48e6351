"""Delta adjustment: spec validation, reclassification, distribution oracles."""

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import chi2_contingency

from ordsens.adjust import AdjustedImputationSet, DeltaSpec, adjust, classify_latent
from ordsens.data import StratumKey, imputation_design
from ordsens.exceptions import SchemaError
from ordsens.impute import impute_mar_flat
from ordsens.ordinal import fit_imputation_model

from conftest import synth_flat


def test_delta_spec_needs_some_delta():
    with pytest.raises(SchemaError):
        DeltaSpec()


def test_delta_spec_rejects_bad_sigma2():
    with pytest.raises(SchemaError):
        DeltaSpec(default_delta=[0.0, 0.0], sigma2=0.0)


def test_delta_spec_one_stratum_variable_only():
    with pytest.raises(SchemaError):
        DeltaSpec(per_stratum={StratumKey("X2", 1): [0.0, 0.0],
                               StratumKey("cluster", 1): [0.0, 0.0]})


def test_delta_spec_length_checked_against_dataset(flat_ds):
    spec = DeltaSpec(default_delta=[0.0, 0.0])      # K=4 needs length 3
    with pytest.raises(SchemaError):
        spec.validate_for(flat_ds)


def test_delta_spec_level_bounds_checked(flat_ds):
    spec = DeltaSpec(per_stratum={StratumKey("X2", 9): [0.0, 0.0, 0.0]})
    with pytest.raises(SchemaError):
        spec.validate_for(flat_ds)


def test_delta_for_level_fallback_rules():
    spec = DeltaSpec(default_delta=[1.0, 2.0],
                     per_stratum={StratumKey("X2", 2): [3.0, 4.0]})
    np.testing.assert_array_equal(spec.delta_for_level(2), [3.0, 4.0])
    np.testing.assert_array_equal(spec.delta_for_level(1), [1.0, 2.0])
    bare = DeltaSpec(per_stratum={StratumKey("X2", 2): [3.0, 4.0]})
    with pytest.raises(SchemaError):
        bare.delta_for_level(1)


def test_delta_spec_json_round_trip():
    spec = DeltaSpec(default_delta=[0.0, -1.0],
                     per_stratum={StratumKey("X2", 3): [0.5, 0.0]},
                     sigma2=0.9)
    back = DeltaSpec.from_json_obj(spec.to_json_obj())
    np.testing.assert_array_equal(back.default_delta, spec.default_delta)
    np.testing.assert_array_equal(back.per_stratum[StratumKey("X2", 3)],
                                  [0.5, 0.0])
    assert back.sigma2 == 0.9
    with pytest.raises(SchemaError):
        DeltaSpec.from_json("{\"strata\": {\"X2\": [1.0]}}")   # label lacks level


def test_classify_latent_scalar_and_array():
    zs = np.array([-1.0, 0.0, 1.0])
    assert classify_latent(-2.0, zs) == 1
    assert classify_latent(0.5, zs) == 3
    assert classify_latent(9.0, zs) == 4
    np.testing.assert_array_equal(classify_latent(np.array([-2.0, 0.5, 9.0]), zs),
                                  [1, 3, 4])


def test_classify_latent_constant_shift_equivalence():
    # shifting every threshold by c equals shifting the latent by -c
    rng = np.random.default_rng(2)
    theta = rng.normal(size=500)
    zs = rng.normal(size=4)
    for c in (-1.3, 0.4, 2.2):
        np.testing.assert_array_equal(classify_latent(theta, zs + c),
                                      classify_latent(theta - c, zs))


@pytest.fixture(scope="module")
def imputed():
    ds = synth_flat(n=2500, seed=21, miss=0.3)
    return ds, impute_mar_flat(ds, 4, seed=33)


def test_adjust_reproducible_and_observed_untouched(imputed):
    ds, imps = imputed
    spec = DeltaSpec(default_delta=[0.0, 0.0, -1.0])
    a = adjust(imps, ds, spec, seed=55)
    b = adjust(imps, ds, spec, seed=55)
    np.testing.assert_array_equal(a.codes, b.codes)
    obs = ~ds.miss
    for m in range(a.M):
        np.testing.assert_array_equal(a.codes[m, obs], ds.x1[obs])
    block = a.imputed_block()
    assert block.min() >= 1 and block.max() <= ds.K
    assert isinstance(a, AdjustedImputationSet)


def test_adjust_zeta_star_records_shifts(imputed):
    ds, imps = imputed
    spec = DeltaSpec(default_delta=[0.5, 0.0, -2.0])
    adj = adjust(imps, ds, spec, seed=7)
    assert len(adj.zeta_star) == imps.M
    for entry in adj.zeta_star:
        zh = np.asarray(entry["zeta_hat"])
        for vec in entry["shifted"].values():
            np.testing.assert_allclose(np.asarray(vec) - zh, [0.5, 0.0, -2.0],
                                       rtol=1e-12)


def test_adjust_delta_zero_unit_sigma_reproduces_mar(imputed):
    """delta = 0 with sigma2 = 1 redraws from the imputation model itself, so
    the adjusted category distribution matches the MAR one."""
    ds, imps = imputed
    spec = DeltaSpec(default_delta=[0.0, 0.0, 0.0], sigma2=1.0)
    adj = adjust(imps, ds, spec, seed=77)
    K = ds.K
    f_mar = np.bincount(imps.imputed_block().ravel(), minlength=K + 1)[1:]
    f_adj = np.bincount(adj.imputed_block().ravel(), minlength=K + 1)[1:]
    stat, p, _, _ = chi2_contingency(np.vstack([f_mar, f_adj]))
    assert p > 0.01


def test_adjust_extreme_shift_matches_cdf_integration(imputed):
    """A -10 shift of the top threshold empties category K-1; the remaining
    mass splits by the normal CDF integrated over each copy's refit."""
    ds, imps = imputed
    sigma2 = 1.2
    spec = DeltaSpec(default_delta=[0.0, 0.0, -10.0], sigma2=sigma2)
    adj = adjust(imps, ds, spec, seed=99)
    block = adj.imputed_block()
    K = ds.K
    emp = np.bincount(block.ravel(), minlength=K + 1)[1:] / block.size
    assert emp[K - 2] == 0.0

    W, _ = imputation_design(ds)
    Wmis = W[ds.miss]
    sd = np.sqrt(sigma2)
    want = np.zeros(K)
    for m in range(imps.M):
        refit = fit_imputation_model(ds, x1_full=imps.codes[m])
        eta = Wmis @ refit.beta
        z1, z2 = refit.zeta[0], refit.zeta[1]
        p1 = ndtr((z1 - eta) / sd)
        p2 = ndtr((z2 - eta) / sd) - p1
        want += np.array([p1.mean(), p2.mean(), 0.0, 1.0 - p1.mean() - p2.mean()])
    want /= imps.M
    np.testing.assert_allclose(emp, want, atol=0.03)


def test_adjust_per_stratum_shifts_act_locally(imputed):
    """Opposite extreme shifts per stratum push each stratum's imputations to
    opposite ends of the scale."""
    ds, imps = imputed
    spec = DeltaSpec(default_delta=[0.0, 0.0, 0.0],
                     per_stratum={StratumKey("X2", 1): [10.0, 10.0, 10.0],
                                  StratumKey("X2", 2): [-10.0, -10.0, -10.0]})
    adj = adjust(imps, ds, spec, seed=13)
    x2_mis = ds.covs[ds.miss, 0]
    block = adj.imputed_block()
    assert np.all(block[:, x2_mis == 1] == 1)          # thresholds way up: cat 1
    assert np.all(block[:, x2_mis == 2] == ds.K)       # thresholds way down: cat K
    lvl3 = block[:, x2_mis == 3]
    assert lvl3.min() >= 1 and len(np.unique(lvl3)) > 1


def test_adjust_validates_spec_against_dataset(imputed):
    ds, imps = imputed
    with pytest.raises(SchemaError):
        adjust(imps, ds, DeltaSpec(default_delta=[0.0]), seed=1)

import math

import numpy as np
import pytest

from dctsign.codecmodel import (
    CodingConfig,
    SignMask,
    Unknown,
    encode_dc_chain,
    encode_image,
    mask_signs,
    observed,
)
from dctsign.imagecore import PixelImage
from dctsign.lpmodel import build_model
from dctsign.metrics import psnr, ssim
from dctsign.recovery import (
    RecoveryConfig,
    RecoveryError,
    assemble,
    decode,
    recover,
    recover_naive,
)
from dctsign.solver import solve_milp
from dctsign.transform import CoeffImage

from conftest import natural_crop
from oracles import enumerate_min_tv, raw_pixels, tv


def setup(samples, u, **cfgkw):
    """Encode, hide signs, and return what a receiver sees plus the truth."""
    cfg = CodingConfig(**cfgkw)
    img = PixelImage(np.asarray(samples, dtype=float))
    coeffs, chain = encode_image(img, cfg)
    mask = mask_signs(coeffs, u, cfg, chain)
    obs, obs_chain = observed(coeffs, mask, chain)
    return obs, mask, obs_chain, cfg, coeffs


def single_unknown(coeffs, key, truth):
    a = abs(truth)
    return SignMask(coeffs.block_rows, coeffs.block_cols, coeffs.n, {key: Unknown(-a, a, truth)})


def truth_choices(mask):
    return {key: u.truth for key, u in mask}


# -- naive ------------------------------------------------------------------

def test_naive_negative_exact_when_all_truth_negative():
    data = np.zeros((1, 1, 8, 8))
    data[0, 0, 0, 0] = -200.0
    data[0, 0, 0, 1] = -40.0
    data[0, 0, 1, 0] = -25.0
    coeffs = CoeffImage(data, x_min=-128.0, x_max=127.0)
    cfg = CodingConfig(level_shift=True)
    mask = SignMask(1, 1, 8, {(0, 0, 0, 0): Unknown(-200, 200, -200),
                              (0, 0, 0, 1): Unknown(-40, 40, -40),
                              (0, 0, 1, 0): Unknown(-25, 25, -25)})
    obs, chain = observed(coeffs, mask, encode_dc_chain(coeffs.dc, 0))
    truth_img = decode(coeffs, data, cfg)
    neg = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("naive-neg"))
    pos = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("naive-pos"))
    np.testing.assert_array_equal(neg.coeffs, data)
    assert psnr(truth_img, neg.image) == math.inf
    assert psnr(truth_img, pos.image) < 20


def test_naive_with_empty_mask_is_plain_decode():
    x = natural_crop("camera", 16)
    cfg = CodingConfig()
    coeffs, chain = encode_image(PixelImage(x), cfg)
    empty = SignMask(2, 2, 8)
    for variant in ("negative", "positive"):
        res = recover_naive(coeffs, empty, chain, cfg, variant)
        np.testing.assert_array_equal(res.image.samples, x)


def test_naive_rejects_bad_variant():
    obs, mask, chain, cfg, _ = setup(natural_crop("camera", 8), 2)
    with pytest.raises(ValueError):
        recover_naive(obs, mask, chain, cfg, "sideways")


# -- naive-lp ---------------------------------------------------------------

def test_naive_lp_without_unknowns_is_exact():
    x = natural_crop("moon", 16)
    cfg = CodingConfig()
    coeffs, chain = encode_image(PixelImage(x), cfg)
    res = recover(coeffs, SignMask(2, 2, 8), chain, cfg, RecoveryConfig("naive-lp"))
    np.testing.assert_array_equal(res.image.samples, x)


def constant_plus_ac(value=3.0):
    data = np.zeros((1, 1, 8, 8))
    data[0, 0, 0, 0] = 8 * 100.0
    data[0, 0, 0, 1] = value
    coeffs = CoeffImage(data)
    mask = single_unknown(coeffs, (0, 0, 0, 1), value)
    obs, chain = observed(coeffs, mask, encode_dc_chain(coeffs.dc, 0))
    return obs, mask.without_truth(), chain, CodingConfig()


def test_naive_lp_flattens_a_lone_ac_unknown():
    obs, mask, chain, cfg = constant_plus_ac()
    res = recover(obs, mask, chain, cfg, RecoveryConfig("naive-lp"))
    assert res.choices[(0, 0, 0, 1)] == pytest.approx(0, abs=1e-7)
    assert res.objective == pytest.approx(0, abs=1e-7)
    np.testing.assert_array_equal(res.image.samples, np.full((8, 8), 100.0))


def test_naive_lp_total_variation_below_truth(rng):
    x = rng.integers(40, 216, (8, 8)).astype(float)
    obs, mask, chain, cfg, coeffs = setup(x, 6)
    res = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("naive-lp"))
    assert res.objective <= tv(x) + 1e-6
    assert res.objective == pytest.approx(tv(raw_pixels(obs, res.coeffs, cfg)), abs=1e-5)


# -- relaxed-lp -------------------------------------------------------------

def test_relaxed_lp_recovers_ramp_sign():
    x = 16.0 * np.repeat(np.arange(8.0)[:, None], 8, axis=1)
    cfg = CodingConfig()
    coeffs, chain = encode_image(PixelImage(x), cfg)
    truth = float(coeffs.coeffs[0, 0, 1, 0])
    mask = single_unknown(coeffs, (0, 0, 1, 0), truth)
    obs, chain = observed(coeffs, mask, chain)
    res = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("relaxed-lp", threshold=0))
    assert res.choices[(0, 0, 1, 0)] == pytest.approx(truth)
    np.testing.assert_array_equal(res.image.samples, x)


def test_relaxed_lp_zero_strategy_one_keeps_zero():
    obs, mask, chain, cfg = constant_plus_ac()
    res = recover(obs, mask, chain, cfg, RecoveryConfig("relaxed-lp", threshold=0,
                                                        zero_sign_strategy=1))
    assert res.choices[(0, 0, 0, 1)] == 0.0
    for strategy, expected in ((2, 3.0), (3, -3.0)):
        res = recover(obs, mask, chain, cfg, RecoveryConfig("relaxed-lp", threshold=0,
                                                            zero_sign_strategy=strategy))
        assert res.choices[(0, 0, 0, 1)] == expected


def test_relaxed_lp_bernoulli_strategy_is_seeded():
    obs, mask, chain, cfg = constant_plus_ac()
    picks = {recover(obs, mask, chain, cfg, RecoveryConfig(
        "relaxed-lp", threshold=0, zero_sign_strategy=4, seed=s)).choices[(0, 0, 0, 1)]
        for s in range(20)}
    assert picks == {-3.0, 3.0}
    again = [recover(obs, mask, chain, cfg, RecoveryConfig(
        "relaxed-lp", threshold=0, zero_sign_strategy=4, seed=7)).choices[(0, 0, 0, 1)]
        for _ in range(3)]
    assert len(set(again)) == 1


def test_relaxed_lp_zero_strategies_barely_matter():
    x = natural_crop("camera", 64)
    obs, mask, chain, cfg, _ = setup(x, 3, level_shift=True)
    scores = [ssim(x, recover(obs, mask.without_truth(), chain, cfg,
                              RecoveryConfig("relaxed-lp", zero_sign_strategy=s)).image)
              for s in (1, 2, 3, 4)]
    assert max(scores) - min(scores) < 0.01


def test_default_thresholds():
    assert RecoveryConfig("relaxed-lp").effective_threshold == 5
    assert RecoveryConfig("hier-milp").effective_threshold == 0
    assert RecoveryConfig("hier-milp", threshold=2).effective_threshold == 2


# -- hier-milp --------------------------------------------------------------

def test_whole_image_region_equals_full_milp():
    x = natural_crop("coins", 16)
    obs, mask, chain, cfg, _ = setup(x, 2, dc_prediction_mode=1)
    mask = mask.without_truth()
    res = recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=(16, 16),
                                                        alignment="none"))
    full = solve_milp(build_model(obs, mask, chain, cfg, integrality="milp"))
    assert res.stats["regions"][0]["objective"] == pytest.approx(full.objective, abs=1e-6)
    assert tv(raw_pixels(obs, res.coeffs, cfg)) == pytest.approx(full.objective, abs=1e-5)


def test_two_regions_match_per_region_enumeration():
    x = natural_crop("camera", 16)
    obs, mask, chain, cfg, _ = setup(x, 2)
    hidden = mask
    mask = mask.without_truth()
    stage1 = recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=(16, 8),
                                                           alignment="none"))
    for info in stage1.stats["regions"]:
        best, _, free = enumerate_min_tv(obs, hidden, chain, cfg, rect=tuple(info["rect"]))
        assert 0 < len(free) <= 12
        assert info["objective"] == pytest.approx(best, abs=1e-6)
    aligned = recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=(16, 8)))
    assert aligned.objective <= tv(raw_pixels(obs, stage1.coeffs, cfg)) + 1e-6


def test_dependency_modes_directional():
    x = natural_crop("astronaut", 64)
    obs, mask, chain, cfg, _ = setup(x, 2, dc_prediction_mode=2, level_shift=True)
    mask = mask.without_truth()
    score = {d: ssim(x, recover(obs, mask, chain, cfg, RecoveryConfig(
        "hier-milp", region_size=(8, 64), dependency_mode=d)).image) for d in (0, 1, 2)}
    assert score[0] >= score[1] - 0.02
    assert all(s > 0.5 for s in score.values())


@pytest.mark.parametrize("region", [(12, 16), (16, 0), (24, 16)])
def test_region_must_tile(region):
    obs, mask, chain, cfg, _ = setup(natural_crop("camera", 32), 2)
    with pytest.raises(ValueError):
        recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=region))


def test_region_shape_rule_under_raster_chain():
    obs, mask, chain, cfg, _ = setup(natural_crop("camera", 32), 2, dc_prediction_mode=2)
    with pytest.raises(ValueError, match="one block row"):
        recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=(16, 16),
                                                      dependency_mode=1))
    for ok in ((8, 16), (16, 32)):
        recover(obs, mask, chain, cfg, RecoveryConfig("hier-milp", region_size=ok,
                                                      dependency_mode=1))


def test_hier_milp_exact_on_gradient():
    i, j = np.mgrid[0:16, 0:16]
    x = (3 * i + 5 * j + 20).astype(float)
    obs, mask, chain, cfg, _ = setup(x, 3)
    res = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("hier-milp",
                                                                        region_size=(16, 16)))
    np.testing.assert_array_equal(res.image.samples, x)


def test_single_block_regions_cannot_orient_a_gradient():
    # Inside one block a reversed ramp with flattened ends has lower TV than
    # the true ramp; only neighbouring blocks reveal the direction.
    i, j = np.mgrid[0:16, 0:16]
    x = (3 * i + 5 * j + 20).astype(float)
    obs, mask, chain, cfg, _ = setup(x, 3)
    res = recover(obs, mask.without_truth(), chain, cfg, RecoveryConfig("hier-milp",
                                                                        region_size=(8, 8)))
    assert res.stats["regions"][0]["objective"] < tv(x[:8, :8])


# -- shared -----------------------------------------------------------------

def test_truth_choices_reproduce_the_image():
    x = natural_crop("chelsea", 32)
    for mode in (0, 1, 2, 3):
        obs, mask, chain, cfg, _ = setup(x, 4, dc_prediction_mode=mode)
        data = assemble(obs, mask, chain, truth_choices(mask))
        np.testing.assert_array_equal(decode(obs, data, cfg).samples, x)


def test_observed_hides_the_truth():
    obs, mask, chain, cfg, coeffs = setup(natural_crop("camera", 16), 3, dc_prediction_mode=1)
    for key in mask.hidden():
        if key[2:] == (0, 0):
            assert chain.z[key[:2]] == 0
        else:
            assert obs.coeffs[key] == 0
    assert np.all(obs.coeffs[:, :, 0, 0] == 0)


@pytest.mark.parametrize("method", ["naive-lp", "relaxed-lp", "hier-milp"])
def test_deterministic(method):
    obs, mask, chain, cfg, _ = setup(natural_crop("coffee", 32), 3, level_shift=True)
    mask = mask.without_truth()
    rc = RecoveryConfig(method, region_size=(16, 16), zero_sign_strategy=4, seed=3)
    a, b = recover(obs, mask, chain, cfg, rc), recover(obs, mask, chain, cfg, rc)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    assert a.choices == b.choices


def test_relaxation_bounds_milp_and_truth():
    x = natural_crop("text", 16)
    obs, mask, chain, cfg, _ = setup(x, 3)
    mask = mask.without_truth()
    lp = recover(obs, mask, chain, cfg, RecoveryConfig("naive-lp"))
    milp = solve_milp(build_model(obs, mask, chain, cfg, integrality="milp"))
    assert lp.objective <= milp.objective + 1e-6 <= tv(x) + 2e-6


def test_mismatched_inputs_rejected():
    obs, mask, chain, cfg, _ = setup(natural_crop("camera", 16), 2)
    with pytest.raises(ValueError):
        recover(obs, SignMask(1, 1, 8), chain, cfg, RecoveryConfig("naive-neg"))
    with pytest.raises(ValueError):
        recover(obs, mask, chain, CodingConfig(dc_prediction_mode=1), RecoveryConfig("naive-neg"))


def test_recovery_error_carries_status():
    data = np.zeros((1, 1, 8, 8))
    data[0, 0, 0, 0] = 8 * 100.0
    coeffs = CoeffImage(data)
    # both candidates push pixels far outside [0, 255]
    mask = SignMask(1, 1, 8, {(0, 0, 0, 0): Unknown(-5000, 5000, 800)})
    obs, chain = observed(coeffs, mask, encode_dc_chain(coeffs.dc, 0))
    with pytest.raises(RecoveryError) as err:
        recover(obs, mask, chain, CodingConfig(), RecoveryConfig("hier-milp", region_size=(8, 8)))
    assert err.value.status == "infeasible"


@pytest.mark.parametrize("kw", [dict(method="bogus"), dict(alignment="bogus"),
                                dict(zero_sign_strategy=5), dict(bernoulli_p=2.0),
                                dict(dependency_mode=3), dict(milp_time_limit=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RecoveryConfig(**kw)

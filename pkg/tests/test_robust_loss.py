import numpy as np
import pytest

from core.errors import ConfigError, DimensionError, InsufficientDataError, RangeError
from core.robust_loss import (
    OutlierMask, PatchErrorSeries, ThresholdKind, ThresholdRule,
    broadcast_patch_scores, build_mask, compute_threshold, empty_mask,
    mask_from_samples, masked_residual, patch_errors, trimmed_objective,
)


def test_patch_errors_all_ones():
    x = np.ones((1, 8))
    series = patch_errors(x, np.zeros_like(x), 4)
    np.testing.assert_array_equal(series.errors, [2.0, 2.0])
    np.testing.assert_array_equal(series.starts, [0, 4])


def test_patch_errors_sum_to_global_norm(rng):
    x = rng.standard_normal((3, 103))
    recon = rng.standard_normal((3, 103))
    series = patch_errors(x, recon, 10)
    assert series.n_patches == 11
    assert series.errors.sum() == pytest.approx(0.5 * np.sum((x - recon) ** 2), abs=1e-12)


def test_patch_errors_exact_reconstruction():
    x = np.arange(12.0).reshape(2, 6)
    assert not np.any(patch_errors(x, x.copy(), 3).errors)


def test_patch_wider_than_signal():
    with pytest.raises(RangeError):
        patch_errors(np.zeros((1, 5)), np.zeros((1, 5)), 6)


def test_patch_errors_shape_mismatch():
    with pytest.raises(DimensionError):
        patch_errors(np.zeros((1, 5)), np.zeros((2, 5)), 2)


@pytest.mark.parametrize("values, rule, expected", [
    (np.arange(1.0, 11.0), ThresholdRule(ThresholdKind.QUANTILE, 0.1), 9.0),
    (np.array([0.0, 0.0, 0.0, 0.0, 10.0]), ThresholdRule(ThresholdKind.ZSCORE, 3.0), 14.0),
])
def test_threshold_worked_examples(values, rule, expected):
    assert compute_threshold(values, rule) == expected


def test_mad_worked_example():
    beta = compute_threshold(np.array([1.0, 2.0, 3.0, 4.0, 100.0]), ThresholdRule(ThresholdKind.MAD, 3.5))
    assert beta == pytest.approx(8.1890, abs=1e-4)


def test_mad_lower_median_for_even_counts():
    # Нижние медианы: Med = 2, |e - 2| = {1, 0, 1, 2} -> Mad = 1
    beta = compute_threshold(np.array([1.0, 2.0, 3.0, 4.0]), ThresholdRule(ThresholdKind.MAD, 1.0))
    assert beta == pytest.approx(2.0 + 1.0 / 0.6745)


def test_threshold_needs_two_values():
    with pytest.raises(InsufficientDataError):
        compute_threshold(np.array([1.0]), ThresholdRule(ThresholdKind.ZSCORE))


def test_rule_defaults_and_validation():
    assert ThresholdRule(ThresholdKind.ZSCORE).alpha == 3.0
    assert ThresholdRule(ThresholdKind.MAD).alpha == 3.5
    assert ThresholdRule("quantile", 0.2).kind is ThresholdKind.QUANTILE
    with pytest.raises(ConfigError):
        ThresholdRule(ThresholdKind.QUANTILE, 1.0)
    with pytest.raises(ConfigError):
        ThresholdRule(ThresholdKind.MAD, 0.0)


def test_rule_from_config():
    rule = ThresholdRule.from_config({"kind": "MAD", "alpha": 3.0})
    assert rule.kind is ThresholdKind.MAD and rule.alpha == 3.0
    with pytest.raises(ConfigError):
        ThresholdRule.from_config({"kind": "median"})
    with pytest.raises(ConfigError):
        ThresholdRule.from_config({"kind": "mad", "beta": 1.0})


def test_build_mask_ties_are_inliers():
    series = PatchErrorSeries(1, np.arange(3), np.array([1.0, 5.0, 9.0]), 3)
    mask = build_mask(series, 5.0)
    np.testing.assert_array_equal(mask.flags, [False, False, True])
    assert build_mask(series, series.errors.max()).n_outliers == 0
    assert build_mask(series, -1.0).n_outliers == 3


def test_quantile_outlier_count_bounds(rng):
    values = rng.exponential(size=200)
    rule = ThresholdRule(ThresholdKind.QUANTILE, 0.1)
    beta = compute_threshold(values, rule)
    n_outliers = int(np.sum(values > beta))
    assert 19 <= n_outliers <= 20


def test_mask_invariant_to_patch_order(rng):
    values = rng.exponential(size=50)
    rule = ThresholdRule(ThresholdKind.MAD)
    perm = rng.permutation(50)
    assert compute_threshold(values, rule) == compute_threshold(values[perm], rule)


def test_trimmed_objective_cases():
    x = np.ones((1, 8))
    recon = np.zeros_like(x)
    series = patch_errors(x, recon, 4)
    # Без выбросов: 1/2 ||x - recon||^2 / W_patch + lambda * l1
    assert trimmed_objective(x, recon, empty_mask(series), 2.0, 0.5) == pytest.approx(4.0 / 4 + 1.0)
    all_flagged = build_mask(series, -1.0)
    assert trimmed_objective(x, recon, all_flagged, 2.0, 0.5) == pytest.approx(1.0)
    one_flagged = OutlierMask(4, np.array([True, False]), 2.0, 8)
    assert trimmed_objective(x, recon, one_flagged, 0.0, 0.5) == pytest.approx(0.5 * 4.0 / 4)


def test_masked_residual_zeroes_flagged_patch(rng):
    x = rng.standard_normal((2, 12))
    recon = rng.standard_normal((2, 12))
    mask = OutlierMask(4, np.array([False, True, False]), 0.0, 12)
    residual = masked_residual(x, recon, mask)
    np.testing.assert_array_equal(residual[:, 4:8], 0.0)
    np.testing.assert_allclose(residual[:, :4], (recon - x)[:, :4])
    np.testing.assert_allclose(residual[:, 8:], (recon - x)[:, 8:])


def test_masked_residual_extremes(rng):
    x = rng.standard_normal((1, 10))
    recon = rng.standard_normal((1, 10))
    series = patch_errors(x, recon, 3)
    np.testing.assert_allclose(masked_residual(x, recon, empty_mask(series)), recon - x)
    assert not np.any(masked_residual(x, recon, build_mask(series, -1.0)))


def test_sample_mask_and_broadcast_with_short_last_patch():
    x = np.ones((1, 10))
    series = patch_errors(x, np.zeros_like(x), 4)
    np.testing.assert_array_equal(series.errors, [2.0, 2.0, 1.0])
    scores = broadcast_patch_scores(series)
    np.testing.assert_array_equal(scores, [2.0] * 8 + [1.0] * 2)
    mask = build_mask(series, 1.5)
    np.testing.assert_array_equal(mask.sample_mask(), [True] * 8 + [False] * 2)


def test_mask_from_samples():
    flags = np.zeros(10, dtype=bool)
    flags[5] = True
    mask = mask_from_samples(flags, 4)
    np.testing.assert_array_equal(mask.flags, [False, True, False])

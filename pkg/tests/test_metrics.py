from itertools import permutations

import numpy as np
import pytest

from conftest import unit_atoms
from core.errors import DimensionError, UndefinedMetricError
from core.metrics import (
    correlation_matrix, full_correlation_1d, mask_f1, pooled_mask_f1, recovery_score, roc_auc,
)
from core.robust_loss import OutlierMask


def _mask(flags, patch_width=4):
    flags = np.asarray(flags, dtype=bool)
    return OutlierMask(patch_width, flags, 0.0, patch_width * flags.size)


def test_full_correlation_example():
    np.testing.assert_allclose(full_correlation_1d([1.0, 2.0], [1.0, 0.0, -1.0]), [2.0, 1.0, -2.0, -1.0])


def test_full_correlation_rejects_matrices():
    with pytest.raises(DimensionError):
        full_correlation_1d(np.ones((2, 2)), np.ones(3))


def test_recovery_matches_exhaustive_assignment(rng):
    for _ in range(20):
        true_d = unit_atoms(rng, 3, 2, 6)
        learned_d = unit_atoms(rng, 4, 2, 6)
        corr = correlation_matrix(true_d, learned_d)
        best = max(sum(corr[i, j] for i, j in enumerate(cols)) for cols in permutations(range(4), 3))
        assert recovery_score(true_d, learned_d).score == pytest.approx(best / 3, abs=1e-12)


def test_recovery_of_permuted_dictionary(rng):
    d = unit_atoms(rng, 4, 3, 8)
    result = recovery_score(d, d[[2, 0, 3, 1]])
    assert result.score == pytest.approx(1.0, abs=1e-12)
    assert sorted(result.assignment) == [(0, 1), (1, 3), (2, 0), (3, 2)]


def test_recovery_ignores_shift_and_scale(rng):
    atom = np.zeros((1, 1, 10))
    atom[0, 0, 2:6] = rng.standard_normal(4)
    shifted = 3.0 * np.roll(atom, 3, axis=-1)
    assert recovery_score(atom, shifted).score == pytest.approx(1.0, abs=1e-12)


def test_recovery_channel_mismatch(rng):
    with pytest.raises(DimensionError):
        recovery_score(unit_atoms(rng, 2, 1, 5), unit_atoms(rng, 2, 2, 5))


def test_mask_f1_values():
    predicted = _mask([True, True, False, False])
    truth = _mask([True, False, True, False])
    assert mask_f1(predicted, truth) == pytest.approx(0.5)
    assert mask_f1(predicted, truth) == mask_f1(truth, predicted)
    assert mask_f1(truth, truth) == 1.0


def test_mask_f1_both_empty():
    assert mask_f1(_mask([False] * 5), _mask([False] * 5)) == 1.0


def test_mask_f1_grid_mismatch():
    with pytest.raises(DimensionError):
        mask_f1(_mask([False] * 5), _mask([False] * 6))


def test_pooled_mask_f1_counts_all_signals():
    predicted = [_mask([1, 0, 0]), _mask([0, 1, 1])]
    truth = [_mask([1, 1, 0]), _mask([0, 0, 0])]
    # TP = 1, FP = 2, FN = 1
    assert pooled_mask_f1(predicted, truth) == pytest.approx(2 / 5)
    assert pooled_mask_f1(predicted, truth) != pytest.approx(
        np.mean([mask_f1(p, t) for p, t in zip(predicted, truth)]))


def test_pooled_mask_f1_count_mismatch():
    with pytest.raises(DimensionError):
        pooled_mask_f1([_mask([1])], [])


def test_roc_auc_values():
    assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75)
    assert roc_auc([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1]) == 1.0
    assert roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_roc_auc_invariant_to_monotone_transform(rng):
    scores = rng.standard_normal(50)
    labels = rng.random(50) < 0.3
    assert roc_auc(np.exp(scores), labels) == pytest.approx(roc_auc(scores, labels))


def test_roc_auc_single_class():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.1, 0.2], [1, 1])

import numpy as np
import pytest

from conftest import sparse_codes, unit_atoms
from core.datagen import RareSpec, SimSpec, synthesize
from core.errors import ConfigError, OutputExistsError
from core.learner import TrainConfig
from core.metrics import pooled_mask_f1, recovery_score
from core.robust_loss import ThresholdKind, ThresholdRule, mask_from_samples, patch_errors
from core.sparse_coder import SparseCodeConfig, lambda_max, objective
from core.tensor import convolve
from pipeline import (
    corpus_lambda_max, detect_after_training, detect_rare_events, encode_corpus, evaluate_loss,
    prepare_output_directory,
)


def _rare_corpus():
    spec = SimSpec(n_channels=1, n_times=3000, n_atoms=1, atom_length=16, sparsity=0.01,
                   noise_sigma=0.01, n_signals=2, seed=2, rare=RareSpec(rare_density=0.3))
    return synthesize(spec)


def _stage_config(rule):
    return TrainConfig(n_atoms=1, atom_length=16, n_iter=10, n_windows=4, window_width=160,
                       n_fista=20, threshold_rule=rule, seed=1)


def _signals(rng, n=2, length=400):
    d = unit_atoms(rng, 2, 2, 10)
    corpus = [convolve(d, sparse_codes(rng, 2, length - 9, 0.03)) + 0.01 * rng.standard_normal((2, length))
              for _ in range(n)]
    return corpus, d


# --- Выходная директория ---

def test_prepare_output_directory(tmp_path):
    target = tmp_path / "out"
    prepare_output_directory(str(target))
    assert target.is_dir()
    (target / "old.csv").write_text("x")
    with pytest.raises(OutputExistsError):
        prepare_output_directory(str(target))
    prepare_output_directory(str(target), force=True)
    assert (target / "old.csv").exists()


# --- Кодирование ---

def test_encode_above_lambda_max_gives_empty_codes(rng):
    corpus, d = _signals(rng)
    lmbd = 1.01 * corpus_lambda_max(corpus, d)
    for x, (z, series) in zip(corpus, encode_corpus(corpus, d, SparseCodeConfig(lmbd, 50))):
        assert not np.any(z)
        expected = patch_errors(x, np.zeros_like(x), 10).errors
        np.testing.assert_allclose(series.errors, expected)


def test_corpus_lambda_max_is_maximum(rng):
    corpus, d = _signals(rng, n=3)
    assert corpus_lambda_max(corpus, d) == max(lambda_max(x, d) for x in corpus)


def test_encode_independent_of_jobs(rng):
    corpus, d = _signals(rng)
    cfg = SparseCodeConfig(0.1 * corpus_lambda_max(corpus, d), 50)
    serial = encode_corpus(corpus, d, cfg, n_jobs=1)
    parallel = encode_corpus(corpus, d, cfg, n_jobs=2)
    for (z1, s1), (z2, s2) in zip(serial, parallel):
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(s1.errors, s2.errors)


def test_chunked_encoding_matches_full(rng):
    corpus, d = _signals(rng, n=1, length=600)
    x = corpus[0]
    cfg = SparseCodeConfig(0.2 * lambda_max(x, d), 2000)
    [(z_full, _)] = encode_corpus(corpus, d, cfg)
    [(z_chunk, _)] = encode_corpus(corpus, d, cfg, chunk_threshold=200, chunk_length=150)
    assert z_chunk.shape == z_full.shape
    full = objective(x, d, z_full, cfg.lmbd).total
    chunked = objective(x, d, z_chunk, cfg.lmbd).total
    assert chunked == pytest.approx(full, rel=1e-6)


def test_custom_patch_width(rng):
    corpus, d = _signals(rng, n=1)
    [(_, series)] = encode_corpus(corpus, d, SparseCodeConfig(0.1, 10), patch_width=25)
    assert series.patch_width == 25 and series.n_patches == 16


def test_evaluate_loss_with_zero_codes(rng):
    corpus, d = _signals(rng)
    lmbd = 1.01 * corpus_lambda_max(corpus, d)
    expected = sum(0.5 * np.sum(x ** 2) for x in corpus) / sum(x.shape[-1] for x in corpus)
    assert evaluate_loss(corpus, d, lmbd, n_fista=20) == pytest.approx(expected)


# --- Детекция редких событий ---

def test_detection_requires_trimming():
    corpus, _ = _rare_corpus()
    cfg = _stage_config(None)
    with pytest.raises(ConfigError):
        detect_rare_events(corpus, cfg, cfg)


def test_detect_rare_events_two_stages():
    corpus, _ = _rare_corpus()
    originals = [x.copy() for x in corpus]
    cfg1 = _stage_config(ThresholdRule(ThresholdKind.QUANTILE, 0.05))
    result = detect_rare_events(corpus, cfg1, cfg1.replace(threshold_rule=None), encode_iters=50)

    for x, original in zip(corpus, originals):
        np.testing.assert_array_equal(x, original)
    assert result.common_dict.shape == (1, 1, 16)
    assert result.rare_dict.shape == (1, 1, 16)
    assert not result.empty_mask_warning
    assert 0.0 < result.outlier_fraction <= 0.05
    assert len(result.rare_activations) == 2
    assert result.rare_activations[0].shape == (1, 3000 - 15)
    assert result.stage2_report is not None
    assert len(result.stage1_errors) == 2

    for residual, mask, scores in zip(result.residuals, result.stage1_masks, result.per_sample_scores):
        assert scores.shape == (3000,)
        assert not np.any(residual[:, ~mask.sample_mask()])


def test_empty_stage1_mask_skips_rare_dictionary():
    corpus, _ = _rare_corpus()
    # Порог равен максимальной ошибке: ни один патч его не превышает
    cfg1 = _stage_config(ThresholdRule(ThresholdKind.QUANTILE, 1e-9))
    result = detect_rare_events(corpus, cfg1, cfg1.replace(threshold_rule=None), encode_iters=50)
    assert result.empty_mask_warning
    assert result.rare_dict.shape == (0, 1, 16)
    assert result.stage2_report is None
    assert result.outlier_fraction == 0.0


def test_detect_after_training_uses_untrimmed_model():
    corpus, _ = _rare_corpus()
    rule = ThresholdRule(ThresholdKind.MAD)
    masks, errors, report = detect_after_training(corpus, _stage_config(rule), rule, encode_iters=50)
    assert report.config.threshold_rule is None
    assert len(masks) == 2
    assert all(m.flags.shape == (188,) for m in masks)
    assert [e.n_patches for e in errors] == [188, 188]
    assert all(r["trimmed_fraction"] == 0.0 for r in report.rows())


# --- Статистические проверки (pytest -m slow) ---

@pytest.mark.slow
def test_clean_corpus_flags_at_most_quantile():
    corpus, _ = synthesize(SimSpec(n_times=20_000, n_signals=2, seed=4))
    cfg = TrainConfig(threshold_rule=ThresholdRule(ThresholdKind.QUANTILE, 0.05), seed=4)
    result = detect_rare_events(corpus, cfg, cfg.replace(threshold_rule=None, n_iter=1))
    assert result.outlier_fraction <= 0.05 + 0.02


@pytest.mark.slow
def test_rare_dictionary_recovers_rare_atom_better_than_stage1():
    stage1_scores, stage2_scores = [], []
    for seed in range(3):
        spec = SimSpec(n_atoms=1, n_times=20_000, n_signals=5, seed=seed,
                       rare=RareSpec(rare_density=0.1, rare_correlation=0.1))
        corpus, truth = synthesize(spec)
        cfg = TrainConfig(n_atoms=1, threshold_rule=ThresholdRule(ThresholdKind.QUANTILE, 0.05), seed=seed)
        result = detect_rare_events(corpus, cfg, cfg.replace(threshold_rule=None))
        stage1_scores.append(recovery_score(truth.rare_dictionary, result.common_dict).score)
        stage2_scores.append(recovery_score(truth.rare_dictionary, result.rare_dict).score)
    assert np.median(stage2_scores) > np.median(stage1_scores), (stage1_scores, stage2_scores)


@pytest.mark.slow
def test_inline_trimming_mask_beats_after_training_mask():
    rule = ThresholdRule(ThresholdKind.MAD, 3.5)
    inline, after = [], []
    for seed in range(10):
        spec = SimSpec(n_times=20_000, n_signals=2, seed=seed,
                       rare=RareSpec(rare_density=0.1, artifact_density=5e-4))
        corpus, truth = synthesize(spec)
        cfg = TrainConfig(threshold_rule=rule, seed=seed)
        result = detect_rare_events(corpus, cfg, cfg.replace(threshold_rule=None, n_iter=1))
        after_masks, _, _ = detect_after_training(corpus, cfg, rule)
        truth_masks = [mask_from_samples(s, m.patch_width)
                       for s, m in zip(truth.outlier_masks(), result.stage1_masks)]
        inline.append(pooled_mask_f1(result.stage1_masks, truth_masks))
        after.append(pooled_mask_f1(after_masks, truth_masks))

    wins = sum(i >= a for i, a in zip(inline, after))
    assert wins > len(inline) // 2, (inline, after)
    assert np.median(inline) >= np.median(after), (inline, after)

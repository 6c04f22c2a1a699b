import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from logger import logger
from settings import (
    CHUNK_ENCODE_THRESHOLD, CHUNK_LENGTH, CHUNK_OVERLAP_ATOMS, CHUNK_REFINE_SWEEPS, ENCODE_N_FISTA,
)
from core.errors import ConfigError, OutputExistsError
from core.learner import TrainConfig, TrainReport, train
from core.robust_loss import (
    OutlierMask, PatchErrorSeries, ThresholdRule,
    broadcast_patch_scores, build_mask, compute_threshold, patch_errors,
)
from core.sparse_coder import SparseCodeConfig, fista, lambda_max, objective
from core.tensor import ActivationMap, Dictionary, SignalTensor, check_dictionary, convolve, operator_norm_sq


@dataclass
class PipelineResult:
    """Результат двухэтапной детекции редких событий."""
    common_dict: Dictionary
    rare_dict: Dictionary
    stage1_masks: List[OutlierMask]
    rare_activations: List[ActivationMap]
    per_sample_scores: List[np.ndarray]
    threshold: float
    stage1_report: TrainReport
    stage2_report: Optional[TrainReport] = None
    # Этап 1 не отметил ни одного патча: учить редкий словарь не на чем
    empty_mask_warning: bool = False
    residuals: List[SignalTensor] = field(default_factory=list)
    # Ошибки патчей точного кодирования этапа 1, по сигналам
    stage1_errors: List[PatchErrorSeries] = field(default_factory=list)

    @property
    def outlier_fraction(self) -> float:
        total = sum(m.flags.size for m in self.stage1_masks)
        flagged = sum(m.n_outliers for m in self.stage1_masks)
        return flagged / total if total else 0.0


def prepare_output_directory(path: str, force: bool = False) -> str:
    """
    Готовит выходную директорию. Непустая директория без force - ошибка;
    с force файлы в ней перезаписываются.
    """
    if os.path.isdir(path) and os.listdir(path):
        if not force:
            raise OutputExistsError(
                f"Директория '{path}' уже содержит файлы. Используйте --force для перезаписи."
            )
        logger.warning("Директория '%s' не пуста, файлы будут перезаписаны (--force).", path)
    os.makedirs(path, exist_ok=True)
    logger.info("Выходная директория: %s", path)
    return path


# --- Кодирование корпуса ---

def _chunk_bounds(valid_length: int, chunk_length: int) -> List[Tuple[int, int]]:
    return [(a, min(a + chunk_length, valid_length)) for a in range(0, valid_length, chunk_length)]


def _encode_chunked(x: SignalTensor, d: Dictionary, cfg: SparseCodeConfig, chunk_length: int,
                    n_sweeps: int = CHUNK_REFINE_SWEEPS) -> ActivationMap:
    """
    Кодирование длинного сигнала по кускам позиций Z с перекрытием L
    с каждой стороны. Шаг FISTA общий для всех кусков.

    После сшивки выполняются n_sweeps проходов блочно-координатного спуска:
    каждый кусок перерешается (с тёплым стартом) против остатка, в котором
    вклад соседних кусков зафиксирован. Задача выпуклая, поэтому проходы
    сходятся к решению полной задачи.
    """
    n_atoms, _, atom_length = d.shape
    valid_length = x.shape[-1] - atom_length + 1
    overlap = CHUNK_OVERLAP_ATOMS * atom_length

    step = cfg.step
    if step is None:
        span = min(chunk_length + 2 * overlap, valid_length) + atom_length - 1
        lipschitz = operator_norm_sq(d, span)
        step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    chunk_cfg = SparseCodeConfig(cfg.lmbd, cfg.n_iters, step)

    bounds = _chunk_bounds(valid_length, chunk_length)
    z = np.zeros((n_atoms, valid_length))
    for a, b in bounds:
        lo = max(a - overlap, 0)
        hi = min(b + overlap, valid_length)
        codes = fista(x[:, lo:hi + atom_length - 1], d, chunk_cfg)
        z[:, a:b] = codes[:, a - lo:b - lo]

    if len(bounds) < 2:
        return z
    for _ in range(n_sweeps):
        for a, b in bounds:
            # Коды, чьи атомы задевают отсчёты [a, b + L - 1)
            lo = max(a - atom_length + 1, 0)
            hi = min(b + atom_length - 1, valid_length)
            neighbours = z[:, lo:hi].copy()
            neighbours[:, a - lo:b - lo] = 0.0
            fixed = convolve(d, neighbours)[:, a - lo:b - lo + atom_length - 1]
            target = x[:, a:b + atom_length - 1] - fixed
            z[:, a:b] = fista(target, d, chunk_cfg, warm_start=z[:, a:b])
    return z


def _encode_signal(
    x: SignalTensor,
    d: Dictionary,
    cfg: SparseCodeConfig,
    patch_width: int,
    chunk_threshold: int,
    chunk_length: int,
) -> Tuple[ActivationMap, PatchErrorSeries]:
    if x.shape[-1] > chunk_threshold:
        z = _encode_chunked(x, d, cfg, chunk_length)
    else:
        z = fista(x, d, cfg)
    return z, patch_errors(x, convolve(d, z), patch_width)


def encode_corpus(
    corpus: Sequence[SignalTensor],
    d: Dictionary,
    cfg: SparseCodeConfig,
    patch_width: Optional[int] = None,
    n_jobs: int = 1,
    chunk_threshold: int = CHUNK_ENCODE_THRESHOLD,
    chunk_length: int = CHUNK_LENGTH,
) -> List[Tuple[ActivationMap, PatchErrorSeries]]:
    """
    Кодирует каждый сигнал целиком (как одно окно) и считает ошибки патчей.

    Сигналы длиннее chunk_threshold кодируются по кускам длины chunk_length.
    Результат не зависит от n_jobs: сигналы независимы, порядок сохраняется.
    """
    d = check_dictionary(d)
    patch_width = d.shape[-1] if patch_width is None else patch_width
    logger.info("Кодирование %d сигналов (lambda=%.4g, %d итераций FISTA)", len(corpus), cfg.lmbd, cfg.n_iters)
    return Parallel(n_jobs=n_jobs)(
        delayed(_encode_signal)(np.asarray(x, dtype=np.float64), d, cfg, patch_width, chunk_threshold, chunk_length)
        for x in corpus
    )


def _pooled_masks(encoded: List[Tuple[ActivationMap, PatchErrorSeries]], rule: ThresholdRule) -> Tuple[List[OutlierMask], float]:
    """Один порог по ошибкам всех сигналов, маска для каждого сигнала."""
    pooled = np.concatenate([np.ravel(series.errors) for _, series in encoded])
    beta = compute_threshold(pooled, rule)
    return [build_mask(series, beta) for _, series in encoded], beta


# --- Детекция редких событий ---

def detect_rare_events(
    corpus: Sequence[SignalTensor],
    cfg_stage1: TrainConfig,
    cfg_stage2: TrainConfig,
    encode_iters: int = ENCODE_N_FISTA,
    n_jobs: int = 1,
) -> PipelineResult:
    """
    Двухэтапная детекция:
        1. общий словарь с отсечением выбросов;
        2. точное кодирование, общий порог, маски этапа 1;
        3. остаток x' = x - D_a * Z_a, обнулённый вне отмеченных патчей;
        4. редкий словарь на x' и его активации.
    Входной корпус не изменяется.
    """
    if not cfg_stage1.trimming:
        raise ConfigError("Для этапа 1 нужно задать правило порога (threshold_rule)")
    signals = [np.asarray(x, dtype=np.float64) for x in corpus]

    # 1. ОБЩИЙ СЛОВАРЬ
    logger.info("--- ЭТАП 1: обучение общего словаря с отсечением ---")
    report1 = train(signals, cfg_stage1)
    d_a = report1.dictionary

    # 2. ТОЧНЫЕ КОДЫ И МАСКИ
    encoded = encode_corpus(
        signals, d_a, SparseCodeConfig(report1.lmbd, encode_iters),
        patch_width=cfg_stage1.effective_patch_width, n_jobs=n_jobs,
    )
    masks, beta = _pooled_masks(encoded, cfg_stage1.threshold_rule)
    scores = [broadcast_patch_scores(series) for _, series in encoded]
    n_flagged = sum(m.n_outliers for m in masks)
    logger.info("Этап 1: порог %.6g, отмечено %d патчей из %d", beta, n_flagged, sum(m.flags.size for m in masks))

    if n_flagged == 0:
        logger.warning("Маска этапа 1 пуста по всему корпусу: редкий словарь не обучается.")
        empty = np.zeros((0,) + d_a.shape[1:])
        return PipelineResult(
            common_dict=d_a, rare_dict=empty, stage1_masks=masks, rare_activations=[],
            per_sample_scores=scores, threshold=beta, stage1_report=report1, empty_mask_warning=True,
            stage1_errors=[series for _, series in encoded],
        )

    # 3. ОСТАТОК В ОТМЕЧЕННЫХ ПАТЧАХ
    residuals = []
    for x, (z, _), mask in zip(signals, encoded, masks):
        residuals.append((x - convolve(d_a, z)) * mask.sample_mask()[None, :])

    # 4. РЕДКИЙ СЛОВАРЬ
    logger.info("--- ЭТАП 2: обучение редкого словаря на остатке ---")
    report2 = train(residuals, cfg_stage2)
    d_b = report2.dictionary
    encoded2 = encode_corpus(
        residuals, d_b, SparseCodeConfig(report2.lmbd, encode_iters),
        patch_width=cfg_stage2.effective_patch_width, n_jobs=n_jobs,
    )

    return PipelineResult(
        common_dict=d_a,
        rare_dict=d_b,
        stage1_masks=masks,
        rare_activations=[z for z, _ in encoded2],
        per_sample_scores=scores,
        threshold=beta,
        stage1_report=report1,
        stage2_report=report2,
        residuals=residuals,
        stage1_errors=[series for _, series in encoded],
    )


def detect_after_training(
    corpus: Sequence[SignalTensor],
    cfg: TrainConfig,
    rule: ThresholdRule,
    encode_iters: int = ENCODE_N_FISTA,
    n_jobs: int = 1,
) -> Tuple[List[OutlierMask], List[PatchErrorSeries], TrainReport]:
    """
    Маска "после обучения": словарь учится без отсечения, затем тот же
    порог применяется к ошибкам точного кодирования. Для сравнения со
    встроенным отсечением этапа 1 (detect --after-training).
    """
    signals = [np.asarray(x, dtype=np.float64) for x in corpus]
    report = train(signals, cfg.replace(threshold_rule=None))
    encoded = encode_corpus(
        signals, report.dictionary, SparseCodeConfig(report.lmbd, encode_iters),
        patch_width=cfg.effective_patch_width, n_jobs=n_jobs,
    )
    masks, _ = _pooled_masks(encoded, rule)
    return masks, [series for _, series in encoded], report


def evaluate_loss(
    corpus: Sequence[SignalTensor],
    d: Dictionary,
    lmbd: float,
    n_fista: int = ENCODE_N_FISTA,
    n_jobs: int = 1,
) -> float:
    """Значение целевой функции на отсчёт при кодах, посчитанных почти до сходимости."""
    signals = [np.asarray(x, dtype=np.float64) for x in corpus]
    encoded = encode_corpus(signals, d, SparseCodeConfig(lmbd, n_fista), n_jobs=n_jobs)
    total = sum(objective(x, d, z, lmbd).total for x, (z, _) in zip(signals, encoded))
    n_samples = sum(x.shape[-1] for x in signals)
    return total / n_samples


def corpus_lambda_max(corpus: Sequence[SignalTensor], d: Dictionary) -> float:
    """lambda_max по всему корпусу: максимум по сигналам."""
    return max(lambda_max(np.asarray(x, dtype=np.float64), d) for x in corpus)

# core/metrics.py
"""
Метрики качества: оценка восстановления свёрточного словаря
(наилучшее сопоставление атомов по максимуму корреляции по сдвигам),
F1 между масками выбросов и ROC AUC для оценок по отсчётам.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.signal import correlate as sp_correlate
from sklearn.metrics import f1_score, roc_auc_score

from core.errors import DimensionError, UndefinedMetricError
from core.robust_loss import OutlierMask
from core.tensor import Dictionary, check_dictionary


@dataclass
class RecoveryScore:
    score: float
    assignment: List[Tuple[int, int]]
    correlation_matrix: np.ndarray


def full_correlation_1d(d: np.ndarray, dh: np.ndarray) -> np.ndarray:
    """
    Полная корреляция длины L + L' - 1:
    out[j] = sum_l d[l] * dh[l + j - (L - 1)], индексы вне диапазона дают ноль.
    """
    d = np.asarray(d, dtype=np.float64)
    dh = np.asarray(dh, dtype=np.float64)
    if d.ndim != 1 or dh.ndim != 1 or d.size == 0 or dh.size == 0:
        raise DimensionError("Ожидаются два непустых одномерных вектора")
    return sp_correlate(dh, d, mode="full", method="direct")


def _unit_atoms(d: Dictionary) -> Dictionary:
    norms = np.sqrt(np.sum(d ** 2, axis=(1, 2), keepdims=True))
    return d / np.where(norms > 0, norms, 1.0)


def correlation_matrix(true_d: Dictionary, learned_d: Dictionary) -> np.ndarray:
    """C[i, j] = max по сдвигам суммы по каналам полных корреляций нормированных атомов."""
    true_d = _unit_atoms(check_dictionary(true_d))
    learned_d = _unit_atoms(check_dictionary(learned_d))
    if true_d.shape[1] != learned_d.shape[1]:
        raise DimensionError(
            f"Число каналов различается: {true_d.shape[1]} и {learned_d.shape[1]}"
        )
    corr = np.zeros((true_d.shape[0], learned_d.shape[0]))
    for i, atom in enumerate(true_d):
        for j, learned in enumerate(learned_d):
            per_lag = sum(full_correlation_1d(a, b) for a, b in zip(atom, learned))
            corr[i, j] = float(np.max(per_lag))
    return corr


def recovery_score(true_d: Dictionary, learned_d: Dictionary) -> RecoveryScore:
    """
    Среднее по истинным атомам значения C[i, j*(i)] при оптимальном
    (венгерский алгоритм) сопоставлении. Корреляции знаковые.
    """
    corr = correlation_matrix(true_d, learned_d)
    n_true = corr.shape[0]
    if corr.size == 0:
        return RecoveryScore(0.0, [], corr)
    rows, cols = linear_sum_assignment(corr, maximize=True)
    score = float(corr[rows, cols].sum()) / n_true
    assignment = [(int(i), int(j)) for i, j in zip(rows, cols)]
    return RecoveryScore(score, assignment, corr)


def mask_f1(predicted: OutlierMask, truth: OutlierMask) -> float:
    """F1 = 2TP / (2TP + FP + FN) по флагам патчей; 1.0, если обе маски пусты."""
    if predicted.flags.shape != truth.flags.shape or predicted.patch_width != truth.patch_width:
        raise DimensionError(
            f"Сетки патчей различаются: {predicted.flags.shape} и {truth.flags.shape}"
        )
    return float(f1_score(np.ravel(truth.flags), np.ravel(predicted.flags), zero_division=1.0))


def pooled_mask_f1(predicted: List[OutlierMask], truth: List[OutlierMask]) -> float:
    """F1 по патчам всех сигналов корпуса сразу."""
    if len(predicted) != len(truth) or not predicted:
        raise DimensionError(f"Число масок различается: {len(predicted)} и {len(truth)}")
    width = predicted[0].patch_width
    flags_pred = np.concatenate([np.ravel(m.flags) for m in predicted])
    flags_true = np.concatenate([np.ravel(m.flags) for m in truth])
    return mask_f1(
        OutlierMask(width, flags_pred, float("nan"), flags_pred.size * width),
        OutlierMask(width, flags_true, float("nan"), flags_true.size * width),
    )


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Вероятность, что случайный положительный пример выше отрицательного (ничьи = 1/2)."""
    scores = np.ravel(np.asarray(scores, dtype=np.float64))
    labels = np.ravel(np.asarray(labels, dtype=bool))
    if scores.shape != labels.shape:
        raise DimensionError(f"Размеры оценок {scores.shape} и меток {labels.shape} различаются")
    if labels.all() or not labels.any():
        raise UndefinedMetricError("ROC AUC не определён: в метках только один класс")
    return float(roc_auc_score(labels, scores))

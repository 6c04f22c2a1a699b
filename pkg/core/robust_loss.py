# core/robust_loss.py
"""
Ошибки реконструкции по патчам, правила порога выбросов, маска выбросов
и усечённая (trimmed) целевая функция для обновления словаря.

Ось времени делится на непересекающиеся патчи ширины W_patch (последний
может быть короче). Ошибка патча - только член точности данных
1/2 sum (x - recon)^2 по каналам и отсчётам патча, без l1-члена.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Optional, Union

import numpy as np

from settings import MAD_ALPHA, MAD_CONSISTENCY, QUANTILE_ALPHA, ZSCORE_ALPHA
from core.errors import ConfigError, DimensionError, InsufficientDataError, RangeError
from core.tensor import SignalTensor


class ThresholdKind(str, Enum):
    QUANTILE = "quantile"
    ZSCORE = "zscore"
    MAD = "mad"


_DEFAULT_ALPHA = {
    ThresholdKind.QUANTILE: QUANTILE_ALPHA,
    ThresholdKind.ZSCORE: ZSCORE_ALPHA,
    ThresholdKind.MAD: MAD_ALPHA,
}


@dataclass(frozen=True)
class ThresholdRule:
    """
    Правило выбора порога beta по распределению ошибок патчей.

    QUANTILE: alpha - доля выбросов, 0 < alpha < 1.
    ZSCORE, MAD: alpha - множитель, alpha > 0.
    """
    kind: ThresholdKind
    alpha: Optional[float] = None

    def __post_init__(self):
        kind = ThresholdKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.alpha is None:
            object.__setattr__(self, "alpha", _DEFAULT_ALPHA[kind])
        alpha = float(self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if kind is ThresholdKind.QUANTILE and not 0.0 < alpha < 1.0:
            raise ConfigError(f"Для квантильного правила нужно 0 < alpha < 1, получено {alpha}")
        if kind is not ThresholdKind.QUANTILE and not alpha > 0.0:
            raise ConfigError(f"Для правила {kind.value} нужно alpha > 0, получено {alpha}")

    @classmethod
    def from_config(cls, mapping: Mapping[str, Any]) -> "ThresholdRule":
        unknown = set(mapping) - {"kind", "alpha"}
        if unknown:
            raise ConfigError(f"Неизвестные ключи правила порога: {sorted(unknown)}")
        if "kind" not in mapping:
            raise ConfigError("В правиле порога не указан 'kind'")
        try:
            kind = ThresholdKind(str(mapping["kind"]).lower())
        except ValueError as e:
            raise ConfigError(f"Неизвестный тип порога: {mapping['kind']}") from e
        return cls(kind=kind, alpha=mapping.get("alpha"))

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha}


@dataclass
class PatchErrorSeries:
    """Ошибки патчей; errors имеет форму (..., n_patches) для пакета окон."""
    patch_width: int
    starts: np.ndarray
    errors: np.ndarray
    signal_length: int

    @property
    def n_patches(self) -> int:
        return len(self.starts)


@dataclass
class OutlierMask:
    """flags[i] = True означает, что патч i - выброс (не входит в P_beta)."""
    patch_width: int
    flags: np.ndarray
    threshold_used: float
    signal_length: int

    @property
    def n_outliers(self) -> int:
        return int(np.count_nonzero(self.flags))

    @property
    def outlier_fraction(self) -> float:
        return self.n_outliers / self.flags.size if self.flags.size else 0.0

    def sample_mask(self) -> np.ndarray:
        """Маска по отсчётам формы (..., T)."""
        return np.repeat(self.flags, self.patch_width, axis=-1)[..., :self.signal_length]

    def patch_starts(self) -> np.ndarray:
        return np.arange(0, self.signal_length, self.patch_width)


def patch_errors(x: SignalTensor, recon: SignalTensor, patch_width: int) -> PatchErrorSeries:
    """Ошибка патча = 1/2 sum по каналам и отсчётам патча (x - recon)^2."""
    x = np.asarray(x, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    if x.shape != recon.shape:
        raise DimensionError(f"Формы сигнала {x.shape} и реконструкции {recon.shape} различаются")
    signal_length = x.shape[-1]
    if patch_width < 1 or patch_width > signal_length:
        raise RangeError(f"Ширина патча {patch_width} вне [1, {signal_length}]")

    per_sample = 0.5 * np.sum((x - recon) ** 2, axis=-2)
    starts = np.arange(0, signal_length, patch_width)
    errors = np.add.reduceat(per_sample, starts, axis=-1)
    return PatchErrorSeries(patch_width, starts, errors, signal_length)


def _lower_median(sorted_values: np.ndarray) -> float:
    return float(sorted_values[(len(sorted_values) - 1) // 2])


def compute_threshold(errors: Union[PatchErrorSeries, np.ndarray], rule: ThresholdRule) -> float:
    """
    Порог beta по объединённым ошибкам (все окна пакета вместе).

    QUANTILE: значение ранга ceil((1 - alpha) * n) (с 1) среди отсортированных.
    ZSCORE:   mu + alpha * sigma (популяционное стандартное отклонение).
    MAD:      Med + alpha * Mad / 0.6745, медианы нижние для чётного n.
    """
    values = errors.errors if isinstance(errors, PatchErrorSeries) else errors
    values = np.ravel(np.asarray(values, dtype=np.float64))
    n = values.size
    if n < 2:
        raise InsufficientDataError(f"Для порога нужно минимум 2 ошибки, получено {n}")

    if rule.kind is ThresholdKind.QUANTILE:
        ordered = np.sort(values)
        rank = int(np.ceil((1.0 - rule.alpha) * n - 1e-9))
        rank = min(max(rank, 1), n)
        return float(ordered[rank - 1])

    if rule.kind is ThresholdKind.ZSCORE:
        return float(np.mean(values) + rule.alpha * np.std(values))

    ordered = np.sort(values)
    median = _lower_median(ordered)
    mad = _lower_median(np.sort(np.abs(values - median)))
    return median + rule.alpha * mad / MAD_CONSISTENCY


def build_mask(errors: PatchErrorSeries, beta: float) -> OutlierMask:
    """Выбросы - строго errors > beta; равные порогу остаются в P_beta."""
    flags = np.asarray(errors.errors) > beta
    return OutlierMask(errors.patch_width, flags, float(beta), errors.signal_length)


def empty_mask(errors: PatchErrorSeries) -> OutlierMask:
    return build_mask(errors, np.inf)


def _check_grid(series: PatchErrorSeries, mask: OutlierMask) -> None:
    if series.errors.shape != mask.flags.shape or series.signal_length != mask.signal_length:
        raise DimensionError(
            f"Маска {mask.flags.shape} не соответствует сетке патчей {series.errors.shape}"
        )


def trimmed_objective(
    x: SignalTensor,
    recon: SignalTensor,
    mask: OutlierMask,
    z_l1: float,
    lmbd: float,
) -> float:
    """(1 / W_patch) * sum ошибок патчей из P_beta + lambda * ||Z||_1."""
    series = patch_errors(x, recon, mask.patch_width)
    _check_grid(series, mask)
    data_term = float(np.sum(series.errors[~mask.flags])) / mask.patch_width
    return data_term + lmbd * z_l1


def masked_residual(x: SignalTensor, recon: SignalTensor, mask: OutlierMask) -> SignalTensor:
    """recon - x с обнулёнными отсчётами внутри патчей-выбросов."""
    x = np.asarray(x, dtype=np.float64)
    residual = np.asarray(recon, dtype=np.float64) - x
    if residual.shape[:-2] != mask.flags.shape[:-1] or residual.shape[-1] != mask.signal_length:
        raise DimensionError(f"Маска {mask.flags.shape} не соответствует остатку {residual.shape}")
    keep = ~mask.sample_mask()
    return residual * keep[..., None, :]


def mask_from_samples(sample_flags: np.ndarray, patch_width: int) -> OutlierMask:
    """Переносит маску по отсчётам на сетку патчей: патч отмечен, если отмечен хоть один отсчёт."""
    sample_flags = np.asarray(sample_flags, dtype=bool)
    signal_length = sample_flags.shape[-1]
    if patch_width < 1 or patch_width > signal_length:
        raise RangeError(f"Ширина патча {patch_width} вне [1, {signal_length}]")
    starts = np.arange(0, signal_length, patch_width)
    flags = np.logical_or.reduceat(sample_flags, starts, axis=-1)
    return OutlierMask(patch_width, flags, float("nan"), signal_length)


def broadcast_patch_scores(series: PatchErrorSeries) -> np.ndarray:
    """Ошибка каждого патча, размноженная на его отсчёты: (..., T)."""
    return np.repeat(series.errors, series.patch_width, axis=-1)[..., :series.signal_length]

# core/sparse_coder.py
"""
Свёрточное разреженное кодирование: мягкий порог, lambda_max,
значение целевой функции и решатель FISTA.

Целевая функция для сигнала x, словаря D и активаций Z:
    F(D, Z; x) = 1/2 ||x - D * Z||^2 + lambda ||Z||_1
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from settings import TRAIN_N_FISTA
from core.errors import ConfigError, DimensionError, DomainError, NumericError
from core.tensor import (
    ActivationMap, Dictionary, SignalTensor,
    check_dictionary, convolve, correlate_dictionary, operator_norm_sq,
)


@dataclass(frozen=True)
class SparseCodeConfig:
    """Параметры FISTA: lmbd >= 0, n_iters >= 1, step > 0 (None = 1 / ||D||^2)."""
    lmbd: float
    n_iters: int = TRAIN_N_FISTA
    step: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.lmbd) or self.lmbd < 0:
            raise ConfigError(f"lambda должна быть неотрицательной, получено {self.lmbd}")
        if self.n_iters < 1:
            raise ConfigError(f"n_iters должно быть >= 1, получено {self.n_iters}")
        if self.step is not None and not self.step > 0:
            raise ConfigError(f"Шаг FISTA должен быть > 0, получено {self.step}")


@dataclass(frozen=True)
class ObjectiveValue:
    data_term: float
    l1_term: float
    total: float


def soft_threshold(v: np.ndarray, theta: float) -> np.ndarray:
    """Покомпонентно sign(v) * max(|v| - theta, 0)."""
    if theta < 0:
        raise DomainError(f"Порог должен быть неотрицательным, получено {theta}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def objective(x: SignalTensor, d: Dictionary, z: ActivationMap, lmbd: float) -> ObjectiveValue:
    """Точное значение обоих членов целевой функции (для пакета окон суммируется)."""
    x = np.asarray(x, dtype=np.float64)
    recon = convolve(d, z)
    if recon.shape != x.shape:
        raise DimensionError(f"Реконструкция {recon.shape} не совпадает с сигналом {x.shape}")
    data_term = 0.5 * float(np.sum((x - recon) ** 2))
    l1_term = lmbd * float(np.sum(np.abs(z)))
    return ObjectiveValue(data_term=data_term, l1_term=l1_term, total=data_term + l1_term)


def lambda_max(x: SignalTensor, d: Dictionary) -> float:
    """
    Наименьшая lambda, при которой нулевой код оптимален:
    max по атомам и позициям |<d_k, x[:, t:t + L]>|.
    """
    corr = correlate_dictionary(x, d)
    if corr.size == 0:
        return 0.0
    return float(np.max(np.abs(corr)))


def lambda_max_bound(x: SignalTensor, atom_length: int) -> float:
    """
    lambda_max, максимальная по всем атомам нормы <= 1:
    max по позициям ||x[:, t:t + L]||. Достигается атомом, равным
    нормированному куску сигнала, поэтому lambda_max(x, D) <= lambda_max_bound(x, L)
    для любого допустимого словаря D.

    Не зависит от текущего словаря; обучение задаёт lambda как долю этой величины.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise DimensionError(f"Ожидался сигнал (P, T) или пакет (N, P, T), получено {x.shape}")
    if atom_length < 1 or atom_length > x.shape[-1]:
        raise DimensionError(f"Длина атома {atom_length} вне [1, {x.shape[-1]}]")
    energy = np.sum(x ** 2, axis=-2)
    cumulative = np.cumsum(energy, axis=-1)
    cumulative = np.concatenate([np.zeros(cumulative.shape[:-1] + (1,)), cumulative], axis=-1)
    patch_energy = cumulative[..., atom_length:] - cumulative[..., :-atom_length]
    return float(np.sqrt(max(float(np.max(patch_energy)), 0.0)))


def kkt_violation(x: SignalTensor, d: Dictionary, z: ActivationMap, lmbd: float) -> float:
    """
    Максимальное нарушение условий оптимальности LASSO.

    На носителе |g + lambda sign(z)|, вне носителя max(|g| - lambda, 0),
    где g - градиент квадратичного члена по Z.
    """
    z = np.asarray(z, dtype=np.float64)
    grad = correlate_dictionary(convolve(d, z) - x, d)
    active = z != 0
    on_support = np.abs(grad + lmbd * np.sign(z))[active]
    off_support = np.maximum(np.abs(grad) - lmbd, 0.0)[~active]
    worst = 0.0
    if on_support.size:
        worst = max(worst, float(on_support.max()))
    if off_support.size:
        worst = max(worst, float(off_support.max()))
    return worst


def fista(
    x: SignalTensor,
    d: Dictionary,
    cfg: SparseCodeConfig,
    warm_start: Optional[ActivationMap] = None,
) -> ActivationMap:
    """
    Ровно cfg.n_iters итераций FISTA с Z_0 = warm_start (или 0) и t_0 = 1.

    Пакет окон (N, P, T) решается одним векторизованным вызовом: шаг и
    последовательность t_k у всех окон общие, поэтому это эквивалентно
    независимому решению каждого окна.

    Raises:
        NumericError: если в итерациях появились NaN/Inf (слишком большой шаг).
    """
    x = np.asarray(x, dtype=np.float64)
    d = check_dictionary(d)
    n_atoms, n_channels, atom_length = d.shape
    if x.ndim not in (2, 3) or x.shape[-2] != n_channels:
        raise DimensionError(f"Сигнал {x.shape} несовместим со словарём {d.shape}")
    valid_length = x.shape[-1] - atom_length + 1
    if valid_length < 1:
        raise DimensionError(f"Сигнал длины {x.shape[-1]} короче атома длины {atom_length}")
    z_shape = x.shape[:-2] + (n_atoms, valid_length)

    if warm_start is None:
        z = np.zeros(z_shape)
    else:
        z = np.array(warm_start, dtype=np.float64)
        if z.shape != z_shape:
            raise DimensionError(f"Начальное приближение {z.shape}, ожидалось {z_shape}")

    step = cfg.step
    if step is None:
        lipschitz = operator_norm_sq(d, x.shape[-1])
        step = 1.0 / lipschitz if lipschitz > 0 else 1.0
    threshold = step * cfg.lmbd

    y = z.copy()
    t = 1.0
    for _ in range(cfg.n_iters):
        grad = correlate_dictionary(convolve(d, y) - x, d)
        z_next = soft_threshold(y - step * grad, threshold)
        if not np.all(np.isfinite(z_next)):
            raise NumericError(f"FISTA разошёлся (шаг {step:.3g} слишком велик?)")
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z_next + ((t - 1.0) / t_next) * (z_next - z)
        z, t = z_next, t_next

    return z

# core/tensor.py
"""
Модуль численных ядер: свёртка словаря с активациями, сопряжённые
корреляции, нарезка окон и оценка нормы оператора свёртки.

Соглашения о формах (все массивы float64):
    сигнал x          (P, T)          или пакет окон (N, P, T)
    словарь D         (K, P, L)
    активации Z       (K, T - L + 1)  или пакет (N, K, T - L + 1)

Все функции чистые: входы не изменяются, поэтому их можно вызывать
одновременно из любого числа потоков.
"""
from typing import NamedTuple, Tuple

import numpy as np
from scipy import fft as sp_fft

from settings import CONV_FFT_THRESHOLD, POWER_ITER_MAX, POWER_ITER_TOL
from core.errors import DimensionError, RangeError

# Псевдонимы для читаемости сигнатур
SignalTensor = np.ndarray
Dictionary = np.ndarray
ActivationMap = np.ndarray


class WindowSpec(NamedTuple):
    """Окно сигнала: [start, start + width)."""
    start: int
    width: int


def _as_batch(array: np.ndarray, base_ndim: int, name: str) -> Tuple[np.ndarray, bool]:
    """Добавляет ведущую ось пакета, если её нет. Возвращает (массив, был_одиночным)."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == base_ndim:
        return array[None], True
    if array.ndim == base_ndim + 1:
        return array, False
    raise DimensionError(
        f"{name}: ожидалось {base_ndim} или {base_ndim + 1} измерений, получено {array.shape}"
    )


def check_dictionary(d: Dictionary) -> Dictionary:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 3:
        raise DimensionError(f"Словарь должен иметь форму (K, P, L), получено {d.shape}")
    return d


def _use_fft(atom_length: int, valid_length: int, method: str) -> bool:
    if method == "fft":
        return True
    if method == "direct":
        return False
    if method != "auto":
        raise ValueError(f"Неизвестный метод свёртки: {method}")
    return atom_length * valid_length >= CONV_FFT_THRESHOLD


def convolve(d: Dictionary, z: ActivationMap, method: str = "auto") -> SignalTensor:
    """
    Реконструкция D * Z = sum_k d_k * z_k по каждому каналу.

    Args:
        d: Словарь (K, P, L).
        z: Активации (K, T - L + 1) или пакет (N, K, T - L + 1).
        method: "auto", "direct" или "fft".

    Returns:
        Сигнал (P, T) или пакет (N, P, T).
    """
    d = check_dictionary(d)
    zb, single = _as_batch(z, 2, "активации")
    n_atoms, n_channels, atom_length = d.shape
    if zb.shape[1] != n_atoms:
        raise DimensionError(f"Число атомов в Z ({zb.shape[1]}) не совпадает со словарём ({n_atoms})")
    valid_length = zb.shape[2]
    if valid_length < 1:
        raise DimensionError("Активации должны иметь хотя бы одну позицию")
    signal_length = valid_length + atom_length - 1

    if _use_fft(atom_length, valid_length, method):
        n_fft = sp_fft.next_fast_len(signal_length, real=True)
        d_hat = sp_fft.rfft(d, n=n_fft, axis=-1)
        z_hat = sp_fft.rfft(zb, n=n_fft, axis=-1)
        out = sp_fft.irfft(np.einsum("kpf,nkf->npf", d_hat, z_hat), n=n_fft, axis=-1)
        out = out[..., :signal_length]
    else:
        out = np.zeros((zb.shape[0], n_channels, signal_length))
        for lag in range(atom_length):
            out[:, :, lag:lag + valid_length] += np.einsum("kp,nkt->npt", d[:, :, lag], zb)

    return out[0] if single else out


def correlate(residual: SignalTensor, z: ActivationMap, method: str = "auto") -> Dictionary:
    """
    Сопряжённый к convolve оператор по D: для каждого атома корреляция
    остатка с z_k, обрезанная до длины L. Ось пакета суммируется.

    Args:
        residual: (P, T) или (N, P, T).
        z: (K, T - L + 1) или (N, K, T - L + 1), тот же размер пакета.

    Returns:
        Тензор формы словаря (K, P, L).
    """
    rb, _ = _as_batch(residual, 2, "остаток")
    zb, _ = _as_batch(z, 2, "активации")
    if rb.shape[0] != zb.shape[0]:
        raise DimensionError(f"Размеры пакетов не совпадают: {rb.shape[0]} и {zb.shape[0]}")
    signal_length = rb.shape[2]
    valid_length = zb.shape[2]
    atom_length = signal_length - valid_length + 1
    if atom_length < 1 or valid_length < 1:
        raise DimensionError(
            f"Длина активаций {valid_length} несовместима с длиной сигнала {signal_length}"
        )

    if _use_fft(atom_length, valid_length, method):
        n_fft = sp_fft.next_fast_len(signal_length, real=True)
        r_hat = sp_fft.rfft(rb, n=n_fft, axis=-1)
        z_hat = sp_fft.rfft(zb, n=n_fft, axis=-1)
        full = sp_fft.irfft(np.einsum("nkf,npf->kpf", np.conj(z_hat), r_hat), n=n_fft, axis=-1)
        return full[..., :atom_length]

    out = np.empty((zb.shape[1], rb.shape[1], atom_length))
    for lag in range(atom_length):
        out[:, :, lag] = np.einsum("nkt,npt->kp", zb, rb[:, :, lag:lag + valid_length])
    return out


def correlate_dictionary(residual: SignalTensor, d: Dictionary, method: str = "auto") -> ActivationMap:
    """
    Сопряжённый к convolve оператор по Z: g[k, t] = sum_p sum_l d[k, p, l] r[p, t + l].

    Это градиент квадратичного члена по активациям, если residual = D * Z - x.
    """
    d = check_dictionary(d)
    rb, single = _as_batch(residual, 2, "остаток")
    n_atoms, n_channels, atom_length = d.shape
    if rb.shape[1] != n_channels:
        raise DimensionError(f"Число каналов сигнала ({rb.shape[1]}) не совпадает со словарём ({n_channels})")
    signal_length = rb.shape[2]
    valid_length = signal_length - atom_length + 1
    if valid_length < 1:
        raise DimensionError(f"Сигнал длины {signal_length} короче атома длины {atom_length}")

    if _use_fft(atom_length, valid_length, method):
        n_fft = sp_fft.next_fast_len(signal_length, real=True)
        d_hat = sp_fft.rfft(d, n=n_fft, axis=-1)
        r_hat = sp_fft.rfft(rb, n=n_fft, axis=-1)
        full = sp_fft.irfft(np.einsum("kpf,npf->nkf", np.conj(d_hat), r_hat), n=n_fft, axis=-1)
        out = full[..., :valid_length]
    else:
        out = np.zeros((rb.shape[0], n_atoms, valid_length))
        for lag in range(atom_length):
            out += np.einsum("kp,npt->nkt", d[:, :, lag], rb[:, :, lag:lag + valid_length])

    return out[0] if single else out


def extract_window(x: SignalTensor, window: WindowSpec) -> SignalTensor:
    """Копия среза x[:, start:start + width]. Копия не разделяет память с x."""
    x = np.asarray(x, dtype=np.float64)
    start, width = int(window.start), int(window.width)
    if width < 1 or start < 0 or start + width > x.shape[-1]:
        raise RangeError(f"Окно [{start}, {start + width}) вне сигнала длины {x.shape[-1]}")
    return x[..., start:start + width].copy()


def _spectral_bound(d: Dictionary, signal_length: int) -> float:
    """max по частотам квадрата спектральной нормы матрицы D^(w) размера P x K."""
    n_fft = 1 << int(np.ceil(np.log2(2 * signal_length)))
    d_hat = sp_fft.rfft(d, n=n_fft, axis=-1)
    per_frequency = np.transpose(d_hat, (2, 1, 0))
    return float(np.max(np.linalg.norm(per_frequency, ord=2, axis=(1, 2))) ** 2)


def operator_norm_sq(d: Dictionary, signal_len: int) -> float:
    """
    Верхняя оценка квадрата нормы оператора Z -> D * Z для сигналов длины signal_len.

    Степенной метод на нормальном операторе стартует с нормированного
    вектора из единиц (воспроизводимость). Результат берётся как максимум
    с дискретной спектральной оценкой, чтобы не занизить константу Липшица
    при медленной сходимости.
    """
    d = check_dictionary(d)
    n_atoms, _, atom_length = d.shape
    valid_length = signal_len - atom_length + 1
    if valid_length < 1:
        raise RangeError(f"Длина сигнала {signal_len} меньше длины атома {atom_length}")

    z = np.ones((n_atoms, valid_length))
    z /= np.linalg.norm(z)
    estimate = 0.0
    for _ in range(POWER_ITER_MAX):
        w = correlate_dictionary(convolve(d, z), d)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            break
        z = w / norm
        converged = abs(norm - estimate) <= POWER_ITER_TOL * norm
        estimate = norm
        if converged:
            break

    return max(estimate, _spectral_bound(d, signal_len))

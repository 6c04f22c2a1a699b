# core/utils.py
"""
Модуль вспомогательных утилит.

Содержит функции общего назначения, которые используются в разных частях
основной логики. Включает в себя:
- Бинарный формат тензоров RST1 (чтение и запись).
- Чтение сигналов из CSV (одна строка на канал).
- Валидацию файлов сигналов (существование, расширение, целостность).
- Детерминированное получение генераторов случайных чисел из seed.
"""
import os
from typing import Sequence

import numpy as np

from logger import logger
from core.errors import FormatError

# Поддерживаемые расширения файлов сигналов
SUPPORTED_EXTENSIONS = ('.rst', '.csv')

# Формат RST1: магия, u8 ndim, ndim * u64 LE размеров, затем f64 LE данные
RST_MAGIC = b"RST1"
_HEADER_OFFSET = len(RST_MAGIC) + 1


def write_rst(path: str, array: np.ndarray) -> None:
    """
    Сохраняет массив в формате RST1 (row-major, little-endian float64).

    Args:
        path: Путь к файлу.
        array: Любой числовой массив; приводится к float64.
    """
    data = np.ascontiguousarray(array, dtype="<f8")
    if data.ndim > 255:
        raise FormatError(f"RST1 поддерживает не более 255 измерений, получено {data.ndim}")
    header = (
        RST_MAGIC
        + np.uint8(data.ndim).tobytes()
        + np.asarray(data.shape, dtype="<u8").tobytes()
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes(order="C"))


def read_rst(path: str) -> np.ndarray:
    """
    Читает тензор RST1.

    Returns:
        np.ndarray: Массив float64 исходной формы (доступный для записи).
    """
    with open(path, "rb") as f:
        raw = f.read()

    if len(raw) < _HEADER_OFFSET or raw[:len(RST_MAGIC)] != RST_MAGIC:
        raise FormatError(f"Файл '{path}' не является тензором RST1")

    ndim = raw[len(RST_MAGIC)]
    payload_offset = _HEADER_OFFSET + 8 * ndim
    if len(raw) < payload_offset:
        raise FormatError(f"Заголовок RST1 в '{path}' обрезан")

    shape: tuple = ()
    if ndim:
        dims = np.frombuffer(raw, dtype="<u8", count=ndim, offset=_HEADER_OFFSET)
        shape = tuple(int(v) for v in dims)
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if len(raw) - payload_offset != 8 * expected:
        raise FormatError(
            f"Размер данных в '{path}' не совпадает с заголовком: ожидалось {expected} значений"
        )
    if expected == 0:
        return np.zeros(shape, dtype=np.float64)
    payload = np.frombuffer(raw, dtype="<f8", count=expected, offset=payload_offset)
    return payload.reshape(shape).astype(np.float64)


def read_signal_csv(path: str) -> np.ndarray:
    """Читает сигнал P x T из CSV: одна строка на канал, значения через запятую."""
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise FormatError(f"Не удалось разобрать CSV '{path}': {e}") from e
    return data


def load_signal(path: str) -> np.ndarray:
    """
    Загружает сигнал (P x T) из RST1 или CSV и проверяет, что он конечен.
    """
    if path.lower().endswith('.csv'):
        signal = read_signal_csv(path)
    else:
        signal = read_rst(path)
        if signal.ndim == 1:
            signal = signal[None]

    if signal.ndim != 2:
        raise FormatError(f"Сигнал '{path}' должен иметь форму P x T, получено {signal.shape}")
    if not np.all(np.isfinite(signal)):
        raise FormatError(f"Сигнал '{path}' содержит NaN или Inf")
    return signal


def validate_signal_file(file_path: str) -> bool:
    """
    Проверяет, является ли файл корректным сигналом.

    1. Проверяет, что путь существует и является файлом.
    2. Проверяет расширение файла по белому списку.
    3. Пытается прочитать данные, чтобы убедиться в целостности.

    Returns:
        bool: True, если файл можно использовать как сигнал, иначе False.
    """
    # 1. Проверка существования пути
    if not os.path.isfile(file_path):
        logger.debug("Путь не является файлом или не существует: %s", file_path)
        return False

    # 2. Проверка расширения
    if not file_path.lower().endswith(SUPPORTED_EXTENSIONS):
        logger.debug("Файл '%s' пропущен из-за неподдерживаемого расширения.", os.path.basename(file_path))
        return False

    # 3. Проверка целостности
    try:
        load_signal(file_path)
        return True
    except FormatError as e:
        logger.warning("Файл поврежден или не может быть прочитан: %s. Ошибка: %s", os.path.basename(file_path), e)
        return False
    except OSError as e:
        logger.warning("Не удалось открыть файл %s: %s", os.path.basename(file_path), e)
        return False


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Генератор для потока случайных чисел: default_rng([seed, *stream]).

    Все случайности проекта выводятся из одного seed и идентификатора потока
    (см. STREAM_* в settings.py), поэтому результаты не зависят от порядка
    вызовов и числа потоков.
    """
    entropy: Sequence[int] = [int(seed), *(int(s) for s in stream)]
    return np.random.default_rng(entropy)

# core/errors.py
"""Исключения проекта. Каждое наследует подходящее встроенное исключение."""


class CDLError(Exception):
    """Базовое исключение проекта."""


class DimensionError(CDLError, ValueError):
    """Несогласованные формы сигналов, словарей или активаций."""


class RangeError(CDLError, IndexError):
    """Окно или патч выходит за границы сигнала."""


class NumericError(CDLError, ArithmeticError):
    """Появились NaN/Inf (обычно слишком большой шаг)."""


class TrainingAborted(NumericError):
    """Обучение остановлено из-за NaN; хранит частичный отчёт."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InsufficientDataError(CDLError, ValueError):
    pass


class UndefinedMetricError(CDLError, ValueError):
    pass


class DomainError(CDLError, ValueError):
    """Аргумент вне области определения аналитической формулы."""


class ConfigError(CDLError, ValueError):
    pass


class FormatError(CDLError, ValueError):
    """Повреждённый или неизвестный формат файла."""


class OutputExistsError(ConfigError):
    """Выходные файлы уже существуют, а --force не задан."""

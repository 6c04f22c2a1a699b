import csv
import io
import json
import os
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from logger import logger
from core.errors import FormatError
from core.utils import write_rst


def format_value(value: Any) -> str:
    """
    Детерминированное текстовое представление ячейки CSV:
    float - кратчайший repr, bool - true/false.
    """
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # NaN/Inf не входят в JSON
        return value if np.isfinite(value) else None
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def dumps_json(payload: Mapping[str, Any]) -> str:
    return json.dumps(_to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: str, payload: Mapping[str, Any]) -> str:
    """Сохраняет JSON с отсортированными ключами и возвращает записанный текст."""
    content = dumps_json(payload)
    output_dir = os.path.dirname(path)
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(content)
    logger.info("JSON сохранён: '%s'", path)
    return content


def read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"Некорректный JSON в '{path}': {e}") from e


def write_dictionary(path: str, d: np.ndarray, metadata: Optional[Mapping[str, Any]] = None) -> str:
    """
    Словарь в RST1 плюс JSON-описание рядом (тот же путь с расширением .json).

    Returns:
        Путь к JSON-описанию.
    """
    write_rst(path, d)
    sidecar = os.path.splitext(path)[0] + ".json"
    payload = {"shape": list(np.shape(d)), "file": os.path.basename(path)}
    payload.update(metadata or {})
    write_json(sidecar, payload)
    return sidecar


class ReportManager:
    """
    Класс для табличных отчётов (CSV): собирает строки из записей в памяти
    и сохраняет их с детерминированным форматированием значений.
    """

    def __init__(self,
                 output_path: str,
                 headers: List[str],
                 rows: List[Dict[str, Any]],
                 delimiter: str = ","):
        """
        Приватный конструктор. Используйте from_records() для создания экземпляра.
        """
        self.output_path = output_path
        self.headers = headers
        self.rows = rows
        self.delimiter = delimiter

    @classmethod
    def from_records(cls,
                     output_path: str,
                     headers: Sequence[str],
                     rows: Sequence[Mapping[str, Any]] = (),
                     delimiter: str = ",") -> 'ReportManager':
        """
        Фабричный метод: создаёт отчёт из готовых строк (словарей колонка -> значение).
        """
        headers = list(headers)
        for row in rows:
            missing = set(headers) - set(row)
            if missing:
                raise FormatError(f"В строке отчёта нет колонок: {sorted(missing)}")
        return cls(output_path, headers, [dict(row) for row in rows], delimiter)

    # --- Метод для сохранения ---

    def render(self) -> str:
        string_buffer = io.StringIO()
        writer = csv.writer(string_buffer, delimiter=self.delimiter, lineterminator="\n")
        writer.writerow(self.headers)
        for row in self.rows:
            writer.writerow([format_value(row[name]) for name in self.headers])
        return string_buffer.getvalue()

    def save_changes_and_get_content(self) -> str:
        """
        Собирает CSV в строку, сохраняет её в файл self.output_path и возвращает эту строку.
        """
        output_dir = os.path.dirname(self.output_path)
        if output_dir:
            os.makedirs(output_dir, exist_ok=True)

        content = self.render()
        with open(self.output_path, "w", encoding="utf-8", newline="") as f:
            f.write(content)

        logger.info("CSV файл сохранён: '%s' (%d строк)", self.output_path, len(self.rows))
        return content

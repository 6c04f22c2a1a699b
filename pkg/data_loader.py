import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from logger import logger
from settings import MANIFEST_NAME
from core.datagen import GroundTruth, SimSpec
from core.errors import ConfigError
from core.utils import load_signal, read_rst, validate_signal_file, write_rst
from report_manager import read_json, write_json

# Истинные словари, активации и маски лежат отдельно от сигналов
TRUTH_DIR = "truth"


def collect_corpus(directory: str) -> List[Tuple[int, str]]:
    """
    Собирает, валидирует пути к сигналам из директории и присваивает им индекс.
    Сортировка по имени файла обеспечивает предсказуемый и стабильный порядок.
    """
    if not os.path.isdir(directory):
        raise ConfigError(f"Директория корпуса не найдена: {directory}")

    logger.info("Сканирование и валидация сигналов в: %s", directory)
    paths = []
    for filename in sorted(os.listdir(directory)):
        full_path = os.path.join(directory, filename)
        if validate_signal_file(full_path):
            paths.append(full_path)

    indexed_paths = list(enumerate(paths))
    logger.info("Найдено и проиндексировано %d валидных сигналов.", len(indexed_paths))
    return indexed_paths


def load_manifest(directory: str) -> Optional[Dict[str, Any]]:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.isfile(path):
        return None
    return read_json(path)


def load_corpus(directory: str) -> Tuple[List[np.ndarray], List[str]]:
    """
    Загружает корпус: по списку файлов из манифеста, если он есть,
    иначе все валидные сигналы директории.

    Returns:
        (сигналы, пути к файлам).
    """
    manifest = load_manifest(directory)
    if manifest is not None:
        logger.info("Корпус загружается по манифесту '%s'", MANIFEST_NAME)
        paths = [os.path.join(directory, name) for name in manifest.get("files", [])]
        missing = [p for p in paths if not os.path.isfile(p)]
        if missing:
            raise ConfigError(f"Файлы из манифеста не найдены: {missing}")
    else:
        paths = [path for _, path in collect_corpus(directory)]

    if not paths:
        raise ConfigError(f"В '{directory}' нет ни одного сигнала")
    signals = [load_signal(p) for p in paths]
    n_channels = {x.shape[0] for x in signals}
    if len(n_channels) != 1:
        raise ConfigError(f"Сигналы корпуса имеют разное число каналов: {sorted(n_channels)}")
    return signals, paths


def _truth_path(directory: str, name: str) -> str:
    return os.path.join(directory, TRUTH_DIR, name)


def save_corpus(directory: str, corpus: Sequence[np.ndarray], truth: GroundTruth, spec: SimSpec) -> Dict[str, Any]:
    """
    Записывает сигналы (RST1), истинные тензоры и JSON-манифест.

    Маски хранятся как тензоры float64 из нулей и единиц.
    """
    os.makedirs(os.path.join(directory, TRUTH_DIR), exist_ok=True)

    files = []
    for i, x in enumerate(corpus):
        name = f"signal_{i:03d}.rst"
        write_rst(os.path.join(directory, name), x)
        files.append(name)

    truth_files: Dict[str, Any] = {"dictionary": f"{TRUTH_DIR}/dictionary.rst"}
    write_rst(_truth_path(directory, "dictionary.rst"), truth.dictionary)
    truth_files["activations"] = []
    for i, z in enumerate(truth.activations):
        name = f"activations_{i:03d}.rst"
        write_rst(_truth_path(directory, name), z)
        truth_files["activations"].append(f"{TRUTH_DIR}/{name}")

    if truth.rare_dictionary is not None:
        write_rst(_truth_path(directory, "rare_dictionary.rst"), truth.rare_dictionary)
        truth_files["rare_dictionary"] = f"{TRUTH_DIR}/rare_dictionary.rst"
    for key, masks in (("rare_masks", truth.rare_masks), ("artifact_masks", truth.artifact_masks)):
        if not masks:
            continue
        truth_files[key] = []
        for i, mask in enumerate(masks):
            name = f"{key[:-1]}_{i:03d}.rst"
            write_rst(_truth_path(directory, name), mask.astype(np.float64))
            truth_files[key].append(f"{TRUTH_DIR}/{name}")

    manifest = {
        "spec": spec.as_dict(),
        "seed": spec.seed,
        "files": files,
        "truth": truth_files,
    }
    write_json(os.path.join(directory, MANIFEST_NAME), manifest)
    logger.info("Корпус из %d сигналов сохранён в '%s'", len(files), directory)
    return manifest


def load_truth(directory: str) -> Optional[GroundTruth]:
    """Истина из манифеста корпуса; None, если манифеста или истины нет."""
    manifest = load_manifest(directory)
    if manifest is None or "truth" not in manifest:
        return None
    entries = manifest["truth"]

    def _read(rel: str) -> np.ndarray:
        return read_rst(os.path.join(directory, rel))

    truth = GroundTruth(
        dictionary=_read(entries["dictionary"]),
        activations=[_read(p) for p in entries.get("activations", [])],
    )
    if "rare_dictionary" in entries:
        truth.rare_dictionary = _read(entries["rare_dictionary"])
    truth.rare_masks = [_read(p) > 0.5 for p in entries.get("rare_masks", [])]
    truth.artifact_masks = [_read(p) > 0.5 for p in entries.get("artifact_masks", [])]
    return truth

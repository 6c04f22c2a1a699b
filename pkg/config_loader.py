# config_loader.py
"""
Загрузка конфигурации запуска из YAML.

Секции: simulation, train, stage2, encode, bench, sweep, paths.
Неизвестные секции и ключи отклоняются; значения по умолчанию берутся
из settings.py.
"""
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from logger import logger
from settings import BENCH_LAMBDA_SWEEP, BENCH_LENGTHS, BENCH_N_ITER, BENCH_WINDOW_ATOMS, ENCODE_N_FISTA, OUTPUT_DIR
from core.datagen import RareSpec, SimSpec
from core.errors import ConfigError
from core.learner import TrainConfig
from core.robust_loss import ThresholdRule

SECTIONS = ("simulation", "train", "stage2", "encode", "bench", "sweep", "paths")


@dataclass(frozen=True)
class EncodeOptions:
    n_fista: int = ENCODE_N_FISTA
    # Явная lambda; иначе lambda из описания словаря или lambda_frac * lambda_max
    lmbd: Optional[float] = None
    lambda_frac: Optional[float] = None
    patch_width: Optional[int] = None


@dataclass(frozen=True)
class BenchOptions:
    lengths: Tuple[int, ...] = BENCH_LENGTHS
    window_atoms: Tuple[int, ...] = BENCH_WINDOW_ATOMS
    n_iter: int = BENCH_N_ITER
    # Длина сигнала для сравнения размеров окна
    window_signal_length: int = 20_000


@dataclass(frozen=True)
class PathsConfig:
    corpus: str = "data/corpus"
    output: str = OUTPUT_DIR
    dictionary: Optional[str] = None
    truth_dictionary: Optional[str] = None
    learned_dictionary: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    simulation: SimSpec = field(default_factory=SimSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    stage2: Optional[TrainConfig] = None
    encode: EncodeOptions = field(default_factory=EncodeOptions)
    bench: BenchOptions = field(default_factory=BenchOptions)
    sweep: Tuple[float, ...] = BENCH_LAMBDA_SWEEP
    paths: PathsConfig = field(default_factory=PathsConfig)

    @property
    def stage2_config(self) -> TrainConfig:
        """Этап 2 без отдельной секции повторяет этап 1 без отсечения."""
        return self.stage2 if self.stage2 is not None else self.train.replace(threshold_rule=None)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        lambda_frac: Optional[float] = None,
        no_trim: bool = False,
        output: Optional[str] = None,
        corpus: Optional[str] = None,
    ) -> "RunConfig":
        """Флаги командной строки поверх значений из файла."""
        cfg = self
        if seed is not None:
            stage2 = cfg.stage2.replace(seed=seed) if cfg.stage2 is not None else None
            cfg = dataclasses.replace(
                cfg,
                simulation=dataclasses.replace(cfg.simulation, seed=seed),
                train=cfg.train.replace(seed=seed),
                stage2=stage2,
            )
        if lambda_frac is not None:
            cfg = dataclasses.replace(cfg, train=cfg.train.replace(lambda_frac=lambda_frac))
        if no_trim:
            cfg = dataclasses.replace(cfg, train=cfg.train.replace(threshold_rule=None))
        if output is not None:
            cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, output=output))
        if corpus is not None:
            cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, corpus=corpus))
        return cfg


def _check_keys(section: str, mapping: Mapping[str, Any], allowed) -> None:
    if not isinstance(mapping, Mapping):
        raise ConfigError(f"Секция '{section}' должна быть словарём")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"Неизвестные ключи в секции '{section}': {sorted(unknown)}")


def _field_names(cls) -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(cls))


def _build(cls, section: str, mapping: Mapping[str, Any], **extra):
    try:
        return cls(**mapping, **extra)
    except TypeError as e:
        raise ConfigError(f"Секция '{section}': {e}") from e


def _simulation(mapping: Mapping[str, Any]) -> SimSpec:
    _check_keys("simulation", mapping, _field_names(SimSpec))
    values = dict(mapping)
    rare = values.pop("rare", None)
    if rare is not None:
        _check_keys("simulation.rare", rare, _field_names(RareSpec))
        values["rare"] = _build(RareSpec, "simulation.rare", rare)
    return _build(SimSpec, "simulation", values)


def _train(section: str, mapping: Mapping[str, Any]) -> TrainConfig:
    allowed = set(_field_names(TrainConfig)) - {"threshold_rule"} | {"threshold"}
    _check_keys(section, mapping, allowed)
    values = dict(mapping)
    threshold = values.pop("threshold", None)
    rule = ThresholdRule.from_config(threshold) if threshold is not None else None
    return _build(TrainConfig, section, values, threshold_rule=rule)


def _tuple_section(section: str, cls, mapping: Mapping[str, Any]):
    _check_keys(section, mapping, _field_names(cls))
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in mapping.items()}
    return _build(cls, section, values)


def run_config_from_mapping(mapping: Optional[Mapping[str, Any]]) -> RunConfig:
    """Строит RunConfig из уже разобранного YAML."""
    mapping = mapping or {}
    _check_keys("<root>", mapping, SECTIONS)
    values: Dict[str, Any] = {}
    if "simulation" in mapping:
        values["simulation"] = _simulation(mapping["simulation"] or {})
    if "train" in mapping:
        values["train"] = _train("train", mapping["train"] or {})
    if "stage2" in mapping:
        values["stage2"] = _train("stage2", mapping["stage2"] or {})
    if "encode" in mapping:
        values["encode"] = _tuple_section("encode", EncodeOptions, mapping["encode"] or {})
    if "bench" in mapping:
        values["bench"] = _tuple_section("bench", BenchOptions, mapping["bench"] or {})
    if "paths" in mapping:
        values["paths"] = _tuple_section("paths", PathsConfig, mapping["paths"] or {})
    if "sweep" in mapping:
        sweep = mapping["sweep"]
        if not isinstance(sweep, list) or not all(isinstance(v, (int, float)) for v in sweep):
            raise ConfigError("Секция 'sweep' должна быть списком долей lambda_max")
        values["sweep"] = tuple(float(v) for v in sweep)
    return RunConfig(**values)


def load_run_config(path: Optional[str]) -> RunConfig:
    """
    Читает YAML-файл конфигурации. Без пути возвращает значения по умолчанию.

    Raises:
        ConfigError: файл не найден, не разбирается или содержит неизвестные ключи.
    """
    if path is None:
        logger.info("Файл конфигурации не задан, используются значения из settings.py")
        return RunConfig()
    if not os.path.isfile(path):
        raise ConfigError(f"Файл конфигурации не найден: {path}")
    logger.info("Загрузка конфигурации из '%s'", path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Не удалось разобрать YAML '{path}': {e}") from e
    return run_config_from_mapping(data)


def validate_paths(cfg: RunConfig, command: str) -> None:
    """Проверка входных путей до начала вычислений."""
    paths = cfg.paths
    required = {
        "train": [("corpus", paths.corpus, os.path.isdir)],
        "encode": [("corpus", paths.corpus, os.path.isdir), ("dictionary", paths.dictionary, os.path.isfile)],
        "detect": [("corpus", paths.corpus, os.path.isdir)],
        "score": [("truth_dictionary", paths.truth_dictionary, os.path.isfile),
                  ("learned_dictionary", paths.learned_dictionary, os.path.isfile)],
    }
    for name, value, exists in required.get(command, []):
        if not value:
            raise ConfigError(f"Для команды '{command}' не задан путь paths.{name}")
        if not exists(value):
            raise ConfigError(f"Путь paths.{name} не найден: {value}")

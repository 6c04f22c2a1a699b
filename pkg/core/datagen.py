# core/datagen.py
"""
Генерация синтетического корпуса X = D * Z + eps и его загрязнённого
варианта x = d_a * z_a + d_b * z_b + n (общий паттерн, редкий паттерн,
артефакты), вместе с истинными словарями, активациями и масками.
"""
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from logger import logger
from settings import (
    SIM_AMPLITUDE_RANGE, SIM_ARTIFACT_AMPLITUDE, SIM_ATOM_LENGTH, SIM_N_ATOMS,
    SIM_N_CHANNELS, SIM_N_SIGNALS, SIM_N_TIMES, SIM_NOISE_SIGMA, SIM_SPARSITY,
    STREAM_DICTIONARY, STREAM_SIGNALS,
)
from core.errors import ConfigError
from core.tensor import ActivationMap, Dictionary, convolve
from core.utils import derive_rng


@dataclass(frozen=True)
class RareSpec:
    """Загрязнение: редкие атомы с плотностью rho * sparsity и всплески-артефакты."""
    rare_atom_count: int = 1
    rare_density: float = 0.1
    artifact_density: float = 0.0
    artifact_amplitude: float = SIM_ARTIFACT_AMPLITUDE
    # Корреляция c = d_a . d_b; None - независимая форма
    rare_correlation: Optional[float] = None

    def __post_init__(self):
        if self.rare_atom_count < 0:
            raise ConfigError("rare_atom_count должно быть >= 0")
        if not 0.0 < self.rare_density < 1.0:
            raise ConfigError(f"rare_density должна лежать в (0, 1), получено {self.rare_density}")
        if not 0.0 <= self.artifact_density < 1.0:
            raise ConfigError(f"artifact_density должна лежать в [0, 1), получено {self.artifact_density}")
        if self.artifact_amplitude < 0:
            raise ConfigError("artifact_amplitude должна быть >= 0")
        if self.rare_correlation is not None and not 0.0 <= self.rare_correlation <= 1.0:
            raise ConfigError("rare_correlation должна лежать в [0, 1]")


@dataclass(frozen=True)
class SimSpec:
    n_channels: int = SIM_N_CHANNELS
    n_times: int = SIM_N_TIMES
    n_atoms: int = SIM_N_ATOMS
    atom_length: int = SIM_ATOM_LENGTH
    sparsity: float = SIM_SPARSITY
    noise_sigma: float = SIM_NOISE_SIGMA
    n_signals: int = SIM_N_SIGNALS
    seed: int = 0
    rare: Optional[RareSpec] = None
    # z = 1 для всех активаций вместо U[0.5, 1.5]
    constant_amplitude: bool = False
    # Не ближе L между активациями одного атома
    min_separation: bool = True

    def __post_init__(self):
        checks = [
            (self.n_channels >= 1, "n_channels >= 1"),
            (self.n_atoms >= 1, "n_atoms >= 1"),
            (self.atom_length >= 1, "atom_length >= 1"),
            (self.n_times >= self.atom_length, "n_times >= atom_length"),
            (0.0 < self.sparsity < 1.0, "0 < sparsity < 1"),
            (self.noise_sigma >= 0.0, "noise_sigma >= 0"),
            (self.n_signals >= 1, "n_signals >= 1"),
            (self.seed >= 0, "seed >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(f"Некорректная спецификация симуляции: нужно {message}")

    @property
    def valid_length(self) -> int:
        return self.n_times - self.atom_length + 1

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class GroundTruth:
    dictionary: Dictionary
    activations: List[ActivationMap]
    rare_dictionary: Optional[Dictionary] = None
    rare_activations: List[ActivationMap] = field(default_factory=list)
    rare_masks: List[np.ndarray] = field(default_factory=list)
    artifact_masks: List[np.ndarray] = field(default_factory=list)

    def outlier_masks(self) -> List[np.ndarray]:
        """Объединение масок редких событий и артефактов по каждому сигналу."""
        return [r | a for r, a in zip(self.rare_masks, self.artifact_masks)]


def _waveform(kind: int, atom_length: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(atom_length)
    if kind % 2 == 0:
        # Синус: 1..4 периода на атом, случайная фаза
        cycles = rng.uniform(1.0, 4.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        return np.sin(2 * np.pi * cycles * t / atom_length + phase)
    # Гауссов пик: случайные центр и ширина
    center = rng.uniform(0.25 * atom_length, 0.75 * atom_length)
    width = rng.uniform(atom_length / 16, atom_length / 6)
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def make_dictionary(spec: SimSpec, rng: np.random.Generator, n_atoms: Optional[int] = None,
                    first_kind: int = 0) -> Dictionary:
    """K атомов единичной нормы: чередуются синусы и гауссовы пики по каналам."""
    n_atoms = spec.n_atoms if n_atoms is None else n_atoms
    d = np.empty((n_atoms, spec.n_channels, spec.atom_length))
    for k in range(n_atoms):
        for p in range(spec.n_channels):
            d[k, p] = _waveform(first_kind + k, spec.atom_length, rng)
        d[k] /= np.linalg.norm(d[k])
    return d


def make_rare_dictionary(spec: SimSpec, common: Dictionary, rng: np.random.Generator) -> Dictionary:
    """
    Редкие атомы. При заданной rare_correlation c атом строится как
    c d_a + sqrt(1 - c^2) u, где u - новая форма, ортогонализованная к d_a.
    """
    rare = spec.rare
    d_b = make_dictionary(spec, rng, n_atoms=rare.rare_atom_count, first_kind=1)
    if rare.rare_correlation is None:
        return d_b
    c = rare.rare_correlation
    d_a = common[0]
    for k in range(rare.rare_atom_count):
        u = d_b[k] - np.sum(d_b[k] * d_a) * d_a
        norm = np.linalg.norm(u)
        if norm == 0:
            u = rng.standard_normal(d_a.shape)
            u -= np.sum(u * d_a) * d_a
            norm = np.linalg.norm(u)
        d_b[k] = c * d_a + np.sqrt(1.0 - c * c) * u / norm
        d_b[k] /= np.linalg.norm(d_b[k])
    return d_b


def _separated_positions(n_positions: int, count: int, gap: int, rng: np.random.Generator) -> np.ndarray:
    """
    count различных позиций из [0, n_positions) с шагом не меньше gap,
    равномерно среди всех таких наборов: выбираем count мест из
    n_positions - (count - 1)(gap - 1) и раздвигаем i-е место на i(gap - 1).
    """
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    free = n_positions - (count - 1) * (gap - 1)
    slots = np.sort(rng.choice(free, size=count, replace=False))
    return slots + np.arange(count) * (gap - 1)


def make_activations(spec: SimSpec, rng: np.random.Generator, n_atoms: Optional[int] = None,
                     density: Optional[float] = None) -> ActivationMap:
    """
    Разреженные гребёнки Дирака: число активаций атома ~ Binomial(T - L + 1, density)
    (density по умолчанию spec.sparsity), позиции равномерные, амплитуды U[0.5, 1.5] или 1.

    При min_separation позиции одного атома разнесены не меньше чем на L;
    число активаций остаётся биномиальным, пока они помещаются в сигнал.
    """
    n_atoms = spec.n_atoms if n_atoms is None else n_atoms
    density = spec.sparsity if density is None else density
    n_positions = spec.valid_length
    gap = spec.atom_length if spec.min_separation else 1
    # Больше активаций с шагом gap не помещается
    capacity = (n_positions + gap - 1) // gap

    z = np.zeros((n_atoms, n_positions))
    for row in z:
        count = min(int(rng.binomial(n_positions, density)), capacity)
        positions = _separated_positions(n_positions, count, gap, rng)
        if spec.constant_amplitude:
            row[positions] = 1.0
        else:
            row[positions] = rng.uniform(*SIM_AMPLITUDE_RANGE, size=count)
    return z


def _support_mask(z: ActivationMap, atom_length: int, n_times: int) -> np.ndarray:
    """Отсчёты, покрытые хотя бы одной активацией: [t, t + L)."""
    hits = np.any(z != 0, axis=0).astype(np.float64)
    return np.convolve(hits, np.ones(atom_length))[:n_times] > 0.5


def _make_artifacts(spec: SimSpec, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    rare = spec.rare
    burst = max(spec.atom_length // 2, 1)
    noise = np.zeros((spec.n_channels, spec.n_times))
    mask = np.zeros(spec.n_times, dtype=bool)
    starts = np.flatnonzero(rng.random(spec.n_times - burst + 1) < rare.artifact_density)
    for start in starts:
        noise[:, start:start + burst] += rare.artifact_amplitude * rng.standard_normal((spec.n_channels, burst))
        mask[start:start + burst] = True
    return noise, mask


def _synthesize_signal(spec: SimSpec, index: int, d: Dictionary, rare_d: Optional[Dictionary]):
    rng = derive_rng(spec.seed, STREAM_SIGNALS, index)
    z = make_activations(spec, rng)
    x = convolve(d, z)
    z_rare, rare_mask, artifact_mask = None, None, None
    if spec.rare is not None:
        if rare_d is not None and rare_d.shape[0] > 0:
            z_rare = make_activations(spec, rng, n_atoms=rare_d.shape[0],
                                      density=spec.rare.rare_density * spec.sparsity)
            x = x + convolve(rare_d, z_rare)
            rare_mask = _support_mask(z_rare, spec.atom_length, spec.n_times)
        else:
            rare_mask = np.zeros(spec.n_times, dtype=bool)
        artifacts, artifact_mask = _make_artifacts(spec, rng)
        x = x + artifacts
    if spec.noise_sigma > 0:
        x = x + spec.noise_sigma * rng.standard_normal(x.shape)
    return x, z, z_rare, rare_mask, artifact_mask


def synthesize(spec: SimSpec, n_jobs: int = 1) -> Tuple[List[np.ndarray], GroundTruth]:
    """
    Генерирует n_signals сигналов; каждый сигнал использует свой поток
    случайных чисел, поэтому результат не зависит от n_jobs.
    """
    dict_rng = derive_rng(spec.seed, STREAM_DICTIONARY)
    d = make_dictionary(spec, dict_rng)
    rare_d = make_rare_dictionary(spec, d, dict_rng) if spec.rare is not None and spec.rare.rare_atom_count else None

    logger.info("Генерация %d сигналов: P=%d, T=%d, K=%d, L=%d%s",
                spec.n_signals, spec.n_channels, spec.n_times, spec.n_atoms, spec.atom_length,
                " (с редкими событиями)" if spec.rare is not None else "")
    results = Parallel(n_jobs=n_jobs)(
        delayed(_synthesize_signal)(spec, i, d, rare_d) for i in range(spec.n_signals)
    )

    corpus = [r[0] for r in results]
    truth = GroundTruth(dictionary=d, activations=[r[1] for r in results], rare_dictionary=rare_d)
    if spec.rare is not None:
        truth.rare_activations = [r[2] for r in results if r[2] is not None]
        truth.rare_masks = [r[3] for r in results]
        truth.artifact_masks = [r[4] for r in results]
    return corpus, truth

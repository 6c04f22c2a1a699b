# core/analytic.py
"""
Аналитическая модель двух паттернов для K = 1.

Популяция непересекающихся сегментов X = d_i + eps, где d_i = d_a с
вероятностью 1 - rho и d_b с вероятностью rho, eps ~ N(0, sigma^2 I).
Для одноатомного словаря d код, потеря и градиент по d выражаются явно;
это позволяет проверять обучение на Монте-Карло и на неподвижных точках.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core.errors import ConfigError, DomainError

_UNIT_TOL = 1e-12


def _as_atom(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim == 3 and d.shape[0] != 1:
        raise DomainError(f"Аналитическая модель требует K = 1, получено K = {d.shape[0]}")
    return d.reshape(-1)


@dataclass(frozen=True)
class TwoPatternModel:
    d_a: np.ndarray
    d_b: np.ndarray
    rho: float
    sigma: float
    lmbd: float

    def __post_init__(self):
        for name in ("d_a", "d_b"):
            atom = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if abs(np.linalg.norm(atom) - 1.0) > _UNIT_TOL:
                raise ConfigError(f"Атом {name} должен иметь единичную норму")
            object.__setattr__(self, name, atom)
        if self.d_a.shape != self.d_b.shape:
            raise ConfigError("Атомы d_a и d_b разной длины")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho должна лежать в (0, 1), получено {self.rho}")
        if self.sigma < 0 or self.lmbd < 0:
            raise ConfigError("sigma и lambda должны быть неотрицательны")
        if not -_UNIT_TOL <= self.c <= 1.0 + _UNIT_TOL:
            raise ConfigError(f"Корреляция c = d_a . d_b должна лежать в [0, 1], получено {self.c}")

    @property
    def c(self) -> float:
        return float(self.d_a @ self.d_b)

    @property
    def atom_length(self) -> int:
        return self.d_a.size

    @classmethod
    def from_correlation(cls, atom_length: int, c: float, rho: float, sigma: float,
                         lmbd: float, rng: np.random.Generator) -> "TwoPatternModel":
        """d_b = c d_a + sqrt(1 - c^2) u, где u - единичный вектор, ортогональный d_a."""
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"c должна лежать в [0, 1], получено {c}")
        d_a = rng.standard_normal(atom_length)
        d_a /= np.linalg.norm(d_a)
        u = rng.standard_normal(atom_length)
        u -= (u @ d_a) * d_a
        u /= np.linalg.norm(u)
        d_b = c * d_a + np.sqrt(1.0 - c * c) * u
        d_b /= np.linalg.norm(d_b)
        return cls(d_a=d_a, d_b=d_b, rho=rho, sigma=sigma, lmbd=lmbd)


def analytic_sparse_code(model: TwoPatternModel, d: np.ndarray, eps_dot_d: float, rare: bool = False) -> float:
    """
    z*(X, d) = 0, если c + eps.d <= lambda, иначе c + eps.d - lambda,
    где c = d . d_b для редкого сегмента (rare=True) и d . d_a иначе.
    """
    atom = _as_atom(d)
    c = float(atom @ (model.d_b if rare else model.d_a))
    value = c + eps_dot_d
    return 0.0 if value <= model.lmbd else value - model.lmbd


def analytic_expected_loss(model: TwoPatternModel, c: float, L: int) -> float:
    """E_eps[F(d, z*; X)] = 1/2 (1 - (c - lambda)^2 + (L - 1) sigma^2) при активном коде."""
    if c < model.lmbd:
        raise DomainError(f"Формула верна только для c >= lambda (c = {c}, lambda = {model.lmbd})")
    if c > 1.0:
        raise DomainError(f"Корреляция единичных атомов не превосходит 1, получено {c}")
    return 0.5 * (1.0 - (c - model.lmbd) ** 2 + (L - 1) * model.sigma ** 2)


def analytic_expected_gradient(model: TwoPatternModel, d: np.ndarray) -> np.ndarray:
    """
    E[grad_d F] = sum по ветвям i в {a, b} с весами (1 - rho, rho):
        (c_i - lambda)^2 d - (c_i - lambda) d_i,  если c_i > lambda, иначе 0.

    Члены с sigma^2 от E[z^2] d и E[z X] взаимно сокращаются.
    Форма результата совпадает с формой d.
    """
    shape = np.shape(d)
    atom = _as_atom(d)
    grad = np.zeros_like(atom)
    for weight, pattern in ((1.0 - model.rho, model.d_a), (model.rho, model.d_b)):
        active = float(atom @ pattern) - model.lmbd
        if active > 0:
            grad += weight * (active ** 2 * atom - active * pattern)
    return grad.reshape(shape)


def sample_segments(
    model: TwoPatternModel,
    n_segments: int,
    rng: np.random.Generator,
    n_rare: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Популяция сегментов длины L в форме пакета сигналов (N, 1, L).

    Ровно n_rare (по умолчанию round(rho N)) сегментов берутся из d_b,
    их позиции перемешаны.

    Returns:
        (сегменты, флаги редких сегментов формы (N,)).
    """
    if n_rare is None:
        n_rare = int(round(model.rho * n_segments))
    is_rare = np.zeros(n_segments, dtype=bool)
    is_rare[:n_rare] = True
    is_rare = rng.permutation(is_rare)
    segments = np.where(is_rare[:, None], model.d_b[None, :], model.d_a[None, :])
    if model.sigma > 0:
        segments = segments + model.sigma * rng.standard_normal(segments.shape)
    return segments[:, None, :], is_rare

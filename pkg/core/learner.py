# core/learner.py
"""
Обучение свёрточного словаря на стохастических окнах со встроенным
отсечением выбросов.

Одна итерация:
    1. выбрать N_W окон (сигнал корпуса равновероятно, затем начало окна);
    2. N_fista итераций FISTA для всех окон одним пакетом;
    3. ошибки патчей по всем окнам вместе -> порог -> маска выбросов;
    4. градиент усечённой функции по D (без дифференцирования через Z);
    5. один шаг: SLS (Армихо на том же пакете) или адаптивные моменты;
    6. проекция атомов на единичный шар.
"""
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from logger import logger
from settings import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAM_STEP,
    DEFAULT_ATOM_LENGTH, DEFAULT_LAMBDA_FRAC, DEFAULT_N_ATOMS, DEFAULT_N_ITER,
    DEFAULT_N_WINDOWS, DEFAULT_WINDOW_ATOMS, INIT_MAX_TRIES, LAMBDA_BATCH_WINDOWS,
    LOG_EVERY, SLS_ARMIJO, SLS_BACKOFF, SLS_GROWTH, SLS_MAX_HALVINGS, SLS_MAX_STEP,
    STREAM_INIT, STREAM_LAMBDA, STREAM_WINDOWS, TRAIN_N_FISTA,
)
from core.errors import ConfigError, DimensionError, NumericError, TrainingAborted
from core.robust_loss import (
    OutlierMask, ThresholdRule,
    build_mask, compute_threshold, empty_mask, masked_residual, patch_errors, trimmed_objective,
)
from core.sparse_coder import SparseCodeConfig, fista, lambda_max_bound
from core.tensor import (
    Dictionary, SignalTensor, WindowSpec, check_dictionary, convolve, correlate, extract_window,
)
from core.utils import derive_rng


class Optimizer(str, Enum):
    SLS = "sls"
    ADAPTIVE_MOMENTS = "adam"


class InitMode(str, Enum):
    DATA_WINDOWS = "data_windows"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class TrainConfig:
    """
    Параметры обучения.

    threshold_rule = None отключает отсечение выбросов. patch_width = None
    означает W_patch = L. trim_warmup - итерация, с которой включается
    отсечение.
    """
    n_atoms: int = DEFAULT_N_ATOMS
    atom_length: int = DEFAULT_ATOM_LENGTH
    n_iter: int = DEFAULT_N_ITER
    n_windows: int = DEFAULT_N_WINDOWS
    window_width: int = DEFAULT_WINDOW_ATOMS * DEFAULT_ATOM_LENGTH
    n_fista: int = TRAIN_N_FISTA
    lambda_frac: float = DEFAULT_LAMBDA_FRAC
    threshold_rule: Optional[ThresholdRule] = None
    optimizer: Optimizer = Optimizer.SLS
    seed: int = 0
    init: InitMode = InitMode.DATA_WINDOWS
    patch_width: Optional[int] = None
    trim_warmup: int = 0
    lambda_batch: int = LAMBDA_BATCH_WINDOWS

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "init", InitMode(self.init))
        checks = [
            (self.n_atoms >= 1, "n_atoms >= 1"),
            (self.atom_length >= 1, "atom_length >= 1"),
            (self.n_iter >= 0, "n_iter >= 0"),
            (self.n_windows >= 1, "n_windows >= 1"),
            (self.window_width >= self.atom_length, "window_width >= atom_length"),
            (self.n_fista >= 1, "n_fista >= 1"),
            (0.0 < self.lambda_frac <= 1.0, "0 < lambda_frac <= 1"),
            (self.seed >= 0, "seed >= 0"),
            (self.trim_warmup >= 0, "trim_warmup >= 0"),
            (self.lambda_batch >= 1, "lambda_batch >= 1"),
            (self.patch_width is None or 1 <= self.patch_width <= self.window_width,
             "1 <= patch_width <= window_width"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(f"Некорректная конфигурация обучения: нужно {message}")

    @property
    def effective_patch_width(self) -> int:
        return self.patch_width if self.patch_width is not None else self.atom_length

    @property
    def trimming(self) -> bool:
        return self.threshold_rule is not None

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        values = dataclasses.asdict(self)
        values["optimizer"] = self.optimizer.value
        values["init"] = self.init.value
        values["threshold_rule"] = self.threshold_rule.as_dict() if self.threshold_rule else None
        return values

    def config_hash(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    loss_untrimmed: float
    step: float
    trimmed_fraction: float
    threshold: float
    lmbd: float
    line_search_failed: bool
    elapsed_ms: float


@dataclass
class TrainReport:
    dictionary: Dictionary
    lmbd: float
    config: TrainConfig
    records: List[IterationRecord] = field(default_factory=list)

    # Колонки CSV отчёта; elapsed_ms добавляется только по запросу
    COLUMNS = ("iteration", "loss", "loss_untrimmed", "step", "trimmed_fraction",
               "threshold", "lmbd", "line_search_failed")

    def rows(self, with_timings: bool = False) -> List[dict]:
        columns = self.COLUMNS + (("elapsed_ms",) if with_timings else ())
        return [{name: getattr(record, name) for name in columns} for record in self.records]

    @property
    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else float("nan")

    @property
    def final_loss_untrimmed(self) -> float:
        return self.records[-1].loss_untrimmed if self.records else float("nan")


@dataclass
class WindowBatch:
    """Пакет окон текущей итерации с их кодами и маской выбросов."""
    signals: np.ndarray
    codes: np.ndarray
    mask: OutlierMask

    @classmethod
    def from_windows(cls, windows: Sequence[Tuple[SignalTensor, np.ndarray, OutlierMask]]) -> "WindowBatch":
        if not windows:
            raise DimensionError("Пустой список окон")
        signals = np.stack([np.asarray(w[0], dtype=np.float64) for w in windows])
        codes = np.stack([np.asarray(w[1], dtype=np.float64) for w in windows])
        first = windows[0][2]
        flags = np.stack([w[2].flags for w in windows])
        mask = OutlierMask(first.patch_width, flags, first.threshold_used, first.signal_length)
        return cls(signals, codes, mask)

    @property
    def z_l1(self) -> float:
        return float(np.sum(np.abs(self.codes)))


# --- Окна и инициализация ---

def sample_windows(T: int, cfg: TrainConfig, rng: np.random.Generator,
                   n_windows: Optional[int] = None) -> List[WindowSpec]:
    """N_W начал окон, равномерно и независимо на [0, T - W_win]; перекрытия допустимы."""
    width = cfg.window_width
    if width > T:
        raise ConfigError(f"Ширина окна {width} больше длины сигнала {T}")
    count = cfg.n_windows if n_windows is None else n_windows
    starts = rng.integers(0, T - width + 1, size=count)
    return [WindowSpec(int(s), width) for s in starts]


def sample_corpus_windows(
    lengths: Sequence[int], cfg: TrainConfig, rng: np.random.Generator, n_windows: Optional[int] = None
) -> List[Tuple[int, WindowSpec]]:
    """Сначала сигнал корпуса равновероятно, затем начало окна равномерно."""
    width = cfg.window_width
    if any(width > T for T in lengths):
        raise ConfigError(f"Ширина окна {width} больше длины одного из сигналов корпуса")
    count = cfg.n_windows if n_windows is None else n_windows
    picks = rng.integers(0, len(lengths), size=count)
    return [(int(idx), sample_windows(lengths[idx], cfg, rng, n_windows=1)[0]) for idx in picks]


def gather_windows(signals: Sequence[np.ndarray], windows: Sequence[Tuple[int, WindowSpec]]) -> np.ndarray:
    """Пакет (N, P, W) копий окон."""
    return np.stack([extract_window(signals[idx], w) for idx, w in windows])


def _normalize_atoms(d: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.sum(d ** 2, axis=(1, 2), keepdims=True))
    return d / np.where(norms > 0, norms, 1.0)


def initial_dictionary(signals: Sequence[np.ndarray], cfg: TrainConfig, rng: np.random.Generator) -> Dictionary:
    """
    DATA_WINDOWS: K случайных кусков длины L из корпуса, нормированных по l2;
    нулевые куски пропускаются. GAUSSIAN: нормированный белый шум.
    """
    n_channels = signals[0].shape[0]
    shape = (cfg.n_atoms, n_channels, cfg.atom_length)
    if cfg.init is InitMode.GAUSSIAN:
        return _normalize_atoms(rng.standard_normal(shape))

    d = np.empty(shape)
    for k in range(cfg.n_atoms):
        for _ in range(INIT_MAX_TRIES):
            x = signals[int(rng.integers(0, len(signals)))]
            start = int(rng.integers(0, x.shape[-1] - cfg.atom_length + 1))
            chunk = x[:, start:start + cfg.atom_length]
            norm = np.linalg.norm(chunk)
            if norm > 0:
                d[k] = chunk / norm
                break
        else:
            logger.warning("Не найден ненулевой кусок сигнала для атома %d, используется шум.", k)
            d[k] = _normalize_atoms(rng.standard_normal((1,) + shape[1:]))[0]
    return d


def project_unit_ball(d: Dictionary) -> Dictionary:
    """Атомы с нормой > 1 масштабируются до нормы 1; остальные (включая нулевые) не меняются."""
    d = check_dictionary(d)
    norms = np.sqrt(np.sum(d ** 2, axis=(1, 2), keepdims=True))
    return d / np.where(norms > 1.0, norms, 1.0)


# --- Функция потерь и градиент ---

def batch_loss(d: Dictionary, batch: WindowBatch, lmbd: float) -> float:
    """Усечённая функция потерь пакета при фиксированных кодах и маске."""
    recon = convolve(d, batch.codes)
    return trimmed_objective(batch.signals, recon, batch.mask, batch.z_l1, lmbd)


def dictionary_gradient(
    windows: Union[WindowBatch, Sequence[Tuple[SignalTensor, np.ndarray, OutlierMask]]],
    d: Dictionary,
) -> Dictionary:
    """
    Градиент усечённой функции по D: сумма по окнам correlate(masked_residual, Z) / W_patch.
    Коды считаются константами.
    """
    batch = windows if isinstance(windows, WindowBatch) else WindowBatch.from_windows(windows)
    d = check_dictionary(d)
    recon = convolve(d, batch.codes)
    if recon.shape != batch.signals.shape:
        raise DimensionError(f"Реконструкция {recon.shape} не совпадает с окнами {batch.signals.shape}")
    residual = masked_residual(batch.signals, recon, batch.mask)
    return correlate(residual, batch.codes) / batch.mask.patch_width


# --- Шаги оптимизации ---

def sls_step(
    d: Dictionary,
    grad: Dictionary,
    windows: WindowBatch,
    current_loss: float,
    lmbd: float,
    alpha_max: float = SLS_MAX_STEP,
) -> Tuple[Dictionary, float]:
    """
    Армихо с возвратом на том же пакете: наибольший alpha из
    alpha_max, alpha_max/2, ... (не более 30 делений), для которого
    F(D') <= current_loss - 0.1 <g, D - D'>, где D' = proj(D - alpha g).

    Пока проекция не срабатывает, D - D' = alpha g и условие совпадает
    с обычным F(D') <= current_loss - 0.1 alpha ||g||^2. Проекция срезает
    радиальную часть шага, и требуемое убывание считается по фактическому шагу.

    Returns:
        (новый словарь, alpha); alpha = 0, если условие не выполнилось.
    """
    d = np.asarray(d, dtype=np.float64)
    if not np.any(grad):
        return d.copy(), alpha_max

    alpha = alpha_max
    for _ in range(SLS_MAX_HALVINGS + 1):
        candidate = project_unit_ball(d - alpha * grad)
        decrease = float(np.sum(grad * (d - candidate)))
        loss = batch_loss(candidate, windows, lmbd)
        if loss <= current_loss - SLS_ARMIJO * decrease:
            return candidate, alpha
        alpha *= SLS_BACKOFF
    return d.copy(), 0.0


class StochasticLineSearch:
    """SLS с ростом alpha_max в 2 раза от последнего принятого шага (не больше 10)."""

    def __init__(self, alpha_max: float = SLS_MAX_STEP):
        self.alpha_max = alpha_max

    def step(self, d: Dictionary, grad: Dictionary, batch: WindowBatch,
             current_loss: float, lmbd: float) -> Tuple[Dictionary, float, bool]:
        new_d, alpha = sls_step(d, grad, batch, current_loss, lmbd, self.alpha_max)
        if alpha == 0.0:
            logger.debug("SLS: условие Армихо не выполнено, шаг пропущен.")
            return new_d, alpha, True
        self.alpha_max = min(SLS_GROWTH * alpha, SLS_MAX_STEP)
        return new_d, alpha, False


class AdaptiveMoments:
    """Шаг по адаптивным моментам с фиксированными гиперпараметрами, без поиска шага."""

    def __init__(self, shape: Tuple[int, ...], step: float = ADAM_STEP,
                 beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        self.lr = step
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, d: Dictionary, grad: Dictionary, batch: WindowBatch,
             current_loss: float, lmbd: float) -> Tuple[Dictionary, float, bool]:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        new_d = project_unit_ball(d - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return new_d, self.lr, False


# --- Обучение ---

def _as_corpus(corpus: Union[SignalTensor, Sequence[SignalTensor]]) -> List[np.ndarray]:
    if isinstance(corpus, np.ndarray) and corpus.ndim == 2:
        signals = [corpus]
    else:
        signals = [np.asarray(x, dtype=np.float64) for x in corpus]
    if not signals:
        raise ConfigError("Корпус сигналов пуст")
    n_channels = signals[0].shape[0]
    for x in signals:
        if x.ndim != 2 or x.shape[0] != n_channels:
            raise DimensionError(f"Все сигналы должны иметь форму ({n_channels}, T), получено {x.shape}")
    return [np.asarray(x, dtype=np.float64) for x in signals]


class WindowedDictionaryLearner:
    """
    Обучение словаря по алгоритму стохастических окон.

    Экземпляр хранит только конфигурацию; состояние оптимизатора создаётся
    заново в каждом вызове fit, поэтому повторный запуск с тем же seed
    даёт побитово одинаковый отчёт.
    """

    def __init__(self, config: TrainConfig):
        self.config = config

    def _lambda_batch(self, signals: List[np.ndarray]) -> np.ndarray:
        cfg = self.config
        n_windows = max(cfg.n_windows, cfg.lambda_batch)
        rng = derive_rng(cfg.seed, STREAM_LAMBDA)
        windows = sample_corpus_windows([x.shape[-1] for x in signals], cfg, rng, n_windows)
        return gather_windows(signals, windows)

    def _adapted_lambda(self, lambda_windows: np.ndarray, d: Dictionary, lmbd: float) -> float:
        """lambda_max по тем же окнам, но с обнулёнными патчами-выбросами."""
        cfg = self.config
        codes = fista(lambda_windows, d, SparseCodeConfig(lmbd, cfg.n_fista))
        errors = patch_errors(lambda_windows, convolve(d, codes), cfg.effective_patch_width)
        mask = build_mask(errors, compute_threshold(errors, cfg.threshold_rule))
        inliers = lambda_windows * (~mask.sample_mask())[:, None, :]
        return cfg.lambda_frac * lambda_max_bound(inliers, cfg.atom_length)

    def fit(self, corpus: Union[SignalTensor, Sequence[SignalTensor]]) -> TrainReport:
        cfg = self.config
        signals = _as_corpus(corpus)
        lengths = [x.shape[-1] for x in signals]
        if cfg.window_width > min(lengths):
            raise ConfigError(f"Ширина окна {cfg.window_width} больше самого короткого сигнала ({min(lengths)})")

        d = initial_dictionary(signals, cfg, derive_rng(cfg.seed, STREAM_INIT))
        lambda_windows = self._lambda_batch(signals)
        # lambda_max по всем допустимым атомам, а не по случайной инициализации
        lmbd = cfg.lambda_frac * lambda_max_bound(lambda_windows, cfg.atom_length)
        report = TrainReport(dictionary=d, lmbd=lmbd, config=cfg)
        logger.info(
            "Старт обучения: K=%d, L=%d, окна %d x %d, lambda=%.4g, отсечение: %s",
            cfg.n_atoms, cfg.atom_length, cfg.n_windows, cfg.window_width, lmbd,
            cfg.threshold_rule.kind.value if cfg.trimming else "нет",
        )

        if cfg.optimizer is Optimizer.SLS:
            optimizer = StochasticLineSearch()
        else:
            optimizer = AdaptiveMoments(d.shape)
        patch_width = cfg.effective_patch_width
        lambda_adapted = False

        for it in range(cfg.n_iter):
            started = time.perf_counter()
            rng = derive_rng(cfg.seed, STREAM_WINDOWS, it)
            windows = gather_windows(signals, sample_corpus_windows(lengths, cfg, rng))

            try:
                codes = fista(windows, d, SparseCodeConfig(lmbd, cfg.n_fista))
            except NumericError as e:
                report.dictionary = d
                raise TrainingAborted(f"Итерация {it}: {e}", report) from e
            errors = patch_errors(windows, convolve(d, codes), patch_width)

            next_lmbd = lmbd
            if cfg.trimming and it >= cfg.trim_warmup:
                mask = build_mask(errors, compute_threshold(errors, cfg.threshold_rule))
                if not lambda_adapted:
                    next_lmbd = self._adapted_lambda(lambda_windows, d, lmbd)
                    lambda_adapted = True
                    logger.info("lambda пересчитана по незамаскированным окнам: %.4g -> %.4g", lmbd, next_lmbd)
            else:
                mask = empty_mask(errors)

            batch = WindowBatch(windows, codes, mask)
            z_l1 = batch.z_l1
            loss = trimmed_objective(windows, convolve(d, codes), mask, z_l1, lmbd)
            loss_untrimmed = float(np.sum(errors.errors)) / patch_width + lmbd * z_l1
            grad = dictionary_gradient(batch, d)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                report.dictionary = d
                raise TrainingAborted(f"NaN/Inf в функции потерь на итерации {it}", report)

            d, step, failed = optimizer.step(d, grad, batch, loss, lmbd)
            record = IterationRecord(
                iteration=it,
                loss=loss,
                loss_untrimmed=loss_untrimmed,
                step=step,
                trimmed_fraction=mask.outlier_fraction,
                threshold=mask.threshold_used,
                lmbd=lmbd,
                line_search_failed=failed,
                elapsed_ms=1000.0 * (time.perf_counter() - started),
            )
            report.records.append(record)
            lmbd = next_lmbd

            if (it + 1) % LOG_EVERY == 0 or it + 1 == cfg.n_iter:
                logger.info(
                    "Итерация %d/%d: loss=%.6g (без отсечения %.6g), шаг=%.3g, отсечено %.1f%%",
                    it + 1, cfg.n_iter, loss, loss_untrimmed, step, 100.0 * record.trimmed_fraction,
                )

        report.dictionary = d
        report.lmbd = lmbd
        return report


def train(corpus: Union[SignalTensor, Sequence[SignalTensor]], cfg: TrainConfig) -> TrainReport:
    return WindowedDictionaryLearner(cfg).fit(corpus)

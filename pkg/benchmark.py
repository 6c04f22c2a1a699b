"""
Замеры масштабирования: время обучения при фиксированном числе итераций
для разных длин сигнала и итоговая функция потерь для разных ширин окна.
"""
import dataclasses
import time
from dataclasses import dataclass
from typing import List, Sequence

from logger import logger
from core.datagen import SimSpec, synthesize
from core.learner import TrainConfig, train
from core.metrics import recovery_score
from pipeline import corpus_lambda_max, evaluate_loss


@dataclass
class LengthBenchRow:
    n_times: int
    n_iter: int
    seconds: float
    seconds_per_iter: float
    final_loss_untrimmed: float
    recovery: float


@dataclass
class WindowBenchRow:
    window_atoms: int
    window_width: int
    n_windows: int
    seconds: float
    eval_loss: float
    recovery: float


def run_length_sweep(
    lengths: Sequence[int],
    spec: SimSpec,
    cfg: TrainConfig,
    n_iter: int,
    n_jobs: int = 1,
) -> List[LengthBenchRow]:
    """Один сигнал длины T на каждую точку; время только обучения."""
    rows = []
    for T in lengths:
        point_spec = dataclasses.replace(spec, n_times=int(T), n_signals=1)
        corpus, truth = synthesize(point_spec, n_jobs=n_jobs)
        point_cfg = cfg.replace(n_iter=n_iter, window_width=min(cfg.window_width, int(T)))

        started = time.perf_counter()
        report = train(corpus, point_cfg)
        seconds = time.perf_counter() - started

        row = LengthBenchRow(
            n_times=int(T),
            n_iter=n_iter,
            seconds=seconds,
            seconds_per_iter=seconds / max(n_iter, 1),
            final_loss_untrimmed=report.final_loss_untrimmed,
            recovery=recovery_score(truth.dictionary, report.dictionary).score,
        )
        logger.info("T=%d: %.3f с (%.4f с/итерацию)", row.n_times, row.seconds, row.seconds_per_iter)
        rows.append(row)
    return rows


def scaling_ratio(rows: Sequence[LengthBenchRow]) -> float:
    """Отношение времени на самой длинной точке ко времени на самой короткой."""
    if not rows:
        return float("nan")
    shortest = min(rows, key=lambda r: r.n_times)
    longest = max(rows, key=lambda r: r.n_times)
    return longest.seconds / shortest.seconds if shortest.seconds > 0 else float("inf")


def run_window_sweep(
    window_atoms: Sequence[int],
    spec: SimSpec,
    cfg: TrainConfig,
    n_iter: int,
    n_jobs: int = 1,
) -> List[WindowBenchRow]:
    """
    Обучение с окнами m * L на одном корпусе. Число окон в пакете подбирается
    так, чтобы N_W * W_win оставалось как в cfg. Потери сравниваются при общей
    lambda = lambda_frac * lambda_max, посчитанной по истинному словарю.
    """
    corpus, truth = synthesize(spec, n_jobs=n_jobs)
    lmbd = cfg.lambda_frac * corpus_lambda_max(corpus, truth.dictionary)
    rows = []
    for m in window_atoms:
        width = int(m) * cfg.atom_length
        if width > spec.n_times:
            logger.warning("Окно %dL длиннее сигнала (T=%d), пропуск.", m, spec.n_times)
            continue
        n_windows = max(1, round(cfg.n_windows * cfg.window_width / width))
        started = time.perf_counter()
        report = train(corpus, cfg.replace(n_iter=n_iter, window_width=width, n_windows=n_windows))
        seconds = time.perf_counter() - started
        row = WindowBenchRow(
            window_atoms=int(m),
            window_width=width,
            n_windows=n_windows,
            seconds=seconds,
            eval_loss=evaluate_loss(corpus, report.dictionary, lmbd, n_jobs=n_jobs),
            recovery=recovery_score(truth.dictionary, report.dictionary).score,
        )
        logger.info("Окно %dL: потери %.6g, восстановление %.3f", m, row.eval_loss, row.recovery)
        rows.append(row)
    return rows

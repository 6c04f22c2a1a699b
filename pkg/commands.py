"""
Подкоманды командной строки: simulate, train, encode, detect, score, bench.

Каждая команда возвращает 0 при успехе и поднимает исключение при ошибке;
преобразование исключений в коды выхода делает main.py.
"""
import dataclasses
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from logger import logger
from settings import DICTIONARY_NAME, SUMMARY_NAME, TRAIN_REPORT_NAME
from config_loader import RunConfig, validate_paths
from core.datagen import GroundTruth, synthesize
from core.errors import TrainingAborted, UndefinedMetricError
from core.learner import TrainConfig, TrainReport, train
from core.metrics import pooled_mask_f1, recovery_score, roc_auc
from core.robust_loss import OutlierMask, PatchErrorSeries, mask_from_samples
from core.sparse_coder import SparseCodeConfig, kkt_violation, objective
from core.utils import read_rst, write_rst
from benchmark import run_length_sweep, run_window_sweep, scaling_ratio
from data_loader import load_corpus, load_truth, save_corpus
from pipeline import (
    corpus_lambda_max, detect_after_training, detect_rare_events, encode_corpus, prepare_output_directory,
)
from report_manager import ReportManager, read_json, write_dictionary, write_json


@dataclass(frozen=True)
class CommandOptions:
    threads: int = 1
    force: bool = False
    sweep: bool = False
    timings: bool = False
    after_training: bool = False


# --- simulate ---

def cmd_simulate(cfg: RunConfig, opts: CommandOptions) -> int:
    """Генерирует корпус и истину; пишет их в paths.corpus."""
    target = prepare_output_directory(cfg.paths.corpus, opts.force)
    corpus, truth = synthesize(cfg.simulation, n_jobs=opts.threads)
    save_corpus(target, corpus, truth, cfg.simulation)
    print(f"Сгенерировано {len(corpus)} сигналов формы {corpus[0].shape} в '{target}'")
    return 0


# --- train ---

def _save_train_report(path: str, report: TrainReport, with_timings: bool) -> None:
    columns = TrainReport.COLUMNS + (("elapsed_ms",) if with_timings else ())
    ReportManager.from_records(path, columns, report.rows(with_timings)).save_changes_and_get_content()


def _recovery_or_none(truth: Optional[GroundTruth], d: np.ndarray) -> Optional[float]:
    if truth is None:
        return None
    return recovery_score(truth.dictionary, d).score


def _train_one(signals: List[np.ndarray], cfg: TrainConfig, output_dir: str, suffix: str,
               truth: Optional[GroundTruth], opts: CommandOptions) -> Dict[str, Any]:
    report_path = os.path.join(output_dir, TRAIN_REPORT_NAME.replace(".csv", f"{suffix}.csv"))
    try:
        report = train(signals, cfg)
    except TrainingAborted as e:
        if e.report is not None:
            _save_train_report(report_path, e.report, opts.timings)
        raise

    dict_path = os.path.join(output_dir, DICTIONARY_NAME.replace(".rst", f"{suffix}.rst"))
    write_dictionary(dict_path, report.dictionary, {
        "lmbd": report.lmbd,
        "config": cfg.as_dict(),
        "config_hash": cfg.config_hash(),
    })
    _save_train_report(report_path, report, opts.timings)

    recovery = _recovery_or_none(truth, report.dictionary)
    print(f"lambda_frac={cfg.lambda_frac}: итоговая потеря {report.final_loss:.6g} "
          f"(без отсечения {report.final_loss_untrimmed:.6g})")
    if recovery is not None:
        print(f"  восстановление словаря: {recovery:.4f}")
    return {
        "lambda_frac": cfg.lambda_frac,
        "lmbd": report.lmbd,
        "final_loss": report.final_loss,
        "final_loss_untrimmed": report.final_loss_untrimmed,
        "recovery": recovery,
        "dictionary": os.path.basename(dict_path),
        "report": os.path.basename(report_path),
    }


def cmd_train(cfg: RunConfig, opts: CommandOptions) -> int:
    """Обучение словаря; с --sweep по одному отчёту на каждую долю lambda_max."""
    validate_paths(cfg, "train")
    signals, _ = load_corpus(cfg.paths.corpus)
    truth = load_truth(cfg.paths.corpus)
    output_dir = prepare_output_directory(cfg.paths.output, opts.force)

    runs = []
    if opts.sweep:
        for frac in cfg.sweep:
            runs.append(_train_one(signals, cfg.train.replace(lambda_frac=frac), output_dir,
                                   f"_lambda_{frac:g}", truth, opts))
    else:
        runs.append(_train_one(signals, cfg.train, output_dir, "", truth, opts))

    write_json(os.path.join(output_dir, "train_summary.json"), {
        "trimming": cfg.train.trimming,
        "threshold_rule": cfg.train.threshold_rule.as_dict() if cfg.train.threshold_rule else None,
        "runs": runs,
    })
    return 0


# --- encode ---

def _encode_lambda(cfg: RunConfig, signals: List[np.ndarray], d: np.ndarray) -> float:
    options = cfg.encode
    if options.lmbd is not None:
        return options.lmbd
    if options.lambda_frac is None:
        sidecar = os.path.splitext(cfg.paths.dictionary)[0] + ".json"
        if os.path.isfile(sidecar) and "lmbd" in read_json(sidecar):
            return float(read_json(sidecar)["lmbd"])
    frac = options.lambda_frac if options.lambda_frac is not None else cfg.train.lambda_frac
    return frac * corpus_lambda_max(signals, d)


def cmd_encode(cfg: RunConfig, opts: CommandOptions) -> int:
    """Кодирует корпус сохранённым словарём: активации и ошибки патчей."""
    validate_paths(cfg, "encode")
    signals, paths = load_corpus(cfg.paths.corpus)
    d = read_rst(cfg.paths.dictionary)
    output_dir = prepare_output_directory(cfg.paths.output, opts.force)

    lmbd = _encode_lambda(cfg, signals, d)
    sc_cfg = SparseCodeConfig(lmbd, cfg.encode.n_fista)
    encoded = encode_corpus(signals, d, sc_cfg, patch_width=cfg.encode.patch_width, n_jobs=opts.threads)

    per_signal = []
    for i, (x, (z, series)) in enumerate(zip(signals, encoded)):
        write_rst(os.path.join(output_dir, f"activations_{i:03d}.rst"), z)
        ReportManager.from_records(
            os.path.join(output_dir, f"patch_errors_{i:03d}.csv"),
            ("patch_start", "error"),
            [{"patch_start": s, "error": e} for s, e in zip(series.starts, series.errors)],
        ).save_changes_and_get_content()
        value = objective(x, d, z, lmbd)
        violation = kkt_violation(x, d, z, lmbd)
        logger.debug("Сигнал %d: нарушение KKT %.3g", i, violation)
        per_signal.append({
            "file": os.path.basename(paths[i]),
            "objective": value.total,
            "n_active": int(np.count_nonzero(z)),
            "kkt_violation": violation,
        })

    write_json(os.path.join(output_dir, "encode_summary.json"), {
        "lmbd": lmbd, "n_fista": cfg.encode.n_fista, "signals": per_signal,
    })
    return 0


# --- detect ---

MASK_COLUMNS = ("signal", "patch_start", "patch_end", "error", "is_outlier")


def _truth_masks(truth: GroundTruth, masks: List[OutlierMask]) -> Optional[List[OutlierMask]]:
    sample_masks = truth.outlier_masks()
    if not sample_masks or len(sample_masks) != len(masks):
        return None
    return [mask_from_samples(s, m.patch_width) for s, m in zip(sample_masks, masks)]


def _mask_rows(masks: List[OutlierMask], errors: List[PatchErrorSeries]) -> List[Dict[str, Any]]:
    """Строки masks.csv: патч [patch_start, patch_end), его ошибка и флаг выброса."""
    rows = []
    for i, (mask, series) in enumerate(zip(masks, errors)):
        for start, error, flag in zip(series.starts, series.errors, mask.flags):
            rows.append({
                "signal": i,
                "patch_start": int(start),
                "patch_end": int(min(start + series.patch_width, series.signal_length)),
                "error": float(error),
                "is_outlier": bool(flag),
            })
    return rows


def cmd_detect(cfg: RunConfig, opts: CommandOptions) -> int:
    """Двухэтапная детекция редких событий и итоговая сводка."""
    validate_paths(cfg, "detect")
    signals, paths = load_corpus(cfg.paths.corpus)
    truth = load_truth(cfg.paths.corpus)
    output_dir = prepare_output_directory(cfg.paths.output, opts.force)

    result = detect_rare_events(signals, cfg.train, cfg.stage2_config,
                                encode_iters=cfg.encode.n_fista, n_jobs=opts.threads)

    write_dictionary(os.path.join(output_dir, "common_dictionary.rst"), result.common_dict,
                     {"lmbd": result.stage1_report.lmbd, "config_hash": cfg.train.config_hash()})
    write_dictionary(os.path.join(output_dir, "rare_dictionary.rst"), result.rare_dict,
                     {"lmbd": result.stage2_report.lmbd if result.stage2_report else None,
                      "config_hash": cfg.stage2_config.config_hash()})

    for i, (mask, scores) in enumerate(zip(result.stage1_masks, result.per_sample_scores)):
        write_rst(os.path.join(output_dir, f"mask_{i:03d}.rst"), mask.sample_mask().astype(np.float64))
        ReportManager.from_records(
            os.path.join(output_dir, f"scores_{i:03d}.csv"), ("sample", "score"),
            [{"sample": t, "score": s} for t, s in enumerate(scores)],
        ).save_changes_and_get_content()
    ReportManager.from_records(
        os.path.join(output_dir, "masks.csv"), MASK_COLUMNS,
        _mask_rows(result.stage1_masks, result.stage1_errors),
    ).save_changes_and_get_content()
    for i, z in enumerate(result.rare_activations):
        write_rst(os.path.join(output_dir, f"rare_activations_{i:03d}.rst"), z)

    after_masks = None
    if opts.after_training:
        logger.info("--- Маска после обучения без отсечения ---")
        after_masks, after_errors, _ = detect_after_training(
            signals, cfg.train, cfg.train.threshold_rule,
            encode_iters=cfg.encode.n_fista, n_jobs=opts.threads,
        )
        ReportManager.from_records(
            os.path.join(output_dir, "masks_after_training.csv"), MASK_COLUMNS,
            _mask_rows(after_masks, after_errors),
        ).save_changes_and_get_content()

    summary: Dict[str, Any] = {
        "files": [os.path.basename(p) for p in paths],
        "threshold": result.threshold,
        "stage1_outlier_fraction": result.outlier_fraction,
        "empty_mask_warning": result.empty_mask_warning,
        "stage1_f1": None,
        "stage2_recovery": None,
        "common_recovery": None,
        "auc": None,
    }
    if after_masks is not None:
        summary["after_training_f1"] = None
    if truth is not None:
        summary["common_recovery"] = recovery_score(truth.dictionary, result.common_dict).score
        if truth.rare_dictionary is not None and result.rare_dict.shape[0] > 0:
            summary["stage2_recovery"] = recovery_score(truth.rare_dictionary, result.rare_dict).score
        truth_masks = _truth_masks(truth, result.stage1_masks)
        if truth_masks is not None:
            summary["stage1_f1"] = pooled_mask_f1(result.stage1_masks, truth_masks)
            if after_masks is not None:
                summary["after_training_f1"] = pooled_mask_f1(after_masks, truth_masks)
            try:
                summary["auc"] = roc_auc(np.concatenate(result.per_sample_scores),
                                         np.concatenate(truth.outlier_masks()))
            except UndefinedMetricError as e:
                logger.warning("AUC не посчитан: %s", e)

    write_json(os.path.join(output_dir, SUMMARY_NAME), summary)
    if result.empty_mask_warning:
        print("⚠️ Маска этапа 1 пуста: редких событий не найдено.")
    print(f"Отмечено {100.0 * result.outlier_fraction:.2f}% патчей; сводка в '{output_dir}'")
    if summary.get("after_training_f1") is not None:
        print(f"F1 маски: со встроенным отсечением {summary['stage1_f1']:.4f}, "
              f"после обучения {summary['after_training_f1']:.4f}")
    return 0


# --- score ---

def cmd_score(cfg: RunConfig, opts: CommandOptions) -> int:
    """Оценка восстановления: истинный словарь против выученного."""
    validate_paths(cfg, "score")
    true_d = read_rst(cfg.paths.truth_dictionary)
    learned_d = read_rst(cfg.paths.learned_dictionary)
    output_dir = prepare_output_directory(cfg.paths.output, opts.force)
    result = recovery_score(true_d, learned_d)
    write_json(os.path.join(output_dir, "score.json"), {
        "score": result.score,
        "assignment": result.assignment,
        "correlation_matrix": result.correlation_matrix,
    })
    print(f"Восстановление словаря: {result.score:.4f}")
    return 0


# --- bench ---

def cmd_bench(cfg: RunConfig, opts: CommandOptions) -> int:
    """Время обучения по длинам сигнала и потери по ширинам окна."""
    output_dir = prepare_output_directory(cfg.paths.output, opts.force)
    bench = cfg.bench

    length_rows = run_length_sweep(bench.lengths, cfg.simulation, cfg.train, bench.n_iter, opts.threads)
    rows = [asdict(r) for r in length_rows]
    ReportManager.from_records(
        os.path.join(output_dir, "bench_lengths.csv"), list(rows[0]) if rows else ["n_times"], rows,
    ).save_changes_and_get_content()
    ratio = scaling_ratio(length_rows)
    print(f"Отношение времени max(T)/min(T): {ratio:.2f}")

    window_spec = dataclasses.replace(cfg.simulation, n_times=bench.window_signal_length)
    window_rows = [asdict(r) for r in run_window_sweep(bench.window_atoms, window_spec, cfg.train,
                                                       bench.n_iter, opts.threads)]
    ReportManager.from_records(
        os.path.join(output_dir, "bench_windows.csv"),
        list(window_rows[0]) if window_rows else ["window_atoms"], window_rows,
    ).save_changes_and_get_content()
    write_json(os.path.join(output_dir, "bench_summary.json"), {"scaling_ratio": ratio})
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "encode": cmd_encode,
    "detect": cmd_detect,
    "score": cmd_score,
    "bench": cmd_bench,
}

# Файл: main.py
import sys
import argparse
from typing import List, Optional

from joblib import cpu_count

from logger import logger, set_verbosity
from config_loader import load_run_config
from commands import COMMANDS, CommandOptions
from core.errors import CDLError, NumericError

# Коды выхода
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Робастное свёрточное обучение словарей для многоканальных сигналов.",
        formatter_class=argparse.RawTextHelpFormatter
    )
    parser.add_argument('--verbose', action='store_true', help="Подробный лог (DEBUG).")
    parser.add_argument('--quiet', action='store_true', help="Только предупреждения и ошибки.")

    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, func in COMMANDS.items():
        sub = subparsers.add_parser(name, help=(func.__doc__ or "").strip().splitlines()[0])
        sub.add_argument('config', nargs='?', default=None, help="YAML-файл конфигурации запуска.")
        sub.add_argument('--seed', type=int, default=None, help="Общий seed (переопределяет конфиг).")
        sub.add_argument('--lambda-frac', type=float, default=None, dest='lambda_frac',
                         help="lambda как доля lambda_max.")
        sub.add_argument('--no-trim', action='store_true', dest='no_trim',
                         help="Обучение без отсечения выбросов.")
        sub.add_argument('--threads', type=int, default=None,
                         help="Число параллельных задач (по умолчанию все ядра).")
        sub.add_argument('--force', action='store_true', help="Перезаписать существующие результаты.")
        sub.add_argument('--output', default=None, help="Выходная директория (для simulate - директория корпуса).")
        sub.add_argument('--corpus', default=None, help="Директория корпуса.")
        sub.add_argument('--sweep', action='store_true', help="train: перебор долей lambda_max из секции sweep.")
        sub.add_argument('--timings', action='store_true', help="train: добавить время итерации в отчёт.")
        sub.add_argument('--after-training', action='store_true', dest='after_training',
                         help="detect: сравнить с маской модели, обученной без отсечения.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parsed_args = build_parser().parse_args(argv)

    if parsed_args.verbose:
        set_verbosity("DEBUG")
    elif parsed_args.quiet:
        set_verbosity("WARNING")

    try:
        cfg = load_run_config(parsed_args.config)
        corpus = parsed_args.corpus
        output = parsed_args.output
        if parsed_args.command == 'simulate' and output is not None:
            corpus, output = output, None
        cfg = cfg.with_overrides(
            seed=parsed_args.seed,
            lambda_frac=parsed_args.lambda_frac,
            no_trim=parsed_args.no_trim,
            output=output,
            corpus=corpus,
        )
        opts = CommandOptions(
            threads=parsed_args.threads or cpu_count(),
            force=parsed_args.force,
            sweep=parsed_args.sweep,
            timings=parsed_args.timings,
            after_training=parsed_args.after_training,
        )
        return COMMANDS[parsed_args.command](cfg, opts)
    except NumericError as e:
        logger.error("Численная ошибка: %s", e)
        return EXIT_NUMERIC
    except (CDLError, OSError) as e:
        logger.error("Ошибка конфигурации или входных данных: %s", e)
        return EXIT_CONFIG
    except Exception as e:
        logger.critical("В процессе выполнения команды произошла непредвиденная ошибка: %s", e, exc_info=True)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())

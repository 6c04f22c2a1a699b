import logging
import sys

from settings import LOG_LEVEL

# 1. Логгирование
logger = logging.getLogger("trimmed_cdl")
logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)


def set_verbosity(level: str) -> None:
    """Меняет уровень логгера проекта (например, из флагов --verbose/--quiet)."""
    logger.setLevel(level)

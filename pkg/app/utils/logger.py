"""
Модуль логирования для решателя Biot FETI-DP
"""

import logging
import os
import sys

from config.settings import settings

_ROOT_NAME = "biot_fetidp"
_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logger(name: str) -> logging.Logger:
    """Настройка логгера для модуля"""
    logger = logging.getLogger(name)
    logger.setLevel(settings.log_level)

    # Проверяем, не добавлены ли уже handlers
    if logger.handlers:
        return logger

    formatter = logging.Formatter(_FORMAT)

    # Handler для консоли
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    # Handler для файла, только если задан LOG_DIR
    if settings.log_dir:
        try:
            os.makedirs(settings.log_dir, exist_ok=True)
            file_handler = logging.FileHandler(os.path.join(settings.log_dir, f"{_ROOT_NAME}.log"))
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)
        except (PermissionError, OSError) as e:
            logger.warning(f"Не удалось создать файл логов: {e}. Логирование только в консоль.")

    logger.propagate = False
    return logger


def get_logger(name: str) -> logging.Logger:
    """Child logger of the package logger; handlers live on the root one."""
    if name == _ROOT_NAME or name.startswith(f"{_ROOT_NAME}."):
        return logging.getLogger(name)
    return logging.getLogger(f"{_ROOT_NAME}.{name}")


def set_level(level: str | int) -> None:
    """Override the level of the package logger (used by --verbose)."""
    logger.setLevel(level)


logger = setup_logger(_ROOT_NAME)

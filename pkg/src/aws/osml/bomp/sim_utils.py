#  Copyright 2023-2026 Amazon.com, Inc. or its affiliates.

import logging
import multiprocessing
import os
import sys
from pathlib import Path
from typing import Dict, Union

from pythonjsonlogger.jsonlogger import JsonFormatter

from .errors import ConfigError

LOGGER_NAME = "aws.osml.bomp"
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%dT%H:%M:%S"
MAX_DEFAULT_WORKERS = 8


def build_logger(level: Union[int, str, None] = None) -> logging.Logger:
    """
    Utility function to create and configure the package logger so it writes JSON formatted
    records to sys.stdout.

    :param level: Logging level; defaults to BOMP_SIM_LOG_LEVEL or WARNING
    :return: Configured logger instance.
    """
    if level is None:
        level = os.getenv("BOMP_SIM_LOG_LEVEL", "WARNING")
    if isinstance(level, str):
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            raise ConfigError(f"Unknown log level: {level}")
        level = resolved

    logger = logging.getLogger(LOGGER_NAME)

    # Ensure no duplicate handlers
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(JsonFormatter(fmt=LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False

    logger.setLevel(level)
    return logger


def worker_count() -> int:
    """
    Number of worker threads used to run the trials of one sweep cell. Defaults to the CPU count
    capped at 8 and can be overridden with the BOMP_SIM_WORKERS environment variable.

    :return: Worker count, at least 1
    """
    try:
        default_workers = min(multiprocessing.cpu_count(), MAX_DEFAULT_WORKERS)
    except NotImplementedError:
        default_workers = 4
    try:
        return max(int(os.getenv("BOMP_SIM_WORKERS", default_workers)), 1)
    except ValueError as err:
        raise ConfigError(f"BOMP_SIM_WORKERS must be an integer: {err}") from err


def parse_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Parse a flat configuration file of ``key = value`` lines. Blank lines and lines starting with
    ``#`` are ignored; keys are normalized to underscores so ``snr-db`` and ``snr_db`` match.

    Example::

        scenario = bomp
        snr-db = 0,5,10,20
        rules = derived,energy,relchange

    :param path: File to read
    :return: Dictionary of parsed key-value pairs
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigError(f"Unable to read config file {path}: {err}") from err

    attributes = {}
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got '{stripped}'")
        key, value = stripped.split("=", 1)
        attributes[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return attributes


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB to linear scale."""
    return 10.0 ** (value_db / 10.0)

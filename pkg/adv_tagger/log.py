import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, IO, Optional, Union

PACKAGE_LOGGER = "adv_tagger"
LOG_LEVEL_ENV = "ADV_TAGGER_LOG_LEVEL"

LOG_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL
}

logger = logging.getLogger(__name__)


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """
    Configures the package logger.

    Args:
        level (Optional[str]): Logging level name ("DEBUG", "INFO", ..., or "OFF").
                               Falls back to the ADV_TAGGER_LOG_LEVEL environment
                               variable, then INFO.

    Returns:
        logging.Logger: The configured package logger.
    """
    level = (level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    if level in ["OFF", "DISABLED"]:
        package_logger.setLevel(logging.CRITICAL + 1)
        return package_logger

    package_logger.disabled = False
    package_logger.setLevel(LOG_LEVELS.get(level, logging.INFO))

    if not package_logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
        handler.setFormatter(formatter)
        package_logger.addHandler(handler)
    return package_logger


class JsonLinesWriter:
    """
    Appends structured records as one JSON object per line.

    Example usage:
        >>> with JsonLinesWriter("epochs.jsonl") as out:
        ...     out.write({"epoch": 0, "dev_accuracy": 0.91})
    """

    def __init__(self, target: Union[str, Path, IO[str]]):
        self._owned = not hasattr(target, "write")
        self._stream: IO[str] = open(target, "w", encoding="utf-8") if self._owned else target

    def write(self, record: Dict[str, Any]) -> None:
        self._stream.write(json.dumps(record, sort_keys=True) + "\n")
        self._stream.flush()

    def close(self) -> None:
        if self._owned:
            self._stream.close()

    def __enter__(self) -> "JsonLinesWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

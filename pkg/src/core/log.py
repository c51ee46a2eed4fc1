"""
Logging setup shared by the CLI and the test-suite
"""

import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Union[int, str] = logging.INFO,
                  log_file: Optional[Path] = None) -> logging.Logger:
    """
    Configure the root logger once

    Args:
        level: Logging level name or number
        log_file: Optional file that receives a copy of every record

    Returns:
        The configured root logger
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    root = logging.getLogger()
    root.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT)

    if not any(getattr(h, "_toolkit", False) for h in root.handlers):
        console = logging.StreamHandler()
        console.setFormatter(formatter)
        console._toolkit = True
        root.addHandler(console)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(formatter)
        file_handler._toolkit = True
        root.addHandler(file_handler)

    return root

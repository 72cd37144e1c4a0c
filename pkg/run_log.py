from __future__ import annotations

import logging
import os
import sys
import traceback
from logging.handlers import RotatingFileHandler
from pathlib import Path

LOGGER_NAME = "sysid"
LOG_FORMAT = "%(asctime)s %(message)s"
MAX_BYTES = 2_000_000

logger = logging.getLogger(LOGGER_NAME)


def setup_logging(out_dir: Path, level: str | None = None) -> logging.Logger:
    """Rotating file at <out>/var/sysid.log (one backup, sysid_2.log) plus stderr."""
    level_name = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logger.setLevel(getattr(logging, level_name, logging.INFO))

    var_dir = Path(out_dir) / "var"
    var_dir.mkdir(parents=True, exist_ok=True)
    log_file = var_dir / "sysid.log"
    rotated = var_dir / "sysid_2.log"

    fh = RotatingFileHandler(log_file, maxBytes=MAX_BYTES, backupCount=1, encoding="utf-8")

    def _namer(default_name: str) -> str:
        # Rename sysid.log.1 -> sysid_2.log
        p = Path(default_name)
        return str(rotated if p.name.endswith(".1") else p)

    fh.namer = _namer
    fh.setFormatter(logging.Formatter(LOG_FORMAT))
    sh = logging.StreamHandler(sys.stderr)
    sh.setFormatter(logging.Formatter(LOG_FORMAT))

    for old in logger.handlers:
        old.close()
    logger.handlers = [fh, sh]
    logger.propagate = False
    return logger


def log_exc(label: str, e: BaseException) -> None:
    logger.error("%s: %s: %s", label, type(e).__name__, e)
    tb = "".join(traceback.format_exception(type(e), e, e.__traceback__))
    for line in tb.rstrip().splitlines():
        logger.info(line)

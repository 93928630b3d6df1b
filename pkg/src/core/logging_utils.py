from __future__ import annotations

import json
import logging
import math
from typing import Any, Dict, Optional, TextIO

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s - %(message)s"
DETERMINISTIC_LOG_FORMAT = "%(levelname)s %(name)s - %(message)s"


def setup_logging(level: str = "INFO", deterministic: bool = False) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=DETERMINISTIC_LOG_FORMAT if deterministic else LOG_FORMAT,
        force=True,
    )


def _clean(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return repr(value)
        return round(value, 10)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def format_record(record: Dict[str, Any]) -> str:
    return json.dumps(_clean(record), sort_keys=True)


class JsonLineWriter:
    """Appends one JSON object per line; mirrors each record to a logger."""

    def __init__(self, path: str, logger: Optional[logging.Logger] = None) -> None:
        self.path = path
        self.log = logger or logging.getLogger("records")
        self._fh: Optional[TextIO] = open(path, "w", encoding="utf-8")

    def write(self, record: Dict[str, Any], level: int = logging.INFO) -> None:
        line = format_record(record)
        if self._fh is not None:
            self._fh.write(line + "\n")
            self._fh.flush()
        self.log.log(level, line)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "JsonLineWriter":
        return self

    def __exit__(self, *exc: Any) -> None:
        self.close()

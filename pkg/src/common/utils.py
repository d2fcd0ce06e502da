import hashlib
import json
import logging
import os
import sys
import time
import zlib
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, Union

import numpy as np
import torch


def get_logger(name: Optional[str] = None, level: Optional[Union[int, str]] = None) -> logging.Logger:
    """
    Create and return a standardized logger instance.
    Logs to stdout in a consistent format. Log level can be set via config, environment or argument.
    """
    logger = logging.getLogger(name or __name__)
    if not logger.handlers:
        log_level = level or _configured_level()
        if isinstance(log_level, str):
            log_level = getattr(logging, log_level.upper(), logging.INFO)

        handler = logging.StreamHandler(sys.stdout)
        formatter = logging.Formatter(
            fmt="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)
        logger.setLevel(log_level)
        logger.propagate = False
    elif level is not None:
        logger.setLevel(level.upper() if isinstance(level, str) else level)
    return logger


def _configured_level() -> Union[int, str]:
    # config imports this module, so resolve it lazily
    from src.common.config import get_config

    try:
        level = get_config().get("system.logging.level")
    except Exception:
        level = None
    return level or os.getenv("TARGET_AUG_LOG_LEVEL", "INFO")


def set_log_level(level: str) -> None:
    """Apply a level to every logger created through get_logger."""
    for name in list(logging.root.manager.loggerDict):
        if name == "src" or name.startswith("src."):
            logging.getLogger(name).setLevel(level.upper())


def to_json(data: Any, indent: Optional[int] = None) -> str:
    """
    Safely convert Python data to a JSON string with sorted keys.
    """
    try:
        return json.dumps(data, indent=indent, ensure_ascii=False, sort_keys=True)
    except (TypeError, ValueError) as e:
        raise ValueError(f"Failed to serialize to JSON: {e}") from e


def canonical_json(data: Any) -> str:
    """Compact sorted-key JSON used for hashing."""
    return json.dumps(data, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def from_json(data: str) -> Any:
    """
    Safely parse JSON into Python objects.
    """
    try:
        return json.loads(data)
    except (json.JSONDecodeError, TypeError) as e:
        raise ValueError(f"Failed to parse JSON: {e}") from e


def compute_sha256(data: Union[bytes, str]) -> str:
    """Hex SHA-256 of bytes or a UTF-8 string."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def file_sha256(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """Hex SHA-256 of a file, read in chunks."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def derive_rng(seed: int, stream: str, *indices: int) -> np.random.Generator:
    """
    Child generator for one (stream, indices) cell of a master seed.
    Independent of the order in which cells are visited.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode("utf-8"))]
    entropy.extend(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))


@contextmanager
def seeded_torch(seed: int) -> Iterator[None]:
    """Seed torch's global RNG inside a forked scope."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed) & 0xFFFFFFFFFFFFFFFF)
        yield


class Timer:
    """
    Context manager for measuring execution time with customizable logging.
    """
    def __init__(self, label: str = "Execution", logger: Optional[logging.Logger] = None):
        self.label = label
        self.logger = logger or get_logger(__name__)
        self.start = None
        self.duration = None

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - self.start
        self.logger.info(f"{self.label} completed in {self.duration:.4f} seconds.")

    @property
    def elapsed(self) -> float:
        """
        Return the elapsed time in seconds (available after context exit).
        """
        if self.duration is None:
            raise ValueError("Timer has not completed yet.")
        return self.duration

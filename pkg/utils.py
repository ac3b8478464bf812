import hashlib
import time
from pathlib import PurePath
from typing import Callable, Optional

from errors import AnalysisTimeout


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def posix_path(path) -> str:
    """Repository-relative paths are always reported with '/' separators."""
    return PurePath(path).as_posix()


def line_of(source: str, offset: int) -> int:
    return source.count("\n", 0, max(0, offset)) + 1


def parse_duration(value) -> float:
    """'90', '90s', '30m', '1h' -> seconds."""
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip().lower()
    units = {"s": 1, "m": 60, "h": 3600}
    if text and text[-1] in units:
        return float(text[:-1]) * units[text[-1]]
    return float(text)


# ---------------------------
# Cooperative deadline
# ---------------------------
class Deadline:
    """Wall-clock budget checked cooperatively by long-running phases."""

    def __init__(self, seconds: Optional[float], clock: Callable[[], float] = time.monotonic):
        self._clock = clock
        self.seconds = seconds
        self.expires_at = None if seconds is None else clock() + seconds

    @classmethod
    def unlimited(cls) -> "Deadline":
        return cls(None)

    def remaining(self) -> Optional[float]:
        if self.expires_at is None:
            return None
        return max(0.0, self.expires_at - self._clock())

    def expired(self) -> bool:
        return self.expires_at is not None and self._clock() >= self.expires_at

    def check(self, where: str = "") -> None:
        if self.expired():
            raise AnalysisTimeout(f"time limit of {self.seconds}s exceeded{' during ' + where if where else ''}")

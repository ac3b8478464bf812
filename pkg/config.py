# config.py - scan configuration: defaults < environment < config file < CLI flags
import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError
from utils import parse_duration

load_dotenv()

TOOL_NAME = "acscan"
TOOL_VERSION = "1.0.0"

DEFAULT_EXCLUDED_DIRS: Tuple[str, ...] = (
    "interface", "interfaces",
    "library", "libraries",
    "util", "utils",
    "mock", "mocks",
    "test", "tests",
)

# Provider and toolchain settings come from the environment, like the other service credentials
LLM_CONFIG = {
    "base_url": os.getenv("ACSCAN_LLM_BASE_URL", "https://api.openai.com/v1"),
    "model": os.getenv("ACSCAN_LLM_MODEL", ""),
    "api_key": os.getenv("ACSCAN_LLM_API_KEY", ""),
}
COMPILER_DIR = os.getenv("ACSCAN_SOLC_DIR", str(Path.home() / ".solcx"))


class ScanMode(str, Enum):
    REPOSITORY = "repo"
    SINGLE_CONTRACT = "single"


class LlmMode(str, Enum):
    OFF = "off"
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


class CompilerKind(str, Enum):
    SOLC = "solc"
    PARSE_ONLY = "parse-only"


class LlmSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: LlmMode = LlmMode.OFF
    transcript: Optional[Path] = None
    base_url: str = LLM_CONFIG["base_url"]
    model: str = LLM_CONFIG["model"]
    api_key: Optional[str] = Field(default=LLM_CONFIG["api_key"] or None, exclude=True, repr=False)
    timeout: float = Field(default=120.0, gt=0)
    max_in_flight: int = Field(default=4, ge=1)
    temperature: Optional[float] = None

    @model_validator(mode="after")
    def _transcript_required(self):
        if self.mode in (LlmMode.RECORD, LlmMode.REPLAY) and self.transcript is None:
            raise ValueError(f"llm mode '{self.mode.value}' needs a transcript file")
        return self


class ScanConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    root: Path
    excluded_dirs: Tuple[str, ...] = DEFAULT_EXCLUDED_DIRS
    mode: ScanMode = ScanMode.REPOSITORY
    max_call_depth: int = Field(default=3, ge=1)
    time_limit: float = Field(default=30 * 60.0, gt=0)
    reflection_max_iters: int = Field(default=5, ge=1)
    llm: LlmSettings = LlmSettings()
    compiler: CompilerKind = CompilerKind.SOLC
    compiler_dir: Path = Path(COMPILER_DIR)
    use_heuristic: bool = True
    include_internal_reachable: bool = False
    transfer_patterns: Tuple[str, ...] = ()
    workers: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    dump_cfg_dir: Optional[Path] = None

    @field_validator("excluded_dirs", "transfer_patterns", mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return tuple(part.strip() for part in value.split(",") if part.strip())
        return tuple(value)

    @field_validator("time_limit", mode="before")
    @classmethod
    def _duration(cls, value):
        try:
            return parse_duration(value)
        except ValueError:
            raise ValueError(f"invalid duration {value!r}")

    def report_settings(self) -> Dict[str, Any]:
        """Settings echoed into reports. Paths and pool sizes that differ between machines are left out."""
        return self.model_dump(mode="json", exclude=MACHINE_LOCAL_FIELDS)


MACHINE_LOCAL_FIELDS: Dict[str, Any] = {
    "root": True,
    "compiler_dir": True,
    "workers": True,
    "dump_cfg_dir": True,
    "llm": {"transcript": True},
}


# ---------------------------
# Config file + flag merging
# ---------------------------
# config-file key -> ScanConfig field (None marks output options handled by the CLI)
FILE_KEYS: Dict[str, Optional[str]] = {
    "MODE": "mode",
    "EXCLUDE_DIRS": "excluded_dirs",
    "MAX_DEPTH": "max_call_depth",
    "TIME_LIMIT": "time_limit",
    "REFLECTION_MAX_ITERS": "reflection_max_iters",
    "LLM": "llm",
    "LLM_BASE_URL": "llm_base_url",
    "LLM_MODEL": "llm_model",
    "LLM_TIMEOUT": "llm_timeout",
    "LLM_MAX_IN_FLIGHT": "llm_max_in_flight",
    "LLM_TEMPERATURE": "llm_temperature",
    "COMPILER": "compiler",
    "COMPILER_DIR": "compiler_dir",
    "HEURISTIC": "use_heuristic",
    "INCLUDE_INTERNAL": "include_internal_reachable",
    "TRANSFER_PATTERNS": "transfer_patterns",
    "WORKERS": "workers",
    "DUMP_CFG": "dump_cfg_dir",
    "FORMAT": None,
    "OUT": None,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config_file(path: Path) -> Dict[str, str]:
    """Parse a KEY=value config file; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = {key.upper(): value for key, value in dotenv_values(path).items() if value is not None}
    unknown = sorted(set(values) - set(FILE_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return values


def parse_llm_flag(value: str) -> Dict[str, Any]:
    """'live' | 'off' | 'record:FILE' | 'replay:FILE' -> LlmSettings fields."""
    mode, _, transcript = str(value).partition(":")
    try:
        llm_mode = LlmMode(mode.strip().lower())
    except ValueError:
        raise ConfigError(f"Invalid --llm value {value!r}; expected live, off, record:FILE or replay:FILE")
    if llm_mode in (LlmMode.RECORD, LlmMode.REPLAY) and not transcript:
        raise ConfigError(f"--llm {llm_mode.value} needs a transcript path, e.g. {llm_mode.value}:calls.jsonl")
    fields: Dict[str, Any] = {"mode": llm_mode}
    if transcript:
        fields["transcript"] = Path(transcript)
    return fields


def _as_bool(key: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigError(f"{key} expects a boolean, got {value!r}")


def build_config(root, file_values: Optional[Mapping[str, str]] = None, **overrides) -> ScanConfig:
    """Merge config-file values and flag overrides (None means 'not given') into a ScanConfig."""
    merged: Dict[str, Any] = {}
    for key, value in (file_values or {}).items():
        field = FILE_KEYS.get(key)
        if field:
            merged[field] = value
    merged.update({key: value for key, value in overrides.items() if value is not None})

    llm_fields: Dict[str, Any] = {}
    llm_value = merged.pop("llm", None)
    if llm_value is not None:
        llm_fields.update(parse_llm_flag(llm_value) if isinstance(llm_value, str) else dict(llm_value))
    for name in ("base_url", "model", "timeout", "max_in_flight", "temperature", "api_key"):
        value = merged.pop(f"llm_{name}", None)
        if value is not None:
            llm_fields[name] = value

    for key in ("use_heuristic", "include_internal_reachable"):
        if key in merged:
            merged[key] = _as_bool(key, merged[key])

    try:
        return ScanConfig(root=Path(root), llm=LlmSettings(**llm_fields), **merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid configuration: {problems}")
    except TypeError as e:
        raise ConfigError(f"Invalid configuration: {e}")


SAMPLE_CONFIG = """# acscan configuration (KEY=value, flags override these)
MODE=repo
EXCLUDE_DIRS=interface,interfaces,library,libraries,util,utils,mock,mocks,test,tests
MAX_DEPTH=3
TIME_LIMIT=30m
REFLECTION_MAX_ITERS=5
# off | live | record:transcript.jsonl | replay:transcript.jsonl
LLM=off
# LLM_BASE_URL=https://api.openai.com/v1
# LLM_MODEL=
COMPILER=solc
# COMPILER_DIR=/opt/solc
HEURISTIC=true
INCLUDE_INTERNAL=false
# TRANSFER_PATTERNS=transfer,transferFrom,safeTransfer*
FORMAT=text
"""

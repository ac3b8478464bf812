# llm_gateway.py - prompt templates, chat-completion client and record/replay transcripts
import json
import logging
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import requests
from pydantic import BaseModel, ConfigDict, ValidationError

from config import LlmMode, LlmSettings
from errors import ConfigError, MissingBinding, ProviderError, ProviderTimeout, ReplayMiss
from utils import sha256_hex

logger = logging.getLogger(__name__)

MAX_RETRIES = 2

_PLACEHOLDER_RE = re.compile(r"\[([A-Z][A-Z ]*[A-Z])\]")


# ---------------------------
# Prompt templates
# ---------------------------
class TemplateId(str, Enum):
    SENSITIVE_LOCATION = "SensitiveLocation"
    SNIPPET_COMPLETION = "SnippetCompletion"
    REFLECTION_FIX = "ReflectionFix"


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str

    @property
    def placeholders(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER_RE.findall(self.text)))


SENSITIVE_LOCATION = PromptTemplate(
    id=TemplateId.SENSITIVE_LOCATION.value,
    text=(
        "You are a smart contract security auditor. Your task is to identify the sensitive functions "
        "in the Solidity smart contract below.\n"
        "A function is sensitive if its body performs at least one of these sensitive operations:\n"
        "1. Selfdestruct: removes the contract from the blockchain and sends its remaining balance "
        "to a specified address.\n"
        "2. Transfer: sends cryptocurrency from the contract to a specified address.\n"
        "3. External call: invokes a function of another smart contract.\n"
        "4. State variable modification: alters a state variable stored by the contract.\n"
        "Return the signature of every sensitive function as a JSON array of strings, for example "
        '["withdraw(uint256)", "kill()"]. Return [] if there is no sensitive function. '
        "Do not explain your answer.\n\n"
        "Smart contract:\n[CODE]\n"
    ),
)

SNIPPET_COMPLETION = PromptTemplate(
    id=TemplateId.SNIPPET_COMPLETION.value,
    text=(
        "The following Solidity function was taken from a smart contract repository and cannot be "
        "compiled on its own.\n"
        "Complete it into a self-contained, compilable Solidity smart contract. Add only the minimal "
        "declarations it needs (pragma, state variables, structs, events, modifiers and helper "
        "functions). Refrain from altering the function snippet or injecting new logic into it.\n"
        "Return the complete contract in a single ```solidity code block.\n\n"
        "Function snippet:\n[CODE]\n"
    ),
)

REFLECTION_FIX = PromptTemplate(
    id=TemplateId.REFLECTION_FIX.value,
    text=(
        "The following Solidity smart contract fails to compile.\n\n"
        "Contract:\n[CONTRACT]\n\n"
        "Compiler error message:\n[ERROR MESSAGE]\n\n"
        "Fix the contract so that it compiles. Do not modify the function [NAME] in any way and do not "
        "inject new logic into it; change only the surrounding declarations.\n"
        "Return the complete fixed contract in a single ```solidity code block.\n"
    ),
)

TEMPLATES: Dict[str, PromptTemplate] = {t.id: t for t in (SENSITIVE_LOCATION, SNIPPET_COMPLETION, REFLECTION_FIX)}


def render_prompt(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Substitute every placeholder in one pass; bound text is inserted byte-exact."""
    placeholders = template.placeholders
    for name in placeholders:
        if name not in bindings:
            raise MissingBinding(name)
    if not placeholders:
        return template.text
    pattern = re.compile("|".join(re.escape(f"[{name}]") for name in placeholders))
    return pattern.sub(lambda m: bindings[m.group(0)[1:-1]], template.text)


def prompt_digest(prompt: str) -> str:
    return sha256_hex(prompt)


# ---------------------------
# Transcripts
# ---------------------------
class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    digest: str
    prompt: str
    response: str
    latency: float = 0.0

    @classmethod
    def for_prompt(cls, prompt: str, response: str, latency: float = 0.0) -> "TranscriptEntry":
        return cls(digest=prompt_digest(prompt), prompt=prompt, response=response, latency=latency)


class Transcript:
    """Ordered request log. Replay serves the first entry recorded for a digest and never goes live."""

    def __init__(self, mode: LlmMode = LlmMode.LIVE, path: Optional[Path] = None,
                 entries: Iterable[TranscriptEntry] = ()):
        self.mode = mode
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._entries: List[TranscriptEntry] = []
        self._index: Dict[str, TranscriptEntry] = {}
        for entry in entries:
            self._remember(entry)

    def _remember(self, entry: TranscriptEntry) -> None:
        self._entries.append(entry)
        self._index.setdefault(entry.digest, entry)

    @classmethod
    def load(cls, path: Path) -> "Transcript":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Transcript not found: {path}")
        entries = []
        with open(path, encoding="utf-8") as f:
            for number, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    entries.append(TranscriptEntry.model_validate_json(line))
                except ValidationError as e:
                    raise ConfigError(f"{path}:{number}: invalid transcript entry ({e.error_count()} errors)")
        logger.info(f"Loaded {len(entries)} transcript entries from {path}")
        return cls(LlmMode.REPLAY, path, entries)

    @classmethod
    def start_recording(cls, path: Path) -> "Transcript":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("", encoding="utf-8")
        return cls(LlmMode.RECORD, path)

    @property
    def entries(self) -> List[TranscriptEntry]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, digest: str) -> TranscriptEntry:
        entry = self._index.get(digest)
        if entry is None:
            raise ReplayMiss(digest)
        return entry

    def append(self, entry: TranscriptEntry) -> None:
        with self._lock:
            self._remember(entry)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry.model_dump(), sort_keys=True, ensure_ascii=False) + "\n")


# ---------------------------
# Gateway
# ---------------------------
class LlmGateway:
    """The only component that talks to the chat-completion provider."""

    def __init__(self, settings: LlmSettings, transcript: Optional[Transcript] = None):
        self.settings = settings
        self.transcript = transcript if transcript is not None else Transcript(LlmMode.LIVE)
        self._slots = threading.BoundedSemaphore(settings.max_in_flight)
        if self.transcript.mode != LlmMode.REPLAY:
            if not settings.model:
                raise ConfigError("LLM model not configured (set ACSCAN_LLM_MODEL or LLM_MODEL)")
            if not settings.api_key:
                raise ConfigError("LLM credential not configured (set ACSCAN_LLM_API_KEY)")

    @classmethod
    def from_settings(cls, settings: LlmSettings) -> Optional["LlmGateway"]:
        if settings.mode == LlmMode.OFF:
            return None
        if settings.mode == LlmMode.REPLAY:
            return cls(settings, Transcript.load(settings.transcript))
        if settings.mode == LlmMode.RECORD:
            return cls(settings, Transcript.start_recording(settings.transcript))
        return cls(settings)

    def complete(self, prompt: str, timeout: Optional[float] = None) -> str:
        digest = prompt_digest(prompt)
        if self.transcript.mode == LlmMode.REPLAY:
            return self.transcript.lookup(digest).response

        with self._slots:
            started = time.monotonic()
            response = self._call_provider(prompt, timeout or self.settings.timeout)
            latency = round(time.monotonic() - started, 3)
        logger.debug(f"LLM call {digest[:12]} took {latency}s ({len(prompt)} prompt chars, {len(response)} response chars)")

        if self.transcript.mode == LlmMode.RECORD:
            self.transcript.append(TranscriptEntry(digest=digest, prompt=prompt, response=response, latency=latency))
        return response

    def _call_provider(self, prompt: str, timeout: float) -> str:
        url = f"{self.settings.base_url.rstrip('/')}/chat/completions"
        headers = {
            "Authorization": f"Bearer {self.settings.api_key}",
            "Content-Type": "application/json",
        }
        data = {"model": self.settings.model, "messages": [{"role": "user", "content": prompt}]}
        if self.settings.temperature is not None:
            data["temperature"] = self.settings.temperature

        last_error: Exception = ProviderTimeout(f"no response from {url}")
        for attempt in range(1 + MAX_RETRIES):
            try:
                response = requests.post(url, json=data, headers=headers, timeout=timeout)
            except requests.Timeout as e:
                last_error = ProviderTimeout(f"provider timed out after {timeout}s: {e}")
                logger.warning(f"LLM request timed out (attempt {attempt + 1}/{1 + MAX_RETRIES})")
                continue
            except requests.RequestException as e:
                last_error = ProviderError(0, str(e))
                logger.warning(f"LLM transport error (attempt {attempt + 1}/{1 + MAX_RETRIES}): {e}")
                continue

            if response.status_code != 200:
                logger.error(f"❌ LLM provider error: {response.status_code} - {response.text[:200]}")
                raise ProviderError(response.status_code, response.text)
            try:
                return response.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError):
                raise ProviderError(response.status_code, response.text)
        raise last_error

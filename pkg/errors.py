# errors.py - exception hierarchy shared by the scanner modules
from typing import List, Optional, Sequence, Tuple


class ScanError(Exception):
    """Base class for every error raised by the scanner."""


class ConfigError(ScanError):
    pass


class RootNotFound(ScanError):
    def __init__(self, root):
        super().__init__(f"Repository root not found or unreadable: {root}")
        self.root = root


class IoError(ScanError):
    def __init__(self, path, reason: str):
        super().__init__(f"Cannot read {path}: {reason}")
        self.path = path
        self.reason = reason


class MalformedPragma(ScanError):
    def __init__(self, directive: str):
        super().__init__(f"Unparsable pragma directive: {directive!r}")
        self.directive = directive


class ParseFailure(ScanError):
    """Syntax errors reported by the Solidity grammar, as (line, column, message)."""

    def __init__(self, diagnostics: Sequence[Tuple[int, int, str]]):
        self.diagnostics: List[Tuple[int, int, str]] = list(diagnostics)
        first = self.diagnostics[0] if self.diagnostics else (0, 0, "unknown parse error")
        super().__init__(f"{first[0]}:{first[1]}: {first[2]}")


class SignatureNotFound(ScanError):
    def __init__(self, signature: str):
        super().__init__(f"No function matches signature {signature!r}")
        self.signature = signature


class MissingBinding(ScanError):
    def __init__(self, placeholder: str):
        super().__init__(f"No binding for placeholder [{placeholder}]")
        self.placeholder = placeholder


class ProviderTimeout(ScanError):
    pass


class ProviderError(ScanError):
    def __init__(self, status: int, body: str):
        super().__init__(f"Provider returned {status}: {body[:200]}")
        self.status = status
        self.body = body


class ReplayMiss(ScanError):
    def __init__(self, digest: str):
        super().__init__(f"Prompt digest {digest} not found in transcript")
        self.digest = digest


class UnparsableResponse(ScanError):
    def __init__(self, response: str, reason: str = "no usable content"):
        super().__init__(f"Unparsable LLM response ({reason})")
        self.response = response


class CompilerUnavailable(ScanError):
    def __init__(self, version: Optional[str]):
        super().__init__(f"No installed compiler satisfies {version or 'any version'}")
        self.version = version


class CompilerCrash(ScanError):
    pass


class UnsupportedConstruct(ScanError):
    def __init__(self, construct: str, span: Tuple[int, int]):
        super().__init__(f"Unsupported construct {construct} at {span[0]}-{span[1]}")
        self.construct = construct
        self.span = span


class AnalysisTimeout(ScanError):
    pass

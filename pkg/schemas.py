# schemas.py - value types exchanged between pipeline phases and surfaced in reports
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# ---------------------------
# Repository + frontend
# ---------------------------
class ContractFile(Frozen):
    path: str                                  # repository-relative, '/' separated
    source: str
    version_constraint: Optional[str] = None   # npm-style range, e.g. "^0.8.0"
    pragma_error: Optional[str] = None


class Visibility(str, Enum):
    PUBLIC = "public"
    EXTERNAL = "external"
    INTERNAL = "internal"
    PRIVATE = "private"


class FunctionKind(str, Enum):
    FUNCTION = "function"
    CONSTRUCTOR = "constructor"
    MODIFIER = "modifier"
    FALLBACK = "fallback"
    RECEIVE = "receive"


class FunctionInfo(Frozen):
    name: str
    parameter_types: Tuple[str, ...] = ()
    visibility: Visibility
    kind: FunctionKind = FunctionKind.FUNCTION
    modifiers: Tuple[str, ...] = ()
    contract_name: str
    source_span: Tuple[int, int]

    @property
    def signature(self) -> str:
        return f"{self.name}({','.join(self.parameter_types)})"

    @property
    def qualified_name(self) -> str:
        return f"{self.contract_name}.{self.signature}"

    @property
    def is_entry_point(self) -> bool:
        return self.visibility in (Visibility.PUBLIC, Visibility.EXTERNAL)


class FunctionSnippet(Frozen):
    info: FunctionInfo
    text: str
    origin: str


# ---------------------------
# Sensitivity
# ---------------------------
class SensitiveOp(str, Enum):
    SELFDESTRUCT = "Selfdestruct"
    TRANSFER = "Transfer"
    EXTERNAL_CALL = "ExternalCall"
    STATE_WRITE = "StateWrite"


class LabelProvenance(str, Enum):
    LLM = "Llm"
    HEURISTIC = "Heuristic"
    FORCED = "ForcedAllFunctions"


class SensitiveLabel(Frozen):
    is_sensitive: bool
    operations: FrozenSet[SensitiveOp] = frozenset()
    provenance: LabelProvenance

    @model_validator(mode="after")
    def _consistent(self):
        expected = bool(self.operations) or self.provenance == LabelProvenance.FORCED
        if self.is_sensitive != expected:
            raise ValueError("is_sensitive must hold iff operations are present or the label is forced")
        return self

    @classmethod
    def of(cls, operations: Iterable[SensitiveOp], provenance: LabelProvenance) -> "SensitiveLabel":
        ops = frozenset(operations)
        return cls(is_sensitive=bool(ops) or provenance == LabelProvenance.FORCED, operations=ops, provenance=provenance)

    @classmethod
    def forced(cls) -> "SensitiveLabel":
        return cls(is_sensitive=True, provenance=LabelProvenance.FORCED)

    @classmethod
    def insensitive(cls) -> "SensitiveLabel":
        return cls(is_sensitive=False, provenance=LabelProvenance.HEURISTIC)


# ---------------------------
# Compilation + completion
# ---------------------------
class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class Diagnostic(Frozen):
    severity: Severity
    message: str
    location: Optional[str] = None


class CompileResult(Frozen):
    success: bool
    diagnostics: Tuple[Diagnostic, ...] = ()
    compiler_version: str = ""
    output: str = ""     # compiler output, verbatim

    @model_validator(mode="after")
    def _no_errors_on_success(self):
        if self.success and any(d.severity == Severity.ERROR for d in self.diagnostics):
            raise ValueError("a successful compilation cannot carry error diagnostics")
        return self

    @property
    def errors(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == Severity.ERROR]


class CompletionStatus(str, Enum):
    COMPILED = "Compiled"
    COMPILE_FAILED = "CompileFailed"
    MODIFIED = "Modified"


class CompletedContract(Frozen):
    source: str
    snippet: Optional[FunctionSnippet] = None   # absent for whole files analyzed in single-contract mode
    origin: str
    iterations: int = 0
    compiler_version: Optional[str] = None
    status: CompletionStatus
    cause: Optional[str] = None
    diagnostics: Tuple[Diagnostic, ...] = ()
    unparsable_response: Optional[str] = None   # verbatim LLM text that yielded no contract


# ---------------------------
# Findings
# ---------------------------
class RiskyAction(str, Enum):
    RISKY_TRANSFER = "RiskyTransfer"
    RISKY_STATE_WRITE = "RiskyStateWrite"
    LOW_LEVEL_CALL = "LowLevelExternalCall"
    SELFDESTRUCT = "Selfdestruct"


class AcScope(str, Enum):
    SELF = "Self"
    CALLEE = "Callee"
    MODIFIER = "Modifier"


class AcLocation(Frozen):
    scope: AcScope
    index: int = Field(ge=0)
    path: Tuple[str, ...] = ()    # callee chain, or the modifier name


class AcStatus(str, Enum):
    NO_CHECK = "NoCheck"
    CHECK_AFTER_ACTION = "CheckAfterAction"


class FindingLocation(Frozen):
    index: int
    start: int
    end: int
    line: int


class Provenance(Frozen):
    path: str
    iterations: int = 0


class Finding(Frozen):
    contract_name: str
    function: str
    risky_action: RiskyAction
    location: FindingLocation
    ac_status: AcStatus
    ac_location: Optional[AcLocation] = None
    provenance: Provenance

    @model_validator(mode="after")
    def _order_sound(self):
        if self.ac_status == AcStatus.NO_CHECK and self.ac_location is not None:
            raise ValueError("NoCheck findings carry no check location")
        if self.ac_status == AcStatus.CHECK_AFTER_ACTION:
            if self.ac_location is None or self.ac_location.index <= self.location.index:
                raise ValueError("CheckAfterAction requires a check located after the action")
        return self

    def sort_key(self):
        return (self.provenance.path, self.contract_name, self.function, self.location.index, self.risky_action.value)


# ---------------------------
# Report
# ---------------------------
class FileState(str, Enum):
    SCANNED = "scanned"
    EXCLUDED = "excluded"
    PARSE_FAILED = "parse-failed"
    UNREADABLE = "unreadable"


class FileStatus(Frozen):
    path: str
    status: FileState
    pragma: Optional[str] = None
    detail: Optional[str] = None


class SnippetStatus(Frozen):
    path: str
    function: str
    status: CompletionStatus
    iterations: int = 0
    compiler_version: Optional[str] = None
    cause: Optional[str] = None


class Failure(Frozen):
    path: str
    function: Optional[str] = None
    reason: str


class Hallucination(Frozen):
    path: str
    signature: str


class UnparsableRecord(Frozen):
    path: str
    stage: str
    response: str


class Summary(Frozen):
    files_discovered: int = 0
    files_scanned: int = 0
    files_excluded: int = 0
    files_failed: int = 0
    sensitive_functions: int = 0
    vulnerable: int = 0
    clean: int = 0
    failed: int = 0
    findings: int = 0
    completions_attempted: int = 0
    compiled: int = 0
    compile_failed: int = 0
    modified: int = 0
    completion_success_rate: Optional[float] = None


class Report(Frozen):
    tool: str
    version: str
    config: Dict[str, Any]
    files: Tuple[FileStatus, ...] = ()
    snippets: Tuple[SnippetStatus, ...] = ()
    findings: Tuple[Finding, ...] = ()
    failures: Tuple[Failure, ...] = ()
    hallucinated: Tuple[Hallucination, ...] = ()
    unparsable: Tuple[UnparsableRecord, ...] = ()
    summary: Summary = Summary()
    timings: Dict[str, float] = Field(default_factory=dict)


class ExtractorMetrics(Frozen):
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    accuracy: float = 0.0

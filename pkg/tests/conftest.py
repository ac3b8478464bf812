import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from compiler_driver import CompilerDriver
from config import CompilerKind, LlmMode, LlmSettings, build_config
from llm_gateway import LlmGateway, Transcript, TranscriptEntry
from schemas import CompileResult, ContractFile, Diagnostic, Severity

FIXTURES = Path(__file__).parent / "fixtures"
SAMPLES_DIR = FIXTURES / "samples"
MICRO_DIR = FIXTURES / "micro"


def load_manifest(directory: Path) -> Dict:
    return json.loads((directory / "manifest.json").read_text(encoding="utf-8"))


def offline_config(root, **overrides):
    values = {"compiler": CompilerKind.PARSE_ONLY.value, "llm": "off", "workers": 1}
    values.update(overrides)
    return build_config(root, **values)


def contract_file(source: str, path: str = "Contract.sol", constraint: Optional[str] = None) -> ContractFile:
    return ContractFile(path=path, source=source, version_constraint=constraint)


def write_files(root: Path, files: Dict[str, str]) -> Path:
    for relative, source in files.items():
        target = root / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(source, encoding="utf-8")
    return root


def replay_gateway(tmp_path: Path, pairs: Iterable[Sequence[str]], name: str = "calls.jsonl") -> LlmGateway:
    """Gateway that answers each (prompt, response) pair from a transcript file."""
    path = tmp_path / name
    with open(path, "w", encoding="utf-8") as f:
        for prompt, response in pairs:
            f.write(TranscriptEntry.for_prompt(prompt, response).model_dump_json() + "\n")
    settings = LlmSettings(mode=LlmMode.REPLAY, transcript=path)
    return LlmGateway(settings, Transcript.load(path))


def finding_rows(findings) -> List[tuple]:
    return sorted(
        (f.provenance.path, f.contract_name, f.function, f.risky_action.value, f.ac_status.value) for f in findings
    )


def manifest_rows(manifest: Dict) -> List[tuple]:
    return sorted(
        (row["path"], row["contract"], row["function"], row["risky_action"], row["ac_status"])
        for row in manifest["findings"]
    )


class ScriptedDriver(CompilerDriver):
    """Compiler stand-in that returns queued results in order, then succeeds."""

    kind = CompilerKind.PARSE_ONLY

    def __init__(self, results: Iterable[CompileResult] = ()):
        self.results = list(results)
        self.sources: List[str] = []

    def compile(self, source: str, constraint: Optional[str] = None) -> CompileResult:
        self.sources.append(source)
        if self.results:
            return self.results.pop(0)
        return CompileResult(success=True, compiler_version="0.8.19")


def compile_error(message: str, location: str = "Contract.sol:3:5") -> CompileResult:
    diagnostic = Diagnostic(severity=Severity.ERROR, message=message, location=location)
    return CompileResult(success=False, diagnostics=(diagnostic,), compiler_version="0.8.19", output=message)

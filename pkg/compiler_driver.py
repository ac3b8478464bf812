# compiler_driver.py - versioned solc binaries and the offline parse-only driver
import logging
import os
import re
import subprocess
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from semantic_version import NpmSpec, Version

from config import CompilerKind, ScanConfig
from errors import CompilerCrash, CompilerUnavailable, MalformedPragma, ParseFailure
from repo_scanner import extract_pragma
from schemas import CompileResult, Diagnostic, Severity
from solidity_frontend import parse

logger = logging.getLogger(__name__)

SOURCE_NAME = "Contract.sol"
COMPILE_TIMEOUT = 60.0

_BINARY_RE = re.compile(r"^solc-v?(\d+\.\d+\.\d+)(?:\.exe)?$")
# 0.4.x style: "Contract.sol:3:5: ParserError: Expected ';' but got '}'"
_LEGACY_RE = re.compile(r"^(?P<loc>\S+?:\d+:\d+):\s*(?P<kind>\w*(?:Error|Warning)|Info|Error|Warning):\s*(?P<msg>.*)$")
# 0.5+ style: "ParserError: Expected ';' but got '}'" followed by " --> Contract.sol:3:5:"
_HEADER_RE = re.compile(r"^(?P<kind>\w*(?:Error|Warning)|Info|Error|Warning)(?: \(\d+\))?:\s*(?P<msg>.*)$")
_ARROW_RE = re.compile(r"^\s*-->\s*(?P<loc>.+?):?\s*$")


def _severity(kind: str) -> Severity:
    if kind.endswith("Warning"):
        return Severity.WARNING
    if kind == "Info":
        return Severity.INFO
    return Severity.ERROR


def parse_diagnostics(output: str) -> List[Diagnostic]:
    """Diagnostics in solc's human-readable output, in emission order."""
    diagnostics: List[Diagnostic] = []
    lines = output.splitlines()
    for position, line in enumerate(lines):
        legacy = _LEGACY_RE.match(line)
        if legacy:
            diagnostics.append(Diagnostic(
                severity=_severity(legacy.group("kind")),
                message=f"{legacy.group('kind')}: {legacy.group('msg')}",
                location=legacy.group("loc"),
            ))
            continue
        header = _HEADER_RE.match(line)
        if not header:
            continue
        location = None
        for following in lines[position + 1:position + 3]:
            arrow = _ARROW_RE.match(following)
            if arrow:
                location = arrow.group("loc")
                break
        diagnostics.append(Diagnostic(
            severity=_severity(header.group("kind")),
            message=f"{header.group('kind')}: {header.group('msg')}",
            location=location,
        ))
    return diagnostics


def constraint_for(file_constraint: Optional[str], candidate: str) -> Optional[str]:
    """File pragma first, then whatever pragma the candidate declares, else None (newest installed)."""
    if file_constraint:
        return file_constraint
    try:
        spec = extract_pragma(candidate)
    except MalformedPragma:
        return None
    return str(spec) if spec else None


class CompilerDriver:
    kind: CompilerKind

    def compile(self, source: str, constraint: Optional[str] = None) -> CompileResult:
        raise NotImplementedError


# ---------------------------
# solc binaries
# ---------------------------
class SolcDriver(CompilerDriver):
    """Runs the installed solc binary matching a version range on a temporary source file."""

    kind = CompilerKind.SOLC

    def __init__(self, directory: Path, timeout: float = COMPILE_TIMEOUT):
        self.directory = Path(directory).expanduser()
        self.timeout = timeout
        self._installed: Optional[Dict[Version, Path]] = None

    def installed(self) -> Dict[Version, Path]:
        if self._installed is None:
            found: Dict[Version, Path] = {}
            if self.directory.is_dir():
                for entry in sorted(self.directory.iterdir()):
                    match = _BINARY_RE.match(entry.name)
                    if not match:
                        continue
                    binary = entry / "solc" if entry.is_dir() else entry
                    if binary.is_file() and os.access(binary, os.X_OK):
                        found[Version(match.group(1))] = binary
            logger.info(f"Found {len(found)} solc binaries in {self.directory}")
            self._installed = found
        return self._installed

    def select(self, constraint: Optional[str]) -> Tuple[Version, Path]:
        installed = self.installed()
        if constraint:
            try:
                version = NpmSpec(constraint).select(installed.keys())
            except ValueError:
                version = None
        else:
            version = max(installed) if installed else None
        if version is None:
            raise CompilerUnavailable(constraint)
        return version, installed[version]

    def compile(self, source: str, constraint: Optional[str] = None) -> CompileResult:
        version, binary = self.select(constraint)
        with tempfile.TemporaryDirectory(prefix="acscan-") as tmp:
            path = Path(tmp) / SOURCE_NAME
            path.write_text(source, encoding="utf-8")
            try:
                proc = subprocess.run(
                    [str(binary), SOURCE_NAME], cwd=tmp, capture_output=True, text=True, timeout=self.timeout,
                )
            except subprocess.TimeoutExpired:
                raise CompilerCrash(f"solc {version} did not finish within {self.timeout}s")
            except OSError as e:
                raise CompilerCrash(f"cannot run {binary}: {e}")
        if proc.returncode < 0:
            raise CompilerCrash(f"solc {version} killed by signal {-proc.returncode}")

        output = (proc.stderr or "") + (proc.stdout or "")
        diagnostics = parse_diagnostics(output)
        has_errors = any(d.severity == Severity.ERROR for d in diagnostics)
        if proc.returncode != 0 and not has_errors:
            diagnostics.append(Diagnostic(severity=Severity.ERROR, message=output.strip() or f"exit status {proc.returncode}"))
            has_errors = True
        logger.debug(f"solc {version}: exit {proc.returncode}, {len(diagnostics)} diagnostics")
        return CompileResult(
            success=proc.returncode == 0 and not has_errors,
            diagnostics=tuple(diagnostics),
            compiler_version=str(version),
            output=output,
        )


# ---------------------------
# Offline driver
# ---------------------------
class ParseOnlyDriver(CompilerDriver):
    """Accepts any source the frontend parses that declares at least one contract."""

    kind = CompilerKind.PARSE_ONLY
    VERSION = "parse-only"

    def compile(self, source: str, constraint: Optional[str] = None) -> CompileResult:
        try:
            tree = parse(source)
        except ParseFailure as e:
            diagnostics = tuple(
                Diagnostic(severity=Severity.ERROR, message=f"ParserError: {message}", location=f"{SOURCE_NAME}:{line}:{column}")
                for line, column, message in e.diagnostics
            )
            return CompileResult(success=False, diagnostics=diagnostics, compiler_version=self.VERSION,
                                 output="\n".join(f"{d.location}: {d.message}" for d in diagnostics))
        if not tree.contracts():
            diagnostic = Diagnostic(severity=Severity.ERROR, message="Error: source declares no contract")
            return CompileResult(success=False, diagnostics=(diagnostic,), compiler_version=self.VERSION,
                                 output=diagnostic.message)
        return CompileResult(success=True, compiler_version=self.VERSION)


def make_driver(config: ScanConfig) -> CompilerDriver:
    if config.compiler == CompilerKind.PARSE_ONLY:
        return ParseOnlyDriver()
    return SolcDriver(config.compiler_dir)

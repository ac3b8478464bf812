# report.py - canonical JSON, SARIF 2.1.0 and plain-text renderings of a Report
import json
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from errors import IoError
from schemas import AcStatus, Finding, Report, RiskyAction

logger = logging.getLogger(__name__)

SARIF_VERSION = "2.1.0"
SARIF_SCHEMA = "https://json.schemastore.org/sarif-2.1.0.json"

# Exit codes
EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2


class OutputFormat(str, Enum):
    JSON = "json"
    SARIF = "sarif"
    TEXT = "text"


RULES: Dict[RiskyAction, Dict[str, str]] = {
    RiskyAction.RISKY_TRANSFER: {
        "id": "AC001",
        "name": "UnguardedTransfer",
        "text": "Cryptocurrency transfer without access control and without accounting state update",
    },
    RiskyAction.RISKY_STATE_WRITE: {
        "id": "AC002",
        "name": "UnguardedStateWrite",
        "text": "State variable modification without access control and without a matching transfer",
    },
    RiskyAction.LOW_LEVEL_CALL: {
        "id": "AC003",
        "name": "UnguardedLowLevelCall",
        "text": "Low-level external call reachable without access control",
    },
    RiskyAction.SELFDESTRUCT: {
        "id": "AC004",
        "name": "UnguardedSelfdestruct",
        "text": "selfdestruct reachable without access control",
    },
}


def canonical_json(report: Report) -> str:
    """Sorted keys, sorted findings, no wall-clock timings: identical runs give identical bytes."""
    data = report.model_dump(mode="json", exclude={"timings"})
    return json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _message(finding: Finding) -> str:
    where = f"{finding.contract_name}.{finding.function}"
    if finding.ac_status == AcStatus.NO_CHECK:
        return f"{where}: {finding.risky_action.value} with no msg.sender check"
    location = finding.ac_location
    return (f"{where}: {finding.risky_action.value} at instruction {finding.location.index} precedes the "
            f"msg.sender check at instruction {location.index} ({location.scope.value})")


def to_sarif(report: Report) -> Dict[str, Any]:
    rules = [
        {
            "id": rule["id"],
            "name": rule["name"],
            "shortDescription": {"text": rule["text"]},
            "properties": {"riskyAction": action.value},
        }
        for action, rule in RULES.items()
    ]
    results = []
    for finding in report.findings:
        rule = RULES[finding.risky_action]
        results.append({
            "ruleId": rule["id"],
            "ruleIndex": list(RULES).index(finding.risky_action),
            "level": "error" if finding.risky_action == RiskyAction.SELFDESTRUCT else "warning",
            "message": {"text": _message(finding)},
            "locations": [{
                "physicalLocation": {
                    "artifactLocation": {"uri": finding.provenance.path},
                    "region": {
                        "startLine": finding.location.line,
                        "charOffset": finding.location.start,
                        "charLength": max(0, finding.location.end - finding.location.start),
                    },
                },
                "logicalLocations": [{
                    "fullyQualifiedName": f"{finding.contract_name}.{finding.function}",
                    "kind": "function",
                }],
            }],
            "properties": {
                "acStatus": finding.ac_status.value,
                "completionIterations": finding.provenance.iterations,
            },
        })
    return {
        "$schema": SARIF_SCHEMA,
        "version": SARIF_VERSION,
        "runs": [{
            "tool": {"driver": {"name": report.tool, "version": report.version, "rules": rules}},
            "results": results,
            "columnKind": "unicodeCodePoints",
        }],
    }


def to_text(report: Report) -> str:
    rows = [("FILE", "FUNCTION", "RISKY ACTION", "STATUS")]
    for f in report.findings:
        status = f.ac_status.value
        if f.ac_location is not None:
            status += f" ({f.ac_location.scope.value} @ {f.ac_location.index})"
        rows.append((f"{f.provenance.path}:{f.location.line}", f"{f.contract_name}.{f.function}", f.risky_action.value, status))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]

    s = report.summary
    lines += [
        "",
        f"Files: {s.files_scanned} scanned, {s.files_excluded} excluded, {s.files_failed} failed",
        f"Sensitive functions: {s.sensitive_functions} ({s.vulnerable} vulnerable, {s.clean} clean, {s.failed} failed)",
        f"Completions: {s.compiled}/{s.completions_attempted} compiled, {s.modified} modified, {s.compile_failed} failed",
        f"Findings: {s.findings}",
    ]
    for failure in report.failures:
        lines.append(f"  failure: {failure.path} {failure.function or ''} {failure.reason}".rstrip())
    for item in report.hallucinated:
        lines.append(f"  hallucinated: {item.path} {item.signature}")
    if report.timings:
        lines.append("Timings: " + ", ".join(f"{phase} {seconds:.2f}s" for phase, seconds in report.timings.items()))
    return "\n".join(lines) + "\n"


def render(report: Report, fmt: OutputFormat = OutputFormat.JSON) -> str:
    fmt = OutputFormat(fmt)
    if fmt == OutputFormat.SARIF:
        return json.dumps(to_sarif(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if fmt == OutputFormat.TEXT:
        return to_text(report)
    return canonical_json(report)


def exit_status(report: Report) -> int:
    return EXIT_FINDINGS if report.findings else EXIT_CLEAN


def emit_report(report: Report, fmt: OutputFormat = OutputFormat.JSON, sink: Optional[Path] = None) -> int:
    """Write the rendered report to sink (stdout when None) and return the process exit status."""
    content = render(report, fmt)
    if sink is None:
        sys.stdout.write(content)
    else:
        try:
            Path(sink).parent.mkdir(parents=True, exist_ok=True)
            Path(sink).write_text(content, encoding="utf-8")
        except OSError as e:
            raise IoError(sink, str(e))
        logger.info(f"✅ Report saved to {sink}")
    return exit_status(report)


def load_report(text: str) -> Report:
    return Report.model_validate_json(text)


def findings_table(report: Report) -> List[Dict[str, Any]]:
    """Flat rows used by the service's findings store."""
    return [
        {
            "path": f.provenance.path,
            "contract": f.contract_name,
            "function": f.function,
            "risky_action": f.risky_action.value,
            "ac_status": f.ac_status.value,
            "line": f.location.line,
        }
        for f in report.findings
    ]

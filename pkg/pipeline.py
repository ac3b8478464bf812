# pipeline.py - scan -> extract -> complete -> build -> detect, one worker per contract file
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from compiler_driver import CompilerDriver, make_driver
from completion_engine import compile_whole_file, complete_until_compilable
from config import TOOL_NAME, TOOL_VERSION, LlmMode, ScanConfig, ScanMode
from detection_engine import Fcg, TraversalStats, build_fcg, detect, locate_analyzed_function
from errors import AnalysisTimeout, ParseFailure, ScanError
from llm_gateway import LlmGateway
from repo_scanner import scan_repository
from schemas import (
    CompletedContract, CompletionStatus, ContractFile, Failure, FileState, FileStatus, Finding, FindingLocation,
    FunctionInfo, FunctionSnippet, Hallucination, Report, SensitiveLabel, SnippetStatus, Summary, UnparsableRecord,
)
from sensitive_extractor import FileLabels, forced_labels, label_file
from solidity_frontend import SyntaxTree, parse
from utils import Deadline, line_of

logger = logging.getLogger(__name__)

_UNSAFE_NAME_RE = re.compile(r"[^A-Za-z0-9_.-]+")


@dataclass
class FileOutcome:
    status: FileStatus
    snippets: List[SnippetStatus] = field(default_factory=list)
    findings: List[Finding] = field(default_factory=list)
    failures: List[Failure] = field(default_factory=list)
    hallucinated: List[Hallucination] = field(default_factory=list)
    unparsable: List[UnparsableRecord] = field(default_factory=list)
    sensitive: int = 0
    vulnerable: int = 0
    clean: int = 0
    failed: int = 0


class Pipeline:
    """Runs every phase for a scan; one instance per run, shared read-only by the workers."""

    def __init__(self, config: ScanConfig, gateway: Optional[LlmGateway] = None,
                 driver: Optional[CompilerDriver] = None):
        self.config = config
        self.gateway = gateway
        self.driver = driver or make_driver(config)

    # ---------------------------
    # per file
    # ---------------------------
    def process_file(self, file: ContractFile) -> FileOutcome:
        outcome = FileOutcome(FileStatus(path=file.path, status=FileState.SCANNED,
                                         pragma=file.version_constraint, detail=file.pragma_error))
        try:
            tree = parse(file.source)
        except ParseFailure as e:
            logger.warning(f"❌ {file.path}: parse failed at {e}")
            outcome.status = FileStatus(path=file.path, status=FileState.PARSE_FAILED,
                                        pragma=file.version_constraint, detail=str(e))
            return outcome

        if self.config.mode == ScanMode.SINGLE_CONTRACT:
            completed = compile_whole_file(file, self.driver)
            if completed.status == CompletionStatus.COMPILED:
                self._analyze_whole_file(file, tree, completed, outcome)
                return outcome
            logger.info(f"{file.path} does not compile on its own; analyzing function snippets instead")

        labels = label_file(file, tree, self.gateway, self.config.use_heuristic, self.config.transfer_patterns)
        self._record_labels(file, labels, outcome)
        for info, label in labels.sensitive():
            self._analyze_snippet(file, info, label, outcome)
        return outcome

    def _record_labels(self, file: ContractFile, labels: FileLabels, outcome: FileOutcome) -> None:
        outcome.hallucinated.extend(Hallucination(path=file.path, signature=s) for s in labels.hallucinated)
        if labels.unparsable is not None:
            outcome.unparsable.append(UnparsableRecord(path=file.path, stage="sensitive-location", response=labels.unparsable))
        if labels.llm_error:
            outcome.failures.append(Failure(path=file.path, reason=f"sensitive-function query failed: {labels.llm_error}"))

    def _analyze_whole_file(self, file: ContractFile, tree: SyntaxTree, completed: CompletedContract,
                            outcome: FileOutcome) -> None:
        labels = forced_labels(tree)
        sensitive = [info for info, label in labels.sensitive()]
        outcome.sensitive += len(sensitive)
        outcome.snippets.append(SnippetStatus(path=file.path, function="*", status=completed.status,
                                              compiler_version=completed.compiler_version))
        try:
            findings = self._detect(completed, tree, {k: v[1] for k, v in labels.labels.items()})
        except AnalysisTimeout as e:
            logger.warning(f"❌ {file.path}: {e}")
            outcome.failures.append(Failure(path=file.path, reason=str(e)))
            outcome.failed += len(sensitive)
            return
        flagged = {(f.contract_name, f.function) for f in findings}
        for info in sensitive:
            if (info.contract_name, info.signature) in flagged:
                outcome.vulnerable += 1
            else:
                outcome.clean += 1
        outcome.findings.extend(findings)

    def _analyze_snippet(self, file: ContractFile, info: FunctionInfo, label: SensitiveLabel,
                         outcome: FileOutcome) -> None:
        outcome.sensitive += 1
        start, end = info.source_span
        snippet = FunctionSnippet(info=info, text=file.source[start:end], origin=file.path)
        deadline = Deadline(self.config.time_limit)

        completed = complete_until_compilable(snippet, file, self.driver, self.gateway,
                                              self.config.reflection_max_iters, deadline)
        outcome.snippets.append(SnippetStatus(
            path=file.path, function=info.qualified_name, status=completed.status, iterations=completed.iterations,
            compiler_version=completed.compiler_version, cause=completed.cause,
        ))
        if completed.unparsable_response is not None:
            outcome.unparsable.append(UnparsableRecord(path=file.path, stage="completion", response=completed.unparsable_response))
        if completed.status != CompletionStatus.COMPILED:
            outcome.failed += 1
            outcome.failures.append(Failure(path=file.path, function=info.qualified_name,
                                            reason=f"{completed.status.value}: {completed.cause or 'no detail'}"))
            return

        try:
            tree = parse(completed.source)
            target = locate_analyzed_function(tree, snippet)
            if target is None:
                raise ScanError(f"{info.signature} not found in completed contract")
            findings = self._detect(completed, tree, {target.qualified_name: label}, deadline,
                                    only=[target.qualified_name])
        except (ScanError, KeyError) as e:
            logger.warning(f"❌ {file.path}: analysis of {info.qualified_name} failed: {e}")
            outcome.failed += 1
            outcome.failures.append(Failure(path=file.path, function=info.qualified_name, reason=str(e)))
            return

        findings = [_to_origin(f, tree, target, snippet, file) for f in findings]
        if findings:
            outcome.vulnerable += 1
        else:
            outcome.clean += 1
        outcome.findings.extend(findings)

    def _detect(self, completed: CompletedContract, tree: SyntaxTree, labels: Dict[str, SensitiveLabel],
                deadline: Optional[Deadline] = None, only: Optional[List[str]] = None) -> List[Finding]:
        deadline = deadline or Deadline(self.config.time_limit)
        fcg = build_fcg(completed, labels, tree, self.config.transfer_patterns)
        if self.config.dump_cfg_dir:
            self._dump_cfgs(completed, fcg)
        stats = TraversalStats()
        findings = detect(completed, fcg, self.config.max_call_depth, self.config.include_internal_reachable,
                          deadline, stats, only)
        logger.debug(f"{completed.origin}: deepest call chain visited {stats.max_depth}, {stats.blocks_visited} blocks")
        return findings

    def _dump_cfgs(self, completed: CompletedContract, fcg: Fcg) -> None:
        directory = Path(self.config.dump_cfg_dir)
        directory.mkdir(parents=True, exist_ok=True)
        prefix = _UNSAFE_NAME_RE.sub("_", completed.origin)
        for node in fcg.nodes():
            path = directory / f"{prefix}__{_UNSAFE_NAME_RE.sub('_', node.key)}.dot"
            path.write_text(node.cfg.to_dot(node.key), encoding="utf-8")

    # ---------------------------
    # whole run
    # ---------------------------
    def _safe_process(self, file: ContractFile) -> FileOutcome:
        try:
            return self.process_file(file)
        except Exception as e:
            logger.exception(f"❌ {file.path}: unexpected error")
            outcome = FileOutcome(FileStatus(path=file.path, status=FileState.SCANNED, pragma=file.version_constraint))
            outcome.failures.append(Failure(path=file.path, reason=f"{type(e).__name__}: {e}"))
            return outcome

    def run(self) -> Report:
        started = time.monotonic()
        scan = scan_repository(self.config)
        scanned_at = time.monotonic()

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            outcomes = list(pool.map(self._safe_process, scan.files))
        analyzed_at = time.monotonic()

        files = [o.status for o in outcomes]
        files += [FileStatus(path=p, status=FileState.EXCLUDED) for p in scan.excluded]
        files += [FileStatus(path=p, status=FileState.UNREADABLE, detail=reason) for p, reason in scan.unreadable]

        snippets = [s for o in outcomes for s in o.snippets]
        attempted = [s for s in snippets if s.function != "*"]
        compiled = sum(1 for s in attempted if s.status == CompletionStatus.COMPILED)
        findings = sorted((f for o in outcomes for f in o.findings), key=Finding.sort_key)
        summary = Summary(
            files_discovered=len(files),
            files_scanned=sum(1 for f in files if f.status == FileState.SCANNED),
            files_excluded=len(scan.excluded),
            files_failed=sum(1 for f in files if f.status in (FileState.PARSE_FAILED, FileState.UNREADABLE)),
            sensitive_functions=sum(o.sensitive for o in outcomes),
            vulnerable=sum(o.vulnerable for o in outcomes),
            clean=sum(o.clean for o in outcomes),
            failed=sum(o.failed for o in outcomes),
            findings=len(findings),
            completions_attempted=len(attempted),
            compiled=compiled,
            compile_failed=sum(1 for s in attempted if s.status == CompletionStatus.COMPILE_FAILED),
            modified=sum(1 for s in attempted if s.status == CompletionStatus.MODIFIED),
            completion_success_rate=round(compiled / len(attempted), 4) if attempted else None,
        )
        report = Report(
            tool=TOOL_NAME,
            version=TOOL_VERSION,
            config=self.config.report_settings(),
            files=tuple(sorted(files, key=lambda f: f.path)),
            snippets=tuple(sorted(snippets, key=lambda s: (s.path, s.function))),
            findings=tuple(findings),
            failures=tuple(sorted((x for o in outcomes for x in o.failures), key=lambda x: (x.path, x.function or "", x.reason))),
            hallucinated=tuple(sorted((h for o in outcomes for h in o.hallucinated), key=lambda h: (h.path, h.signature))),
            unparsable=tuple(sorted((u for o in outcomes for u in o.unparsable), key=lambda u: (u.path, u.stage, u.response))),
            summary=summary,
            timings={
                "scan": round(scanned_at - started, 3),
                "analysis": round(analyzed_at - scanned_at, 3),
                "total": round(time.monotonic() - started, 3),
            },
        )
        logger.info(
            f"✅ Scan finished: {summary.files_scanned} files, {summary.sensitive_functions} sensitive functions, "
            f"{summary.findings} findings ({summary.failed} failed)"
        )
        return report


def _to_origin(finding: Finding, tree: SyntaxTree, target: FunctionInfo, snippet: FunctionSnippet,
               file: ContractFile) -> Finding:
    """Re-anchor a finding from the completed contract onto the original repository file."""
    completed_start, completed_end = target.source_span
    origin_start, origin_end = snippet.info.source_span
    if tree.source[completed_start:completed_end] == snippet.text:
        start = origin_start + finding.location.start - completed_start
        end = origin_start + finding.location.end - completed_start
    else:
        start, end = origin_start, origin_end
    return finding.model_copy(update={
        "contract_name": snippet.info.contract_name,
        "function": snippet.info.signature,
        "location": FindingLocation(index=finding.location.index, start=start, end=end, line=line_of(file.source, start)),
    })


def run_pipeline(config: ScanConfig, gateway: Optional[LlmGateway] = None,
                 driver: Optional[CompilerDriver] = None) -> Report:
    """ConfigError and RootNotFound abort; everything else lands in the report."""
    if gateway is None and config.llm.mode != LlmMode.OFF:
        gateway = LlmGateway.from_settings(config.llm)
    return Pipeline(config, gateway, driver).run()

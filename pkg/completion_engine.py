# completion_engine.py - snippet completion with compile / self-reflection rounds
import logging
import re
from typing import Optional, Sequence

from compiler_driver import CompilerDriver, constraint_for
from errors import AnalysisTimeout, CompilerCrash, CompilerUnavailable, ProviderError, ProviderTimeout, ReplayMiss, UnparsableResponse
from llm_gateway import REFLECTION_FIX, SNIPPET_COMPLETION, LlmGateway, render_prompt
from schemas import CompileResult, CompletedContract, CompletionStatus, ContractFile, Diagnostic, FunctionSnippet
from solidity_frontend import contains_unmodified
from utils import Deadline

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 5

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.S)
_CONTRACT_RE = re.compile(r"\b(contract|library|interface)\s+[A-Za-z_$]")


def extract_code_block(response: str) -> str:
    """First fenced block of the response, else the whole response; must declare a contract."""
    match = _FENCE_RE.search(response)
    candidate = (match.group(1) if match else response).strip()
    if not candidate:
        raise UnparsableResponse(response, "empty response")
    if not _CONTRACT_RE.search(candidate):
        raise UnparsableResponse(response, "no contract declaration")
    return candidate + "\n"


def format_diagnostics(diagnostics: Sequence[Diagnostic]) -> str:
    return "\n".join(f"{d.location}: {d.message}" if d.location else d.message for d in diagnostics)


def complete_snippet(snippet: FunctionSnippet, gateway: LlmGateway) -> str:
    if not snippet.text.strip():
        raise ValueError("cannot complete an empty snippet")
    prompt = render_prompt(SNIPPET_COMPLETION, {"CODE": snippet.text})
    return extract_code_block(gateway.complete(prompt))


def reflect_and_fix(contract: str, errors: Sequence[Diagnostic], name: str, gateway: LlmGateway) -> str:
    if not errors:
        raise ValueError("reflection needs at least one diagnostic")
    prompt = render_prompt(REFLECTION_FIX, {"CONTRACT": contract, "ERROR MESSAGE": format_diagnostics(errors), "NAME": name})
    return extract_code_block(gateway.complete(prompt))


def _result(snippet: Optional[FunctionSnippet], origin: str, source: str, iterations: int,
            status: CompletionStatus, compiled: Optional[CompileResult] = None, **extra) -> CompletedContract:
    return CompletedContract(
        source=source,
        snippet=snippet,
        origin=origin,
        iterations=iterations,
        compiler_version=compiled.compiler_version if compiled else None,
        status=status,
        diagnostics=compiled.diagnostics if compiled and not compiled.success else (),
        **extra,
    )


def complete_until_compilable(snippet: FunctionSnippet, file: ContractFile, driver: CompilerDriver,
                              gateway: Optional[LlmGateway] = None, max_iters: int = DEFAULT_MAX_ITERS,
                              deadline: Optional[Deadline] = None) -> CompletedContract:
    """Compile, reflect on the errors, repeat; Compiled only if the snippet survived byte-for-byte (modulo layout)."""
    deadline = deadline or Deadline.unlimited()
    name = snippet.info.name
    iterations = 0
    source = file.source
    compiled: Optional[CompileResult] = None
    try:
        # without a gateway the original file is the only candidate
        source = complete_snippet(snippet, gateway) if gateway is not None else file.source
        while True:
            deadline.check(f"completion of {name}")
            compiled = driver.compile(source, constraint_for(file.version_constraint, source))
            if compiled.success:
                if not contains_unmodified(source, snippet):
                    logger.warning(f"❌ {file.path}: completion of {name} altered the original function")
                    return _result(snippet, file.path, source, iterations, CompletionStatus.MODIFIED, compiled,
                                   cause="original function was modified")
                logger.info(f"✅ {file.path}: {name} compiled after {iterations} reflection rounds")
                return _result(snippet, file.path, source, iterations, CompletionStatus.COMPILED, compiled)
            if gateway is None or iterations >= max_iters:
                return _result(snippet, file.path, source, iterations, CompletionStatus.COMPILE_FAILED, compiled,
                               cause=f"still failing after {iterations} reflection rounds")
            source = reflect_and_fix(source, compiled.errors or compiled.diagnostics, name, gateway)
            iterations += 1
    except UnparsableResponse as e:
        return _result(snippet, file.path, source, iterations, CompletionStatus.COMPILE_FAILED, compiled,
                       cause=str(e), unparsable_response=e.response)
    except (ProviderError, ProviderTimeout, ReplayMiss, CompilerUnavailable, CompilerCrash, AnalysisTimeout) as e:
        logger.warning(f"❌ {file.path}: completion of {name} stopped: {e}")
        return _result(snippet, file.path, source, iterations, CompletionStatus.COMPILE_FAILED, compiled, cause=str(e))


def compile_whole_file(file: ContractFile, driver: CompilerDriver) -> CompletedContract:
    """Single-contract mode: the file itself is the completed contract."""
    try:
        compiled = driver.compile(file.source, constraint_for(file.version_constraint, file.source))
    except (CompilerUnavailable, CompilerCrash) as e:
        return _result(None, file.path, file.source, 0, CompletionStatus.COMPILE_FAILED, cause=str(e))
    status = CompletionStatus.COMPILED if compiled.success else CompletionStatus.COMPILE_FAILED
    return _result(None, file.path, file.source, 0, status, compiled,
                   cause=None if compiled.success else "file does not compile on its own")

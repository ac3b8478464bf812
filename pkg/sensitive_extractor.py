# sensitive_extractor.py - which functions are sensitive: LLM answers, syntactic heuristic, validation
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from errors import ParseFailure, ProviderError, ProviderTimeout, ReplayMiss, UnparsableResponse
from ir_builder import ContractScope, InstrKind, lower_body
from llm_gateway import SENSITIVE_LOCATION, LlmGateway, render_prompt
from schemas import (
    ContractFile, ExtractorMetrics, FunctionInfo, FunctionKind, LabelProvenance, SensitiveLabel, SensitiveOp,
)
from solidity_frontend import SyntaxTree, function_nodes, has_body, match_signature, normalize, parse

logger = logging.getLogger(__name__)

ALL_OPERATIONS: FrozenSet[SensitiveOp] = frozenset(SensitiveOp)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.S)
_ARRAY_RE = re.compile(r"\[.*\]", re.S)
_NONE_RE = re.compile(r"^\W*(none|n/a|no sensitive functions?\b.*|\[\s*\])\W*$", re.I | re.S)
_SIGNATURE_RE = re.compile(r"(?<![\w$.])((?:[A-Za-z_$][\w$]*\.)?[A-Za-z_$][\w$]*\s*\((?:[^()]|\([^()]*\))*\))")
_SELFDESTRUCT_RE = re.compile(r"\b(selfdestruct|suicide)\s*\(")
_OP_ALIASES = {
    "selfdestruct": SensitiveOp.SELFDESTRUCT,
    "suicide": SensitiveOp.SELFDESTRUCT,
    "transfer": SensitiveOp.TRANSFER,
    "externalcall": SensitiveOp.EXTERNAL_CALL,
    "statewrite": SensitiveOp.STATE_WRITE,
    "statevariablemodification": SensitiveOp.STATE_WRITE,
}


@dataclass(frozen=True)
class LlmCandidate:
    signature: str
    operations: FrozenSet[SensitiveOp] = frozenset()


@dataclass
class FileLabels:
    """Sensitive functions of one file, keyed by qualified name, in source order."""

    labels: Dict[str, Tuple[FunctionInfo, SensitiveLabel]] = field(default_factory=dict)
    hallucinated: List[str] = field(default_factory=list)
    unparsable: Optional[str] = None
    llm_error: Optional[str] = None

    def sensitive(self) -> List[Tuple[FunctionInfo, SensitiveLabel]]:
        return [pair for pair in self.labels.values() if pair[1].is_sensitive]


# ---------------------------
# LLM answers
# ---------------------------
def _operation(value) -> Optional[SensitiveOp]:
    key = re.sub(r"[^a-z]", "", str(value).lower())
    return _OP_ALIASES.get(key)


def parse_sensitive_response(response: str) -> List[LlmCandidate]:
    """JSON array of signatures (or {signature, operations} objects); signature lines as a fallback."""
    fenced = _FENCE_RE.search(response)
    text = (fenced.group(1) if fenced else response).strip()
    if _NONE_RE.match(text):
        return []

    array = _ARRAY_RE.search(text)
    if array:
        try:
            items = json.loads(array.group(0))
        except ValueError:
            items = None
        if isinstance(items, list):
            candidates = []
            for item in items:
                if isinstance(item, str) and item.strip():
                    candidates.append(LlmCandidate(item.strip()))
                elif isinstance(item, dict):
                    signature = item.get("signature") or item.get("function")
                    if not signature:
                        continue
                    ops = {_operation(op) for op in item.get("operations") or []}
                    candidates.append(LlmCandidate(str(signature).strip(), frozenset(op for op in ops if op)))
            return candidates

    signatures = list(dict.fromkeys(m.strip() for m in _SIGNATURE_RE.findall(text)))
    if not signatures:
        raise UnparsableResponse(response, "no signature list")
    return [LlmCandidate(s) for s in signatures]


def ask_llm(file: ContractFile, gateway: LlmGateway) -> List[LlmCandidate]:
    prompt = render_prompt(SENSITIVE_LOCATION, {"CODE": file.source})
    return parse_sensitive_response(gateway.complete(prompt))


def locate_sensitive_llm(file: ContractFile, gateway: LlmGateway) -> List[str]:
    return [c.signature for c in ask_llm(file, gateway)]


# ---------------------------
# Heuristic
# ---------------------------
def operations_of(tree: SyntaxTree, scope: ContractScope, node: Dict) -> FrozenSet[SensitiveOp]:
    ops = set()
    for instr in lower_body(node, scope):
        if instr.kind == InstrKind.SOLIDITY_CALL and instr.name == "selfdestruct":
            ops.add(SensitiveOp.SELFDESTRUCT)
        elif instr.kind == InstrKind.TRANSFER:
            ops.add(SensitiveOp.TRANSFER)
        elif instr.kind == InstrKind.LOW_LEVEL_CALL:
            ops.add(SensitiveOp.EXTERNAL_CALL)
        elif instr.kind == InstrKind.HIGH_LEVEL_CALL and instr.callee.receiver != "this":
            ops.add(SensitiveOp.EXTERNAL_CALL)
        elif instr.kind == InstrKind.STATE_WRITE:
            ops.add(SensitiveOp.STATE_WRITE)
    # also catches selfdestruct inside assembly or dead code
    if _SELFDESTRUCT_RE.search(normalize(tree.text(node.get("body"))).text):
        ops.add(SensitiveOp.SELFDESTRUCT)
    return frozenset(ops)


def locate_sensitive_heuristic(tree: SyntaxTree, transfer_patterns: Sequence[str] = ()) -> List[Tuple[str, SensitiveLabel]]:
    scopes: Dict[str, ContractScope] = {}
    result = []
    for info, contract, node in function_nodes(tree):
        if info.kind == FunctionKind.MODIFIER or not has_body(node):
            continue
        if info.contract_name not in scopes:
            scopes[info.contract_name] = ContractScope.for_contract(tree, info.contract_name, transfer_patterns)
        ops = operations_of(tree, scopes[info.contract_name], node)
        if ops:
            result.append((info.qualified_name, SensitiveLabel.of(ops, LabelProvenance.HEURISTIC)))
    return result


def validate_signatures(candidates: Iterable[str], tree: SyntaxTree) -> Tuple[List[FunctionInfo], List[str]]:
    functions = [info for info, _, _ in function_nodes(tree) if info.kind != FunctionKind.MODIFIER]
    validated: List[FunctionInfo] = []
    hallucinated: List[str] = []
    for candidate in candidates:
        info = match_signature(candidate, functions)
        if info is None:
            hallucinated.append(candidate)
        elif info not in validated:
            validated.append(info)
    return validated, hallucinated


# ---------------------------
# Per-file labeling
# ---------------------------
def label_file(file: ContractFile, tree: SyntaxTree, gateway: Optional[LlmGateway] = None,
               use_heuristic: bool = True, transfer_patterns: Sequence[str] = ()) -> FileLabels:
    """LLM labels first, heuristic labels unioned in; without a gateway the heuristic is the only source."""
    result = FileLabels()
    nodes = {info.qualified_name: (info, node) for info, _, node in function_nodes(tree)}
    heuristic: Dict[str, SensitiveLabel] = {}
    if use_heuristic or gateway is None:
        heuristic = dict(locate_sensitive_heuristic(tree, transfer_patterns))

    if gateway is not None:
        try:
            candidates = ask_llm(file, gateway)
        except UnparsableResponse as e:
            logger.warning(f"❌ {file.path}: {e}")
            result.unparsable = e.response
            candidates = []
        except (ProviderError, ProviderTimeout, ReplayMiss) as e:
            logger.warning(f"❌ {file.path}: sensitive-function query failed: {e}")
            result.llm_error = str(e)
            candidates = []
        provided = {c.signature: c.operations for c in candidates}
        validated, result.hallucinated = validate_signatures([c.signature for c in candidates], tree)
        for signature in result.hallucinated:
            logger.warning(f"{file.path}: LLM named unknown function {signature!r}")
        for info in validated:
            if not has_body(nodes[info.qualified_name][1]):
                continue
            ops = next((provided[s] for s in provided if match_signature(s, [info]) and provided[s]), frozenset())
            ops = ops or (heuristic[info.qualified_name].operations if info.qualified_name in heuristic else ALL_OPERATIONS)
            result.labels[info.qualified_name] = (info, SensitiveLabel.of(ops, LabelProvenance.LLM))

    for name, label in heuristic.items():
        if name not in result.labels:
            result.labels[name] = (nodes[name][0], label)

    order = {name: position for position, name in enumerate(nodes)}
    result.labels = dict(sorted(result.labels.items(), key=lambda item: order[item[0]]))
    logger.info(f"{file.path}: {len(result.sensitive())} sensitive functions")
    return result


def forced_labels(tree: SyntaxTree) -> FileLabels:
    """Every implemented non-modifier function treated as sensitive."""
    result = FileLabels()
    for info, _, node in function_nodes(tree):
        if info.kind != FunctionKind.MODIFIER and has_body(node):
            result.labels[info.qualified_name] = (info, SensitiveLabel.forced())
    return result


# ---------------------------
# Evaluation against hand labels
# ---------------------------
def evaluate_labels(predicted: Iterable[str], expected: Iterable[str], universe: Iterable[str]) -> ExtractorMetrics:
    """Predictions outside the universe (hallucinations) count as false positives."""
    predicted, expected, universe = set(predicted), set(expected), set(universe)
    tp = len(predicted & expected)
    fp = len(predicted - expected)
    fn = len(expected - predicted)
    tn = len(universe - predicted - expected)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + tn + fn
    return ExtractorMetrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=round(precision, 4), recall=round(recall, 4), f1=round(f1, 4),
        accuracy=round((tp + tn) / total, 4) if total else 0.0,
    )


def evaluate_file(file: ContractFile, expected: Iterable[str], gateway: Optional[LlmGateway] = None,
                  use_heuristic: bool = True) -> Tuple[List[str], List[str], List[str]]:
    """(predicted, expected, universe) qualified names for one labeled file."""
    try:
        tree = parse(file.source)
    except ParseFailure as e:
        logger.warning(f"❌ {file.path}: {e}")
        return [], list(expected), []
    labels = label_file(file, tree, gateway, use_heuristic)
    universe = [info.qualified_name for info, _, node in function_nodes(tree)
                if info.kind != FunctionKind.MODIFIER and has_body(node)]
    predicted = [name for name, (_, label) in labels.labels.items() if label.is_sensitive]
    predicted += [f"?{s}" for s in labels.hallucinated]
    return predicted, list(expected), universe

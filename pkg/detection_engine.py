# detection_engine.py - call graph, msg.sender dependence, access-control and risky-action search
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx

from ir_builder import MSG_SENDER, CallTarget, Cfg, ContractScope, InstrKind, IrInstruction, ValueRef, build_cfg, linearize
from schemas import (
    AcLocation, AcScope, AcStatus, CompletedContract, Finding, FindingLocation, FunctionInfo, FunctionKind,
    FunctionSnippet, Provenance, RiskyAction, SensitiveLabel,
)
from solidity_frontend import SyntaxTree, function_nodes, has_body, node_type, normalize, parse
from utils import Deadline, line_of

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 3
CALL_KINDS = (InstrKind.INTERNAL_CALL, InstrKind.HIGH_LEVEL_CALL)


@dataclass(frozen=True)
class FcgNode:
    key: str
    function: FunctionInfo
    cfg: Cfg = field(repr=False)
    sensitivity: SensitiveLabel
    modifiers: Tuple[str, ...] = ()     # keys of resolved modifier nodes, in invocation order

    @property
    def is_modifier(self) -> bool:
        return self.function.kind == FunctionKind.MODIFIER


@dataclass(frozen=True)
class Fcg:
    """Nodes keyed by 'Contract.name(types)'; edge attrs: sites (call instructions), external (bool)."""

    graph: nx.DiGraph
    tree: SyntaxTree = field(repr=False)
    calls: Dict[Tuple[str, CallTarget], str] = field(default_factory=dict, repr=False)
    unresolved: Dict[str, Tuple[CallTarget, ...]] = field(default_factory=dict)

    def node(self, key: str) -> FcgNode:
        return self.graph.nodes[key]["node"]

    def nodes(self) -> List[FcgNode]:
        return [self.graph.nodes[key]["node"] for key in self.graph.nodes]

    def edges(self) -> Set[Tuple[str, str]]:
        return set(self.graph.edges)

    def internal_callees(self, key: str) -> List[Tuple[str, IrInstruction]]:
        """(callee, first call site) for calls that keep msg.sender, ordered by call site."""
        found = [
            (callee, data["sites"][0])
            for callee, data in self.graph[key].items()
            if not data["external"]
        ]
        return sorted(found, key=lambda item: (item[1].index, item[0]))

    def resolve(self, caller: str, target: CallTarget) -> Optional[str]:
        return self.calls.get((caller, target))


@dataclass
class TraversalStats:
    max_depth: int = 0
    blocks_visited: int = 0

    def reached(self, depth: int) -> None:
        self.max_depth = max(self.max_depth, depth)


# ---------------------------
# Call graph
# ---------------------------
class _Resolver:
    def __init__(self, tree: SyntaxTree):
        self.tree = tree
        self.functions: Dict[str, Dict[Tuple[str, int], str]] = {}
        self.modifiers: Dict[str, Dict[str, str]] = {}
        self.libraries = [c.get("name") for c in tree.contracts() if c.get("kind") == "library"]

    def add(self, info: FunctionInfo) -> None:
        if info.kind == FunctionKind.MODIFIER:
            self.modifiers.setdefault(info.contract_name, {}).setdefault(info.name, info.qualified_name)
        elif info.kind in (FunctionKind.FUNCTION, FunctionKind.FALLBACK, FunctionKind.RECEIVE):
            key = (info.name, len(info.parameter_types))
            self.functions.setdefault(info.contract_name, {}).setdefault(key, info.qualified_name)

    def _chain(self, contract_name: str) -> List[str]:
        contract = self.tree.contract(contract_name)
        return [c.get("name") for c in linearize(self.tree, contract)] if contract else []

    def function(self, contract_name: str, target: CallTarget) -> Optional[str]:
        chain = self._chain(contract_name)
        if target.receiver == "super":
            chain = chain[1:]
        elif target.receiver == "using":
            chain = self.libraries
        elif target.receiver not in (None, "this"):
            chain = self._chain(target.receiver)
        elif target.receiver is None and target.external:
            # member call on an address or unknown receiver
            return None
        for name in chain:
            key = self.functions.get(name, {}).get((target.name, target.arity))
            if key:
                return key
        return None

    def modifier(self, contract_name: str, name: str) -> Optional[str]:
        for base in self._chain(contract_name):
            key = self.modifiers.get(base, {}).get(name)
            if key:
                return key
        return None


def build_fcg(completed: CompletedContract, labels: Mapping[str, SensitiveLabel],
              tree: Optional[SyntaxTree] = None, transfer_patterns: Sequence[str] = ()) -> Fcg:
    """One node per implemented function and modifier; edges resolved by name + arity over the inheritance chain."""
    tree = tree or parse(completed.source)
    resolver = _Resolver(tree)
    scopes: Dict[str, ContractScope] = {}
    graph = nx.DiGraph()
    pending: List[Tuple[FunctionInfo, Cfg]] = []

    for info, contract, node in function_nodes(tree):
        if not has_body(node):
            continue
        if info.contract_name not in scopes:
            scopes[info.contract_name] = ContractScope.for_contract(tree, info.contract_name, transfer_patterns)
        resolver.add(info)
        pending.append((info, build_cfg(node, scopes[info.contract_name])))

    for info, cfg in pending:
        modifiers = tuple(
            key for key in (resolver.modifier(info.contract_name, name) for name in info.modifiers) if key
        )
        label = labels.get(info.qualified_name) or SensitiveLabel.insensitive()
        graph.add_node(info.qualified_name, node=FcgNode(info.qualified_name, info, cfg, label, modifiers))

    calls: Dict[Tuple[str, CallTarget], str] = {}
    unresolved: Dict[str, List[CallTarget]] = {}
    for info, cfg in pending:
        caller = info.qualified_name
        for instr in cfg.of_kind(*CALL_KINDS):
            callee = resolver.function(info.contract_name, instr.callee)
            if callee is None or callee not in graph:
                unresolved.setdefault(caller, []).append(instr.callee)
                continue
            calls[(caller, instr.callee)] = callee
            if graph.has_edge(caller, callee):
                graph[caller][callee]["sites"] += (instr,)
            else:
                external = instr.kind == InstrKind.HIGH_LEVEL_CALL
                graph.add_edge(caller, callee, sites=(instr,), external=external)

    logger.debug(f"{completed.origin}: call graph with {graph.number_of_nodes()} nodes, {graph.number_of_edges()} edges")
    return Fcg(graph=graph, tree=tree, calls=calls, unresolved={k: tuple(v) for k, v in unresolved.items()})


# ---------------------------
# msg.sender dependence
# ---------------------------
def is_msg_sender_dependent(value: ValueRef, cfg: Cfg, fcg: Optional[Fcg] = None, depth: int = 0,
                            max_depth: int = DEFAULT_MAX_DEPTH, caller: Optional[str] = None,
                            stats: Optional[TraversalStats] = None, _seen: Optional[Set[str]] = None) -> bool:
    """msg.sender itself, a local assigned from a dependent value, or a callee return that is dependent."""
    if MSG_SENDER in value.reads:
        return True
    seen = _seen if _seen is not None else set()
    for name in sorted(value.reads & cfg.local_names - seen):
        seen.add(name)
        for instr in cfg.of_kind(InstrKind.ASSIGN):
            if instr.name == name and any(
                is_msg_sender_dependent(op, cfg, fcg, depth, max_depth, caller, stats, seen) for op in instr.operands
            ):
                return True
    if fcg is None or caller is None or depth + 1 > max_depth:
        return False
    for target in value.calls:
        callee = fcg.resolve(caller, target)
        if callee and _returns_dependent(fcg, callee, depth + 1, max_depth, stats):
            return True
    return False


def _returns_dependent(fcg: Fcg, key: str, depth: int, max_depth: int, stats: Optional[TraversalStats]) -> bool:
    if stats:
        stats.reached(depth)
    cfg = fcg.node(key).cfg
    for instr in cfg.of_kind(InstrKind.RETURN):
        if any(is_msg_sender_dependent(op, cfg, fcg, depth, max_depth, key, stats) for op in instr.operands):
            return True
    return any(
        is_msg_sender_dependent(ValueRef(name, frozenset({name})), cfg, fcg, depth, max_depth, key, stats)
        for name in cfg.return_names
    )


# ---------------------------
# Traversal helpers
# ---------------------------
def _walk(cfg: Cfg, deadline: Deadline, stats: Optional[TraversalStats]) -> List[IrInstruction]:
    """Instructions of every block in index order; the deadline is checked once per block."""
    found = []
    for block in cfg.blocks():
        deadline.check("detection")
        if stats:
            stats.blocks_visited += 1
        found.extend(cfg.block(block))
    return sorted(found, key=lambda i: i.index)


def _callee_closure(fcg: Fcg, start: str, max_depth: int) -> Iterator[Tuple[str, int, Tuple[str, ...]]]:
    """(callee, depth, name path) breadth-first within max_depth; each callee visited once."""
    visited = {start}
    queue = deque([(start, 0, ())])
    while queue:
        key, depth, path = queue.popleft()
        if depth > 0:
            yield key, depth, path
        if depth >= max_depth:
            continue
        for callee, _ in fcg.internal_callees(key):
            if callee not in visited:
                visited.add(callee)
                queue.append((callee, depth + 1, path + (fcg.node(callee).function.name,)))


def _first_check(fcg: Fcg, key: str, depth: int, max_depth: int, deadline: Deadline,
                 stats: Optional[TraversalStats]) -> Optional[IrInstruction]:
    cfg = fcg.node(key).cfg
    for instr in _walk(cfg, deadline, stats):
        if instr.kind == InstrKind.CONDITION and any(
            is_msg_sender_dependent(op, cfg, fcg, depth, max_depth, key, stats) for op in instr.operands
        ):
            return instr
    return None


def _check_below(fcg: Fcg, key: str, depth: int, max_depth: int, deadline: Deadline,
                 stats: Optional[TraversalStats]) -> Optional[Tuple[str, ...]]:
    """Name path to the first function at or below key (key at `depth`) that holds a check."""
    if stats:
        stats.reached(depth)
    if _first_check(fcg, key, depth, max_depth, deadline, stats):
        return (fcg.node(key).function.name,)
    for callee, callee_depth, path in _callee_closure(fcg, key, max_depth - depth):
        if stats:
            stats.reached(depth + callee_depth)
        if _first_check(fcg, callee, depth + callee_depth, max_depth, deadline, stats):
            return (fcg.node(key).function.name,) + path
    return None


# ---------------------------
# Searches
# ---------------------------
def access_control_search(key: str, fcg: Fcg, max_depth: int = DEFAULT_MAX_DEPTH,
                          deadline: Optional[Deadline] = None, stats: Optional[TraversalStats] = None) -> Optional[AcLocation]:
    """Earliest msg.sender check guarding the function: modifier prelude (0), own body, or first-level call site."""
    deadline = deadline or Deadline.unlimited()
    node = fcg.node(key)

    for modifier in node.modifiers:
        if _check_below(fcg, modifier, 0, max_depth, deadline, stats):
            return AcLocation(scope=AcScope.MODIFIER, index=0, path=(fcg.node(modifier).function.name,))

    found: List[AcLocation] = []
    own = _first_check(fcg, key, 0, max_depth, deadline, stats)
    if own:
        found.append(AcLocation(scope=AcScope.SELF, index=own.index))
    for callee, site in fcg.internal_callees(key):
        if own and site.index > own.index:
            break
        path = _check_below(fcg, callee, 1, max_depth, deadline, stats)
        if path:
            found.append(AcLocation(scope=AcScope.CALLEE, index=site.index, path=path))
            break
    return min(found, key=lambda loc: loc.index) if found else None


@dataclass(frozen=True)
class RiskyLocation:
    action: RiskyAction
    index: int
    span: Tuple[int, int]


def risky_actions_search(key: str, fcg: Fcg, max_depth: int = DEFAULT_MAX_DEPTH,
                         deadline: Optional[Deadline] = None, stats: Optional[TraversalStats] = None) -> List[RiskyLocation]:
    """Earliest location of each risky-action kind in the function and its callees; callee actions sit at the call site."""
    deadline = deadline or Deadline.unlimited()
    evidence: Dict[InstrKind, List[Tuple[int, Tuple[int, int]]]] = {}
    selfdestructs: List[Tuple[int, Tuple[int, int]]] = []

    def collect(instructions: List[IrInstruction], site: Optional[IrInstruction]) -> None:
        for instr in instructions:
            where = (site.index, site.span) if site else (instr.index, instr.span)
            if instr.kind == InstrKind.SOLIDITY_CALL and instr.name == "selfdestruct":
                selfdestructs.append(where)
            elif instr.kind in (InstrKind.TRANSFER, InstrKind.STATE_WRITE, InstrKind.LOW_LEVEL_CALL):
                evidence.setdefault(instr.kind, []).append(where)

    collect(_walk(fcg.node(key).cfg, deadline, stats), None)
    for callee, site in fcg.internal_callees(key):
        if stats:
            stats.reached(1)
        collect(_walk(fcg.node(callee).cfg, deadline, stats), site)
        for nested, depth, _ in _callee_closure(fcg, callee, max_depth - 1):
            if stats:
                stats.reached(depth + 1)
            collect(_walk(fcg.node(nested).cfg, deadline, stats), site)

    transfers = evidence.get(InstrKind.TRANSFER, [])
    writes = evidence.get(InstrKind.STATE_WRITE, [])
    result = []
    if transfers and not writes:
        result.append(RiskyLocation(RiskyAction.RISKY_TRANSFER, *min(transfers)))
    if writes and not transfers:
        result.append(RiskyLocation(RiskyAction.RISKY_STATE_WRITE, *min(writes)))
    if evidence.get(InstrKind.LOW_LEVEL_CALL):
        result.append(RiskyLocation(RiskyAction.LOW_LEVEL_CALL, *min(evidence[InstrKind.LOW_LEVEL_CALL])))
    if selfdestructs:
        result.append(RiskyLocation(RiskyAction.SELFDESTRUCT, *min(selfdestructs)))
    return sorted(result, key=lambda r: (r.index, r.action.value))


def _reachable_internals(fcg: Fcg, max_depth: int, unguarded: Sequence[str]) -> Set[str]:
    reachable = set()
    for entry in unguarded:
        for callee, _, _ in _callee_closure(fcg, entry, max_depth):
            if not fcg.node(callee).function.is_entry_point:
                reachable.add(callee)
    return reachable


def detect(completed: CompletedContract, fcg: Fcg, max_depth: int = DEFAULT_MAX_DEPTH,
           include_internal_reachable: bool = False, deadline: Optional[Deadline] = None,
           stats: Optional[TraversalStats] = None, only: Optional[Sequence[str]] = None) -> List[Finding]:
    """Flag every risky location of a sensitive function whose access check is missing or comes later."""
    deadline = deadline or Deadline.unlimited()
    candidates = [
        n for n in fcg.nodes()
        if n.sensitivity.is_sensitive
        and n.function.kind not in (FunctionKind.MODIFIER, FunctionKind.CONSTRUCTOR)
        and (only is None or n.key in only)
    ]
    checks = {n.key: access_control_search(n.key, fcg, max_depth, deadline, stats) for n in candidates}

    allowed = {n.key for n in candidates if n.function.is_entry_point}
    if include_internal_reachable:
        unguarded = [
            n.key for n in fcg.nodes()
            if n.function.is_entry_point and n.function.kind != FunctionKind.CONSTRUCTOR and not n.is_modifier
            and (checks.get(n.key) if n.key in checks else access_control_search(n.key, fcg, max_depth, deadline, stats)) is None
        ]
        allowed |= _reachable_internals(fcg, max_depth, unguarded)

    findings = []
    for node in candidates:
        if node.key not in allowed:
            continue
        check = checks[node.key]
        for risky in risky_actions_search(node.key, fcg, max_depth, deadline, stats):
            if check is not None and check.index <= risky.index:
                continue
            findings.append(Finding(
                contract_name=node.function.contract_name,
                function=node.function.signature,
                risky_action=risky.action,
                location=FindingLocation(
                    index=risky.index, start=risky.span[0], end=risky.span[1],
                    line=line_of(completed.source, risky.span[0]),
                ),
                ac_status=AcStatus.NO_CHECK if check is None else AcStatus.CHECK_AFTER_ACTION,
                ac_location=check,
                provenance=Provenance(path=completed.origin, iterations=completed.iterations),
            ))
    return sorted(findings, key=Finding.sort_key)


def locate_analyzed_function(tree: SyntaxTree, snippet: FunctionSnippet) -> Optional[FunctionInfo]:
    """The snippet's function inside a completed source: same name and parameter types, unchanged text preferred."""
    matches = [
        (info, node) for info, _, node in function_nodes(tree)
        if info.kind != FunctionKind.MODIFIER
        and info.name == snippet.info.name
        and info.parameter_types == snippet.info.parameter_types
        and node_type(node.get("body")) == "Block"
    ]
    wanted = normalize(snippet.text).text
    for info, node in matches:
        if normalize(tree.text(node)).text == wanted:
            return info
    return matches[0][0] if matches else None

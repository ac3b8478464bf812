# ir_builder.py - lowering of function bodies into a small IR and per-function CFGs
import fnmatch
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import networkx as nx

from errors import UnsupportedConstruct
from solidity_frontend import SyntaxTree, iter_nodes, node_type, parameter_list, type_name_text

logger = logging.getLogger(__name__)

MSG_SENDER = "msg.sender"

ASSIGNMENT_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "|=", "&=", "^=", "<<=", ">>=", ">>>="}
CONDITION_OPS = {"==", "!=", "<", ">", "<=", ">=", "&&", "||"}
LOW_LEVEL_MEMBERS = {"call", "delegatecall", "staticcall"}
VALUE_TRANSFER_MEMBERS = {"transfer", "send"}
HASH_BUILTINS = {"keccak256", "sha256", "sha3", "ripemd160"}
OTHER_BUILTINS = {"ecrecover", "addmod", "mulmod", "blockhash", "gasleft", "type"}
GLOBAL_NAMESPACES = {"abi", "block", "tx", "msg", "string", "bytes"}
OPAQUE_STATEMENTS = {"InLineAssemblyStatement", "TryStatement"}
_ELEMENTARY_RE = re.compile(r"^(u?int\d*|bytes\d*|string|bool|u?fixed[\dx]*|byte|address|payable)$")
_VALUE_OPTION_RE = re.compile(r"\{[^{}]*\bvalue\s*:")
# the parser spells string and hex literals in lower camel case
LITERAL_NODES = {
    "NumberLiteral", "BooleanLiteral", "StringLiteral", "stringLiteral", "HexLiteral", "hexLiteral", "HexNumber",
    "ElementaryTypeName", "ElementaryTypeNameExpression",
}
TYPE_CAST_NODES = {"ElementaryTypeName", "ElementaryTypeNameExpression"}


class InstrKind(str, Enum):
    TRANSFER = "Transfer"
    STATE_WRITE = "StateWrite"
    LOW_LEVEL_CALL = "LowLevelCall"
    HIGH_LEVEL_CALL = "HighLevelCall"
    INTERNAL_CALL = "InternalCall"
    SOLIDITY_CALL = "SolidityCall"
    CONDITION = "Condition"
    ASSIGN = "Assign"
    RETURN = "Return"
    OTHER = "Other"


@dataclass(frozen=True)
class CallTarget:
    name: str
    arity: int
    receiver: Optional[str] = None   # None, "this", "super", "using", or a contract/library name
    external: bool = False


@dataclass(frozen=True)
class ValueRef:
    """A value read by an instruction: its source text, the identifiers it reads and the calls it flows from."""

    text: str
    reads: FrozenSet[str] = frozenset()
    calls: Tuple[CallTarget, ...] = ()

    @classmethod
    def join(cls, text: str, values: Iterable["ValueRef"]) -> "ValueRef":
        reads: set = set()
        calls: List[CallTarget] = []
        for value in values:
            reads |= value.reads
            calls.extend(value.calls)
        return cls(text=text, reads=frozenset(reads), calls=tuple(calls))


@dataclass(frozen=True)
class IrInstruction:
    index: int
    kind: InstrKind
    span: Tuple[int, int]
    name: Optional[str] = None
    callee: Optional[CallTarget] = None
    operands: Tuple[ValueRef, ...] = ()

    def label(self) -> str:
        detail = self.name or (self.callee.name if self.callee else None)
        if self.kind == InstrKind.CONDITION:
            detail = ", ".join(op.text for op in self.operands)
        return f"{self.index}: {self.kind.value}({detail})" if detail else f"{self.index}: {self.kind.value}"


class Classification(NamedTuple):
    kind: InstrKind
    detail: Optional[str] = None


@dataclass(frozen=True)
class StateVariable:
    name: str
    contract_name: str
    declared_type: str


@dataclass(frozen=True)
class Cfg:
    graph: nx.DiGraph        # node attrs: instructions (tuple), opaque (bool), revert (bool); edge attr: label
    entry: int = 0
    local_names: FrozenSet[str] = frozenset()
    return_names: Tuple[str, ...] = ()
    unsupported: Tuple[UnsupportedConstruct, ...] = ()

    def blocks(self) -> List[int]:
        return sorted(self.graph.nodes)

    def block(self, block_id: int) -> Tuple[IrInstruction, ...]:
        return self.graph.nodes[block_id]["instructions"]

    def is_opaque(self, block_id: int) -> bool:
        return self.graph.nodes[block_id].get("opaque", False)

    def instructions(self) -> List[IrInstruction]:
        found = [i for b in self.graph.nodes for i in self.graph.nodes[b]["instructions"]]
        return sorted(found, key=lambda i: i.index)

    def of_kind(self, *kinds: InstrKind) -> List[IrInstruction]:
        return [i for i in self.instructions() if i.kind in kinds]

    def adjacency(self) -> Dict[int, List[int]]:
        return {b: sorted(self.graph.successors(b)) for b in self.blocks()}

    def to_dot(self, title: str = "cfg") -> str:
        dot = nx.DiGraph(name=f'"{title}"')
        for b in self.blocks():
            lines = [i.label() for i in self.block(b)] or (["opaque"] if self.is_opaque(b) else ["(empty)"])
            label = "\\l".join(line.replace('"', '\\"') for line in lines) + "\\l"
            dot.add_node(f"B{b}", label=f'"B{b}\\n{label}"', shape="box")
        for a, b, data in self.graph.edges(data=True):
            attrs = {"label": f'"{data["label"]}"'} if data.get("label") else {}
            dot.add_edge(f"B{a}", f"B{b}", **attrs)
        return nx.drawing.nx_pydot.to_pydot(dot).to_string()


# ---------------------------
# Contract scope
# ---------------------------
def linearize(tree: SyntaxTree, contract: Dict[str, Any]) -> List[Dict[str, Any]]:
    """Contract followed by its bases found in the same source, most derived first."""
    order: List[Dict[str, Any]] = []

    def visit(node: Dict[str, Any]) -> None:
        if any(node is seen for seen in order):
            return
        order.append(node)
        for spec in reversed(node.get("baseContracts") or []):
            base_name = (spec.get("baseName") or {}).get("namePath") if isinstance(spec, dict) else None
            base = tree.contract(base_name) if base_name else None
            if base is not None:
                visit(base)

    visit(contract)
    return order


def _state_declarations(contract: Dict[str, Any]) -> List[Tuple[str, Any]]:
    found = []
    for sub in contract.get("subNodes") or []:
        if node_type(sub) == "StateVariableDeclaration":
            for var in sub.get("variables") or []:
                if isinstance(var, dict) and var.get("name"):
                    found.append((var["name"], var.get("typeName")))
    return found


def state_variables(tree: SyntaxTree, contract_name: str) -> List[StateVariable]:
    """Contract-level variables including those inherited from bases in the same source, base-most first."""
    contract = tree.contract(contract_name)
    if contract is None:
        return []
    seen = set()
    result = []
    for node in reversed(linearize(tree, contract)):
        for name, type_node in _state_declarations(node):
            if name not in seen:
                seen.add(name)
                result.append(StateVariable(name=name, contract_name=node.get("name"), declared_type=type_name_text(type_node)))
    return result


def _declared_names(tree: SyntaxTree, kinds: Sequence[str]) -> FrozenSet[str]:
    names = set()
    for node in iter_nodes(tree.root):
        if node_type(node) in kinds and node.get("name"):
            names.add(node["name"])
    return frozenset(names)


@dataclass(frozen=True)
class ContractScope:
    tree: SyntaxTree
    contract: Dict[str, Any] = field(repr=False)
    name: str
    state_vars: Dict[str, StateVariable]
    state_types: Dict[str, Any] = field(repr=False)
    contract_names: FrozenSet[str] = frozenset()
    type_names: FrozenSet[str] = frozenset()      # structs and enums
    event_names: FrozenSet[str] = frozenset()
    transfer_patterns: Tuple[str, ...] = ()

    @classmethod
    def for_contract(cls, tree: SyntaxTree, contract_name: str, transfer_patterns: Sequence[str] = ()) -> "ContractScope":
        contract = tree.contract(contract_name)
        if contract is None:
            raise KeyError(contract_name)
        state_types: Dict[str, Any] = {}
        for node in linearize(tree, contract):
            for name, type_node in _state_declarations(node):
                state_types.setdefault(name, type_node)
        return cls(
            tree=tree,
            contract=contract,
            name=contract_name,
            state_vars={v.name: v for v in state_variables(tree, contract_name)},
            state_types=state_types,
            contract_names=frozenset(c.get("name") for c in tree.contracts()),
            type_names=_declared_names(tree, ("StructDefinition", "EnumDefinition")),
            event_names=_declared_names(tree, ("EventDefinition", "CustomErrorDefinition")),
            transfer_patterns=tuple(transfer_patterns),
        )

    def promotes_to_transfer(self, member: str) -> bool:
        return any(fnmatch.fnmatchcase(member, pattern) for pattern in self.transfer_patterns)


# ---------------------------
# Lowering
# ---------------------------
class _Lowering:
    def __init__(self, scope: ContractScope, function_node: Dict[str, Any]):
        self.scope = scope
        self.tree = scope.tree
        self.graph = nx.DiGraph()
        self._next_block = 0
        self._next_index = 1    # 0 is reserved for the modifier prelude
        self._revert_block: Optional[int] = None
        self._loops: List[Tuple[int, int]] = []
        self.unsupported: List[UnsupportedConstruct] = []

        self.local_types: Dict[str, Any] = {}
        self.return_names: List[str] = []
        for p in parameter_list(function_node.get("parameters")):
            if p.get("name"):
                self.local_types[p["name"]] = p.get("typeName")
        for p in parameter_list(function_node.get("returnParameters")):
            if p.get("name"):
                self.local_types[p["name"]] = p.get("typeName")
                self.return_names.append(p["name"])
        body = function_node.get("body")
        for node in iter_nodes(body if isinstance(body, dict) else []):
            if node_type(node) == "VariableDeclarationStatement":
                for var in node.get("variables") or []:
                    if isinstance(var, dict) and var.get("name"):
                        self.local_types.setdefault(var["name"], var.get("typeName"))
        self.storage_alias: Dict[str, str] = {}

        self.entry = self._new_block()
        self.current: Optional[int] = self.entry

    # blocks and edges
    def _new_block(self, **attrs) -> int:
        block_id = self._next_block
        self._next_block += 1
        self.graph.add_node(block_id, **{"instructions": [], "opaque": False, "revert": False, **attrs})
        return block_id

    def _edge(self, a: Optional[int], b: int, label: Optional[str] = None) -> None:
        if a is not None:
            self.graph.add_edge(a, b, label=label)

    def _ensure_block(self) -> int:
        if self.current is None:
            # code after return/revert/break; pruned at the end
            self.current = self._new_block()
        return self.current

    def _revert(self) -> int:
        if self._revert_block is None:
            self._revert_block = self._new_block(revert=True)
        return self._revert_block

    def _emit(self, kind: InstrKind, node: Any, **fields) -> IrInstruction:
        block = self._ensure_block()
        instr = IrInstruction(index=self._next_index, kind=kind, span=self.tree.span(node), **fields)
        self._next_index += 1
        self.graph.nodes[block]["instructions"].append(instr)
        return instr

    def _text(self, node: Any) -> str:
        return " ".join(self.tree.text(node).split()) if isinstance(node, dict) else ""

    # statements
    def lower_statement(self, stmt: Any) -> None:
        if not isinstance(stmt, dict):
            return
        kind = node_type(stmt)
        self._ensure_block()
        if kind == "Block":
            for inner in stmt.get("statements") or []:
                self.lower_statement(inner)
        elif kind == "UncheckedStatement":
            self.lower_statement(stmt.get("body") or stmt.get("block"))
        elif kind == "ExpressionStatement":
            self._lower_expression_statement(stmt)
        elif kind == "VariableDeclarationStatement":
            self._lower_declaration(stmt)
        elif kind == "IfStatement":
            self._lower_if(stmt)
        elif kind == "WhileStatement":
            self._lower_while(stmt)
        elif kind == "ForStatement":
            self._lower_for(stmt)
        elif kind == "DoWhileStatement":
            self._lower_do_while(stmt)
        elif kind == "ReturnStatement":
            expr = stmt.get("expression")
            operands: Tuple[ValueRef, ...] = ()
            if node_type(expr) == "TupleExpression":
                operands = tuple(self.lower_expr(c) for c in expr.get("components") or [] if c is not None)
            elif expr is not None:
                operands = (self.lower_expr(expr),)
            self._emit(InstrKind.RETURN, stmt, operands=operands)
            self.current = None
        elif kind == "EmitStatement":
            call = stmt.get("eventCall") or {}
            values = tuple(self.lower_expr(a) for a in call.get("arguments") or [] if a is not None)
            self._emit(InstrKind.OTHER, stmt, name="emit", operands=values)
        elif kind in ("ThrowStatement", "RevertStatement"):
            call = stmt.get("functionCall") or {}
            for arg in call.get("arguments") or []:
                self.lower_expr(arg)
            self._emit(InstrKind.SOLIDITY_CALL, stmt, name="revert")
            self._edge(self.current, self._revert())
            self.current = None
        elif kind in ("BreakStatement", "ContinueStatement"):
            if self._loops:
                target = self._loops[-1][1] if kind == "BreakStatement" else self._loops[-1][0]
                self._edge(self.current, target)
            self.current = None
        elif kind in OPAQUE_STATEMENTS:
            self._lower_opaque(stmt)
        elif kind == "PlaceholderStatement":
            self._emit(InstrKind.OTHER, stmt, name="_")
        else:
            self._emit(InstrKind.OTHER, stmt, name=kind)

    def _lower_opaque(self, stmt: Dict[str, Any]) -> None:
        construct = UnsupportedConstruct(node_type(stmt), self.tree.span(stmt))
        logger.debug(f"{self.scope.name}: {construct}")
        self.unsupported.append(construct)
        opaque = self._new_block(opaque=True)
        self._edge(self.current, opaque)
        after = self._new_block()
        self._edge(opaque, after)
        self.current = after

    def _lower_expression_statement(self, stmt: Dict[str, Any]) -> None:
        expr = stmt.get("expression")
        if node_type(expr) == "Identifier" and expr.get("name") == "_":
            self._emit(InstrKind.OTHER, stmt, name="_")
            return
        if node_type(expr) == "FunctionCall" and node_type(expr.get("expression")) == "Identifier":
            name = expr["expression"].get("name")
            args = [a for a in expr.get("arguments") or [] if a is not None]
            if name in ("require", "assert"):
                operands = self.lower_condition(args[0]) if args else ()
                for extra in args[1:]:
                    self.lower_expr(extra)
                self._emit(InstrKind.CONDITION, stmt, name=name, operands=operands)
                self._branch_to_revert()
                return
        before = self._next_index
        self.lower_expr(expr)
        if self._next_index == before and self.current is not None:
            self._emit(InstrKind.OTHER, stmt)

    def _branch_to_revert(self) -> None:
        check = self.current
        self._edge(check, self._revert(), "false")
        self.current = self._new_block()
        self._edge(check, self.current, "true")

    def _lower_declaration(self, stmt: Dict[str, Any]) -> None:
        variables = [v for v in stmt.get("variables") or [] if isinstance(v, dict) and v.get("name")]
        init = stmt.get("initialValue")
        if init is None:
            return
        value = self.lower_expr(init)
        root = self._root_name(init)
        for var in variables:
            if var.get("storageLocation") == "storage" and root:
                state = self._state_root(root)
                if state:
                    self.storage_alias[var["name"]] = state
            self._emit(InstrKind.ASSIGN, stmt, name=var["name"], operands=(value,))

    def _condition_block(self, cond: Any) -> None:
        operands = self.lower_condition(cond)
        self._emit(InstrKind.CONDITION, cond, operands=operands)

    def _lower_if(self, stmt: Dict[str, Any]) -> None:
        self._condition_block(stmt.get("condition"))
        head = self.current
        then_block = self._new_block()
        self._edge(head, then_block, "true")
        self.current = then_block
        self.lower_statement(stmt.get("TrueBody"))
        then_end = self.current

        else_end = None
        false_body = stmt.get("FalseBody")
        if isinstance(false_body, dict):
            else_block = self._new_block()
            self._edge(head, else_block, "false")
            self.current = else_block
            self.lower_statement(false_body)
            else_end = self.current

        join = self._new_block()
        self._edge(then_end, join)
        if isinstance(false_body, dict):
            self._edge(else_end, join)
        else:
            self._edge(head, join, "false")
        self.current = join

    def _lower_while(self, stmt: Dict[str, Any]) -> None:
        header = self._new_block()
        self._edge(self.current, header)
        self.current = header
        self._condition_block(stmt.get("condition"))
        body, exit_block = self._new_block(), self._new_block()
        self._edge(header, body, "true")
        self._edge(header, exit_block, "false")
        self._loops.append((header, exit_block))
        self.current = body
        self.lower_statement(stmt.get("body"))
        self._edge(self.current, header)
        self._loops.pop()
        self.current = exit_block

    def _lower_for(self, stmt: Dict[str, Any]) -> None:
        self.lower_statement(stmt.get("initExpression"))
        self._ensure_block()
        header = self._new_block()
        self._edge(self.current, header)
        self.current = header
        cond = stmt.get("conditionExpression")
        if cond is not None:
            self._condition_block(cond)
        body, step, exit_block = self._new_block(), self._new_block(), self._new_block()
        self._edge(header, body, "true")
        if cond is not None:
            self._edge(header, exit_block, "false")
        self._loops.append((step, exit_block))
        self.current = body
        self.lower_statement(stmt.get("body"))
        self._edge(self.current, step)
        self._loops.pop()
        self.current = step
        loop_expr = stmt.get("loopExpression")
        if isinstance(loop_expr, dict) and loop_expr.get("expression") is not None:
            self.lower_expr(loop_expr["expression"])
        self._edge(self.current, header)
        self.current = exit_block

    def _lower_do_while(self, stmt: Dict[str, Any]) -> None:
        body = self._new_block()
        self._edge(self.current, body)
        cond_block, exit_block = self._new_block(), self._new_block()
        self._loops.append((cond_block, exit_block))
        self.current = body
        self.lower_statement(stmt.get("body"))
        self._edge(self.current, cond_block)
        self._loops.pop()
        self.current = cond_block
        self._condition_block(stmt.get("condition"))
        self._edge(cond_block, body, "true")
        self._edge(cond_block, exit_block, "false")
        self.current = exit_block

    # expressions
    def lower_condition(self, expr: Any) -> Tuple[ValueRef, ...]:
        """Comparison and logical operands, flattened left to right."""
        kind = node_type(expr)
        if kind == "BinaryOperation" and expr.get("operator") in CONDITION_OPS:
            return self.lower_condition(expr.get("left")) + self.lower_condition(expr.get("right"))
        if kind == "UnaryOperation" and expr.get("operator") == "!":
            return self.lower_condition(expr.get("subExpression"))
        if kind == "TupleExpression" and len(expr.get("components") or []) == 1:
            return self.lower_condition(expr["components"][0])
        return (self.lower_expr(expr),)

    def lower_expr(self, expr: Any) -> ValueRef:
        kind = node_type(expr)
        if kind is None:
            return ValueRef("")
        text = self._text(expr)
        if kind == "Identifier":
            return ValueRef(text, frozenset({expr.get("name")}))
        if kind == "MemberAccess":
            base = expr.get("expression")
            if node_type(base) == "Identifier" and base.get("name") == "msg" and expr.get("memberName") == "sender":
                return ValueRef(text, frozenset({MSG_SENDER}))
            return ValueRef.join(text, [self.lower_expr(base)])
        if kind == "IndexAccess":
            return ValueRef.join(text, [self.lower_expr(expr.get("base")), self.lower_expr(expr.get("index"))])
        if kind == "BinaryOperation":
            if expr.get("operator") in ASSIGNMENT_OPS:
                return self._lower_assignment(expr)
            return ValueRef.join(text, [self.lower_expr(expr.get("left")), self.lower_expr(expr.get("right"))])
        if kind == "UnaryOperation":
            sub = expr.get("subExpression")
            value = self.lower_expr(sub)
            if expr.get("operator") in ("++", "--", "delete"):
                self._lower_write(sub, (value,), expr)
            return ValueRef.join(text, [value])
        if kind == "FunctionCall":
            return self._lower_call(expr)
        if kind in LITERAL_NODES:
            return ValueRef(text)
        # Conditional, TupleExpression, NameValueExpression, IndexRangeAccess, ...
        children = [v for k, v in expr.items() if k not in ("loc", "type")]
        values = []
        for child in children:
            for item in child if isinstance(child, list) else [child]:
                if node_type(item):
                    values.append(self.lower_expr(item))
        return ValueRef.join(text, values)

    def _lower_assignment(self, expr: Dict[str, Any]) -> ValueRef:
        left = expr.get("left")
        rhs = self.lower_expr(expr.get("right"))
        target = self.lower_expr(left) if expr.get("operator") != "=" or node_type(left) != "Identifier" else None
        sources = (rhs,) if expr.get("operator") == "=" else (target, rhs)
        self._lower_write(left, sources, expr)
        return target or ValueRef.join(self._text(left), [rhs])

    def _lower_write(self, target: Any, sources: Tuple[ValueRef, ...], node: Dict[str, Any]) -> None:
        if node_type(target) == "TupleExpression":
            for component in target.get("components") or []:
                if component is not None:
                    self._lower_write(component, sources, node)
            return
        root = self._root_name(target)
        state = self._state_root(root) if root else None
        if state:
            self._emit(InstrKind.STATE_WRITE, node, name=state, operands=sources)
        elif root:
            self._emit(InstrKind.ASSIGN, node, name=root, operands=sources)
        else:
            self._emit(InstrKind.OTHER, node, operands=sources)

    def _root_name(self, expr: Any) -> Optional[str]:
        kind = node_type(expr)
        if kind == "Identifier":
            return expr.get("name")
        if kind == "IndexAccess":
            return self._root_name(expr.get("base"))
        if kind == "MemberAccess":
            base = expr.get("expression")
            if node_type(base) == "Identifier" and base.get("name") in ("msg", "tx", "block", "this", "super"):
                return None
            return self._root_name(base)
        if kind == "TupleExpression" and len(expr.get("components") or []) == 1:
            return self._root_name(expr["components"][0])
        return None

    def _state_root(self, root: str) -> Optional[str]:
        if root in self.local_types:
            return self.storage_alias.get(root)
        return root if root in self.scope.state_vars else None

    def _type_node(self, expr: Any) -> Any:
        kind = node_type(expr)
        if kind == "Identifier":
            name = expr.get("name")
            if name in self.local_types:
                return self.local_types[name]
            return self.scope.state_types.get(name)
        if kind == "IndexAccess":
            base = self._type_node(expr.get("base"))
            if node_type(base) == "Mapping":
                return base.get("valueType")
            if node_type(base) == "ArrayTypeName":
                return base.get("baseTypeName")
        return None

    def expr_type(self, expr: Any) -> Optional[str]:
        kind = node_type(expr)
        if kind == "Identifier" and expr.get("name") == "this":
            return self.scope.name
        if kind == "MemberAccess":
            base = expr.get("expression")
            if node_type(base) == "Identifier" and (base.get("name"), expr.get("memberName")) in (
                ("msg", "sender"), ("tx", "origin"), ("block", "coinbase")
            ):
                return "address"
            return None
        if kind == "FunctionCall":
            callee = expr.get("expression")
            if callee == "payable":
                return "address"
            if node_type(callee) == "ElementaryTypeName":
                return canonical_elementary(callee)
            if node_type(callee) == "ElementaryTypeNameExpression":
                return canonical_elementary(callee.get("typeName"))
            if node_type(callee) == "Identifier":
                name = callee.get("name")
                if name in self.scope.contract_names:
                    return name
                if name in ("address", "payable"):
                    return "address"
            return None
        type_node = self._type_node(expr)
        return type_name_text(type_node) if isinstance(type_node, dict) else None

    def _unwrap_call_options(self, callee: Any) -> Tuple[Any, bool, List[ValueRef]]:
        """Strip {value: ...} / .value(...) / .gas(...) options off a callee expression."""
        has_value = bool(_VALUE_OPTION_RE.search(self.tree.text(callee))) if isinstance(callee, dict) else False
        options: List[ValueRef] = []
        while True:
            kind = node_type(callee)
            if kind == "NameValueExpression":
                has_value = has_value or "value" in (callee.get("names") or [])
                options.extend(self.lower_expr(a) for a in callee.get("arguments") or [] if a is not None)
                callee = callee.get("expression")
            elif (
                kind == "FunctionCall"
                and node_type(callee.get("expression")) == "MemberAccess"
                and callee["expression"].get("memberName") in ("value", "gas")
                and node_type(callee["expression"].get("expression")) == "MemberAccess"
                and callee["expression"]["expression"].get("memberName") in LOW_LEVEL_MEMBERS
            ):
                has_value = has_value or callee["expression"].get("memberName") == "value"
                options.extend(self.lower_expr(a) for a in callee.get("arguments") or [] if a is not None)
                callee = callee["expression"].get("expression")
            else:
                return callee, has_value, options

    def _lower_call(self, expr: Dict[str, Any]) -> ValueRef:
        text = self._text(expr)
        callee, has_value, options = self._unwrap_call_options(expr.get("expression"))
        args = [a for a in expr.get("arguments") or [] if a is not None]
        arity = len(args)
        kind = node_type(callee)

        if kind == "Identifier":
            name = callee.get("name")
            if name in ("require", "assert"):
                operands = self.lower_condition(args[0]) if args else ()
                for extra in args[1:]:
                    self.lower_expr(extra)
                self._emit(InstrKind.CONDITION, expr, name=name, operands=operands)
                self._branch_to_revert()
                return ValueRef(text)
            values = [self.lower_expr(a) for a in args]
            if name == "revert":
                self._emit(InstrKind.SOLIDITY_CALL, expr, name="revert")
                self._edge(self.current, self._revert())
                self.current = None
                return ValueRef(text)
            if name in ("selfdestruct", "suicide"):
                self._emit(InstrKind.SOLIDITY_CALL, expr, name="selfdestruct", operands=tuple(values))
                return ValueRef(text)
            if name in HASH_BUILTINS:
                # hashing ends msg.sender dependence
                self._emit(InstrKind.SOLIDITY_CALL, expr, name=name, operands=tuple(values))
                return ValueRef(text)
            if name in OTHER_BUILTINS:
                self._emit(InstrKind.SOLIDITY_CALL, expr, name=name, operands=tuple(values))
                return ValueRef.join(text, values)
            if _ELEMENTARY_RE.match(name) or name in self.scope.contract_names or name in self.scope.type_names:
                return ValueRef.join(text, values)
            if name in self.scope.event_names:
                self._emit(InstrKind.OTHER, expr, name=name, operands=tuple(values))
                return ValueRef(text)
            target = CallTarget(name, arity)
            self._emit(InstrKind.INTERNAL_CALL, expr, callee=target, operands=tuple(values))
            joined = ValueRef.join(text, values)
            return ValueRef(text, joined.reads, (target,) + joined.calls)

        if kind == "MemberAccess":
            return self._lower_member_call(expr, callee, args, has_value, options)

        values = [self.lower_expr(a) for a in args]
        if kind in TYPE_CAST_NODES or isinstance(callee, str):
            # address(x), uint256(x), payable(x); `payable` arrives as a bare keyword
            return ValueRef.join(text, values)
        if kind == "NewExpression":
            self._emit(InstrKind.OTHER, expr, name="new", operands=tuple(values))
            return ValueRef.join(text, values)
        values.append(self.lower_expr(callee))
        self._emit(InstrKind.OTHER, expr, operands=tuple(values))
        return ValueRef.join(text, values)

    def _lower_member_call(self, expr, callee, args, has_value, options) -> ValueRef:
        text = self._text(expr)
        member = callee.get("memberName")
        base = callee.get("expression")
        arity = len(args)
        base_name = base.get("name") if node_type(base) == "Identifier" else None

        if base_name in GLOBAL_NAMESPACES and base_name not in self.local_types and base_name not in self.scope.state_vars:
            values = [self.lower_expr(a) for a in args]
            self._emit(InstrKind.SOLIDITY_CALL, expr, name=f"{base_name}.{member}", operands=tuple(values))
            return ValueRef.join(text, values)
        if base_name == "super" or (base_name in self.scope.contract_names and base_name not in self.local_types):
            values = [self.lower_expr(a) for a in args]
            target = CallTarget(member, arity, receiver=base_name)
            self._emit(InstrKind.INTERNAL_CALL, expr, callee=target, operands=tuple(values))
            joined = ValueRef.join(text, values)
            return ValueRef(text, joined.reads, (target,) + joined.calls)

        receiver = self.lower_expr(base)
        values = [self.lower_expr(a) for a in args]
        receiver_type = self.expr_type(base)
        is_contract = receiver_type in self.scope.contract_names
        joined = ValueRef.join(text, [receiver] + values)

        if member in LOW_LEVEL_MEMBERS and not is_contract:
            if has_value:
                self._emit(InstrKind.TRANSFER, expr, name=member, operands=(receiver,) + tuple(options))
            self._emit(InstrKind.LOW_LEVEL_CALL, expr, name=member, operands=(receiver,) + tuple(values))
            return joined
        if member in VALUE_TRANSFER_MEMBERS and arity == 1 and not is_contract:
            self._emit(InstrKind.TRANSFER, expr, name=member, operands=(receiver, values[0]))
            return joined
        if member in ("push", "pop"):
            self._lower_write(base, tuple(values), expr)
            return joined
        if receiver_type and not is_contract and receiver_type != "address" and (
            _ELEMENTARY_RE.match(receiver_type) or receiver_type.endswith("]") or receiver_type.startswith("mapping")
        ):
            # library function bound with `using ... for`
            target = CallTarget(member, arity + 1, receiver="using")
            self._emit(InstrKind.INTERNAL_CALL, expr, callee=target, operands=(receiver,) + tuple(values))
            return ValueRef(text, joined.reads, (target,) + joined.calls)

        receiver_label = "this" if base_name == "this" else (receiver_type if is_contract else None)
        target = CallTarget(member, arity, receiver=receiver_label, external=True)
        if self.scope.promotes_to_transfer(member):
            self._emit(InstrKind.TRANSFER, expr, name=member, operands=(receiver,) + tuple(values))
        self._emit(InstrKind.HIGH_LEVEL_CALL, expr, callee=target, operands=(receiver,) + tuple(values))
        return ValueRef(text, joined.reads, (target,) + joined.calls)

    # result
    def finish(self) -> Cfg:
        reachable = nx.descendants(self.graph, self.entry) | {self.entry}
        graph = self.graph.subgraph(sorted(reachable)).copy()
        mapping = {old: new for new, old in enumerate(sorted(graph.nodes))}
        graph = nx.relabel_nodes(graph, mapping, copy=True)
        for block in graph.nodes:
            graph.nodes[block]["instructions"] = tuple(graph.nodes[block]["instructions"])
        return Cfg(
            graph=graph,
            entry=mapping[self.entry],
            local_names=frozenset(self.local_types),
            return_names=tuple(self.return_names),
            unsupported=tuple(self.unsupported),
        )


def canonical_elementary(type_name: Any) -> str:
    name = type_name_text(type_name) if isinstance(type_name, dict) else str(type_name or "")
    return "address" if name.startswith("address") or name == "payable" else name


def build_cfg(function_node: Dict[str, Any], scope: ContractScope) -> Cfg:
    """Lower one function or modifier body. Bodiless declarations give a single empty entry block."""
    lowering = _Lowering(scope, function_node)
    body = function_node.get("body")
    if isinstance(body, dict):
        lowering.lower_statement(body)
    return lowering.finish()


def lower_body(function_node: Dict[str, Any], scope: ContractScope) -> List[IrInstruction]:
    """Every instruction of a body in index order, including statements no path reaches."""
    lowering = _Lowering(scope, function_node)
    body = function_node.get("body")
    if isinstance(body, dict):
        lowering.lower_statement(body)
    found = [i for b in lowering.graph.nodes for i in lowering.graph.nodes[b]["instructions"]]
    return sorted(found, key=lambda i: i.index)


_PRIORITY = (
    InstrKind.SOLIDITY_CALL, InstrKind.TRANSFER, InstrKind.LOW_LEVEL_CALL, InstrKind.STATE_WRITE,
    InstrKind.HIGH_LEVEL_CALL, InstrKind.INTERNAL_CALL, InstrKind.CONDITION, InstrKind.ASSIGN,
    InstrKind.RETURN, InstrKind.OTHER,
)


def classify_instruction(statement: Dict[str, Any], scope: ContractScope,
                         function_node: Optional[Dict[str, Any]] = None) -> Classification:
    """Dominant instruction kind of one statement; selfdestruct outranks everything else."""
    lowering = _Lowering(scope, function_node or {})
    lowering.lower_statement(statement)
    instructions = [i for b in lowering.graph.nodes for i in lowering.graph.nodes[b]["instructions"]]
    if any(i.kind == InstrKind.SOLIDITY_CALL and i.name == "selfdestruct" for i in instructions):
        return Classification(InstrKind.SOLIDITY_CALL, "selfdestruct")
    for kind in _PRIORITY:
        if kind == InstrKind.SOLIDITY_CALL:
            continue
        for instr in instructions:
            if instr.kind == kind:
                return Classification(kind, instr.name or (instr.callee.name if instr.callee else None))
    builtin = next((i for i in instructions if i.kind == InstrKind.SOLIDITY_CALL), None)
    if builtin:
        return Classification(InstrKind.SOLIDITY_CALL, builtin.name)
    return Classification(InstrKind.OTHER)

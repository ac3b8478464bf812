# solidity_frontend.py - parsing, function inventory, snippet extraction, normalization
import bisect
import logging
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from antlr4 import CommonTokenStream, InputStream
from antlr4.error.ErrorListener import ErrorListener
from solidity_parser.parser import AstVisitor, Node
from solidity_parser.solidity_antlr4.SolidityLexer import SolidityLexer
from solidity_parser.solidity_antlr4.SolidityParser import SolidityParser

from errors import ParseFailure, SignatureNotFound
from schemas import ContractFile, FunctionInfo, FunctionKind, FunctionSnippet, Visibility

logger = logging.getLogger(__name__)

# Node.ENABLE_LOC is class-level state inside the parser package
_PARSE_LOCK = threading.Lock()

# One lexeme starting at a token's first character; used to find where the last token of a node ends
_TOKEN_RE = re.compile(
    r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\''
    r"|0[xX][0-9a-fA-F_]+|\d[\d_]*(?:\.\d+)?(?:[eE]-?\d+)?"
    r"|[A-Za-z_$][\w$]*"
    r"|>>>=|>>>|<<=|>>=|\*\*|[-+*/%&|^<>=!]=|&&|\|\||\+\+|--|=>|->|<<|>>"
    r"|.",
    re.S,
)

_TYPE_ALIASES = {
    "uint": "uint256", "int": "int256", "byte": "bytes1", "fixed": "fixed128x18", "ufixed": "ufixed128x18",
    "addresspayable": "address",
}
_DATA_LOCATIONS = {"memory", "storage", "calldata", "payable", "indexed"}


class _DiagnosticCollector(ErrorListener):
    def __init__(self):
        super().__init__()
        self.diagnostics: List[Tuple[int, int, str]] = []

    def syntaxError(self, recognizer, offendingSymbol, line, column, msg, e):
        self.diagnostics.append((line, column, msg))


class _TreeBuilder(AstVisitor):
    """The parser's visitor with the node shapes the IR lowering relies on."""

    def visitReturnStatement(self, ctx):
        # the stock visitor returns the bare expression and loses the statement
        return Node(ctx=ctx, type="ReturnStatement", expression=self.visit(ctx.expression()))

    # no stock visitors; the default would hand back the trailing ';'
    def visitBreakStatement(self, ctx):
        return Node(ctx=ctx, type="BreakStatement")

    def visitContinueStatement(self, ctx):
        return Node(ctx=ctx, type="ContinueStatement")

    def visitExpression(self, ctx):
        if len(ctx.children) == 4 and ctx.getChild(1).getText() == "{":
            pairs = ctx.nameValueList().nameValue()
            return Node(ctx=ctx,
                        type="NameValueExpression",
                        expression=self.visit(ctx.getChild(0)),
                        names=[p.identifier().getText() for p in pairs],
                        arguments=[self.visit(p.expression()) for p in pairs])
        return super().visitExpression(ctx)

    def visitFunctionDefinition(self, ctx):
        node = super().visitFunctionDefinition(ctx)
        fd = ctx.functionDescriptor()
        if not (fd.identifier() or fd.ConstructorKeyword() or fd.FallbackKeyword() or fd.ReceiveKeyword()):
            # pre-0.6 unnamed fallback; the stock visitor names it after its whole text
            node["name"] = ""
            node["isFallback"] = True
        return node

    def visitCustomErrorDefinition(self, ctx):
        node = super().visitCustomErrorDefinition(ctx)
        node["name"] = ctx.identifier().getText()
        return node


# ---------------------------
# Syntax tree
# ---------------------------
@dataclass(frozen=True)
class SyntaxTree:
    """Parsed source unit. Nodes are the parser's dict nodes and are never mutated."""

    source: str
    root: Dict[str, Any]
    line_starts: Tuple[int, ...] = field(repr=False, default=())

    @classmethod
    def build(cls, source: str, root: Dict[str, Any]) -> "SyntaxTree":
        starts = [0]
        starts.extend(i + 1 for i, ch in enumerate(source) if ch == "\n")
        return cls(source=source, root=root, line_starts=tuple(starts))

    def contracts(self) -> List[Dict[str, Any]]:
        return [n for n in self.root.get("children") or [] if node_type(n) == "ContractDefinition"]

    def contract(self, name: str) -> Optional[Dict[str, Any]]:
        return next((c for c in self.contracts() if c.get("name") == name), None)

    def pragmas(self) -> List[Dict[str, Any]]:
        return [n for n in self.root.get("children") or [] if node_type(n) == "PragmaDirective"]

    def _offset(self, position: Dict[str, int]) -> int:
        line = max(1, int(position.get("line", 1)))
        if line > len(self.line_starts):
            return len(self.source)
        return min(len(self.source), self.line_starts[line - 1] + int(position.get("column", 0)))

    def span(self, node: Dict[str, Any]) -> Tuple[int, int]:
        loc = node.get("loc") if isinstance(node, dict) else None
        if not loc:
            return (0, 0)
        start = self._offset(loc["start"])
        stop = self._offset(loc["end"])
        match = _TOKEN_RE.match(self.source, stop) if stop < len(self.source) else None
        end = match.end() if match else stop
        return (start, max(start, end))

    def text(self, node: Dict[str, Any]) -> str:
        start, end = self.span(node)
        return self.source[start:end]

    def line(self, offset: int) -> int:
        return bisect.bisect_right(self.line_starts, offset)


def node_type(node: Any) -> Optional[str]:
    return node.get("type") if isinstance(node, dict) else None


def iter_nodes(node: Any) -> Iterator[Dict[str, Any]]:
    """Pre-order walk over every dict node below (and including) node."""
    stack = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, list):
            stack.extend(reversed(current))
        elif isinstance(current, dict):
            if "type" in current:
                yield current
            stack.extend(reversed([v for k, v in current.items() if k != "loc" and isinstance(v, (dict, list))]))


def parse(source: str) -> SyntaxTree:
    """Parse Solidity source; syntax errors raise ParseFailure with (line, column, message) diagnostics."""
    collector = _DiagnosticCollector()
    with _PARSE_LOCK:
        Node.ENABLE_LOC = True
        try:
            lexer = SolidityLexer(InputStream(source))
            lexer.removeErrorListeners()
            lexer.addErrorListener(collector)
            parser = SolidityParser(CommonTokenStream(lexer))
            parser.removeErrorListeners()
            parser.addErrorListener(collector)
            unit = parser.sourceUnit()
            if collector.diagnostics:
                raise ParseFailure(collector.diagnostics)
            root = _TreeBuilder().visit(unit)
        except ParseFailure:
            raise
        except RecursionError:
            raise ParseFailure([(0, 0, "source nesting too deep")])
        except Exception as e:
            raise ParseFailure(collector.diagnostics or [(0, 0, f"unsupported syntax: {e}")])
    if not isinstance(root, dict):
        raise ParseFailure([(0, 0, "parser produced no source unit")])
    return SyntaxTree.build(source, root)


# ---------------------------
# Types and signatures
# ---------------------------
def canonical_type(name: str) -> str:
    name = re.sub(r"^address\s*payable\b", "address", name.strip())
    match = re.match(r"^([A-Za-z_$][\w$.]*)(.*)$", name)
    if not match:
        return name.strip()
    base, rest = match.groups()
    return _TYPE_ALIASES.get(base, base) + rest.replace(" ", "")


def type_name_text(node: Any) -> str:
    kind = node_type(node)
    if kind == "ElementaryTypeName":
        return canonical_type(node.get("name") or "")
    if kind == "UserDefinedTypeName":
        return node.get("namePath") or ""
    if kind == "ArrayTypeName":
        length = node.get("length")
        size = length.get("number") if node_type(length) == "NumberLiteral" else ""
        return f"{type_name_text(node.get('baseTypeName'))}[{size}]"
    if kind == "Mapping":
        return f"mapping({type_name_text(node.get('keyType'))}=>{type_name_text(node.get('valueType'))})"
    if kind == "FunctionTypeName":
        return "function"
    return str(node.get("name") or kind or "") if isinstance(node, dict) else str(node or "")


def parameter_list(node: Any) -> List[Dict[str, Any]]:
    if isinstance(node, dict):
        node = node.get("parameters", [])
    return [p for p in node or [] if isinstance(p, dict)]


def _split_params(text: str) -> List[str]:
    parts, depth, current = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p.strip() for p in parts if p.strip()]


def _param_type(param: str) -> str:
    if param.startswith("mapping"):
        depth = 0
        for i, ch in enumerate(param):
            depth += ch == "("
            depth -= ch == ")"
            if ch == ")" and depth == 0:
                return re.sub(r"\s+", "", param[: i + 1])
    tokens = [t for t in param.split() if t not in _DATA_LOCATIONS]
    return canonical_type(tokens[0]) if tokens else ""


_SIGNATURE_RE = re.compile(r"^\s*(?:function\s+)?(?:([A-Za-z_$][\w$]*)\.)?([A-Za-z_$][\w$]*)\s*")


def _balanced_params(text: str, start: int) -> Optional[str]:
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "(":
            depth += 1
        elif text[i] == ")":
            depth -= 1
            if depth == 0:
                return text[start + 1:i]
    return None


def parse_signature(signature: str) -> Optional[Tuple[Optional[str], str, Optional[Tuple[str, ...]]]]:
    """'Contract.name(uint amount, address)' -> ('Contract', 'name', ('uint256', 'address'))."""
    text = signature or ""
    match = _SIGNATURE_RE.match(text)
    if not match:
        return None
    contract, name = match.groups()
    params = _balanced_params(text, match.end()) if text[match.end():match.end() + 1] == "(" else None
    types = None if params is None else tuple(_param_type(p) for p in _split_params(params))
    return contract, name, types


def match_signature(signature: str, functions: Sequence[FunctionInfo]) -> Optional[FunctionInfo]:
    """Resolve by name + arity + parameter types, ignoring parameter names; None unless unambiguous."""
    parsed = parse_signature(signature)
    if parsed is None:
        return None
    contract, name, types = parsed
    candidates = [
        f for f in functions
        if f.name == name and f.kind != FunctionKind.MODIFIER and (contract is None or f.contract_name == contract)
    ]
    if types is not None:
        candidates = [f for f in candidates if tuple(f.parameter_types) == types]
    return candidates[0] if len(candidates) == 1 else None


# ---------------------------
# Function inventory
# ---------------------------
def _kind_of(node: Dict[str, Any], contract_name: str) -> FunctionKind:
    if node_type(node) == "ModifierDefinition":
        return FunctionKind.MODIFIER
    name = node.get("name") or ""
    if node.get("isConstructor") or name == "constructor":
        return FunctionKind.CONSTRUCTOR
    if node.get("isReceive"):
        return FunctionKind.RECEIVE
    if node.get("isFallback") or name in ("", "fallback"):
        return FunctionKind.FALLBACK
    if name == contract_name:
        # pre-0.5.0 constructor; only an exact name match counts
        return FunctionKind.CONSTRUCTOR
    return FunctionKind.FUNCTION


def _visibility_of(node: Dict[str, Any], kind: FunctionKind) -> Visibility:
    if kind == FunctionKind.MODIFIER:
        return Visibility.INTERNAL
    try:
        return Visibility(node.get("visibility"))
    except ValueError:
        return Visibility.PUBLIC


def _display_name(node: Dict[str, Any], kind: FunctionKind) -> str:
    name = node.get("name") or ""
    if kind == FunctionKind.CONSTRUCTOR and name in ("", "constructor"):
        return "constructor"
    if kind == FunctionKind.FALLBACK:
        return "fallback"
    if kind == FunctionKind.RECEIVE:
        return "receive"
    return name


def function_info(tree: SyntaxTree, contract: Dict[str, Any], node: Dict[str, Any]) -> FunctionInfo:
    contract_name = contract.get("name") or ""
    kind = _kind_of(node, contract_name)
    return FunctionInfo(
        name=_display_name(node, kind),
        parameter_types=tuple(type_name_text(p.get("typeName")) for p in parameter_list(node.get("parameters"))),
        visibility=_visibility_of(node, kind),
        kind=kind,
        modifiers=tuple(m.get("name") for m in node.get("modifiers") or [] if isinstance(m, dict) and m.get("name")),
        contract_name=contract_name,
        source_span=tree.span(node),
    )


def function_nodes(tree: SyntaxTree) -> List[Tuple[FunctionInfo, Dict[str, Any], Dict[str, Any]]]:
    """(info, contract node, definition node) per function/modifier, source order, first definition wins."""
    seen = set()
    result = []
    for contract in tree.contracts():
        for sub in contract.get("subNodes") or []:
            if node_type(sub) not in ("FunctionDefinition", "ModifierDefinition"):
                continue
            info = function_info(tree, contract, sub)
            key = (info.contract_name, info.name, info.parameter_types, info.kind == FunctionKind.MODIFIER)
            if key in seen:
                logger.warning(f"Duplicate definition {info.qualified_name} ignored")
                continue
            seen.add(key)
            result.append((info, contract, sub))
    return result


def list_functions(tree: SyntaxTree) -> List[FunctionInfo]:
    return [info for info, _, _ in function_nodes(tree)]


def has_body(node: Dict[str, Any]) -> bool:
    return node_type(node.get("body")) == "Block"


def extract_snippet(file: ContractFile, signature: str, tree: Optional[SyntaxTree] = None) -> FunctionSnippet:
    tree = tree or parse(file.source)
    info = match_signature(signature, list_functions(tree))
    if info is None:
        raise SignatureNotFound(signature)
    start, end = info.source_span
    return FunctionSnippet(info=info, text=file.source[start:end], origin=file.path)


# ---------------------------
# Normalization
# ---------------------------
_LEXEME_RE = re.compile(
    r'(?P<str>"(?:\\.|[^"\\\n])*"|\'(?:\\.|[^\'\\\n])*\')'
    r"|(?P<line>//[^\n]*)"
    r"|(?P<block>/\*.*?(?:\*/|\Z))"
    r"|(?P<ws>\s+)"
    r"|(?P<code>[^\s\"'/]+|/|[\"'])",
    re.S,
)


@dataclass(frozen=True)
class NormalizedCode:
    text: str


def normalize(source: str) -> NormalizedCode:
    """Drop comments, collapse whitespace runs to one space, trim; string literals kept byte-exact."""
    pieces: List[str] = []
    pending_space = False
    for match in _LEXEME_RE.finditer(source):
        if match.lastgroup in ("line", "block", "ws"):
            pending_space = True
            continue
        if pending_space and pieces:
            pieces.append(" ")
        pending_space = False
        pieces.append(match.group(0))
    return NormalizedCode("".join(pieces))


def contains_unmodified(completed: str, original: FunctionSnippet) -> bool:
    return normalize(original.text).text in normalize(completed).text

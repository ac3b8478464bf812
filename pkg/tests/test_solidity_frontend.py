import random
import re

import pytest

from conftest import contract_file
from errors import ParseFailure, SignatureNotFound
from schemas import FunctionKind, Visibility
from solidity_frontend import (
    canonical_type, contains_unmodified, extract_snippet, iter_nodes, list_functions, match_signature, node_type,
    normalize, parse, parse_signature,
)

VAULT = """pragma solidity ^0.5.0;

contract Vault {
    uint256 public total;
    address public owner;

    modifier onlyOwner() {
        require(msg.sender == owner);
        _;
    }

    constructor() public {
        owner = msg.sender;
    }

    function deposit(uint amount) public {
        total += amount;
    }

    function deposit(uint256 amount, address from) public {
        total += amount;
    }

    function withdraw(uint256 amount) public onlyOwner {
        // owner only
        total -= amount;
    }

    function() external payable {}

    function helper() internal pure returns (uint256) {
        return 1;
    }
}
"""


def test_parse_reports_syntax_errors():
    with pytest.raises(ParseFailure) as info:
        parse("contract A { function f( public {} }")
    assert info.value.diagnostics
    line, column, message = info.value.diagnostics[0]
    assert line == 1 and message


def test_list_functions_inventory():
    functions = {f.signature: f for f in list_functions(parse(VAULT))}
    assert set(functions) == {
        "onlyOwner()", "constructor()", "deposit(uint256)", "deposit(uint256,address)",
        "withdraw(uint256)", "fallback()", "helper()",
    }
    assert functions["onlyOwner()"].kind == FunctionKind.MODIFIER
    assert functions["constructor()"].kind == FunctionKind.CONSTRUCTOR
    assert functions["fallback()"].kind == FunctionKind.FALLBACK
    assert functions["fallback()"].visibility == Visibility.EXTERNAL
    assert functions["helper()"].visibility == Visibility.INTERNAL
    assert not functions["helper()"].is_entry_point
    assert functions["withdraw(uint256)"].modifiers == ("onlyOwner",)
    assert functions["withdraw(uint256)"].qualified_name == "Vault.withdraw(uint256)"


def test_unnamed_fallback_gets_a_clean_signature():
    source = (
        "pragma solidity ^0.4.24;\n"
        "contract Tip {\n"
        "    address owner;\n"
        "    function() public payable { owner.transfer(1); }\n"
        "}\n"
    )
    (info,) = list_functions(parse(source))
    assert info.signature == "fallback()"
    assert info.kind == FunctionKind.FALLBACK
    assert info.visibility == Visibility.PUBLIC


MODERN = """pragma solidity ^0.8.4;

contract Modern {
    error NotOwner(address caller);

    address owner;
    uint256 total;

    function pay(address to, uint256 amount) external {
        if (msg.sender != owner) revert NotOwner(msg.sender);
        payable(to).call{value: amount, gas: 5000}("");
    }

    function sum(uint256 n) external returns (uint256) {
        for (uint256 i = 0; i < n; i++) {
            if (i == 3) continue;
            if (i == 7) break;
            unchecked { total += i; }
        }
        return total;
    }

    receive() external payable {}
}
"""


def test_modern_syntax_parses_into_lowerable_nodes():
    tree = parse(MODERN)
    nodes = list(iter_nodes(tree.root))
    kinds = {node_type(n) for n in nodes}
    assert {"ReturnStatement", "BreakStatement", "ContinueStatement", "RevertStatement", "UncheckedStatement"} <= kinds

    (error,) = [n for n in nodes if node_type(n) == "CustomErrorDefinition"]
    assert error["name"] == "NotOwner"

    (options,) = [n for n in nodes if node_type(n) == "NameValueExpression"]
    assert options["names"] == ["value", "gas"]
    assert tree.text(options) == "payable(to).call{value: amount, gas: 5000}"

    (ret,) = [n for n in nodes if node_type(n) == "ReturnStatement"]
    assert tree.text(ret["expression"]) == "total"

    functions = {f.signature: f.kind for f in list_functions(tree)}
    assert functions == {
        "pay(address,uint256)": FunctionKind.FUNCTION,
        "sum(uint256)": FunctionKind.FUNCTION,
        "receive()": FunctionKind.RECEIVE,
    }


def test_old_style_constructor_needs_exact_name():
    source = (
        "pragma solidity ^0.4.16;\n"
        "contract EAI_TokenERC {\n"
        "    uint256 public totalSupply;\n"
        "    function EAI_TokenERC() public { totalSupply = 1; }\n"
        "    function EAI_TokenERC20(uint256 initialSupply) public { totalSupply = initialSupply; }\n"
        "}\n"
    )
    kinds = {f.name: f.kind for f in list_functions(parse(source))}
    assert kinds["EAI_TokenERC"] == FunctionKind.CONSTRUCTOR
    assert kinds["EAI_TokenERC20"] == FunctionKind.FUNCTION


@pytest.mark.parametrize("raw,expected", [
    ("uint", "uint256"),
    ("int", "int256"),
    ("byte", "bytes1"),
    ("address payable", "address"),
    ("uint[]", "uint256[]"),
    ("bytes32", "bytes32"),
])
def test_canonical_type(raw, expected):
    assert canonical_type(raw) == expected


def test_parse_signature_ignores_parameter_names_and_locations():
    assert parse_signature("Vault.deposit(uint amount, address from)") == ("Vault", "deposit", ("uint256", "address"))
    assert parse_signature("function setName(string memory name)") == (None, "setName", ("string",))
    assert parse_signature("kill") == (None, "kill", None)
    assert parse_signature("(") is None


def test_match_signature_resolves_overloads():
    functions = list_functions(parse(VAULT))
    assert match_signature("deposit(uint)", functions).parameter_types == ("uint256",)
    assert match_signature("deposit(uint256 a, address b)", functions).parameter_types == ("uint256", "address")
    # ambiguous without parameter types
    assert match_signature("deposit", functions) is None
    assert match_signature("withdraw", functions).name == "withdraw"
    assert match_signature("Other.withdraw(uint256)", functions) is None
    # modifiers are never matched
    assert match_signature("onlyOwner()", functions) is None


def test_extract_snippet_returns_exact_source():
    file = contract_file(VAULT)
    snippet = extract_snippet(file, "withdraw(uint256)")
    assert snippet.text.startswith("function withdraw(uint256 amount) public onlyOwner {")
    assert snippet.text.endswith("}")
    assert "// owner only" in snippet.text
    start, end = snippet.info.source_span
    assert VAULT[start:end] == snippet.text
    assert snippet.origin == "Contract.sol"


def test_extract_snippet_unknown_signature():
    with pytest.raises(SignatureNotFound):
        extract_snippet(contract_file(VAULT), "transferOwnership(address)")


def test_normalize_drops_comments_and_collapses_whitespace():
    source = 'function f() {\n    // note\n    x = "a  //b";   /* block\n comment */ y = 1;\n}'
    assert normalize(source).text == 'function f() { x = "a  //b"; y = 1; }'


# ---------------------------
# Unmodified-function check
# ---------------------------
_WHITESPACE_VARIANTS = [" ", "\n", "\n\t", "   ", " /* kept */ ", " // trailing note\n", "\n\n    ", "\t/**/\t"]
_TOKEN_RE = re.compile(r"[A-Za-z_]\w*|\d+")


def _snippet():
    return extract_snippet(contract_file(VAULT), "deposit(uint256,address)")


def _in_contract(snippet_text: str) -> str:
    snippet = _snippet()
    start, end = snippet.info.source_span
    return VAULT[:start] + snippet_text + VAULT[end:]


def test_layout_only_mutations_never_flip_the_check():
    rng = random.Random(1234)
    snippet = _snippet()
    pieces = re.split(r"(\s+)", snippet.text)
    for _ in range(200):
        mutated = "".join(
            rng.choice(_WHITESPACE_VARIANTS) if piece.isspace() and rng.random() < 0.5 else piece
            for piece in pieces
        )
        assert contains_unmodified(_in_contract(mutated), snippet), mutated


def test_single_token_mutations_always_flip_the_check():
    rng = random.Random(4321)
    snippet = _snippet()
    tokens = list(_TOKEN_RE.finditer(snippet.text))
    for _ in range(200):
        token = rng.choice(tokens)
        replacement = token.group(0) + rng.choice(["X", "2", "_"])
        mutated = snippet.text[:token.start()] + replacement + snippet.text[token.end():]
        assert not contains_unmodified(_in_contract(mutated), snippet), mutated


def test_contains_unmodified_detects_injected_logic():
    snippet = _snippet()
    assert contains_unmodified(VAULT, snippet)
    injected = VAULT.replace("address from) public {\n        total += amount;", "address from) public {\n        total += amount;\n        total = 0;")
    assert injected != VAULT
    assert not contains_unmodified(injected, snippet)

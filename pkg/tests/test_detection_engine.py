import pytest

from conftest import MICRO_DIR, SAMPLES_DIR, contract_file, load_manifest
from detection_engine import (
    TraversalStats, access_control_search, build_fcg, detect, locate_analyzed_function, risky_actions_search,
)
from schemas import AcScope, AcStatus, CompletedContract, CompletionStatus, RiskyAction
from sensitive_extractor import locate_sensitive_heuristic
from solidity_frontend import extract_snippet, function_nodes, iter_nodes, node_type, parse


def analyze(source: str, origin: str = "Contract.sol"):
    completed = CompletedContract(source=source, origin=origin, status=CompletionStatus.COMPILED)
    tree = parse(source)
    fcg = build_fcg(completed, dict(locate_sensitive_heuristic(tree)), tree)
    return completed, fcg


def analyze_file(path):
    return analyze(path.read_text(encoding="utf-8"), path.name)


# ---------------------------
# Call graph
# ---------------------------
HUB = """pragma solidity ^0.5.0;

contract Hub {
    address owner;
    uint256 level;

    function a1() public { b1(); b2(); }
    function a2(uint256 v) public { b2(); c1(v); }
    function a3() public { this.a1(); }
    function b1() internal { c1(1); c2(); }
    function b2() internal { c2(); }
    function c1(uint256 v) internal { level = v; }
    function c2() internal { d1(); }
    function d1() internal view { require(msg.sender == owner); }
    function loop1() internal { loop2(); }
    function loop2() internal { loop1(); }
    function lonely() public { level = 0; }
    function ping(address target) public { target.call(""); Hub(target).a1(); }
}
"""


def direct_calls(source: str):
    """Caller -> callee pairs for plain `name(...)` calls, read straight off the syntax tree."""
    tree = parse(source)
    names = {info.name: info.qualified_name for info, _, _ in function_nodes(tree)}
    edges = set()
    for info, _, node in function_nodes(tree):
        for call in iter_nodes(node.get("body")):
            if node_type(call) != "FunctionCall" or node_type(call.get("expression")) != "Identifier":
                continue
            callee = call["expression"].get("name")
            if callee in names:
                edges.add((info.qualified_name, names[callee]))
    return edges


def test_call_graph_matches_direct_calls():
    _, fcg = analyze(HUB)
    assert fcg.graph.number_of_nodes() == 12

    internal = {(a, b) for a, b, data in fcg.graph.edges(data=True) if not data["external"]}
    external = {(a, b) for a, b, data in fcg.graph.edges(data=True) if data["external"]}
    assert internal == direct_calls(HUB)
    assert len(internal) == 10
    assert external == {("Hub.a3()", "Hub.a1()"), ("Hub.ping(address)", "Hub.a1()")}


MATH_LIBRARY = """pragma solidity ^0.8.0;

library Math {
    function clamp(uint256 v) internal pure returns (uint256) {
        return v > 100 ? 100 : v;
    }
}

contract Capped {
    uint256 level;

    function set(uint256 v) public {
        level = Math.clamp(v);
    }
}
"""


def test_user_library_named_math_is_a_call_graph_edge():
    _, fcg = analyze(MATH_LIBRARY)
    assert ("Capped.set(uint256)", "Math.clamp(uint256)") in fcg.edges()
    assert not fcg.unresolved.get("Capped.set(uint256)")


def test_internal_callees_are_ordered_by_call_site():
    _, fcg = analyze(HUB)
    callees = fcg.internal_callees("Hub.b1()")
    assert [key for key, _ in callees] == ["Hub.c1(uint256)", "Hub.c2()"]
    assert callees[0][1].index < callees[1][1].index
    # external self-calls change msg.sender and are not followed
    assert fcg.internal_callees("Hub.a3()") == []


def test_recursive_calls_terminate():
    _, fcg = analyze(HUB)
    assert access_control_search("Hub.loop1()", fcg) is None
    assert risky_actions_search("Hub.loop1()", fcg) == []


def test_callee_check_found_through_nested_calls():
    _, fcg = analyze(HUB)
    found = access_control_search("Hub.a1()", fcg)
    assert found.scope == AcScope.CALLEE
    assert found.path == ("b1", "c2", "d1")
    assert found.index == fcg.internal_callees("Hub.a1()")[0][1].index


# ---------------------------
# msg.sender dependence
# ---------------------------
TAINT = """pragma solidity ^0.5.0;

contract Taint {
    address owner;
    bytes32 ownerHash;
    uint256 value;
    mapping(address => uint256) balances;

    function _caller() internal view returns (address) {
        return msg.sender;
    }

    function _named() internal view returns (address who) {
        who = msg.sender;
    }

    function direct() public { require(msg.sender == owner); value = 1; }
    function aliased() public { address caller = msg.sender; require(caller == owner); value = 2; }
    function returned() public { require(_caller() == owner); value = 3; }
    function namedReturn() public { require(_named() == owner); value = 4; }
    function byBalance() public { require(balances[msg.sender] > 0); value = 5; }
    function origin() public { require(tx.origin == owner); value = 6; }
    function hashed() public { require(keccak256(abi.encodePacked(msg.sender)) == ownerHash); value = 7; }
    function branch() public { if (msg.sender != owner) { revert(); } value = 8; }
}
"""


@pytest.mark.parametrize("function,guarded", [
    ("direct()", True),
    ("aliased()", True),
    ("returned()", True),
    ("namedReturn()", True),
    ("byBalance()", True),
    ("origin()", False),
    ("hashed()", False),
    ("branch()", True),
])
def test_msg_sender_dependence(function, guarded):
    _, fcg = analyze(TAINT)
    found = access_control_search(f"Taint.{function}", fcg)
    assert (found is not None) == guarded
    if found:
        assert found.scope == AcScope.SELF


def test_callee_return_dependence_respects_depth():
    _, fcg = analyze(TAINT)
    assert access_control_search("Taint.returned()", fcg, max_depth=0) is None
    assert access_control_search("Taint.returned()", fcg, max_depth=1) is not None


# ---------------------------
# Searches
# ---------------------------
def test_modifier_check_sits_at_index_zero():
    _, fcg = analyze_file(SAMPLES_DIR / "simple_bank_modifier.sol")
    found = access_control_search("SimpleBankOwned.withdraw(uint256)", fcg)
    assert found.scope == AcScope.MODIFIER
    assert found.index == 0
    assert found.path == ("onlyOwner",)


def test_search_depth_bounds_the_callee_walk():
    _, fcg = analyze_file(MICRO_DIR / "w5_write_depth3_guard.sol")
    stats = TraversalStats()
    found = access_control_search("WriteDepthThreeGuard.setFee(uint256)", fcg, stats=stats)
    assert found.scope == AcScope.CALLEE
    assert found.path == ("_a", "_b", "_c")
    assert found.index == 1
    assert stats.max_depth == 3

    _, deeper = analyze_file(MICRO_DIR / "w6_write_depth4_guard.sol")
    stats = TraversalStats()
    assert access_control_search("WriteDepthFourGuard.setFee(uint256)", deeper, stats=stats) is None
    assert stats.max_depth <= 3
    found = access_control_search("WriteDepthFourGuard.setFee(uint256)", deeper, max_depth=4)
    assert found.path == ("_a", "_b", "_c", "_d")


def test_risky_state_write_in_token_initializer():
    _, fcg = analyze_file(SAMPLES_DIR / "eai_token.sol")
    found = risky_actions_search("EAI_TokenERC.EAI_TokenERC20(uint256,string,string)", fcg)
    assert [(r.action, r.index) for r in found] == [(RiskyAction.RISKY_STATE_WRITE, 1)]


ACTIONS = """pragma solidity ^0.5.0;

contract Actions {
    address payable owner;
    mapping(address => uint256) balances;

    function both(address payable to) public {
        balances[to] = 0;
        to.transfer(1);
        to.call("");
    }

    function viaCallee() public {
        uint256 start = 1;
        _pay();
    }

    function _pay() internal {
        owner.transfer(1);
    }
}
"""


def test_transfers_and_writes_together_are_not_risky():
    _, fcg = analyze(ACTIONS)
    found = risky_actions_search("Actions.both(address)", fcg)
    assert [r.action for r in found] == [RiskyAction.LOW_LEVEL_CALL]


def test_callee_actions_sit_at_the_call_site():
    _, fcg = analyze(ACTIONS)
    (found,) = risky_actions_search("Actions.viaCallee()", fcg)
    site = fcg.internal_callees("Actions.viaCallee()")[0][1]
    assert found.action == RiskyAction.RISKY_TRANSFER
    assert found.index == site.index == 2
    assert found.span == site.span


# ---------------------------
# Detection
# ---------------------------
def test_detect_unprotected_selfdestruct():
    completed, fcg = analyze_file(SAMPLES_DIR / "ether_charity.sol")
    (finding,) = detect(completed, fcg)
    assert finding.contract_name == "EtherCharity"
    assert finding.function == "donate(address)"
    assert finding.risky_action == RiskyAction.SELFDESTRUCT
    assert finding.ac_status == AcStatus.NO_CHECK
    assert finding.ac_location is None
    assert finding.location.line == 10
    assert completed.source[finding.location.start:finding.location.end] == "selfdestruct(beneficiary)"
    assert finding.provenance.path == "ether_charity.sol"


def test_detect_check_after_action():
    completed, fcg = analyze_file(MICRO_DIR / "t2_transfer_check_after.sol")
    (finding,) = detect(completed, fcg)
    assert finding.ac_status == AcStatus.CHECK_AFTER_ACTION
    assert finding.ac_location.index > finding.location.index


@pytest.mark.parametrize("name", ["simple_bank.sol", "simple_bank_guarded.sol", "ether_charity_guarded.sol",
                                  "ether_charity_modifier.sol", "eai_token_guarded.sol", "eai_token_modifier.sol"])
def test_guarded_sample_contracts_are_clean(name):
    completed, fcg = analyze_file(SAMPLES_DIR / name)
    assert detect(completed, fcg) == []


def _guard_every_sensitive_function(source: str) -> str:
    tree = parse(source)
    opening = []
    for qualified, _ in locate_sensitive_heuristic(tree):
        info = next(i for i, _, _ in function_nodes(tree) if i.qualified_name == qualified)
        opening.append(source.index("{", info.source_span[0]) + 1)
    for offset in sorted(opening, reverse=True):
        source = source[:offset] + " require(msg.sender == address(0x1)); " + source[offset:]
    return source


def test_leading_guard_clears_every_finding():
    manifest = load_manifest(MICRO_DIR)
    flagged = sorted({row["path"] for row in manifest["findings"]})
    for name in flagged:
        source = (MICRO_DIR / name).read_text(encoding="utf-8")
        completed, fcg = analyze(source, name)
        assert detect(completed, fcg), name
        completed, fcg = analyze(_guard_every_sensitive_function(source), name)
        assert detect(completed, fcg) == [], name


def test_findings_are_order_sound_across_the_corpus():
    for path in sorted(MICRO_DIR.glob("*.sol")):
        completed, fcg = analyze_file(path)
        for finding in detect(completed, fcg):
            if finding.ac_status == AcStatus.CHECK_AFTER_ACTION:
                assert finding.ac_location.index > finding.location.index
            else:
                assert finding.ac_location is None


INTERNAL = """pragma solidity ^0.5.0;

contract Internal {
    address owner;
    uint256 supply;
    uint256 reserve;

    function go() public { _wipe(); }
    function safe() public { require(msg.sender == owner); _drain(); }
    function _wipe() internal { supply = 0; }
    function _drain() internal { reserve = 0; }
}
"""


def test_internal_functions_reachable_without_a_check():
    completed, fcg = analyze(INTERNAL)
    assert detect(completed, fcg) == []

    findings = detect(completed, fcg, include_internal_reachable=True)
    assert [(f.function, f.risky_action, f.ac_status) for f in findings] == [
        ("_wipe()", RiskyAction.RISKY_STATE_WRITE, AcStatus.NO_CHECK),
    ]


def test_detect_can_be_restricted_to_one_function():
    completed, fcg = analyze(ACTIONS)
    findings = detect(completed, fcg, only=["Actions.both(address)"])
    assert [(f.function, f.risky_action) for f in findings] == [("both(address)", RiskyAction.LOW_LEVEL_CALL)]


def test_locate_analyzed_function_in_completed_source():
    original = contract_file((MICRO_DIR / "t1_transfer_no_check.sol").read_text(encoding="utf-8"))
    snippet = extract_snippet(original, "payout(address,uint256)")
    completed = "pragma solidity ^0.5.0;\n\ncontract Wrapper {\n    uint256 unused;\n\n" + snippet.text + "\n}\n"
    found = locate_analyzed_function(parse(completed), snippet)
    assert found.qualified_name == "Wrapper.payout(address,uint256)"
    assert locate_analyzed_function(parse("contract Empty {}"), snippet) is None

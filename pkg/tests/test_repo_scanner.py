import random

import pytest

from conftest import offline_config, write_files
from config import DEFAULT_EXCLUDED_DIRS
from errors import MalformedPragma, RootNotFound
from repo_scanner import PathClass, classify_path, extract_pragma, normalize_constraint, read_contract, scan_repository


def test_classify_path_excludes_directory_segments_only():
    excluded = ["test", "mocks"]
    assert classify_path("contracts/Token.sol", excluded) == PathClass.INCLUDE
    assert classify_path("contracts/test/Helper.sol", excluded) == PathClass.EXCLUDE
    assert classify_path("Mocks/Fake.sol", excluded) == PathClass.EXCLUDE
    # file names never match
    assert classify_path("contracts/test.sol", excluded) == PathClass.INCLUDE
    assert classify_path("contracts/testing/Util.sol", excluded) == PathClass.INCLUDE


def test_classify_path_matches_segment_oracle():
    rng = random.Random(7)
    segments = ["contracts", "src", "test", "Tests", "lib", "utils", "UTIL", "mock", "core", "interfaces", "token"]
    excluded = set(DEFAULT_EXCLUDED_DIRS)
    for _ in range(50):
        depth = rng.randint(0, 4)
        parts = [rng.choice(segments) for _ in range(depth)] + [rng.choice(["A.sol", "test.sol", "utils.sol"])]
        path = "/".join(parts)
        expected = PathClass.EXCLUDE if any(p.lower() in excluded for p in parts[:-1]) else PathClass.INCLUDE
        assert classify_path(path, DEFAULT_EXCLUDED_DIRS) == expected, path


@pytest.mark.parametrize("raw,expected", [
    ("^0.8.0", "^0.8.0"),
    (">= 0.5.0 < 0.6.0", ">=0.5.0 <0.6.0"),
    (">0.4.99<0.6.0", ">0.4.99 <0.6.0"),
    ("  0.4.24 ", "0.4.24"),
])
def test_normalize_constraint(raw, expected):
    assert normalize_constraint(raw) == expected


def test_extract_pragma_reads_first_directive_outside_comments():
    source = "// pragma solidity ^0.4.0;\n/* pragma solidity 0.5.0; */\npragma solidity ^0.8.0;\ncontract A {}\n"
    spec = extract_pragma(source)
    assert str(spec) == "^0.8.0"


def test_extract_pragma_absent():
    assert extract_pragma("contract A {}") is None


def test_extract_pragma_malformed():
    with pytest.raises(MalformedPragma):
        extract_pragma("pragma solidity ^0.8.0\ncontract A {}")
    with pytest.raises(MalformedPragma):
        extract_pragma("pragma solidity not-a-version;\ncontract A {}")


def test_read_contract_keeps_malformed_pragma_in_scope(tmp_path):
    write_files(tmp_path, {"A.sol": "pragma solidity banana;\ncontract A {}\n"})
    file = read_contract(tmp_path, "A.sol")
    assert file.version_constraint is None
    assert "banana" in file.pragma_error


def test_scan_repository_walks_sorted_and_prunes(tmp_path):
    write_files(tmp_path, {
        "contracts/Token.sol": "pragma solidity ^0.8.0;\ncontract Token {}\n",
        "contracts/interfaces/IToken.sol": "interface IToken {}\n",
        "contracts/Bank.sol": "pragma solidity >=0.5.0 <0.6.0;\ncontract Bank {}\n",
        "test/Mock.sol": "contract Mock {}\n",
        "contracts/utils.sol": "contract Utils {}\n",
        "README.md": "not solidity",
    })
    (tmp_path / "contracts" / "Broken.sol").write_bytes(b"contract \xff\xfe {}")

    scan = scan_repository(offline_config(tmp_path))

    assert [f.path for f in scan.files] == ["contracts/Bank.sol", "contracts/Token.sol", "contracts/utils.sol"]
    assert scan.excluded == ["contracts/interfaces/IToken.sol", "test/Mock.sol"]
    assert [path for path, _ in scan.unreadable] == ["contracts/Broken.sol"]
    assert scan.files[0].version_constraint == ">=0.5.0 <0.6.0"


def test_scan_repository_custom_excludes(tmp_path):
    write_files(tmp_path, {"vendor/A.sol": "contract A {}", "src/B.sol": "contract B {}"})
    scan = scan_repository(offline_config(tmp_path, excluded_dirs="vendor"))
    assert [f.path for f in scan.files] == ["src/B.sol"]


def test_scan_repository_empty(tmp_path):
    scan = scan_repository(offline_config(tmp_path))
    assert scan.files == [] and scan.excluded == [] and scan.unreadable == []


def test_scan_repository_missing_root(tmp_path):
    with pytest.raises(RootNotFound):
        scan_repository(offline_config(tmp_path / "nope"))

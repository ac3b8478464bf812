import os
import stat
import sys
from pathlib import Path

import pytest

from compiler_driver import ParseOnlyDriver, SolcDriver, constraint_for, make_driver, parse_diagnostics
from conftest import offline_config
from errors import CompilerCrash, CompilerUnavailable
from schemas import Severity

posix_only = pytest.mark.skipif(sys.platform == "win32", reason="fake solc binaries are shell scripts")


def fake_solc(path: Path, body: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("#!/bin/sh\n" + body + "\n", encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return path


def test_parse_diagnostics_legacy_format():
    output = "Contract.sol:3:5: ParserError: Expected ';' but got '}'\n    }\n    ^\nContract.sol:7:9: Warning: Unused local variable.\n"
    diagnostics = parse_diagnostics(output)
    assert [(d.severity, d.location) for d in diagnostics] == [
        (Severity.ERROR, "Contract.sol:3:5"),
        (Severity.WARNING, "Contract.sol:7:9"),
    ]
    assert diagnostics[0].message == "ParserError: Expected ';' but got '}'"


def test_parse_diagnostics_current_format():
    output = (
        "DeclarationError: Undeclared identifier.\n"
        " --> Contract.sol:6:9:\n"
        "  |\n"
        "6 |         owner = msg.sender;\n"
        "Warning (2072): Unused local variable.\n"
        " --> Contract.sol:9:5:\n"
    )
    diagnostics = parse_diagnostics(output)
    assert [(d.severity, d.message, d.location) for d in diagnostics] == [
        (Severity.ERROR, "DeclarationError: Undeclared identifier.", "Contract.sol:6:9"),
        (Severity.WARNING, "Warning: Unused local variable.", "Contract.sol:9:5"),
    ]


def test_constraint_for_prefers_file_pragma():
    assert constraint_for("^0.4.24", "pragma solidity ^0.8.0; contract A {}") == "^0.4.24"
    assert constraint_for(None, "pragma solidity ^0.8.0; contract A {}") == "^0.8.0"
    assert constraint_for(None, "contract A {}") is None
    assert constraint_for(None, "pragma solidity nope; contract A {}") is None


@posix_only
def test_solc_driver_selects_installed_versions(tmp_path):
    fake_solc(tmp_path / "solc-v0.8.19", "exit 0")
    fake_solc(tmp_path / "solc-0.5.17" / "solc", "exit 0")
    fake_solc(tmp_path / "solc-v0.4.26", "exit 0")
    (tmp_path / "notes.txt").write_text("ignored", encoding="utf-8")

    driver = SolcDriver(tmp_path)
    assert sorted(str(v) for v in driver.installed()) == ["0.4.26", "0.5.17", "0.8.19"]
    assert str(driver.select("^0.5.0")[0]) == "0.5.17"
    assert str(driver.select(">=0.4.20 <0.6.0")[0]) == "0.5.17"
    assert str(driver.select(None)[0]) == "0.8.19"
    with pytest.raises(CompilerUnavailable):
        driver.select("^0.7.0")


def test_solc_driver_without_binaries(tmp_path):
    with pytest.raises(CompilerUnavailable):
        SolcDriver(tmp_path / "empty").compile("contract A {}")


@posix_only
def test_solc_driver_reports_errors(tmp_path):
    fake_solc(tmp_path / "solc-v0.8.19", "echo \"Contract.sol:3:5: ParserError: Expected ';'\" >&2\nexit 1")
    result = SolcDriver(tmp_path).compile("contract A {", "^0.8.0")
    assert not result.success
    assert result.compiler_version == "0.8.19"
    assert [d.message for d in result.errors] == ["ParserError: Expected ';'"]
    assert "ParserError" in result.output


@posix_only
def test_solc_driver_success_and_source_file(tmp_path):
    # exits 0 only when handed the temp source by name
    fake_solc(tmp_path / "solc-v0.8.19", 'cat "$1" > /dev/null && test "$1" = "Contract.sol" && exit 0\nexit 3')
    result = SolcDriver(tmp_path).compile("contract A {}", "^0.8.0")
    assert result.success
    assert result.diagnostics == ()


@posix_only
def test_solc_driver_failure_without_diagnostics(tmp_path):
    fake_solc(tmp_path / "solc-v0.8.19", "echo 'something odd' && exit 1")
    result = SolcDriver(tmp_path).compile("contract A {}")
    assert not result.success
    assert result.errors[0].message == "something odd"


@posix_only
def test_solc_driver_timeout_is_a_crash(tmp_path):
    fake_solc(tmp_path / "solc-v0.8.19", "sleep 5")
    with pytest.raises(CompilerCrash):
        SolcDriver(tmp_path, timeout=0.2).compile("contract A {}")


def test_parse_only_driver():
    driver = ParseOnlyDriver()
    ok = driver.compile("pragma solidity ^0.8.0;\ncontract A { function f() public {} }\n")
    assert ok.success and ok.compiler_version == "parse-only"

    broken = driver.compile("contract A { function f( public {} }")
    assert not broken.success
    assert broken.errors[0].message.startswith("ParserError:")
    assert broken.errors[0].location.startswith("Contract.sol:1:")

    empty = driver.compile("pragma solidity ^0.8.0;\n")
    assert not empty.success


def test_make_driver_follows_config(tmp_path):
    assert isinstance(make_driver(offline_config(tmp_path)), ParseOnlyDriver)
    assert isinstance(make_driver(offline_config(tmp_path, compiler="solc", compiler_dir=str(tmp_path))), SolcDriver)


@pytest.mark.solc
@pytest.mark.skipif(not os.getenv("ACSCAN_SOLC_DIR"), reason="set ACSCAN_SOLC_DIR to run against real solc binaries")
def test_real_solc_compiles_simple_bank():
    source = (Path(__file__).parent / "fixtures" / "samples" / "simple_bank.sol").read_text(encoding="utf-8")
    result = SolcDriver(Path(os.environ["ACSCAN_SOLC_DIR"])).compile(source, "^0.8.0")
    assert result.success, result.output

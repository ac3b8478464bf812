import shutil

import pytest

from conftest import MICRO_DIR, SAMPLES_DIR, finding_rows, load_manifest, manifest_rows, offline_config, write_files
from errors import RootNotFound
from pipeline import Pipeline, run_pipeline
from report import canonical_json, exit_status
from schemas import CompletionStatus, FileState


def test_micro_corpus_findings():
    report = run_pipeline(offline_config(MICRO_DIR))
    manifest = load_manifest(MICRO_DIR)
    assert finding_rows(report.findings) == manifest_rows(manifest)

    s = report.summary
    assert s.files_scanned == len(manifest["sensitive"])
    assert s.sensitive_functions == sum(len(v) for v in manifest["sensitive"].values())
    assert s.vulnerable == len({(r["path"], r["function"]) for r in manifest["findings"]})
    assert s.sensitive_functions == s.vulnerable + s.clean + s.failed
    assert s.failed == 0
    assert s.completions_attempted == s.compiled == s.sensitive_functions
    assert s.completion_success_rate == 1.0
    assert exit_status(report) == 1


def test_sample_contracts():
    report = run_pipeline(offline_config(SAMPLES_DIR))
    manifest = load_manifest(SAMPLES_DIR)
    assert finding_rows(report.findings) == manifest_rows(manifest)
    assert report.summary.sensitive_functions == 9
    assert (report.summary.vulnerable, report.summary.clean) == (2, 7)


def test_findings_point_into_the_original_file():
    report = run_pipeline(offline_config(SAMPLES_DIR))
    (charity,) = [f for f in report.findings if f.provenance.path == "ether_charity.sol"]
    source = (SAMPLES_DIR / "ether_charity.sol").read_text(encoding="utf-8")
    assert source[charity.location.start:charity.location.end] == "selfdestruct(beneficiary)"
    assert charity.location.line == 10


def test_reports_are_deterministic():
    first = canonical_json(run_pipeline(offline_config(MICRO_DIR, workers=4)))
    second = canonical_json(run_pipeline(offline_config(MICRO_DIR, workers=4)))
    assert first == second


def test_reports_do_not_depend_on_machine_settings(tmp_path):
    first_root = shutil.copytree(SAMPLES_DIR, tmp_path / "a" / "samples")
    second_root = shutil.copytree(SAMPLES_DIR, tmp_path / "b" / "samples")
    first = run_pipeline(offline_config(first_root, workers=1, compiler_dir=str(tmp_path / "solc-a")))
    second = run_pipeline(offline_config(second_root, workers=3, compiler_dir=str(tmp_path / "solc-b")))
    assert canonical_json(first) == canonical_json(second)
    assert not {"workers", "root", "compiler_dir"} & set(first.config)
    assert first.config["compiler"] == "parse-only"


def test_single_contract_mode():
    report = run_pipeline(offline_config(SAMPLES_DIR, mode="single"))
    assert finding_rows(report.findings) == manifest_rows(load_manifest(SAMPLES_DIR))
    assert report.summary.completions_attempted == 0
    assert {s.function for s in report.snippets} == {"*"}


def test_empty_repository(tmp_path):
    report = run_pipeline(offline_config(tmp_path))
    assert report.files == ()
    assert report.findings == ()
    assert report.summary.files_discovered == 0
    assert report.summary.completion_success_rate is None
    assert exit_status(report) == 0


def test_missing_root_aborts(tmp_path):
    with pytest.raises(RootNotFound):
        run_pipeline(offline_config(tmp_path / "absent"))


def test_file_states(tmp_path):
    source = (MICRO_DIR / "s1_selfdestruct_no_check.sol").read_text(encoding="utf-8")
    write_files(tmp_path, {
        "contracts/Kill.sol": source,
        "mocks/MockKill.sol": source,
        "contracts/Broken.sol": "contract Broken { function f( public {} }",
    })
    report = run_pipeline(offline_config(tmp_path))
    states = {f.path: f.status for f in report.files}
    assert states == {
        "contracts/Broken.sol": FileState.PARSE_FAILED,
        "contracts/Kill.sol": FileState.SCANNED,
        "mocks/MockKill.sol": FileState.EXCLUDED,
    }
    assert [f.provenance.path for f in report.findings] == ["contracts/Kill.sol"]
    assert report.summary.files_failed == 1
    assert report.summary.files_excluded == 1


def test_time_limit_turns_snippets_into_failures():
    report = run_pipeline(offline_config(SAMPLES_DIR, time_limit=1e-9))
    s = report.summary
    assert report.findings == ()
    assert s.failed == s.sensitive_functions == 9
    assert all(snippet.status == CompletionStatus.COMPILE_FAILED for snippet in report.snippets)
    assert all("time limit" in failure.reason for failure in report.failures)


def test_dump_cfg_writes_one_graph_per_function(tmp_path):
    config = offline_config(SAMPLES_DIR, dump_cfg_dir=str(tmp_path / "cfg"))
    Pipeline(config).run()
    dumped = sorted(p.name for p in (tmp_path / "cfg").glob("*.dot"))
    assert "ether_charity.sol__EtherCharity.donate_address_.dot" in dumped
    assert "simple_bank_modifier.sol__SimpleBankOwned.onlyOwner_.dot" in dumped

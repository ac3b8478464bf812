import json

import pytest

from cli import main
from config import SAMPLE_CONFIG
from conftest import MICRO_DIR, SAMPLES_DIR, load_manifest, write_files

OFFLINE = ["--compiler", "parse-only", "--llm", "off", "--workers", "1"]


@pytest.fixture(autouse=True)
def isolated_cwd(tmp_path, monkeypatch):
    # keeps a stray ./acscan.env out of the runs
    monkeypatch.chdir(tmp_path)


def test_scan_with_findings_exits_one(tmp_path):
    out = tmp_path / "report.json"
    assert main(["scan", str(SAMPLES_DIR), *OFFLINE, "-f", "json", "-o", str(out), "-q"]) == 1
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["summary"]["findings"] == 2
    assert report["config"]["compiler"] == "parse-only"


def test_clean_scan_exits_zero(tmp_path, capsys):
    repo = write_files(tmp_path / "repo", {
        "Guarded.sol": (SAMPLES_DIR / "ether_charity_guarded.sol").read_text(encoding="utf-8"),
    })
    assert main(["scan", str(repo), *OFFLINE, "-q"]) == 0
    assert "Findings: 0" in capsys.readouterr().out


def test_scan_errors_exit_two(tmp_path):
    assert main(["scan", str(tmp_path / "missing"), *OFFLINE]) == 2
    assert main(["scan", str(SAMPLES_DIR), *OFFLINE, "--max-depth", "0"]) == 2
    assert main(["scan", str(SAMPLES_DIR), "--compiler", "parse-only", "--llm", "replay"]) == 2


def test_config_file_values_apply(tmp_path):
    config = tmp_path / "scan.env"
    config.write_text("COMPILER=parse-only\nLLM=off\nWORKERS=1\nFORMAT=sarif\n", encoding="utf-8")
    out = tmp_path / "report.sarif"
    assert main(["scan", str(SAMPLES_DIR), "-c", str(config), "-o", str(out), "-q"]) == 1
    assert json.loads(out.read_text(encoding="utf-8"))["version"] == "2.1.0"

    config.write_text("COLOR=blue\n", encoding="utf-8")
    assert main(["scan", str(SAMPLES_DIR), "-c", str(config)]) == 2


def test_init_writes_sample_config(tmp_path):
    assert main(["init"]) == 0
    assert (tmp_path / "acscan.env").read_text(encoding="utf-8") == SAMPLE_CONFIG
    assert main(["init"]) == 2
    assert main(["init", "--force"]) == 0


def test_evaluate_prints_metrics(tmp_path, capsys):
    labels = tmp_path / "labels.json"
    labels.write_text(json.dumps(load_manifest(MICRO_DIR)["sensitive"]), encoding="utf-8")
    assert main(["evaluate", str(MICRO_DIR), str(labels), "--llm", "off", "-q"]) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["precision"] == 1.0
    assert metrics["recall"] == 1.0


def test_evaluate_missing_labels_file(tmp_path):
    assert main(["evaluate", str(MICRO_DIR), str(tmp_path / "nope.json")]) == 2


def test_no_command_prints_help(capsys):
    assert main([]) == 2
    assert "scan" in capsys.readouterr().out

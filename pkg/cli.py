#!/usr/bin/env python3
"""
acscan - access-control vulnerability scanner for Solidity repositories

Commands:
  scan      analyze a repository and emit a report (exit 0 clean, 1 findings, 2 error)
  init      write a sample configuration file
  evaluate  score the sensitive-function extractor against hand labels
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from config import SAMPLE_CONFIG, TOOL_NAME, TOOL_VERSION, LlmMode, build_config, read_config_file
from errors import ScanError
from llm_gateway import LlmGateway
from pipeline import run_pipeline
from repo_scanner import read_contract
from report import EXIT_ERROR, OutputFormat, emit_report
from sensitive_extractor import evaluate_file, evaluate_labels

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_NAME = "acscan.env"


def _configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(message)s", stream=sys.stderr, force=True)


def _file_values(path: Optional[str]) -> Dict[str, str]:
    if path:
        return read_config_file(Path(path))
    default = Path(DEFAULT_CONFIG_NAME)
    return read_config_file(default) if default.is_file() else {}


def _overrides(args: argparse.Namespace) -> Dict:
    return {
        "mode": args.mode,
        "excluded_dirs": args.exclude_dirs,
        "max_call_depth": args.max_depth,
        "time_limit": args.time_limit,
        "reflection_max_iters": args.max_reflections,
        "llm": args.llm,
        "compiler": args.compiler,
        "compiler_dir": args.compiler_dir,
        "use_heuristic": False if args.no_heuristic else None,
        "include_internal_reachable": True if args.include_internal else None,
        "transfer_patterns": args.transfer_patterns,
        "workers": args.workers,
        "dump_cfg_dir": args.dump_cfg,
    }


# ---------------------------
# Commands
# ---------------------------
def cmd_scan(args: argparse.Namespace) -> int:
    try:
        file_values = _file_values(args.config)
        config = build_config(args.root, file_values, **_overrides(args))
        fmt = OutputFormat(args.format or file_values.get("FORMAT", OutputFormat.TEXT.value))
        out = args.out or file_values.get("OUT")
        report = run_pipeline(config)
        return emit_report(report, fmt, Path(out) if out else None)
    except ValueError as e:
        logger.error(f"❌ {e}")
        return EXIT_ERROR
    except ScanError as e:
        logger.error(f"❌ Scan failed: {e}")
        return EXIT_ERROR


def cmd_init(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        logger.error(f"❌ {path} already exists (use --force to overwrite)")
        return EXIT_ERROR
    path.write_text(SAMPLE_CONFIG, encoding="utf-8")
    logger.info(f"✅ Created {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Manifest: JSON object mapping repository-relative paths to lists of 'Contract.function(types)'."""
    try:
        root = Path(args.root)
        manifest: Dict[str, List[str]] = json.loads(Path(args.labels).read_text(encoding="utf-8"))
        config = build_config(root, _file_values(args.config), llm=args.llm,
                              use_heuristic=False if args.no_heuristic else None)
        gateway = LlmGateway.from_settings(config.llm) if config.llm.mode != LlmMode.OFF else None
        predicted, expected, universe = [], [], []
        for relative, labels in sorted(manifest.items()):
            file = read_contract(root, relative)
            p, e, u = evaluate_file(file, labels, gateway, config.use_heuristic)
            predicted += [f"{relative}::{name}" for name in p]
            expected += [f"{relative}::{name}" for name in e]
            universe += [f"{relative}::{name}" for name in u]
        metrics = evaluate_labels(predicted, expected, universe)
    except (ScanError, OSError, ValueError) as e:
        logger.error(f"❌ Evaluation failed: {e}")
        return EXIT_ERROR
    sys.stdout.write(json.dumps(metrics.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="Access-control vulnerability scanner for Solidity repositories",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  acscan scan ./contracts                               Offline scan (heuristic extractor)
  acscan scan ./contracts --llm record:calls.jsonl      Live LLM, transcript recorded
  acscan scan ./contracts --llm replay:calls.jsonl -f sarif -o report.sarif
  acscan scan ./contracts --mode single                 Treat every function as sensitive
  acscan init                                           Create acscan.env
""",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    scan = subparsers.add_parser("scan", help="Scan a repository for access-control vulnerabilities")
    scan.add_argument("root", help="Repository root directory")
    scan.add_argument("--mode", choices=["repo", "single"], help="repo (default) or single-contract mode")
    scan.add_argument("--exclude-dirs", help="Comma-separated directory names to skip")
    scan.add_argument("--max-depth", type=int, help="Call depth searched for checks and actions (default 3)")
    scan.add_argument("--time-limit", help="Budget per contract, e.g. 90s, 30m (default 30m)")
    scan.add_argument("--max-reflections", type=int, help="Self-reflection rounds per snippet (default 5)")
    scan.add_argument("--llm", help="off | live | record:FILE | replay:FILE (default off)")
    scan.add_argument("-f", "--format", choices=[f.value for f in OutputFormat], help="Output format (default text)")
    scan.add_argument("-o", "--out", help="Output file (default stdout)")
    scan.add_argument("-c", "--config", help=f"Config file (default ./{DEFAULT_CONFIG_NAME} if present)")
    scan.add_argument("--compiler", choices=["solc", "parse-only"], help="Compiler driver (default solc)")
    scan.add_argument("--compiler-dir", help="Directory of solc-v<version> binaries")
    scan.add_argument("--workers", type=int, help="Worker threads (default: CPU count)")
    scan.add_argument("--dump-cfg", help="Write one DOT file per analyzed function into this directory")
    scan.add_argument("--include-internal", action="store_true",
                      help="Also report internal functions reachable from an unguarded entry point")
    scan.add_argument("--transfer-patterns", help="Comma-separated call names treated as transfers, e.g. transfer*")
    scan.add_argument("--no-heuristic", action="store_true", help="Use only the LLM to locate sensitive functions")
    scan.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    scan.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    scan.set_defaults(handler=cmd_scan)

    init = subparsers.add_parser("init", help="Create a sample configuration file")
    init.add_argument("path", nargs="?", default=DEFAULT_CONFIG_NAME)
    init.add_argument("--force", action="store_true")
    init.set_defaults(handler=cmd_init, verbose=False, quiet=False)

    evaluate = subparsers.add_parser("evaluate", help="Score sensitive-function extraction against labels")
    evaluate.add_argument("root", help="Repository root the manifest paths are relative to")
    evaluate.add_argument("labels", help="JSON manifest of expected sensitive functions per file")
    evaluate.add_argument("--llm", help="off | live | record:FILE | replay:FILE (default off)")
    evaluate.add_argument("--no-heuristic", action="store_true")
    evaluate.add_argument("-c", "--config")
    evaluate.add_argument("-v", "--verbose", action="store_true")
    evaluate.add_argument("-q", "--quiet", action="store_true")
    evaluate.set_defaults(handler=cmd_evaluate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "handler", None):
        parser.print_help()
        return EXIT_ERROR
    _configure_logging(args.verbose, args.quiet)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())

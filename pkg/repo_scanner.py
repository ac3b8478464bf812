# repo_scanner.py - repository walk, directory pruning and pragma reading
import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Iterable, List, Optional, Tuple

from semantic_version import NpmSpec

from config import ScanConfig
from errors import IoError, MalformedPragma, RootNotFound
from schemas import ContractFile
from solidity_frontend import normalize
from utils import posix_path

logger = logging.getLogger(__name__)

SOLIDITY_SUFFIX = ".sol"

_PRAGMA_RE = re.compile(r"\bpragma\s+solidity\b([^;]*)(;?)")
_OP_SPACING_RE = re.compile(r"([<>=^~]+)\s+")
_MISSING_SPACE_RE = re.compile(r"(?<=[\dxX*])(?=[<>=^~])")


class PathClass(str, Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


@dataclass(frozen=True)
class RepositoryScan:
    files: List[ContractFile] = field(default_factory=list)
    excluded: List[str] = field(default_factory=list)
    unreadable: List[Tuple[str, str]] = field(default_factory=list)


def classify_path(path, excluded: Iterable[str]) -> PathClass:
    """Exclude iff a directory segment (never the file name) matches an excluded name, case-insensitively."""
    names = {name.lower() for name in excluded}
    directories = PurePosixPath(posix_path(path)).parts[:-1]
    if any(segment.lower() in names for segment in directories):
        return PathClass.EXCLUDE
    return PathClass.INCLUDE


def normalize_constraint(text: str) -> str:
    """Rewrite solc pragma spellings ('>= 0.5.0', '>0.4.99<0.6.0') into npm range syntax."""
    text = " ".join(text.split())
    text = _OP_SPACING_RE.sub(r"\1", text)
    return _MISSING_SPACE_RE.sub(" ", text)


def extract_pragma(source: str) -> Optional[NpmSpec]:
    """Version range of the first `pragma solidity` directive outside comments, or None."""
    match = _PRAGMA_RE.search(normalize(source).text)
    if not match:
        return None
    directive = match.group(0)
    constraint = normalize_constraint(match.group(1))
    if not match.group(2) or not constraint:
        raise MalformedPragma(directive)
    try:
        return NpmSpec(constraint)
    except ValueError:
        raise MalformedPragma(directive)


def read_contract(root: Path, relative: str) -> ContractFile:
    full = root / relative
    try:
        source = full.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(relative, str(e))
    try:
        spec = extract_pragma(source)
        return ContractFile(path=relative, source=source, version_constraint=str(spec) if spec else None)
    except MalformedPragma as e:
        # stays in scope; version selection falls back to the newest compiler
        logger.warning(f"{relative}: {e}")
        return ContractFile(path=relative, source=source, pragma_error=str(e))


def _walk(root: Path) -> List[str]:
    found = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames[:] = sorted(d for d in dirnames if not os.path.islink(os.path.join(dirpath, d)))
        for name in filenames:
            full = os.path.join(dirpath, name)
            if name.endswith(SOLIDITY_SUFFIX) and not os.path.islink(full):
                found.append(posix_path(os.path.relpath(full, root)))
    return sorted(found)


def scan_repository(config: ScanConfig) -> RepositoryScan:
    root = Path(config.root)
    if not root.is_dir() or not os.access(root, os.R_OK | os.X_OK):
        raise RootNotFound(root)

    scan = RepositoryScan()
    for relative in _walk(root):
        if classify_path(relative, config.excluded_dirs) == PathClass.EXCLUDE:
            scan.excluded.append(relative)
            continue
        try:
            scan.files.append(read_contract(root, relative))
        except IoError as e:
            logger.warning(f"❌ {e}")
            scan.unreadable.append((relative, e.reason))

    logger.info(
        f"Discovered {len(scan.files)} contract files under {root} "
        f"({len(scan.excluded)} excluded, {len(scan.unreadable)} unreadable)"
    )
    return scan


def discover_contracts(config: ScanConfig) -> List[ContractFile]:
    return scan_repository(config).files

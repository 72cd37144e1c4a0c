#!/usr/bin/env python3
"""Ensure file formats and argument parsing stay in the surface modules."""

from __future__ import annotations

import re
import sys
from pathlib import Path


ROOT = Path(__file__).resolve().parents[1]
TRACKED_MODULES = ("argparse", "csv", "json")
# module file -> tracked imports it may use
ALLOWED = {
    "cli.py": set(TRACKED_MODULES),
    "config_loader.py": set(TRACKED_MODULES),
    "result_export.py": set(TRACKED_MODULES),
    "dataset.py": {"csv"},
}
SKIPPED_DIRS = {"tools", "scripts", "tests", "examples", "venv", ".venv"}


def _imports(text: str) -> set[str]:
    found: set[str] = set()
    for name in TRACKED_MODULES:
        if re.search(rf"^\s*(import {name}\b|from {name}\b)", text, flags=re.MULTILINE):
            found.add(name)
    return found


def main() -> int:
    offenders: list[tuple[Path, str]] = []
    for path in sorted(ROOT.rglob("*.py")):
        rel_path = path.relative_to(ROOT)
        if rel_path.parts[0] in SKIPPED_DIRS or not path.is_file():
            continue
        allowed = ALLOWED.get(str(rel_path), set())
        for name in sorted(_imports(path.read_text(encoding="utf-8", errors="ignore")) - allowed):
            offenders.append((rel_path, name))

    if offenders:
        sys.stderr.write("Numerical core modules must not parse arguments or read/write file formats.\n")
        for rel_path, name in offenders:
            sys.stderr.write(f"  {rel_path} → {name}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

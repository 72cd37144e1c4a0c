from __future__ import annotations

import argparse
import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from tools.audit_runner import AuditRunner  # noqa: E402


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Identification toolkit self-audit",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--quick", action="store_true", help="Constants and oracle checks only.")
    group.add_argument("--full", action="store_true", help="Also run projection and solver checks.")
    parser.add_argument("--seed", type=int, default=0)
    return parser.parse_args(argv)


def _run_audit(args: argparse.Namespace) -> AuditRunner:
    runner = AuditRunner(seed=args.seed)
    report = runner.run(quick=args.quick)
    print(report.format_summary())
    if report.has_fail:
        raise SystemExit(1)
    return runner


def main(argv: list[str] | None = None) -> None:
    args = _parse_args(argv)
    try:
        _run_audit(args)
    except SystemExit:
        raise
    except KeyboardInterrupt:
        print("\nInterrupted.")
        sys.exit(130)


if __name__ == "__main__":
    main()

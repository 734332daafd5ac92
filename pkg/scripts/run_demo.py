#!/usr/bin/env python3
"""End-to-end walkthrough on the bundled scenarios.

Validates the multi-team org, decides the three shared-bucket requests
(one same-account, one cross-account without a resource-side grant, one
with), simulates the batch into an audit log, and runs the least-privilege
analysis over it. Every step shells through the CLI entry point, so the
output is exactly what the tool prints.

Usage:
    python scripts/run_demo.py [--out-dir demo-out]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from iamsim.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent
DEMO = str(ROOT / "scenarios" / "demo-org.json")
SHARING = str(ROOT / "scenarios" / "sharing-demo.json")
REQUESTS = str(ROOT / "scenarios" / "sharing-demo-requests.jsonl")


def step(title: str, argv: list[str]) -> int:
    print(f"\n=== {title}")
    print(f"$ iamsim {' '.join(argv)}")
    return cli(argv)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="demo-out")
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = str(out / "activity.jsonl")
    decisions = str(out / "decisions.jsonl")

    step("validate the multi-team organization", ["--scenario", DEMO, "validate"])

    for user, account in (("user-1", "111111111111"),
                          ("user-2", "222222222222"),
                          ("user-3", "333333333333")):
        code = step(f"authorize {user} on the shared bucket", [
            "--scenario", SHARING, "authorize",
            "--user", user, "--account", account,
            "--action", "s3:GetObject", "--resource", "arn:aws:s3:::bucket-s",
            "--explain",
        ])
        print(f"(exit code {code})")

    step("simulate the batch and emit an audit log", [
        "--scenario", SHARING, "simulate", REQUESTS,
        "--out", decisions, "--emit-log", log,
    ])
    print(f"decisions -> {decisions}\nevents    -> {log}")

    step("who was denied?", [
        "--format", "json", "audit", "denied-summary", log, "--bucket", "1h",
    ])

    step("statements unused for 90 days as of mid-year", [
        "--scenario", SHARING, "analyze", "unused", log,
        "--as-of", "2024-06-01T00:00:00Z", "--threshold-days", "90",
    ])

    step("least-privilege policy for user-1 from its activity", [
        "--scenario", SHARING, "analyze", "generate", log,
        "--principal", "user-1@111111111111", "--level", "4",
        "--window", "2024-01-01T00:00:00Z..2024-01-02T00:00:00Z",
    ])
    return 0


if __name__ == "__main__":
    sys.exit(main())

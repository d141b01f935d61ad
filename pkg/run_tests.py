#!/usr/bin/env python3
"""
Test Runner Script
Executes the fast test suite, then (on request) the slow statistical acceptance tests.
"""

import argparse
import subprocess
import sys
from pathlib import Path


def main():
    parser = argparse.ArgumentParser(description="Run all tests.")
    parser.add_argument(
        "--slow", action="store_true",
        help="Also run the slow structure-recovery and stability acceptance tests",
    )
    parser.add_argument(
        "--skip-integration", action="store_true", help="Skip end-to-end CLI tests"
    )
    args = parser.parse_args()

    tests_dir = Path(__file__).parent / "tests"
    exit_code = 0

    print("\n" + "=" * 40)
    print("RUNNING UNIT TESTS")
    print("=" * 40)
    marker = "not slow and not integration" if args.skip_integration else "not slow"
    cmd = [sys.executable, "-m", "pytest", "-v", "-m", marker, str(tests_dir)]
    result = subprocess.run(cmd)
    if result.returncode != 0:
        exit_code = result.returncode

    if args.slow:
        print("\n" + "=" * 40)
        print("RUNNING SLOW ACCEPTANCE TESTS")
        print("=" * 40)
        cmd = [sys.executable, "-m", "pytest", "-v", "--run-slow", "-m", "slow", str(tests_dir)]
        result = subprocess.run(cmd)
        if result.returncode != 0 and exit_code == 0:
            exit_code = result.returncode

    print("\n" + "=" * 40)
    print("ALL TESTS PASSED" if exit_code == 0 else "SOME TESTS FAILED")
    print("=" * 40)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())

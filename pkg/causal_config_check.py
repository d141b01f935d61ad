#!/usr/bin/env python3
"""
Configuration Check Script
Validates the workspace directories, the graph template and the numerical defaults.

Usage:
    python causal_config_check.py [--auto-fix]
"""

import argparse
import importlib.util
import sys

import config

REQUIRED_PACKAGES = ["numpy", "scipy", "networkx", "jinja2", "dotenv"]


def check_packages():
    """Check that the numerical stack is importable."""
    print("\n--- Packages ---")
    all_found = True
    for name in REQUIRED_PACKAGES:
        if importlib.util.find_spec(name) is not None:
            print(f"OK       {name}")
        else:
            print(f"MISSING  {name}")
            all_found = False
    return all_found


def check_directories():
    """Check if configured directories exist."""
    print("\n--- Directory Structure ---")
    dirs_to_check = [
        ("Workspace", config.WORKSPACE_BASE),
        ("Studies", config.STUDIES_DIR),
        ("Results", config.RESULTS_DIR),
        ("Logs", config.LOGS_DIR),
        ("Templates", config.TEMPLATES_DIR),
        ("Designs", config.DESIGNS_DIR),
    ]
    all_exist = True
    for name, path in dirs_to_check:
        if path.exists():
            print(f"OK       {name:<10}: {path}")
        else:
            print(f"MISSING  {name:<10}: {path}")
            if name in ["Templates"]:
                all_exist = False
            else:
                print("   (Will be created automatically)")
    return all_exist


def check_internal_config_validation(auto_fix: bool):
    """Run config.py's built-in validation to catch logical drift."""
    print("\n--- Internal Config Validation ---")
    result = config.validate_configuration(verbose=False, auto_fix=auto_fix)
    if result.is_valid():
        if result.warnings:
            print(f"Internal validation warnings: {len(result.warnings)}")
            for warning in result.warnings:
                print(f"   - {warning.splitlines()[0]}")
        else:
            print("Internal config validation passed")
        return True

    print(f"Internal config validation errors: {len(result.errors)}")
    for error in result.errors:
        print(f"   - {error.splitlines()[0]}")
    return False


def main(argv=None):
    parser = argparse.ArgumentParser(description="Check the causal discovery configuration.")
    parser.add_argument(
        "--auto-fix", action="store_true", help="Create missing workspace directories"
    )
    args = parser.parse_args(argv)

    print("=" * 60)
    print("CAUSAL DISCOVERY CONFIGURATION CHECK")
    print("=" * 60)

    packages_ok = check_packages()
    dirs_ok = check_directories()
    internal_ok = check_internal_config_validation(args.auto_fix)

    print("\n" + "=" * 60)
    if packages_ok and dirs_ok and internal_ok:
        print("CONFIGURATION VALID. Ready to run.")
        return 0
    print("CONFIGURATION ISSUES FOUND. Please fix errors above.")
    return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Shared pytest setup.

The structure-recovery and stability acceptance runs repeat whole searches
over simulated studies and take minutes, so they only run on request:

    pytest --run-slow            or            RUN_SLOW_TESTS=1 pytest

Every session works in a throwaway workspace so result files and logs never
land in the checkout.
"""

from __future__ import annotations

import os

import pytest

import config as causal_config

SLOW_SKIP_REASON = "statistical acceptance run; pass --run-slow or set RUN_SLOW_TESTS=1"


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Also run the seeded structure-recovery and stability acceptance tests.",
    )


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: repeated searches over simulated studies")
    config.addinivalue_line("markers", "integration: CLI runs that read and write study files")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow") or os.getenv("RUN_SLOW_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason=SLOW_SKIP_REASON)
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True, scope="session")
def scratch_workspace(tmp_path_factory):
    original = causal_config.WORKSPACE_BASE
    causal_config.set_workspace_base(tmp_path_factory.mktemp("workspace"))
    yield causal_config.WORKSPACE_BASE
    causal_config.set_workspace_base(original)

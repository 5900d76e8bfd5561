from pathlib import Path

import pytest

from dfcflow.registry import ContractRegistry

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.skipped:
        _ACCEPTANCE_RESULTS[name] = "SKIP"
    else:
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[name]}  {name}")

REPO_ROOT = Path(__file__).resolve().parent.parent
REGISTRY_PATH = REPO_ROOT / "config" / "registry.json"
FIXTURE_CONFIG = REPO_ROOT / "config" / "pipeline.fixture.json"
DATA_DIR = REPO_ROOT / "data"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def registry() -> ContractRegistry:
    return ContractRegistry.from_json_file(REGISTRY_PATH)


@pytest.fixture(scope="session")
def fixture_logs_path() -> Path:
    return DATA_DIR / "fixture_logs.jsonl"


@pytest.fixture(scope="session")
def prices_path() -> Path:
    return DATA_DIR / "prices.csv"


@pytest.fixture(scope="session")
def denylist_path() -> Path:
    return DATA_DIR / "denylist.csv"

import os
from pathlib import Path

import hypothesis
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

hypothesis.settings.register_profile("ci", deadline=None, max_examples=100)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SKGP_LIVE") == "1":
        return
    skip = pytest.mark.skip(reason="live backend test; set SKGP_LIVE=1 and an API key")
    for item in items:
        if "live" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def fixture_records():
    from llmfactor.ingest import read_jsonl

    return list(read_jsonl(FIXTURES / "momentum40.jsonl"))


@pytest.fixture
def fixture_registry():
    from llmfactor.ingest import load_stock_registry

    return load_stock_registry(FIXTURES / "registry.csv")


# --------------------------------------------------------------------------- acceptance summary

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = ""
        for name, value in item.user_properties:
            if name == "detail":
                detail = value
        _ACCEPTANCE.append((status, marker.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{status}] {name}" + (f": {detail}" if detail else ""))

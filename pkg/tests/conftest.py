import os

import pytest

VERDICTS: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> None:
    """Print and remember one PASS/FAIL line for the acceptance summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ENMESH_FULL_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set ENMESH_FULL_SCALE=1")
    for item in items:
        if "fullscale" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)

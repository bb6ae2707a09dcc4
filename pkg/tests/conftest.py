"""Shared pytest configuration.

Tests marked ``@pytest.mark.acceptance("label")`` are collected into a short
report printed at the end of the session: one PASS/FAIL line per criterion.
Tests may attach a one-line note through the ``acceptance_note`` fixture.
"""

import pytest

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion reported in the summary")


@pytest.fixture
def acceptance_note(request):
    """Callable that stores a short note shown next to the criterion's verdict."""
    notes = []
    request.node.user_properties.append(("acceptance_note", notes))
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    entry = _RESULTS.setdefault(label, {"passed": True, "ran": False, "notes": []})
    if report.when == "call":
        entry["ran"] = True
        for key, value in item.user_properties:
            if key == "acceptance_note":
                entry["notes"] = list(value)
    if report.failed:
        entry["passed"] = False
        entry["ran"] = True
    if report.skipped and report.when != "teardown":
        entry["skipped"] = True


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, entry in _RESULTS.items():
        if entry.get("skipped") and not entry["ran"]:
            verdict = "SKIP"
        else:
            verdict = "PASS" if entry["passed"] else "FAIL"
        note = "; ".join(entry["notes"])
        line = f"{verdict}  {label}"
        if note:
            line += f"  ({note})"
        terminalreporter.write_line(line)

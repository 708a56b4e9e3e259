import pytest

# criterion number -> list of (title, status, notes, xfail reason), one per test
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.fixture
def measured(request):
    """Record measured values shown next to the criterion's pass/fail line."""
    marker = request.node.get_closest_marker("criterion")
    notes = []
    request.node.user_properties.append(("measured", notes))

    def note(text):
        notes.append(text)
    return note if marker else (lambda text: None)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "setup" and rep.outcome != "passed":
        status = "FAIL" if rep.failed else "SKIP"
    elif rep.when == "call":
        status = "FAIL" if (rep.failed or hasattr(rep, "wasxfail")) else "PASS"
    else:
        return
    number, title = marker.args
    notes = next((v for k, v in item.user_properties if k == "measured"), [])
    reason = getattr(rep, "wasxfail", "")
    ACCEPTANCE.setdefault(number, []).append((title, status, "; ".join(notes), reason))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(p[1] == "PASS" for p in parts) else "FAIL"
        line = f"criterion {number:>2} {status}: {parts[0][0]}"
        notes = "; ".join(p[2] for p in parts if p[2])
        if notes:
            line += f" [{notes}]"
        reasons = "; ".join(p[3] for p in parts if p[3])
        if reasons:
            line += f" (expected failure: {reasons})"
        tr.write_line(line)

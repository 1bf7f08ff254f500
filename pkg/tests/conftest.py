import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion a test belongs to")


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    n, title = m.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "tests": []})
    failed = call.excinfo is not None
    entry["ok"] &= not failed
    entry["tests"].append((item.name, "FAIL" if failed else "PASS"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {e['title']}  ({len(e['tests'])} tests)")


@pytest.fixture(scope="session")
def rng():
    import numpy as np

    return np.random.default_rng(20240601)

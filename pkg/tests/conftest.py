import pytest

from spinorbit.arith import set_precision


@pytest.fixture(autouse=True)
def _double_precision():
    """Every test starts (and leaves) the package in hardware double."""
    set_precision(53)
    yield
    set_precision(53)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail"):
            verdict = "FAIL (expected, xfail)" if rep.skipped else "PASS (unexpected)"
        else:
            verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        num, title = mark.args
        item.config._criteria.append((num, title, verdict))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = getattr(config, "_criteria", [])
    if not rows:
        return
    grouped = {}
    for num, title, verdict in rows:
        grouped.setdefault((num, title), []).append(verdict)
    terminalreporter.section("acceptance criteria")
    for (num, title), verdicts in sorted(grouped.items()):
        kinds = sorted(set(verdicts))
        verdict = kinds[0] if len(kinds) == 1 else "FAIL (mixed: " + ", ".join(kinds) + ")"
        count = f" [{len(verdicts)} cases]" if len(verdicts) > 1 else ""
        terminalreporter.write_line(f"criterion {num:>2} {title}: {verdict}{count}")

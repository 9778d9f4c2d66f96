import pytest

# Filled by tests/test_acceptance.py: (label, passed, detail) per criterion.
ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: release acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")


@pytest.fixture
def record_criterion():
    """Call with (label, passed, detail); the verdict is printed in the summary and asserted."""
    def record(label, passed, detail):
        ACCEPTANCE_LINES.append((label, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        assert passed, f"{label}: {detail}"
    return record

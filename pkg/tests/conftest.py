import os

import pytest

# filled by test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE_LINES: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: spec acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        verdict, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"criterion {k}: {verdict}  {detail}")


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory):
    d = os.environ.get("QDROP_ACCEPTANCE_DIR")
    if d:
        os.makedirs(d, exist_ok=True)
        return d
    return str(tmp_path_factory.mktemp("acceptance"))

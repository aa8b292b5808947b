import pathlib

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


# --- acceptance verdict lines ---------------------------------------------------

VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    """``verdict(n, title, ok, detail)`` records the line for criterion ``n`` and asserts ``ok``."""

    def record(n: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        VERDICTS[n] = line
        print(line)
        assert ok, line

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    n = getattr(item.function, "criterion", None)
    if n is not None and rep.when == "call" and rep.failed and n not in VERDICTS:
        VERDICTS[n] = f"criterion {n:>2} FAIL  {item.name}  [error: {call.excinfo.typename}]"


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])

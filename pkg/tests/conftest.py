import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from orbslicer.criterion import SlicingCriterion
from orbslicer.env import TestSuite, builtin_env
from orbslicer.source import load_sources

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

# suites and criteria for the three hand-written fixtures
FIG1 = ("fig1.toy", "fig1.toy:14:y", TestSuite())
WC = ("wc.toy", "wc.toy:11:words", TestSuite.of("hello world", "one  two   three", "", " lead x"))
ISHAPPY = ("ishappy.toy", "ishappy.toy:14:h", TestSuite.of("3", "42"))


def load_fixture(name: str):
    return load_sources([FIXTURES / name], FIXTURES)


def fixture_case(case):
    name, crit, suite = case
    return load_fixture(name), SlicingCriterion.parse(crit), suite


def envs(*names):
    return tuple(builtin_env(n) for n in names)


@pytest.fixture
def fig1():
    return fixture_case(FIG1)


@pytest.fixture
def wc():
    return fixture_case(WC)


@pytest.fixture
def ishappy():
    return fixture_case(ISHAPPY)


# --- acceptance reporting ---------------------------------------------------------

SESSION_START = time.monotonic()
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@contextmanager
def acceptance(key: str, title: str):
    """Record PASS/FAIL for one acceptance criterion and print it."""
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE[key] = (False, f"{title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
        print(f"FAIL criterion {key}: {title}")
        raise
    else:
        ACCEPTANCE[key] = (True, title)
        print(f"PASS criterion {key}: {title}")


def pytest_collection_modifyitems(items):
    # the whole-suite runtime check has to see every other test finish first
    last = [i for i in items if i.name == "test_criterion_9_full_suite_runtime"]
    items[:] = [i for i in items if i not in last] + last


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, text = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {text}")

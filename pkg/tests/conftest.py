import json
import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def desk_teacher():
    from coldcarve.nn import Network
    return Network.load(os.path.join(FIXTURES, "desk_teacher"))


@pytest.fixture(scope="session")
def desk_pinned():
    with open(os.path.join(FIXTURES, "desk_teacher.json")) as f:
        return json.load(f)


@pytest.fixture(scope="session")
def desk_test_set():
    from coldcarve import desk
    return desk.test_set()


_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)

import math

import pytest
from hypothesis import settings

from stablesup.params import StableParams

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

ACCEPTANCE_PAIRS = [
    (math.sqrt(2), 0.5),
    (math.sqrt(3), 0.55),
    (1 / math.sqrt(2), 0.3),
    (1 / math.sqrt(3), 0.7),
]

# criterion lines collected by test_acceptance and echoed in the summary
CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def acceptance_params():
    return [StableParams.create(a, r) for a, r in ACCEPTANCE_PAIRS]


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)

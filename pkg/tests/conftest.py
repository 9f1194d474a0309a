import pytest

from radixlab.source import TailedString, memoryless, two_state, uniform, validate_spec, MarkovSpec

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


SIX_STRINGS = ["1101", "0001", "011", "0", "1111", "111"]


@pytest.fixture
def six_strings():
    """The six strings 1101..., 0001..., 0110..., 0000..., 1111..., 1110... (zeros tails)."""
    return [TailedString.parse(s) for s in SIX_STRINGS]


@pytest.fixture
def markov64():
    return two_state(0.6, 0.4)


@pytest.fixture
def bern03():
    return memoryless([0.3, 0.7])


@pytest.fixture
def uni2():
    return uniform(2)


def example_iii():
    return validate_spec(MarkovSpec(4, (1 / 3, 1 / 3, 1 / 6, 1 / 6), (
        (1 / 3, 1 / 3, 1 / 6, 1 / 6),
        (2 / 9, 1 / 3, 2 / 9, 2 / 9),
        (0.25, 0.25, 0.25, 0.25),
        (0.25, 0.25, 0.25, 0.25))))


def example_iv():
    return validate_spec(MarkovSpec(3, (0.4, 0.2, 0.4), (
        (0.4, 0.2, 0.4),
        (1 / 3, 1 / 3, 1 / 3),
        (0.4, 0.2, 0.4))))


def five_sources():
    return [uniform(2), two_state(0.6, 0.4), memoryless([0.3, 0.7]), uniform(3),
            validate_spec(MarkovSpec(3, (0.2, 0.5, 0.3), ((0.5, 0.3, 0.2), (0.1, 0.6, 0.3), (0.3, 0.3, 0.4))))]

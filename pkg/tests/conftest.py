import pytest
from hypothesis import settings

from zonetrack.geometry import Position, ReferenceGrid, assemble_radio_map
from zonetrack.scenario import corpus_dir, load_scenario
from zonetrack.sim import load_or_build_map

# Simulation-backed properties vary in run time; shrinking quality matters more than speed here.
settings.register_profile("zonetrack", deadline=None)
settings.load_profile("zonetrack")


def small_map(points, rss_rows, anchors=None):
    """Radio map from explicit ``(x, y)`` points and RSS rows (None = unheard)."""
    n = len(rss_rows[0])
    anchors = anchors or [(j + 1, Position(float(j), 0.0)) for j in range(n)]
    grid = ReferenceGrid(tuple((i, Position(*p)) for i, p in enumerate(points, start=1)), 1.0)
    return assemble_radio_map(grid, list(enumerate(rss_rows, start=1)), anchors)


@pytest.fixture(scope="session")
def scenario_a():
    return load_scenario(corpus_dir() / "scenario_a.yaml")


@pytest.fixture(scope="session")
def scenario_b():
    return load_scenario(corpus_dir() / "scenario_b.yaml")


@pytest.fixture(scope="session")
def map_a(scenario_a):
    return load_or_build_map(scenario_a)


_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    _ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[number])

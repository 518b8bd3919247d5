import numpy as np
import pytest

from rideleak.road_network import EmbeddingConfig, build_reference_sets, embed_all, grid_graph

_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid10():
    return grid_graph(10, 10)


@pytest.fixture(scope="session")
def grid10_embedding(grid10):
    cfg = EmbeddingConfig(eta=8, l=2, m=5, seed=11)
    refs = build_reference_sets(grid10, cfg)
    return cfg, refs, embed_all(grid10, refs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)

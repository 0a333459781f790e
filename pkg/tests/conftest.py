import itertools

import numpy as np
import pytest

from nbspectra.model import GraphModel, WeightLaw
from nbspectra.sample import WeightedGraph, make_sbm, sample_graph

# acceptance lines collected by tests/test_acceptance.py and echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[0].split("[")[1])):
            terminalreporter.write_line(line)


def triangle():
    return WeightedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def path(n=3):
    return WeightedGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return WeightedGraph.from_edges(n, list(itertools.combinations(range(n), 2)))


def er(n, d0, law=None):
    model, _ = make_sbm(n, [1.0], [[1.0]], d0, laws=[law or WeightLaw.constant(1.0)])
    return model


def random_weighted_graph(n, d0, seed, law=None):
    return sample_graph(er(n, d0, law or WeightLaw.uniform(-1.0, 2.0)), seed)


WEIGHT_LAWS = [
    WeightLaw.constant(1.0),
    WeightLaw.constant(2.5),
    WeightLaw.rademacher(),
    WeightLaw.uniform(-1.0, 2.0),
    WeightLaw.discrete([0.5, -2.0, 1.0], [0.3, 0.2, 0.5]),
]


@pytest.fixture
def tri():
    return triangle()


@pytest.fixture
def k4():
    return complete(4)


@pytest.fixture
def sbm_small():
    return make_sbm(40, [0.5, 0.5], [[1.6, 0.4], [0.4, 1.6]], 5.0)


def dense_model(P, law=None):
    return GraphModel(np.asarray(P).shape[0], P=np.asarray(P), laws=[law or WeightLaw.constant(1.0)])

import numpy as np
import pytest

from pdmmlab.algebra import build_constraint_system, subspace_projector
from pdmmlab.graph import Graph, complete_graph, generate_rgg, path_graph


@pytest.fixture
def triangle():
    return complete_graph(3)


@pytest.fixture
def path3():
    return path_graph(3)


@pytest.fixture(scope="session")
def rgg10():
    return generate_rgg(10, seed=11)


@pytest.fixture(scope="session")
def rgg10_system(rgg10):
    cs = build_constraint_system(rgg10)
    return cs, subspace_projector(cs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from minsum import instances
from minsum.model import gradient, hessian


def dense_solve(program):
    """Minimizer of a quadratic program by one linear solve."""
    z = np.zeros(program.n)
    return np.linalg.solve(hessian(program, z), -gradient(program, z))


def random_programs(count=10, seed=20240611):
    """Random quadratic programs on n <= 6 variables; the last one has a cycle."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(3, 7))
        edges = instances.random_tree_edges(rng, n)
        if k == count - 1:
            edges.append((0, n - 1) if (0, n - 1) not in edges else (1, n - 1))
        out.append(instances.random_quadratic(rng, n, edges))
    return out


@pytest.fixture
def chain3():
    return instances.chain3()


@pytest.fixture
def chain3_star():
    return np.array([0.8, 0.0, -0.8])


@pytest.fixture(scope="session")
def quadratic_programs():
    return random_programs()

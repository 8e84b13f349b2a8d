"""Canonical small programs used by tests, the acceptance suite and the CLI."""
import numpy as np

from .model import (
    LogCoshCoupling,
    Program,
    Quadratic,
    QuadraticCoupling,
    QuadraticForm,
    QuadraticFormK,
    QuarticCoupling,
)


def chain3(c=0.25, b=(1.0, 0.0, -1.0)) -> Program:
    """Path on three variables: ``1/2 (x_i - b_i)^2`` nodes, ``c/2 (x_i - x_j)^2`` edges."""
    nodes = tuple(Quadratic.centered(1.0, bi) for bi in b)
    edges = (QuadraticCoupling(0, 1, c=c), QuadraticCoupling(1, 2, c=c))
    return Program(3, nodes, edges, B=2.0)


def logcosh_chain(b=(1.0, 0.0, -1.0), a=1.0, rate=1.0, B=2.0) -> Program:
    nodes = tuple(Quadratic.centered(1.0, bi) for bi in b)
    edges = tuple(LogCoshCoupling(k, k + 1, a=a, b=rate) for k in range(len(b) - 1))
    return Program(len(b), nodes, edges, B=B)


def quartic_chain(b=(1.0, 0.0, -1.0), c=1.0, B=2.0) -> Program:
    nodes = tuple(Quadratic.centered(1.0, bi) for bi in b)
    edges = tuple(QuarticCoupling(k, k + 1, c=c) for k in range(len(b) - 1))
    return Program(len(b), nodes, edges, B=B)


def random_quadratic(rng: np.random.Generator, n: int, edges) -> Program:
    """Random strictly convex quadratic program on the given edge list.

    Couplings alternate between difference couplings and general PSD
    2x2 blocks so both encodings are exercised.
    """
    nodes = tuple(Quadratic(q=rng.uniform(0.5, 2.0), l=rng.uniform(-1.0, 1.0)) for _ in range(n))
    factors = []
    for k, (i, j) in enumerate(edges):
        if k % 2 == 0:
            factors.append(QuadraticCoupling(i, j, c=rng.uniform(0.1, 1.0)))
        else:
            L = rng.normal(size=(2, 2)) * 0.6
            factors.append(QuadraticForm(i, j, Q=L @ L.T))
    return Program(n, nodes, tuple(factors), B=10.0)


def random_tree_edges(rng: np.random.Generator, n: int):
    return [(int(rng.integers(0, k)), k) for k in range(1, n)]


def two_triangle_factors(linear=(1.0, 0.0, -1.0, 0.5, -0.5)) -> Program:
    """Two three-variable quadratic factors sharing only variable 2."""
    H = 0.5 * (np.eye(3) - np.ones((3, 3)) / 3.0)
    nodes = tuple(Quadratic(q=1.0, l=li) for li in linear)
    hyper = (QuadraticFormK((0, 1, 2), H=H), QuadraticFormK((2, 3, 4), H=H))
    return Program(5, nodes, hyper_factors=hyper, B=5.0)

import numpy as np
import pytest

from minsum import baselines, dominance, instances
from minsum.engine_quadratic import (
    EdgeBlock,
    NodeModel,
    QuadraticMessage,
    estimate,
    init_messages,
    run,
    sweep,
    update_message,
)
from minsum.errors import DegenerateCurvatureError
from minsum.model import Program, Quadratic, QuadraticCoupling, QuadraticForm, gradient

from conftest import dense_solve


def test_riccati_step_by_hand():
    # sender with q=1, coupling c=0.25 and no other incoming messages
    msg = update_message(NodeModel(1.0, 0.0), EdgeBlock(0.25, -0.25, 0.25), [])
    assert msg.a == pytest.approx(0.25 - 0.0625 / 1.25)
    assert msg.a == pytest.approx(0.2)


def test_update_sums_incoming():
    node = NodeModel(1.0, 0.5)
    block = EdgeBlock(1.0, -1.0, 1.0)
    one = update_message(node, block, [QuadraticMessage(2.0, 1.0)])
    s = 1.0 + 1.0 + 2.0
    assert one.a == pytest.approx(1.0 - 1.0 / s)
    assert one.b == pytest.approx(-(0.5 + 1.0) * -1.0 / s)


def test_degenerate_curvature():
    with pytest.raises(DegenerateCurvatureError):
        update_message(NodeModel(0.0, 0.0), EdgeBlock(0.0, 1.0, 0.0), [])


def test_initial_messages_are_edge_slices(chain3):
    state = init_messages(chain3)
    assert set(state.messages) == set(chain3.directed_edges())
    assert state.messages[(0, 1)] == QuadraticMessage(0.25, 0.0)
    assert np.array_equal(state.estimate, np.zeros(3))


def test_chain3_converges_to_solution(chain3, chain3_star):
    state, trace = run(chain3)
    assert trace.converged
    assert np.allclose(state.estimate, chain3_star, atol=1e-12)
    assert state.messages[(0, 1)].a == pytest.approx(0.2)


def test_no_edges_estimate_is_b():
    b = np.array([0.3, -1.2, 2.0])
    p = Program(3, tuple(Quadratic.centered(1.0, v) for v in b))
    assert np.allclose(estimate(p, init_messages(p)), b)


def test_symmetric_pair_stays_at_zero():
    p = Program(2, (Quadratic(1.0), Quadratic(1.0)), (QuadraticCoupling(0, 1, c=1.0),))
    _, trace = run(p, max_iter=10, tol=-1.0)
    assert np.all(trace.array() == 0.0)


def test_logcosh_chain_matches_newton():
    p = instances.logcosh_chain()
    state, trace = run(p, max_iter=200)
    assert trace.iterations <= 200
    assert np.max(np.abs(state.estimate - baselines.newton_solve(p).x)) < 1e-8


def test_fixed_point_gradient_on_trees(quadratic_programs):
    for p in quadratic_programs[:-1]:
        state, trace = run(p)
        assert trace.converged
        assert np.max(np.abs(gradient(p, state.estimate))) < 1e-8


def test_fixed_point_on_certified_cycle(quadratic_programs):
    p = quadratic_programs[-1]
    dominance.certify_quadratic(p)
    state, trace = run(p)
    assert trace.converged
    assert np.max(np.abs(state.estimate - dense_solve(p))) < 1e-8


def test_sweep_is_double_buffered(chain3):
    s0 = init_messages(chain3)
    s1 = sweep(chain3, s0)
    assert s1.iteration == 1
    # every message of s1 depends only on s0: recompute one by hand
    expected = update_message(NodeModel(1.0, 0.0), EdgeBlock(0.25, -0.25, 0.25), [s0.messages[(2, 1)]])
    assert s1.messages[(1, 0)].a == pytest.approx(expected.a)


def test_sweep_active_subset(chain3):
    s0 = init_messages(chain3)
    s1 = sweep(chain3, s0, active=[(0, 1)])
    assert s1.messages[(1, 0)] == s0.messages[(1, 0)]
    assert s1.messages[(0, 1)] != s0.messages[(0, 1)]


def test_general_quadratic_form_orientation():
    Q = np.array([[3.0, 1.0], [1.0, 0.5]])
    p = Program(2, (Quadratic(1.0, 1.0), Quadratic(2.0, -1.0)), (QuadraticForm(1, 0, Q=Q),))
    state, trace = run(p)
    assert np.allclose(state.estimate, dense_solve(p), atol=1e-12)


def test_trace_csv(chain3, chain3_star):
    cert = dominance.certify_quadratic(chain3, w=np.ones(3))
    _, trace = run(chain3, bound_at=lambda t: 0.48 / 3**t)
    text = trace.to_csv().splitlines()
    assert text[0] == "t,max_message_delta,x0,x1,x2,bound_value"
    assert text[1].startswith("0,,")
    assert cert.K == pytest.approx(0.8)

import numpy as np
import pytest

from minsum import dominance, engine_quadratic, instances, scheduler
from minsum.engine_hyper import (
    FactorBlock,
    HyperEngine,
    estimate,
    factor_blocks,
    init_messages,
    run_hyper,
    sweep,
    theorem2_bound,
    update_factor_to_var,
    update_var_to_factor,
)
from minsum.engine_quadratic import EdgeBlock, NodeModel, QuadraticMessage, update_message
from minsum.errors import DegenerateCurvatureError
from minsum.model import LogCoshCoupling, Program, Quadratic, QuadraticCoupling, QuadraticFormK, SquaredSpan

from conftest import dense_solve


def _star(k=3):
    """Variable 0 shared by ``k`` two-variable factors."""
    hyper = tuple(QuadraticFormK((0, j), H=np.array([[1.0, -0.5], [-0.5, 1.0]])) for j in range(1, k + 1))
    return Program(k + 1, tuple(Quadratic(1.0, 0.1 * j) for j in range(k + 1)), hyper_factors=hyper)


def test_var_to_factor_single_factor_is_node():
    p = _star(1)
    state = init_messages(p)
    assert update_var_to_factor(p, 1, 0, state.factor_to_var, [(0,), (0,)]) == QuadraticMessage(1.0, 0.1)


def test_var_to_factor_excludes_one_factor():
    p = _star(2)
    f2v = {(0, 0): QuadraticMessage(1.0, 0.0), (1, 0): QuadraticMessage(1.0, 0.0)}
    inc = [(0, 1), (0,), (1,)]
    assert update_var_to_factor(p, 0, 0, f2v, inc) == QuadraticMessage(2.0, 0.0)


def test_var_to_factor_differs_by_excluded_message():
    p = _star(3)
    f2v = {(c, 0): QuadraticMessage(1.0 + c, 0.5 * c) for c in range(3)}
    inc = [(0, 1, 2), (0,), (1,), (2,)]
    out = [update_var_to_factor(p, 0, c, f2v, inc) for c in range(3)]
    for c in range(1, 3):
        assert out[0].a - out[c].a == pytest.approx(f2v[(c, 0)].a - f2v[(0, 0)].a)
        assert out[0].b - out[c].b == pytest.approx(f2v[(c, 0)].b - f2v[(0, 0)].b)


def test_two_variable_factor_matches_pairwise_update():
    H = np.array([[0.25, -0.25], [-0.25, 0.25]])
    blk = FactorBlock((0, 1), H, np.zeros(2))
    incoming = {(0, 0): QuadraticMessage(1.7, 0.3)}
    via_hyper = update_factor_to_var(blk, 1, incoming, 0)
    via_pair = update_message(NodeModel(1.7, 0.3), EdgeBlock(0.25, -0.25, 0.25), [])
    assert via_hyper.a == pytest.approx(via_pair.a, abs=1e-15)
    assert via_hyper.b == pytest.approx(via_pair.b, abs=1e-15)


def test_squared_span_equals_quadratic_coupling():
    nodes = (Quadratic(1.0, -1.0), Quadratic(2.0, 0.5))
    span = Program(2, nodes, hyper_factors=(SquaredSpan((0, 1), c=1.0, a=(1.0, -1.0)),))
    pair = Program(2, nodes, (QuadraticCoupling(0, 1, c=1.0),))
    s1, s2 = init_messages(span), init_messages(pair)
    for _ in range(5):
        s1, s2 = sweep(span, s1), sweep(pair, s2)
        for key, m in s1.factor_to_var.items():
            other = s2.factor_to_var[key]
            assert abs(m.a - other.a) <= 1e-15 and abs(m.b - other.b) <= 1e-15


def test_triangle_factor_fixed_point():
    H = 0.5 * (np.eye(3) - np.ones((3, 3)) / 3)
    p = Program(3, tuple(Quadratic(1.0) for _ in range(3)), hyper_factors=(QuadraticFormK((0, 1, 2), H=H),))
    _, trace = run_hyper(p)
    assert np.allclose(trace.final, 0.0, atol=1e-14)
    p = p.with_factors(node_factors=tuple(Quadratic(1.0, l) for l in (1.0, 0.0, -1.0)))
    _, trace = run_hyper(p)
    assert trace.converged
    assert np.max(np.abs(trace.final - dense_solve(p))) <= 1e-10


def test_pairwise_reduction_equivalence(quadratic_programs):
    for p in quadratic_programs:
        _, t_pair = engine_quadratic.run(p, max_iter=25, tol=-1.0)
        _, t_hyper = run_hyper(p, max_iter=25, tol=-1.0)
        assert np.max(np.abs(t_pair.array() - t_hyper.array())) <= 1e-12


def test_curvatures_stay_nonnegative():
    p = instances.two_triangle_factors()
    state = init_messages(p)
    for _ in range(10):
        assert all(m.a >= 0 for m in state.factor_to_var.values())
        assert all(m.a >= 0 for m in state.var_to_factor.values())
        state = sweep(p, state)


def test_error_below_hyper_bound():
    p = instances.two_triangle_factors()
    x_star = dense_solve(p)
    cert = dominance.certify_quadratic(p)
    _, trace = run_hyper(p, certificate=cert, x_star=x_star, max_iter=30, tol=-1.0)
    bound = np.array(trace.extra["bound_value"])
    assert np.all(trace.errors(x_star) <= bound + 1e-12)
    assert bound[5] / bound[4] == pytest.approx(cert.lam)
    assert theorem2_bound(p, cert, x_star, 0) == pytest.approx(bound[0])


def test_out_of_guarantee_program_runs():
    # pair (0, 1) lies in two factors and the rank-one factor is not dominant
    hyper = (
        SquaredSpan((0, 1, 2), c=1.0, a=(1.0, -1.0, 0.0)),
        QuadraticFormK((0, 1, 3), H=np.eye(3)),
    )
    p = Program(4, tuple(Quadratic(1.0, 0.2 * k) for k in range(4)), hyper_factors=hyper)
    rep = dominance.check_theorem2_conditions(p)
    assert not rep.condition_i and not rep.condition_ii
    _, trace = run_hyper(p, max_iter=300)
    assert len(trace) > 1 and np.all(np.isfinite(trace.final))


def test_degenerate_reduced_block():
    blk = FactorBlock((0, 1), np.array([[1.0, 1.0], [1.0, 1.0]]), np.zeros(2))
    with pytest.raises(DegenerateCurvatureError):
        update_factor_to_var(blk, 0, {(1, 0): QuadraticMessage(-1.0, 0.0)}, 0)


def test_non_quadratic_factors_rejected():
    p = instances.logcosh_chain()
    with pytest.raises(ValueError):
        factor_blocks(p)


def test_scheduler_sync_matches_native():
    p = instances.two_triangle_factors()
    _, native = run_hyper(p, max_iter=8, tol=-1.0)
    sched = scheduler.make_schedule("synchronous", p.n, 8)
    trace = scheduler.run(HyperEngine(p), p, sched)
    assert np.array_equal(native.array(), trace.array())


def test_async_hyper_converges():
    p = instances.two_triangle_factors()
    x_star = dense_solve(p)
    for seed in range(5):
        sched = scheduler.make_schedule("random-total-async", p.n, 600, seed, window=4, lag_bound=3)
        _, trace = run_hyper(p, schedule=sched)
        assert np.max(np.abs(trace.final - x_star)) < 1e-10

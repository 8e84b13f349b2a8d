import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsum import baselines, instances
from minsum.engine_piecewise import (
    Grid,
    PiecewiseMessage,
    dump_messages,
    estimate_pw,
    init_messages_pw,
    interpolate,
    is_chord_convex,
    load_messages,
    run,
    update_message_pw,
)
from minsum.model import LogCoshCoupling, Program, Quadratic, QuadraticCoupling, QuarticCoupling


def test_interpolation_examples():
    g = Grid(np.array([-1.0, 0.0, 1.0]))
    m = PiecewiseMessage(np.array([1.0, 0.0, 1.0]))
    assert interpolate(m, g, 0.5) == pytest.approx(0.5)
    assert interpolate(m, g, 2.0) == pytest.approx(2.0)
    assert interpolate(m, g, -3.0) == pytest.approx(3.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12))
def test_interpolation_reproduces_convex_samples(slopes):
    g = Grid.uniform(1.0, len(slopes) + 1)
    h = np.diff(g.points)
    vals = np.concatenate([[0.0], np.cumsum(np.sort(slopes) * h)])
    m = PiecewiseMessage.normalized(vals)
    assert np.allclose(interpolate(m, g, g.points), m.values, atol=1e-12)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(np.array([0.0]))
    with pytest.raises(ValueError):
        Grid(np.array([0.0, 0.0, 1.0]))
    assert Grid.uniform(2.0, 401).m == 401


def test_update_closed_form():
    p = Program(2, (Quadratic(1.0), Quadratic(1.0)), (QuadraticCoupling(0, 1, c=1.0),))
    g = Grid(np.array([-1.0, 0.0, 1.0]))
    m = update_message_pw(p, (0, 1), [], g)
    assert np.allclose(m.values, [0.25, 0.0, 0.25], atol=1e-9)


def test_zero_coupling_gives_zero_message():
    p = Program(2, (Quadratic(1.0, 0.3), Quadratic(1.0)), (QuadraticCoupling(0, 1, c=0.0),))
    m = update_message_pw(p, (0, 1), [], Grid.uniform(1.0, 11))
    assert np.all(m.values == 0.0)


def test_estimate_examples():
    p = Program(1, (Quadratic.centered(1.0, 0.3),))
    g = Grid.uniform(1.0, 21)
    assert estimate_pw(p, 0, [], g) == pytest.approx(0.3, abs=1e-9)
    p = Program(1, (Quadratic.centered(1.0, 5.0),))
    assert estimate_pw(p, 0, [], g) == pytest.approx(1.0)


def test_leftmost_tie_break():
    from minsum._scalar import bisect_leftmost

    def slope(y):
        return np.where(y < 0.25, -1.0, np.where(y < 0.75, 0.0, 1.0))

    x = bisect_leftmost(slope, np.array([-1.0, 0.5]), np.array([1.0, 1.0]), 1e-12)
    assert x[0] == pytest.approx(0.25, abs=1e-11)
    assert x[1] == 0.5


def test_chain3_accuracy(chain3, chain3_star):
    msgs, trace = run(chain3, B=2.0, m=401)
    h = 4.0 / 400
    assert trace.converged
    assert np.max(np.abs(trace.final - chain3_star)) <= 2 * h * h + 1e-6
    assert trace.extra["grid_m"][-1] == 401


def test_quartic_chain_m801():
    p = instances.quartic_chain()
    _, trace = run(p, m=801)
    assert np.max(np.abs(trace.final - baselines.newton_solve(p).x)) <= 1e-3


def test_messages_normalized_and_chord_convex():
    p = instances.logcosh_chain()
    msgs, _ = run(p, m=201)
    g = Grid.uniform(2.0, 201)
    for m in msgs.values():
        assert m.values.min() == 0.0
        assert is_chord_convex(m.values, g)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.1, 3.0),
    st.floats(-1.5, 1.5),
    st.sampled_from(["quadratic", "logcosh", "quartic"]),
    st.floats(0.1, 2.0),
)
def test_update_preserves_chord_convexity(q, center, kind, c):
    couplings = {
        "quadratic": QuadraticCoupling(0, 1, c=c),
        "logcosh": LogCoshCoupling(0, 1, a=c, b=1.0),
        "quartic": QuarticCoupling(0, 1, c=c),
    }
    p = Program(3, (Quadratic.centered(q, center), Quadratic(1.0), Quadratic(1.0)),
                (couplings[kind], QuadraticCoupling(0, 2, c=0.5)), B=2.0)
    g = Grid.uniform(2.0, 41)
    incoming = init_messages_pw(p, g)[(2, 0)]
    m = update_message_pw(p, (0, 1), [incoming], g)
    assert is_chord_convex(m.values, g, tol=1e-9)
    assert m.values.min() == 0.0


@pytest.mark.parametrize("program", [instances.chain3(), instances.logcosh_chain()], ids=["chain3", "logcosh"])
def test_refinement_does_not_increase_error(program):
    # the quartic chain is covered (and fails) in the acceptance suite
    x = baselines.newton_solve(program).x
    errs = []
    for m in (401, 801, 1601):
        _, trace = run(program, m=m)
        errs.append(np.max(np.abs(trace.final - x)))
    assert errs[1] <= errs[0] and errs[2] <= errs[1]


def test_dump_and_load(tmp_path, chain3):
    msgs, _ = run(chain3, m=21)
    path = tmp_path / "msgs.bin"
    dump_messages(msgs, path)
    assert path.stat().st_size == 8 * 21 * 4
    back = load_messages(path, msgs.keys(), 21)
    assert back == msgs
    with pytest.raises(ValueError):
        load_messages(path, msgs.keys(), 20)


def test_requires_box():
    p = instances.chain3().with_factors(B=None)
    with pytest.raises(ValueError):
        run(p)
    _, trace = run(p, B=2.0, m=41)
    assert trace.converged

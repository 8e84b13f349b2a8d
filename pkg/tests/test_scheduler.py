import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsum import dominance, engine_piecewise, engine_quadratic, instances
from minsum.engine_quadratic import QuadraticEngine
from minsum.errors import ScheduleError
from minsum.scheduler import Mailbox, asynchronism_violations, make_schedule, run, schedule_from_script

from conftest import dense_solve


def test_synchronous_schedule():
    s = make_schedule("synchronous", 3, 10)
    assert all(s.active(t) == (0, 1, 2) for t in range(10))
    assert all(s.lag(0, 1, t) == t for t in range(11))


def test_determinism():
    a = make_schedule("random-total-async", 4, 200, seed=9, window=4, lag_bound=3)
    b = make_schedule("random-total-async", 4, 200, seed=9, window=4, lag_bound=3)
    assert a == b
    assert [a.lag(0, 1, t) for t in range(201)] == [b.lag(0, 1, t) for t in range(201)]
    c = make_schedule("random-total-async", 4, 200, seed=10, window=4, lag_bound=3)
    assert a.update_sets != c.update_sets


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 6), st.integers(0, 2**63 - 1), st.integers(2, 6))
def test_random_schedule_passes_witness(window, lag, seed, n):
    s = make_schedule("random-total-async", n, 60, seed, window, lag)
    assert asynchronism_violations(s, window, lag) == []


def test_witness_example():
    s = make_schedule("random-total-async", 3, 30, seed=1, window=3, lag_bound=2)
    assert asynchronism_violations(s, 3, 2) == []


def test_witness_catches_gaps():
    s = schedule_from_script({"horizon": 10, "update_times": [[0, 1, 2], list(range(10))]}, 2)
    assert any("vertex 0" in v for v in asynchronism_violations(s, 3, 0))


def test_bad_parameters():
    with pytest.raises(ScheduleError):
        make_schedule("random-total-async", 3, 10, window=0)
    with pytest.raises(ScheduleError):
        make_schedule("round-robin", 3, 10)
    with pytest.raises(ScheduleError):
        make_schedule("adversarial-script", 3, 10)


def test_script_validation():
    base = {"horizon": 5, "update_times": [[0], [1]]}
    with pytest.raises(ScheduleError, match="tau"):
        schedule_from_script({**base, "lags": [{"from": 0, "to": 1, "t": 2, "tau": 3}]}, 2)
    with pytest.raises(ScheduleError):
        schedule_from_script({"horizon": 5, "update_times": [[7], [1]]}, 2)
    with pytest.raises(ScheduleError):
        schedule_from_script({"horizon": 5, "update_times": [[0]]}, 2)


@pytest.mark.parametrize(
    "engine, native",
    [
        (lambda p: QuadraticEngine(p), lambda p, k: engine_quadratic.run(p, max_iter=k, tol=-1.0)[1]),
        (
            lambda p: engine_piecewise.PiecewiseEngine(p, m=41),
            lambda p, k: engine_piecewise.run(p, m=41, max_iter=k, tol=-1.0)[1],
        ),
    ],
    ids=["quadratic", "piecewise"],
)
def test_sync_schedule_reproduces_native_sweeps(engine, native):
    for p in (instances.chain3(), instances.logcosh_chain()):
        k = 12
        trace = run(engine(p), p, make_schedule("synchronous", p.n, k))
        ref = native(p, k)
        assert np.array_equal(trace.array(), ref.array())
        assert np.array_equal(np.array(trace.deltas[1:]), np.array(ref.deltas[1:]))


def test_chain3_random_seeds(chain3, chain3_star):
    for seed in range(20):
        s = make_schedule("random-total-async", 3, 500, seed, window=4, lag_bound=3)
        trace = run("quadratic", chain3, s)
        assert np.max(np.abs(trace.final - chain3_star)) < 1e-8
        assert trace.converged


def test_out_of_order_script(tmp_path, chain3, chain3_star):
    horizon = 60
    lags = [{"from": 0, "to": 1, "t": t, "tau": max(0, 6 * (t // 6) - t % 6)} for t in range(horizon + 1)]
    script = {"horizon": horizon, "update_times": [list(range(horizon))] * 3, "lags": lags}
    taus = [rec["tau"] for rec in lags]
    assert any(b < a for a, b in zip(taus, taus[1:]))  # arrivals out of order
    path = tmp_path / "script.json"
    path.write_text(json.dumps(script))
    s = make_schedule("adversarial-script", 3, horizon, script=str(path))
    assert asynchronism_violations(s, 1, s.lag_bound) == []
    trace = run("quadratic", chain3, s)
    assert np.max(np.abs(trace.final - chain3_star)) < 1e-8


def test_mailbox_refuses_future_reads():
    box = Mailbox({(0, 1): "a"})
    box.post({(0, 1): "b"}, 1)
    box.now = 0
    with pytest.raises(RuntimeError):
        box.read((0, 1), 1)
    box.now = 1
    assert box.read((0, 1), 0) == "a" and box.read((0, 1), 1) == "b"


def test_async_matches_sync_on_certified_programs(quadratic_programs):
    for k, p in enumerate(quadratic_programs):
        dominance.certify_quadratic(p)
        s = make_schedule("random-total-async", p.n, 1500, seed=k, window=3, lag_bound=3)
        trace = run("quadratic", p, s)
        sync_state, _ = engine_quadratic.run(p)
        assert np.max(np.abs(trace.final - sync_state.estimate)) < 1e-8
        assert np.max(np.abs(trace.final - dense_solve(p))) < 1e-8


def test_trace_columns_and_repeatability(chain3):
    s = make_schedule("random-total-async", 3, 40, seed=4, window=3, lag_bound=2)
    a = run("quadratic", chain3, s)
    b = run("quadratic", chain3, s)
    assert a.to_csv() == b.to_csv()
    header = a.to_csv().splitlines()[0].split(",")
    assert header[-2:] == ["event_vertex", "lag_max"]
    assert max(a.extra["lag_max"]) <= 2


def test_program_size_mismatch(chain3):
    with pytest.raises(ScheduleError):
        run("quadratic", chain3, make_schedule("synchronous", 4, 3))

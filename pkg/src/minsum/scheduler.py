"""Synchronous and totally asynchronous execution, simulated on one clock.

Every vertex owns some channels (its outgoing messages, or its running
estimate).  At a time ``t`` in its update set, vertex ``i`` recomputes the
channels it owns, reading a neighbour ``u``'s channels as they were at
time ``tau_{u->i}(t) <= t``.  Everything else is carried forward.  The
schedule is a deterministic function of its seed.

Engines plug in through a small duck-typed interface:

``reads(i)``          vertices whose channels ``i`` reads
``initial()``         ``{channel: value}`` at ``t = 0``; ``channel[0]`` is the owner
``update(i, read)``   new values for channels owned by ``i``
``estimate(i, read)`` current estimate of ``x_i``
``on_estimate(i, x)`` channels to publish after an estimate (may be empty)
``delta(old, new)``   size of a parameter change
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ScheduleError
from .model import Program
from .trace import Trace

KINDS = ("synchronous", "random-total-async", "adversarial-script")


@dataclass(frozen=True)
class Schedule:
    kind: str
    n: int
    horizon: int
    seed: int = 0
    window: int = 1
    lag_bound: int = 0
    update_sets: Tuple[Tuple[int, ...], ...] = ()
    lag_overrides: Dict[Tuple[int, int], Dict[int, int]] = field(default_factory=dict, compare=False)
    _lag_cache: Dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _active: Tuple[Tuple[int, ...], ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        active = [[] for _ in range(self.horizon)]
        for i, times in enumerate(self.update_sets):
            for t in times:
                active[t].append(i)
        object.__setattr__(self, "_active", tuple(tuple(a) for a in active))

    def active(self, t) -> Tuple[int, ...]:
        """Vertices that recompute at time ``t``."""
        return self._active[t]

    def lag(self, j, i, t) -> int:
        """``tau_{j->i}(t)``: the time whose values of ``j`` vertex ``i`` sees at ``t``."""
        if self.kind == "synchronous":
            return t
        if self.kind == "adversarial-script":
            return self.lag_overrides.get((j, i), {}).get(t, t)
        arr = self._lag_cache.get((j, i))
        if arr is None:
            rng = np.random.default_rng([self.seed, 1, j, i])
            ts = np.arange(self.horizon + 2)
            lo = np.maximum(0, ts - self.lag_bound)
            arr = lo + np.floor(rng.random(ts.size) * (ts - lo + 1)).astype(np.int64)
            arr = np.minimum(arr, ts)
            self._lag_cache[(j, i)] = arr
        return int(arr[t])


def make_schedule(
    kind: str,
    n: int,
    horizon: int,
    seed: int = 0,
    window: int = 1,
    lag_bound: int = 0,
    script=None,
) -> Schedule:
    """Build a schedule.

    ``random-total-async`` puts each time in ``T^i`` with probability
    ``1/window`` and forces an update whenever a window of ``window``
    consecutive steps would otherwise be empty; lags are uniform on
    ``[max(0, t - lag_bound), t]``.  ``adversarial-script`` replays a script
    (a dict or a JSON path) and validates it.
    """
    if window < 1 or lag_bound < 0:
        raise ScheduleError("need window >= 1 and lag_bound >= 0")
    if kind == "synchronous":
        sets = tuple(tuple(range(horizon)) for _ in range(n))
        return Schedule(kind, n, horizon, seed, 1, 0, sets)
    if kind == "random-total-async":
        sets = []
        for i in range(n):
            rng = np.random.default_rng([seed, 0, i])
            draws = rng.random(horizon) < 1.0 / window
            times = []
            last = -1
            for t in range(horizon):
                if draws[t] or t - last >= window:
                    times.append(t)
                    last = t
            sets.append(tuple(times))
        return Schedule(kind, n, horizon, seed, window, lag_bound, tuple(sets))
    if kind == "adversarial-script":
        if script is None:
            raise ScheduleError("adversarial-script needs a script")
        return schedule_from_script(script, n, seed)
    raise ScheduleError(f"unknown schedule kind {kind!r}; expected one of {KINDS}")


def schedule_from_script(script, n: int, seed: int = 0) -> Schedule:
    """Script format::

        {"horizon": T,
         "update_times": [[t, ...], ...]       # one list per vertex
         "lags": [{"from": j, "to": i, "t": t, "tau": tau}, ...]}

    Unlisted lags default to ``tau = t``.
    """
    if not isinstance(script, dict):
        with open(script) as fh:
            script = json.load(fh)
    try:
        horizon = int(script["horizon"])
        ut = script["update_times"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"schedule script missing field: {exc}") from None
    if isinstance(ut, dict):
        ut = [ut.get(str(i), ut.get(i, [])) for i in range(n)]
    if len(ut) != n:
        raise ScheduleError(f"update_times must list {n} vertices, got {len(ut)}")
    sets = []
    for i, times in enumerate(ut):
        times = sorted(set(int(t) for t in times))
        if times and (times[0] < 0 or times[-1] >= horizon):
            raise ScheduleError(f"vertex {i}: update times must lie in [0, {horizon})")
        sets.append(tuple(times))
    overrides: Dict[Tuple[int, int], Dict[int, int]] = {}
    for k, rec in enumerate(script.get("lags", [])):
        j, i, t, tau = int(rec["from"]), int(rec["to"]), int(rec["t"]), int(rec["tau"])
        if not (0 <= j < n and 0 <= i < n) or j == i:
            raise ScheduleError(f"lags[{k}]: bad vertex pair ({j}, {i})")
        if not 0 <= t <= horizon + 1:
            raise ScheduleError(f"lags[{k}]: t={t} outside [0, {horizon + 1}]")
        if tau > t or tau < 0:
            raise ScheduleError(f"lags[{k}]: tau={tau} must satisfy 0 <= tau <= t={t}")
        overrides.setdefault((j, i), {})[t] = tau
    max_lag = max((t - tau for d in overrides.values() for t, tau in d.items()), default=0)
    return Schedule("adversarial-script", n, horizon, seed, 1, max_lag, tuple(sets), overrides)


def asynchronism_violations(schedule: Schedule, window: int, lag_bound: int, pairs=None) -> List[str]:
    """Finite-horizon stand-in for total asynchronism.

    Every vertex must update in every ``window`` consecutive steps and every
    lag must satisfy ``0 <= t - tau <= lag_bound``.  Returns a list of
    human-readable violations (empty when the schedule passes).
    """
    out = []
    T = schedule.horizon
    for i, times in enumerate(schedule.update_sets):
        marks = np.zeros(T, dtype=np.int64)
        marks[list(times)] = 1
        csum = np.concatenate([[0], np.cumsum(marks)])
        for s in range(0, max(T - window + 1, 0)):
            if csum[s + window] - csum[s] == 0:
                out.append(f"vertex {i}: no update in window [{s}, {s + window - 1}]")
                break
    if pairs is None:
        pairs = [(j, i) for j in range(schedule.n) for i in range(schedule.n) if j != i]
    for j, i in pairs:
        for t in range(T + 1):
            tau = schedule.lag(j, i, t)
            if tau > t or tau < 0:
                out.append(f"lag {j}->{i} at t={t}: tau={tau} outside [0, t]")
                break
            if t - tau > lag_bound:
                out.append(f"lag {j}->{i} at t={t}: delay {t - tau} > {lag_bound}")
                break
    return out


class Mailbox:
    """Append-only per-channel histories with time-indexed reads."""

    def __init__(self, initial: Dict):
        self._times = {k: [0] for k in initial}
        self._vals = {k: [v] for k, v in initial.items()}
        self.now = 0

    def read(self, key, tau: int):
        if tau > self.now:
            raise RuntimeError(f"stale-read safety violated: read of {key!r} at {tau} > now={self.now}")
        times = self._times[key]
        return self._vals[key][bisect_right(times, tau) - 1]

    def latest(self, key):
        return self._vals[key][-1]

    def post(self, updates: Dict, t: int) -> None:
        for key, val in updates.items():
            times = self._times[key]
            if times[-1] == t:
                self._vals[key][-1] = val
            else:
                times.append(t)
                self._vals[key].append(val)


def make_engine(name: str, program: Program, **options):
    if name == "quadratic":
        from .engine_quadratic import QuadraticEngine

        return QuadraticEngine(program, **options)
    if name == "piecewise":
        from .engine_piecewise import PiecewiseEngine

        return PiecewiseEngine(program, **options)
    if name == "hyper":
        from .engine_hyper import HyperEngine

        return HyperEngine(program, **options)
    raise ValueError(f"unknown engine {name!r}")


def run(engine, program: Program, schedule: Schedule, tol: float = 1e-12, **engine_options) -> Trace:
    """Drive ``engine`` under ``schedule`` and record the estimates at every step.

    ``engine`` is an engine object or one of ``"quadratic"``, ``"piecewise"``,
    ``"hyper"``.  The run is fully determined by its inputs.
    """
    if isinstance(engine, str):
        engine = make_engine(engine, program, **engine_options)
    n = program.n
    if schedule.n != n:
        raise ScheduleError(f"schedule is for {schedule.n} vertices, program has {n}")
    mail = Mailbox(engine.initial())
    lag_seen = [0]

    def reader(i, t):
        def read(key):
            owner = key[0]
            if owner == i:
                return mail.read(key, t)
            tau = schedule.lag(owner, i, t)
            lag_seen[0] = max(lag_seen[0], t - tau)
            return mail.read(key, tau)

        return read

    trace = Trace(n)
    x = np.array([engine.estimate(i, reader(i, 0)) for i in range(n)])
    trace.record(0, x, event_vertex="", lag_max=0)
    quiet = 0
    settle = schedule.window + schedule.lag_bound + 1
    for t in range(schedule.horizon):
        mail.now = t
        lag_seen[0] = 0
        active = schedule.active(t)
        updates = {}
        for i in active:
            updates.update(engine.update(i, reader(i, t)))
        delta = 0.0
        for key, val in updates.items():
            delta = max(delta, engine.delta(mail.latest(key), val))
        mail.post(updates, t + 1)
        mail.now = t + 1
        x = np.array([engine.estimate(i, reader(i, t + 1)) for i in range(n)])
        published = {}
        for i in range(n):
            published.update(engine.on_estimate(i, x[i]))
        for key, val in published.items():
            delta = max(delta, engine.delta(mail.latest(key), val))
        mail.post(published, t + 1)
        trace.record(
            t + 1, x, delta, event_vertex=";".join(str(i) for i in active), lag_max=int(lag_seen[0])
        )
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            trace.diverged = True
            break
        quiet = quiet + 1 if delta < tol else 0
    trace.converged = not trace.diverged and quiet >= settle
    return trace

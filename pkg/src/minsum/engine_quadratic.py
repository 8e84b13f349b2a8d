"""Min-sum with quadratic messages.

A message ``J(x) = a/2 x^2 + b x`` is stored as ``(a, b)``; the additive
constant never influences an update, so it is dropped.  On all-quadratic
programs every update is exact.  On other smooth convex programs each
update first replaces the factors by their second-order Taylor expansions
around a running estimate, which makes the scheme a min-sum / Newton hybrid.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateCurvatureError
from .model import NodeFactor, OrientedEdge, Program
from .trace import Trace

Edge = Tuple[int, int]
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class QuadraticMessage:
    a: float
    b: float
    c: float = 0.0

    def value(self, x):
        return 0.5 * self.a * x * x + self.b * x + self.c

    def d1(self, x):
        return self.a * x + self.b

    def d2(self, x):
        return self.a + 0.0 * x

    def tilted(self, p) -> "QuadraticMessage":
        return QuadraticMessage(self.a, self.b + p, self.c)


class NodeModel(NamedTuple):
    q: float
    l: float


class EdgeBlock(NamedTuple):
    """Quadratic model of an edge factor seen from sender ``y`` to receiver ``x``.

    ``1/2 (Qyy y^2 + 2 Qyx y x + Qxx x^2) + ly y + lx x``
    """

    Qyy: float
    Qyx: float
    Qxx: float
    ly: float = 0.0
    lx: float = 0.0


def node_model(f: NodeFactor, at: float) -> NodeModel:
    """Second-order Taylor model of ``f`` around ``at`` (constant dropped)."""
    h = float(f.d2(at))
    return NodeModel(h, float(f.d1(at)) - h * at)


def edge_model(edge: OrientedEdge, y0: float, x0: float) -> EdgeBlock:
    """Second-order Taylor model of an oriented edge factor around ``(y0, x0)``."""
    gy, gx = edge.grad(y0, x0)
    hyy, hyx, hxx = edge.hess(y0, x0)
    hyy, hyx, hxx = float(hyy), float(hyx), float(hxx)
    return EdgeBlock(
        hyy,
        hyx,
        hxx,
        float(gy) - hyy * y0 - hyx * x0,
        float(gx) - hyx * y0 - hxx * x0,
    )


def update_message(node: NodeModel, block: EdgeBlock, incoming: Iterable[QuadraticMessage]) -> QuadraticMessage:
    """Partial minimization over the sender variable (a scalar Riccati step).

    Minimizes ``node(y) + block(y, x) + sum incoming(y)`` over ``y``.
    """
    s = node.q + block.Qyy
    L = node.l + block.ly
    for m in incoming:
        s += m.a
        L += m.b
    if not s > 0:
        raise DegenerateCurvatureError(f"total curvature {s!r} <= 0 in message update")
    return QuadraticMessage(block.Qxx - block.Qyx * block.Qyx / s, block.lx - L * block.Qyx / s)


def local_argmin(node: NodeModel, incoming: Iterable[QuadraticMessage]) -> float:
    s = node.q
    L = node.l
    for m in incoming:
        s += m.a
        L += m.b
    if not s > 0:
        raise DegenerateCurvatureError(f"local curvature {s!r} <= 0 in estimate")
    return -L / s


@dataclass(frozen=True)
class QuadraticState:
    messages: Mapping[Edge, QuadraticMessage]
    estimate: np.ndarray
    iteration: int = 0


def initial_message(program: Program, i: int, j: int) -> QuadraticMessage:
    """Quadratic part of ``f_ij(0, x_j)`` around ``x_j = 0``.

    Exact for quadratic couplings; a Taylor model otherwise.
    """
    edge = program.edge(i, j)
    _, gx = edge.grad(0.0, 0.0)
    _, _, hxx = edge.hess(0.0, 0.0)
    return QuadraticMessage(float(hxx), float(gx))


def init_messages(program: Program, tilt: Optional[Mapping[Edge, float]] = None) -> QuadraticState:
    """Initial state with ``J0_{i->j}(x) = f_ij(0, x)`` (its quadratic part).

    ``tilt`` adds a linear term ``p_{i->j} x`` to chosen initial messages.
    """
    msgs = {}
    for i, j in program.directed_edges():
        m = initial_message(program, i, j)
        if tilt is not None and (i, j) in tilt:
            m = m.tilted(float(tilt[(i, j)]))
        msgs[(i, j)] = m
    return QuadraticState(msgs, np.zeros(program.n), 0)


def message_delta(old: QuadraticMessage, new: QuadraticMessage) -> float:
    return max(abs(new.a - old.a), abs(new.b - old.b))


class QuadraticEngine:
    """Vertex-local form of the engine, shared by sweeps and the scheduler.

    Channels are keyed ``(i, j)`` for the message ``J_{i->j}`` and
    ``(i, "x")`` for vertex ``i``'s running estimate; the first key element
    is always the owning vertex.
    """

    name = "quadratic"

    def __init__(self, program: Program, state: Optional[QuadraticState] = None):
        if not program.is_pairwise:
            raise ValueError("the quadratic engine needs a pairwise program (use the hyper engine)")
        self.program = program
        self.state = init_messages(program) if state is None else state

    @property
    def n(self):
        return self.program.n

    def reads(self, i) -> Tuple[int, ...]:
        return self.program.neighbors(i)

    def initial(self) -> Dict:
        ch = dict(self.state.messages)
        for i in range(self.n):
            ch[(i, "x")] = float(self.state.estimate[i])
        return ch

    def update(self, i, read: Callable) -> Dict:
        p = self.program
        xi = read((i, "x"))
        node = node_model(p.node_factors[i], xi)
        nbrs = p.neighbors(i)
        inc = {u: read((u, i)) for u in nbrs}
        out = {}
        for j in nbrs:
            block = edge_model(p.edge(i, j), xi, read((j, "x")))
            out[(i, j)] = update_message(node, block, [inc[u] for u in nbrs if u != j])
        return out

    def estimate(self, i, read: Callable) -> float:
        node = node_model(self.program.node_factors[i], read((i, "x")))
        return local_argmin(node, [read((u, i)) for u in self.program.neighbors(i)])

    def on_estimate(self, i, x) -> Dict:
        return {(i, "x"): float(x)}

    @staticmethod
    def delta(old, new) -> float:
        if isinstance(new, QuadraticMessage):
            return message_delta(old, new)
        return abs(new - old)


def estimate(program: Program, state: QuadraticState) -> np.ndarray:
    """Argmin of every local quadratic model (node expanded at the running estimate)."""
    eng = QuadraticEngine(program, state)
    ch = eng.initial()
    return np.array([eng.estimate(i, ch.__getitem__) for i in range(program.n)])


def sweep(program: Program, state: QuadraticState, active: Optional[Iterable[Edge]] = None) -> QuadraticState:
    """One synchronous (double-buffered) iteration.

    Every active message is recomputed from the previous state's messages
    and running estimate; inactive messages are carried over.  The running
    estimate is then refreshed from the new messages.
    """
    new_state, _ = _sweep(program, state, active)
    return new_state


def _sweep(program, state, active):
    eng = QuadraticEngine(program, state)
    old = eng.initial()
    active = None if active is None else set(active)
    new = dict(old)
    for i in range(program.n):
        if active is not None and not any((i, j) in active for j in program.neighbors(i)):
            continue
        for key, msg in eng.update(i, old.__getitem__).items():
            if active is None or key in active:
                new[key] = msg
    x = np.array([eng.estimate(i, new.__getitem__) for i in range(program.n)])
    delta = 0.0
    for key, msg in state.messages.items():
        delta = max(delta, message_delta(msg, new[key]))
    delta = max(delta, float(np.max(np.abs(x - state.estimate), initial=0.0)))
    msgs = {key: new[key] for key in state.messages}
    return QuadraticState(msgs, x, state.iteration + 1), delta


def run(
    program: Program,
    state: Optional[QuadraticState] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    bound_at: Optional[Callable[[int], float]] = None,
    min_iter: int = 0,
) -> Tuple[QuadraticState, Trace]:
    """Synchronous sweeps until the largest parameter change drops below ``tol``.

    The trace holds ``x(0)`` (argmin of the initial local models) followed
    by the running estimate after each sweep.  ``bound_at(t)`` adds a
    ``bound_value`` column.  Convergence is reported, never asserted.
    """
    state = init_messages(program) if state is None else state
    trace = Trace(program.n)
    extra = {} if bound_at is None else {"bound_value": bound_at(0)}
    trace.record(0, estimate(program, state), **extra)
    for t in range(1, max_iter + 1):
        state, delta = _sweep(program, state, None)
        extra = {} if bound_at is None else {"bound_value": bound_at(t)}
        trace.record(t, state.estimate, delta, **extra)
        if not np.all(np.isfinite(state.estimate)) or np.max(np.abs(state.estimate)) > 1e12:
            trace.diverged = True
            break
        if delta < tol and t >= min_iter:
            trace.converged = True
            break
    return state, trace

"""Min-sum on factor graphs with factors over more than two variables.

Variables send ``J_{i->C}`` to each factor ``C`` they belong to and factors
send ``J_{C->i}`` back.  Every factor here is quadratic, so both kinds of
message stay quadratic and the factor-to-variable step is an exact Schur
complement.  Quadratic edge factors are treated as two-variable factors,
so a pairwise quadratic program runs through this engine unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .engine_quadratic import QuadraticMessage, local_argmin, message_delta, node_model
from .errors import DegenerateCurvatureError
from .model import Program
from .trace import Trace

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000


class FactorBlock(NamedTuple):
    """``1/2 y^T H y + g^T y`` over the variables in ``scope``."""

    scope: Tuple[int, ...]
    H: np.ndarray
    g: np.ndarray


def factor_blocks(program: Program) -> List[FactorBlock]:
    """Hyper factors first, then edge factors as two-variable factors.

    Raises ``ValueError`` for non-quadratic factors, which this engine
    does not handle.
    """
    if not program.is_quadratic:
        raise ValueError("the hyper engine needs every factor to be quadratic")
    blocks = []
    for h in program.hyper_factors:
        k = len(h.scope)
        blocks.append(FactorBlock(h.scope, h.matrix(), np.asarray(h.grad(np.zeros(k)), dtype=float)))
    for e in program.edge_factors:
        hii, hij, hjj = (float(v) for v in e.hess(0.0, 0.0))
        gi, gj = (float(v) for v in e.grad(0.0, 0.0))
        blocks.append(FactorBlock((e.i, e.j), np.array([[hii, hij], [hij, hjj]]), np.array([gi, gj])))
    return blocks


def _incidence(program: Program, blocks: Sequence[FactorBlock]) -> List[Tuple[int, ...]]:
    inc = [[] for _ in range(program.n)]
    for c, blk in enumerate(blocks):
        for v in blk.scope:
            inc[v].append(c)
    return [tuple(v) for v in inc]


@dataclass(frozen=True)
class HyperState:
    """Messages keyed by ``(i, c)`` (variable to factor) and ``(c, i)`` (factor to variable).

    ``c`` indexes :func:`factor_blocks`.
    """

    var_to_factor: Mapping[Tuple[int, int], QuadraticMessage]
    factor_to_var: Mapping[Tuple[int, int], QuadraticMessage]
    iteration: int = 0


def update_var_to_factor(program: Program, i: int, c: int, factor_to_var: Mapping, incidence) -> QuadraticMessage:
    """Node factor of ``i`` plus every incoming factor message except the one from ``c``."""
    node = node_model(program.node_factors[i], 0.0)
    a, b = node.q, node.l
    for d in incidence[i]:
        if d != c:
            m = factor_to_var[(d, i)]
            a += m.a
            b += m.b
    return QuadraticMessage(a, b)


def update_factor_to_var(block: FactorBlock, i: int, var_to_factor: Mapping, c: int) -> QuadraticMessage:
    """Minimize the factor plus incoming variable messages over every scope variable but ``i``."""
    scope = block.scope
    k = scope.index(i)
    rest = [p for p in range(len(scope)) if p != k]
    a = np.array([var_to_factor[(scope[p], c)].a for p in rest])
    b = np.array([var_to_factor[(scope[p], c)].b for p in rest])
    S = block.H[np.ix_(rest, rest)] + np.diag(a)
    r = block.g[rest] + b
    h = block.H[rest, k]
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise DegenerateCurvatureError(
            f"reduced block of factor {c} (scope {scope}) without variable {i} is not positive definite"
        ) from None
    u = np.linalg.solve(L, h)
    v = np.linalg.solve(L, r)
    return QuadraticMessage(float(block.H[k, k] - u @ u), float(block.g[k] - u @ v))


def initial_factor_message(block: FactorBlock, i: int) -> QuadraticMessage:
    """``f_C`` with every other scope variable at 0, as a function of ``x_i``."""
    k = block.scope.index(i)
    return QuadraticMessage(float(block.H[k, k]), float(block.g[k]))


def init_messages(program: Program, tilt: Optional[Mapping[Tuple[int, int], float]] = None) -> HyperState:
    """Initial state; ``tilt[(c, i)]`` adds a linear term to ``J0_{C->i}``."""
    blocks = factor_blocks(program)
    f2v = {}
    for c, blk in enumerate(blocks):
        for i in blk.scope:
            m = initial_factor_message(blk, i)
            if tilt is not None and (c, i) in tilt:
                m = m.tilted(float(tilt[(c, i)]))
            f2v[(c, i)] = m
    inc = _incidence(program, blocks)
    v2f = {(i, c): update_var_to_factor(program, i, c, f2v, inc) for c, blk in enumerate(blocks) for i in blk.scope}
    return HyperState(v2f, f2v, 0)


class _ChannelView:
    """Presents ``(c, i)`` lookups over channels keyed ``(i, ("f", c))``."""

    def __init__(self, read):
        self.read = read

    def __getitem__(self, key):
        c, i = key
        return self.read((i, ("f", c)))


class HyperEngine:
    """Vertex-local form.

    Vertex ``i`` owns the channels ``(i, ("f", c))`` holding ``J_{C->i}``.
    An update rebuilds ``J_{k->C}`` for the other members ``k`` of ``C``
    from their (possibly stale) channels and then eliminates them.
    """

    name = "hyper"

    def __init__(self, program: Program, state: Optional[HyperState] = None):
        self.program = program
        self.blocks = factor_blocks(program)
        self.incidence = _incidence(program, self.blocks)
        self.state = init_messages(program) if state is None else state
        self._reads = []
        for i in range(program.n):
            vs = {v for c in self.incidence[i] for v in self.blocks[c].scope if v != i}
            self._reads.append(tuple(sorted(vs)))

    @property
    def n(self):
        return self.program.n

    def reads(self, i):
        return self._reads[i]

    def initial(self) -> Dict:
        return {(i, ("f", c)): m for (c, i), m in self.state.factor_to_var.items()}

    def update(self, i, read) -> Dict:
        view = _ChannelView(read)
        out = {}
        for c in self.incidence[i]:
            blk = self.blocks[c]
            v2f = {(k, c): update_var_to_factor(self.program, k, c, view, self.incidence) for k in blk.scope if k != i}
            out[(i, ("f", c))] = update_factor_to_var(blk, i, v2f, c)
        return out

    def estimate(self, i, read) -> float:
        node = node_model(self.program.node_factors[i], 0.0)
        return local_argmin(node, [read((i, ("f", c))) for c in self.incidence[i]])

    def on_estimate(self, i, x) -> Dict:
        return {}

    @staticmethod
    def delta(old, new) -> float:
        return message_delta(old, new)


def estimate(program: Program, state: HyperState) -> np.ndarray:
    eng = HyperEngine(program, state)
    ch = eng.initial()
    return np.array([eng.estimate(i, ch.__getitem__) for i in range(program.n)])


def sweep(program: Program, state: HyperState) -> HyperState:
    """One synchronous iteration: all variable-to-factor messages, then all factor-to-variable ones."""
    new, _ = _sweep(HyperEngine(program, state), state)
    return new


def _sweep(eng: HyperEngine, state: HyperState):
    program, blocks, inc = eng.program, eng.blocks, eng.incidence
    v2f = {
        (i, c): update_var_to_factor(program, i, c, state.factor_to_var, inc)
        for c, blk in enumerate(blocks)
        for i in blk.scope
    }
    f2v = {(c, i): update_factor_to_var(blk, i, v2f, c) for c, blk in enumerate(blocks) for i in blk.scope}
    delta = max((message_delta(state.factor_to_var[k], f2v[k]) for k in f2v), default=0.0)
    return HyperState(v2f, f2v, state.iteration + 1), delta


def theorem2_sum(program: Program, x_star, state: Optional[HyperState] = None) -> float:
    """``sum_C sum_v |dJ0_{C->v}/dx_v(x*_v) - df_C/dx_v(x*_C)|`` for the initial messages."""
    state = init_messages(program) if state is None else state
    x_star = np.asarray(x_star, dtype=float)
    total = 0.0
    for c, blk in enumerate(factor_blocks(program)):
        xc = x_star[list(blk.scope)]
        grad = blk.H @ xc + blk.g
        for k, v in enumerate(blk.scope):
            total += abs(state.factor_to_var[(c, v)].d1(x_star[v]) - grad[k])
    return total


def theorem2_bound(program: Program, certificate, x_star, t: int, state: Optional[HyperState] = None) -> float:
    lam = certificate.lam
    return certificate.K * lam**t / (1.0 - lam) * theorem2_sum(program, x_star, state)


def run_hyper(
    program: Program,
    schedule=None,
    certificate=None,
    x_star=None,
    state: Optional[HyperState] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> Tuple[HyperState, Trace]:
    """Run to a fixed point (synchronous sweeps) or under ``schedule``.

    With both ``certificate`` and ``x_star`` the trace gets a
    ``bound_value`` column.  Under a schedule the returned state is the
    initial one, since messages live in the scheduler's mailbox.
    """
    state = init_messages(program) if state is None else state
    bound_at = None
    if certificate is not None and x_star is not None:
        s = theorem2_sum(program, x_star, state)
        lam, K = certificate.lam, certificate.K
        bound_at = lambda t: K * lam**t / (1.0 - lam) * s  # noqa: E731

    if schedule is not None:
        from . import scheduler

        trace = scheduler.run(HyperEngine(program, state), program, schedule, tol=tol)
        if bound_at is not None:
            trace.extra["bound_value"] = [bound_at(t) for t in trace.times]
        return state, trace

    eng = HyperEngine(program, state)
    trace = Trace(program.n)
    extra = {} if bound_at is None else {"bound_value": bound_at(0)}
    trace.record(0, estimate(program, state), **extra)
    for t in range(1, max_iter + 1):
        state, delta = _sweep(eng, state)
        x = estimate(program, state)
        extra = {} if bound_at is None else {"bound_value": bound_at(t)}
        trace.record(t, x, delta, **extra)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e12:
            trace.diverged = True
            break
        if delta < tol:
            trace.converged = True
            break
    return state, trace

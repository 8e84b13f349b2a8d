"""Min-sum with piecewise-linear messages on a fixed grid over ``[-B, B]``.

Each message is stored by its values at the grid points, shifted so the
smallest value is 0.  Between grid points it is read by linear
interpolation; outside the grid, by extending the end chords.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ._scalar import MAX_BISECTIONS, bisect_leftmost
from .model import Program
from .trace import Trace

DEFAULT_M = 401
INNER_REL_WIDTH = 1e-10


@dataclass(frozen=True)
class Grid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2 or np.any(np.diff(pts) <= 0):
            raise ValueError("grid needs m >= 2 strictly increasing points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, B: float, m: int = DEFAULT_M) -> "Grid":
        return cls(np.linspace(-B, B, m))

    @property
    def m(self) -> int:
        return self.points.size

    @property
    def B(self) -> float:
        return float(max(-self.points[0], self.points[-1]))

    @property
    def lo(self) -> float:
        return float(self.points[0])

    @property
    def hi(self) -> float:
        return float(self.points[-1])


@dataclass(frozen=True, eq=False)
class PiecewiseMessage:
    values: np.ndarray

    @classmethod
    def normalized(cls, values) -> "PiecewiseMessage":
        v = np.asarray(values, dtype=float)
        return cls(v - v.min())

    def __eq__(self, other):
        return isinstance(other, PiecewiseMessage) and np.array_equal(self.values, other.values)


def interpolate(msg: PiecewiseMessage, grid: Grid, x):
    """Maximum over all chord lines through consecutive grid samples.

    For chord-convex samples this is linear interpolation inside the grid
    and linear extrapolation outside it.
    """
    p = grid.points
    v = msg.values
    x = np.asarray(x, dtype=float)
    xs = x[..., None]
    chords = ((p[1:] - xs) * v[:-1] + (xs - p[:-1]) * v[1:]) / (p[1:] - p[:-1])
    return chords.max(axis=-1)


def is_chord_convex(values, grid: Grid, tol: float = 1e-12) -> bool:
    s = np.diff(values) / np.diff(grid.points)
    return bool(np.all(np.diff(s) >= -tol * max(1.0, float(np.abs(s).max(initial=0.0)))))


class _Linear:
    """Fast evaluation of a chord-convex message: segment lookup instead of a max."""

    __slots__ = ("p", "v", "s")

    def __init__(self, values, grid: Grid):
        self.p = grid.points
        self.v = values
        self.s = np.diff(values) / np.diff(grid.points)

    def _seg(self, y):
        return np.clip(np.searchsorted(self.p, y, side="right") - 1, 0, self.p.size - 2)

    def value(self, y):
        k = self._seg(y)
        return self.v[k] + self.s[k] * (y - self.p[k])

    def right_slope(self, y):
        return self.s[self._seg(y)]


def _inner_width(grid: Grid) -> float:
    return INNER_REL_WIDTH * grid.B


def update_message_pw(
    program: Program, edge: Tuple[int, int], incoming: Sequence[PiecewiseMessage], grid: Grid
) -> PiecewiseMessage:
    """``J_{i->j}(x) = min_{y in [-B,B]} f_i(y) + f_ij(y, x) + sum incoming(y)`` at every grid ``x``.

    Inner minimizations run by bisection on the right derivative, all grid
    points at once.
    """
    i, j = edge
    f = program.node_factors[i]
    e = program.edge(i, j)
    inc = [_Linear(m.values, grid) for m in incoming]
    xs = grid.points

    def slope(y):
        s = f.d1(y) + e.grad(y, xs)[0]
        for m in inc:
            s = s + m.right_slope(y)
        return s

    y = bisect_leftmost(slope, np.full(xs.shape, grid.lo), np.full(xs.shape, grid.hi), _inner_width(grid))
    vals = f.value(y) + e.value(y, xs)
    for m in inc:
        vals = vals + m.value(y)
    return PiecewiseMessage.normalized(vals)


def estimate_pw(program: Program, i: int, incoming: Sequence[PiecewiseMessage], grid: Grid) -> float:
    """Leftmost minimizer over ``[-B, B]`` of ``f_i`` plus the interpolated messages."""
    f = program.node_factors[i]
    inc = [_Linear(m.values, grid) for m in incoming]

    def slope(y):
        s = f.d1(y)
        for m in inc:
            s = s + m.right_slope(y)
        return s

    return float(bisect_leftmost(slope, grid.lo, grid.hi, _inner_width(grid)))


def initial_message_pw(program: Program, i: int, j: int, grid: Grid) -> PiecewiseMessage:
    """``J0_{i->j}(x) = f_ij(0, x)`` sampled on the grid."""
    return PiecewiseMessage.normalized(program.edge(i, j).value(0.0, grid.points))


def init_messages_pw(program: Program, grid: Grid, tilt: Optional[Mapping] = None) -> Dict:
    msgs = {}
    for i, j in program.directed_edges():
        vals = program.edge(i, j).value(0.0, grid.points)
        if tilt is not None and (i, j) in tilt:
            vals = vals + float(tilt[(i, j)]) * grid.points
        msgs[(i, j)] = PiecewiseMessage.normalized(vals)
    return msgs


def _resolve_grid(program: Program, grid: Optional[Grid], B: Optional[float], m: int) -> Grid:
    if grid is not None:
        return grid
    B = program.B if B is None else B
    if B is None:
        raise ValueError("the piecewise engine needs a box half-width B")
    return Grid.uniform(B, m)


class PiecewiseEngine:
    """Vertex-local form; channel ``(i, j)`` holds ``J_{i->j}``."""

    name = "piecewise"

    def __init__(self, program: Program, grid: Optional[Grid] = None, B=None, m: int = DEFAULT_M, messages=None):
        if not program.is_pairwise:
            raise ValueError("the piecewise engine needs a pairwise program")
        self.program = program
        self.grid = _resolve_grid(program, grid, B, m)
        self.messages = init_messages_pw(program, self.grid) if messages is None else dict(messages)

    @property
    def n(self):
        return self.program.n

    def reads(self, i):
        return self.program.neighbors(i)

    def initial(self):
        return dict(self.messages)

    def update(self, i, read):
        nbrs = self.program.neighbors(i)
        inc = {u: read((u, i)) for u in nbrs}
        return {
            (i, j): update_message_pw(self.program, (i, j), [inc[u] for u in nbrs if u != j], self.grid)
            for j in nbrs
        }

    def estimate(self, i, read):
        return estimate_pw(self.program, i, [read((u, i)) for u in self.program.neighbors(i)], self.grid)

    def on_estimate(self, i, x):
        return {}

    @staticmethod
    def delta(old, new):
        return float(np.max(np.abs(new.values - old.values)))


def run(
    program: Program,
    grid: Optional[Grid] = None,
    B: Optional[float] = None,
    m: int = DEFAULT_M,
    max_iter: int = 10_000,
    tol: float = 1e-12,
    messages=None,
    bound_at: Optional[Callable[[int], float]] = None,
) -> Tuple[Dict, Trace]:
    """Synchronous sweeps until the largest change in any message value is below ``tol``."""
    eng = PiecewiseEngine(program, grid, B, m, messages)
    cur = eng.initial()
    trace = Trace(program.n)

    def row(t):
        cols = {"grid_m": eng.grid.m}
        if bound_at is not None:
            cols["bound_value"] = bound_at(t)
        return cols

    x = np.array([eng.estimate(i, cur.__getitem__) for i in range(program.n)])
    trace.record(0, x, **row(0))
    for t in range(1, max_iter + 1):
        new = {}
        for i in range(program.n):
            new.update(eng.update(i, cur.__getitem__))
        delta = max((eng.delta(cur[k], new[k]) for k in cur), default=0.0)
        cur = new
        x = np.array([eng.estimate(i, cur.__getitem__) for i in range(program.n)])
        trace.record(t, x, delta, **row(t))
        if delta < tol:
            trace.converged = True
            break
    return cur, trace


def dump_messages(messages: Mapping, path) -> None:
    """Raw little-endian doubles, ``m`` per directed edge, edges in lexicographic order."""
    with open(path, "wb") as fh:
        for key in sorted(messages):
            np.asarray(messages[key].values, dtype="<f8").tofile(fh)


def load_messages(path, edges: Iterable[Tuple[int, int]], m: int) -> Dict:
    data = np.fromfile(path, dtype="<f8")
    edges = sorted(edges)
    if data.size != m * len(edges):
        raise ValueError(f"expected {m * len(edges)} doubles, found {data.size}")
    return {e: PiecewiseMessage(data[k * m:(k + 1) * m].copy()) for k, e in enumerate(edges)}

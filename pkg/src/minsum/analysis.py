"""Computation trees, the exactness tilt ``p*`` and the geometric error bound.

The depth-``t`` computation tree rooted at ``r`` unrolls ``t`` rounds of
message passing into a tree-structured program whose minimizer has the
min-sum estimate ``x_r(t)`` at its root.  Leaves carry the initial
messages they would have received as extra single-variable terms.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .baselines import NEWTON_MAX_ITER, newton_solve
from .dominance import DominanceCertificate, normalize_box, row_ratios, sample_points
from .engine_quadratic import QuadraticMessage, edge_model, init_messages, node_model
from .errors import ConvergenceError, DegenerateCurvatureError
from .model import NodeFactor, Program, Sum, hessian

TREE_NEWTON_TOL = 1e-12

Edge = Tuple[int, int]


@dataclass(frozen=True)
class ComputationTree:
    """``labels[k]`` is the original variable behind tree node ``k``.

    ``parents[0]`` is ``-1`` (node 0 is the root); nodes are in
    breadth-first order, so every parent precedes its children.
    ``attachments[k]`` lists the directed edges ``(u, labels[k])`` whose
    initial messages enter node ``k``.
    """

    root: int
    depth: int
    labels: Tuple[int, ...]
    parents: Tuple[int, ...]
    depths: Tuple[int, ...]
    attachments: Mapping[int, Tuple[Edge, ...]]

    @property
    def size(self) -> int:
        return len(self.labels)

    def children(self, k) -> List[int]:
        return [c for c, p in enumerate(self.parents) if p == k]

    def to_dot(self) -> str:
        lines = ["digraph computation_tree {"]
        for k, lab in enumerate(self.labels):
            lines.append(f'  n{k} [label="{lab}"];')
        for k, p in enumerate(self.parents):
            if p >= 0:
                lines.append(f"  n{k} -> n{p};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_tree(program: Program, root: int, depth: int) -> ComputationTree:
    """Unroll ``depth`` rounds of pairwise message passing into a tree rooted at ``root``.

    Node count equals the number of non-backtracking walks of length at
    most ``depth`` starting at ``root``.  At depth 0 the root carries the
    initial messages from all its neighbours.
    """
    if not program.is_pairwise:
        raise ValueError("computation trees are defined for pairwise programs")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if not 0 <= root < program.n:
        raise ValueError(f"root {root} out of range")
    labels, parents, depths = [root], [-1], [0]
    attachments: Dict[int, Tuple[Edge, ...]] = {}
    k = 0
    while k < len(labels):
        sigma = labels[k]
        up = labels[parents[k]] if parents[k] >= 0 else None
        nxt = [u for u in program.neighbors(sigma) if u != up]
        if depths[k] == depth:
            if nxt:
                attachments[k] = tuple((u, sigma) for u in nxt)
        else:
            for u in nxt:
                labels.append(u)
                parents.append(k)
                depths.append(depths[k] + 1)
        k += 1
    return ComputationTree(root, depth, tuple(labels), tuple(parents), tuple(depths), attachments)


class _Attached(NodeFactor):
    """An initial message used as a single-variable term."""

    kind = "attached_message"

    def __init__(self, message):
        self.message = message
        self.quadratic = isinstance(message, QuadraticMessage)

    def value(self, x):
        return self.message.value(x)

    def d1(self, x):
        return self.message.d1(x)

    def d2(self, x):
        return self.message.d2(x)


class PinnedMessage:
    """``J0_{u->v}(x) = f_uv(0, x)`` kept as the exact function."""

    def __init__(self, program: Program, u: int, v: int, tilt: float = 0.0):
        self.edge = program.edge(u, v)
        self.tilt = float(tilt)

    def value(self, x):
        return self.edge.value(0.0, x) + self.tilt * x

    def d1(self, x):
        return self.edge.grad(0.0, x)[1] + self.tilt

    def d2(self, x):
        return self.edge.hess(0.0, x)[2]


def default_initial(program: Program) -> Dict[Edge, object]:
    """Initial messages ``f_uv(0, .)``: quadratic parameters when exact, pinned functions otherwise."""
    if program.is_quadratic:
        return dict(init_messages(program).messages)
    return {(u, v): PinnedMessage(program, u, v) for u, v in program.directed_edges()}


def tree_program(tree: ComputationTree, program: Program, initial: Optional[Mapping] = None) -> Program:
    """The tree objective ``F_T`` as a program over the tree's nodes."""
    initial = default_initial(program) if initial is None else initial
    nodes = []
    for k, lab in enumerate(tree.labels):
        extra = [_Attached(initial[e]) for e in tree.attachments.get(k, ())]
        f = program.node_factors[lab]
        nodes.append(Sum((f, *extra)) if extra else f)
    edges = []
    for k, p in enumerate(tree.parents):
        if p < 0:
            continue
        a, b = tree.labels[k], tree.labels[p]
        f = program.edge(a, b).factor
        edges.append(replace(f, i=k, j=p) if f.i == a else replace(f, i=p, j=k))
    return Program(tree.size, tuple(nodes), tuple(edges), B=program.B)


def _solve_quadratic_tree(tree: ComputationTree, program: Program, initial: Mapping) -> np.ndarray:
    """Leaf-to-root elimination followed by back substitution."""
    size = tree.size
    s = np.zeros(size)
    L = np.zeros(size)
    for k, lab in enumerate(tree.labels):
        node = node_model(program.node_factors[lab], 0.0)
        s[k], L[k] = node.q, node.l
        for e in tree.attachments.get(k, ()):
            s[k] += initial[e].a
            L[k] += initial[e].b
    blocks = {}
    for k in range(size - 1, 0, -1):
        p = tree.parents[k]
        blk = edge_model(program.edge(tree.labels[k], tree.labels[p]), 0.0, 0.0)
        s[k] += blk.Qyy
        L[k] += blk.ly
        if not s[k] > 0:
            raise DegenerateCurvatureError(f"tree node {k}: curvature {s[k]!r} <= 0")
        blocks[k] = blk
        s[p] += blk.Qxx - blk.Qyx * blk.Qyx / s[k]
        L[p] += blk.lx - L[k] * blk.Qyx / s[k]
    if not s[0] > 0:
        raise DegenerateCurvatureError(f"tree root: curvature {s[0]!r} <= 0")
    x = np.zeros(size)
    x[0] = -L[0] / s[0]
    for k in range(1, size):
        x[k] = -(L[k] + blocks[k].Qyx * x[tree.parents[k]]) / s[k]
    return x


def solve_tree(tree: ComputationTree, program: Program, initial: Optional[Mapping] = None) -> np.ndarray:
    """Minimizer of the tree objective, one value per tree node (root first).

    Quadratic trees are eliminated exactly; anything else goes through
    damped Newton with a gradient tolerance of ``1e-12``.
    """
    initial = default_initial(program) if initial is None else initial
    used = [initial[e] for atts in tree.attachments.values() for e in atts]
    if program.is_quadratic and all(isinstance(m, QuadraticMessage) for m in used):
        return _solve_quadratic_tree(tree, program, initial)
    rep = newton_solve(tree_program(tree, program, initial), tol=TREE_NEWTON_TOL, max_iter=NEWTON_MAX_ITER)
    if not rep.converged:
        raise ConvergenceError(
            f"tree Newton solve stopped after {rep.iterations} iterations with gradient norm {rep.grad_norm:.3g}"
        )
    return rep.x


def tree_root_value(program: Program, root: int, depth: int, initial: Optional[Mapping] = None) -> float:
    return float(solve_tree(build_tree(program, root, depth), program, initial)[0])


def check_tree_dominance(
    tree: ComputationTree,
    program: Program,
    certificate: DominanceCertificate,
    box=None,
    samples: int = 256,
    initial: Optional[Mapping] = None,
) -> bool:
    """Whether the tree objective satisfies the certificate's row condition.

    Weights are carried over by label.  Quadratic trees are checked once;
    otherwise at ``samples`` points of ``box`` (default: the certificate's
    box, else ``[-B, B]``), each tree node taking the coordinate of its label.
    """
    tp = tree_program(tree, program, initial)
    w = np.asarray(certificate.w, dtype=float)[list(tree.labels)]
    if tp.is_quadratic:
        points = [np.zeros(program.n)]
    else:
        if box is None:
            box = certificate.box if certificate.box is not None else (program.B or 1.0)
        points = sample_points(normalize_box(box, program.n), samples)
    idx = list(tree.labels)
    for x in points:
        H = hessian(tp, np.asarray(x)[idx])
        if np.any(np.diag(H) <= 0) or np.any(row_ratios(H, w) > certificate.lam):
            return False
    return True


def p_star(program: Program, x_star, initial: Optional[Mapping] = None) -> Dict[Edge, float]:
    """``p*_{u->v} = d/dx_v f_uv(x*_u, x*_v) - dJ0_{u->v}/dx_v(x*_v)`` for every directed edge."""
    initial = default_initial(program) if initial is None else initial
    x_star = np.asarray(x_star, dtype=float)
    out = {}
    for u, v in program.directed_edges():
        _, gv = program.edge(u, v).grad(x_star[u], x_star[v])
        out[(u, v)] = float(gv) - float(initial[(u, v)].d1(x_star[v]))
    return out


def theorem1_sum(program: Program, x_star, initial: Optional[Mapping] = None) -> float:
    return float(sum(abs(p) for p in p_star(program, x_star, initial).values()))


def theorem1_bound(
    program: Program, certificate: DominanceCertificate, x_star, t: int, initial: Optional[Mapping] = None
) -> float:
    """``K lam^t / (1 - lam) * sum |p*|``."""
    lam = certificate.lam
    return certificate.K * lam**t / (1.0 - lam) * theorem1_sum(program, x_star, initial)


def bound_trace(
    program: Program, certificate: DominanceCertificate, x_star, horizon: int, initial: Optional[Mapping] = None
) -> np.ndarray:
    """Bound values for ``t = 0..horizon``."""
    s = theorem1_sum(program, x_star, initial)
    lam = certificate.lam
    return certificate.K * lam ** np.arange(horizon + 1) / (1.0 - lam) * s


def bound_function(program: Program, certificate: DominanceCertificate, x_star, initial=None):
    """``t -> bound(t)`` with the sum computed once, for the engines' ``bound_at`` hook."""
    s = theorem1_sum(program, x_star, initial)
    lam, K = certificate.lam, certificate.K
    return lambda t: K * lam**t / (1.0 - lam) * s

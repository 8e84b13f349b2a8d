"""Separable convex programs and the closed catalog of factor families.

A program is ``F(x) = sum_i f_i(x_i) + sum_(i,j) f_ij(x_i, x_j) + sum_C f_C(x_C)``
over ``x in R^n``.  Every factor supports value, first and second
derivative evaluation, vectorized over numpy arrays where it makes sense.

Variables are indexed ``0 .. n-1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionError, ProblemFormatError

_LOG2 = math.log(2.0)


def logcosh(z):
    """Numerically stable ``log(cosh(z))``."""
    az = np.abs(z)
    return az + np.log1p(np.exp(-2.0 * az)) - _LOG2


def _sech2(z):
    return 1.0 / np.cosh(np.clip(z, -350.0, 350.0)) ** 2


# ---------------------------------------------------------------------------
# node factors
# ---------------------------------------------------------------------------


class NodeFactor:
    kind = ""
    quadratic = False

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Quadratic(NodeFactor):
    """``q/2 x^2 + l x + c`` with ``q > 0``."""

    q: float
    l: float = 0.0
    c: float = 0.0
    kind = "quadratic"
    quadratic = True

    def __post_init__(self):
        if not self.q > 0:
            raise ProblemFormatError(f"quadratic node factor needs q > 0, got {self.q}")

    @classmethod
    def centered(cls, q, center):
        """``q/2 (x - center)^2``."""
        return cls(q=q, l=-q * center, c=0.5 * q * center * center)

    def value(self, x):
        return 0.5 * self.q * x * x + self.l * x + self.c

    def d1(self, x):
        return self.q * x + self.l

    def d2(self, x):
        return self.q + 0.0 * x

    def params(self):
        return {"q": self.q, "l": self.l, "c": self.c}


@dataclass(frozen=True)
class LogCosh(NodeFactor):
    """``a * logcosh(b (x - shift))``."""

    a: float
    b: float
    shift: float = 0.0
    kind = "logcosh"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ProblemFormatError("logcosh node factor needs a > 0 and b > 0")

    def value(self, x):
        return self.a * logcosh(self.b * (x - self.shift))

    def d1(self, x):
        return self.a * self.b * np.tanh(self.b * (x - self.shift))

    def d2(self, x):
        return self.a * self.b * self.b * _sech2(self.b * (x - self.shift))

    def params(self):
        return {"a": self.a, "b": self.b, "shift": self.shift}


@dataclass(frozen=True)
class EvenQuartic(NodeFactor):
    """``c/4 (x - shift)^4``."""

    coefficient: float
    shift: float = 0.0
    kind = "even_quartic"

    def __post_init__(self):
        if not self.coefficient > 0:
            raise ProblemFormatError("even_quartic node factor needs coefficient > 0")

    def value(self, x):
        return 0.25 * self.coefficient * (x - self.shift) ** 4

    def d1(self, x):
        return self.coefficient * (x - self.shift) ** 3

    def d2(self, x):
        return 3.0 * self.coefficient * (x - self.shift) ** 2

    def params(self):
        return {"coefficient": self.coefficient, "shift": self.shift}


@dataclass(frozen=True)
class Sum(NodeFactor):
    terms: Tuple[NodeFactor, ...]
    kind = "sum"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ProblemFormatError("sum node factor needs at least one term")

    @property
    def quadratic(self):
        return all(t.quadratic for t in self.terms)

    def value(self, x):
        return sum(t.value(x) for t in self.terms)

    def d1(self, x):
        return sum(t.d1(x) for t in self.terms)

    def d2(self, x):
        return sum(t.d2(x) for t in self.terms)

    def params(self):
        return {"terms": [_node_record(t) for t in self.terms]}


# ---------------------------------------------------------------------------
# edge factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeFactor:
    """Convex coupling of two distinct variables ``i`` and ``j``.

    ``grad`` returns ``(d/dx_i, d/dx_j)`` and ``hess`` returns
    ``(d2/dx_i2, d2/dx_i dx_j, d2/dx_j2)``.
    """

    i: int
    j: int
    kind = ""
    quadratic = False

    def __post_init__(self):
        if self.i == self.j:
            raise ProblemFormatError(f"edge endpoints must differ, got ({self.i}, {self.j})")

    def value(self, xi, xj):
        raise NotImplementedError

    def grad(self, xi, xj):
        raise NotImplementedError

    def hess(self, xi, xj):
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError


class _DifferenceCoupling(EdgeFactor):
    """Couplings that depend on ``d = x_i - x_j`` only."""

    def phi(self, d):
        raise NotImplementedError

    def dphi(self, d):
        raise NotImplementedError

    def ddphi(self, d):
        raise NotImplementedError

    def value(self, xi, xj):
        return self.phi(xi - xj)

    def grad(self, xi, xj):
        g = self.dphi(xi - xj)
        return g, -g

    def hess(self, xi, xj):
        h = self.ddphi(xi - xj)
        return h, -h, h


@dataclass(frozen=True)
class QuadraticCoupling(_DifferenceCoupling):
    """``c/2 (x_i - x_j)^2``."""

    c: float = 0.0
    kind = "quadratic_coupling"
    quadratic = True

    def __post_init__(self):
        super().__post_init__()
        if self.c < 0:
            raise ProblemFormatError("quadratic_coupling needs c >= 0")

    def phi(self, d):
        return 0.5 * self.c * d * d

    def dphi(self, d):
        return self.c * d

    def ddphi(self, d):
        return self.c + 0.0 * d

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class LogCoshCoupling(_DifferenceCoupling):
    """``a * logcosh(b (x_i - x_j))``."""

    a: float = 1.0
    b: float = 1.0
    kind = "logcosh_coupling"

    def __post_init__(self):
        super().__post_init__()
        if not (self.a > 0 and self.b > 0):
            raise ProblemFormatError("logcosh_coupling needs a > 0 and b > 0")

    def phi(self, d):
        return self.a * logcosh(self.b * d)

    def dphi(self, d):
        return self.a * self.b * np.tanh(self.b * d)

    def ddphi(self, d):
        return self.a * self.b * self.b * _sech2(self.b * d)

    def params(self):
        return {"a": self.a, "b": self.b}


@dataclass(frozen=True)
class QuarticCoupling(_DifferenceCoupling):
    """``c/4 (x_i - x_j)^4``; its curvature vanishes on the diagonal."""

    c: float = 0.0
    kind = "quartic_coupling"

    def __post_init__(self):
        super().__post_init__()
        if self.c < 0:
            raise ProblemFormatError("quartic_coupling needs c >= 0")

    def phi(self, d):
        return 0.25 * self.c * d ** 4

    def dphi(self, d):
        return self.c * d ** 3

    def ddphi(self, d):
        return 3.0 * self.c * d * d

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True)
class QuadraticForm(EdgeFactor):
    """``1/2 [x_i x_j] Q [x_i x_j]^T`` for a symmetric PSD 2x2 block ``Q``."""

    Q: Tuple[Tuple[float, float], Tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    kind = "quadratic_form"
    quadratic = True

    def __post_init__(self):
        super().__post_init__()
        q = np.asarray(self.Q, dtype=float)
        if q.shape != (2, 2):
            raise ProblemFormatError("quadratic_form needs a 2x2 block")
        object.__setattr__(self, "Q", tuple(tuple(float(v) for v in row) for row in q))
        _check_psd(q, "quadratic_form")

    def value(self, xi, xj):
        (a, b), (_, d) = self.Q
        return 0.5 * (a * xi * xi + 2.0 * b * xi * xj + d * xj * xj)

    def grad(self, xi, xj):
        (a, b), (_, d) = self.Q
        return a * xi + b * xj, b * xi + d * xj

    def hess(self, xi, xj):
        (a, b), (_, d) = self.Q
        z = 0.0 * (xi + xj)
        return a + z, b + z, d + z

    def params(self):
        return {"Q": [list(r) for r in self.Q]}


def _check_psd(mat, what):
    if not np.allclose(mat, mat.T, rtol=0, atol=1e-12):
        raise ProblemFormatError(f"{what}: block must be symmetric")
    eig = np.linalg.eigvalsh(mat)
    if eig.min() < -1e-10 * max(1.0, abs(eig).max()):
        raise ProblemFormatError(f"{what}: block must be positive semidefinite (min eigenvalue {eig.min():.3g})")


class OrientedEdge:
    """An edge factor seen from a chosen ``(first, second)`` ordering.

    Lets message code always treat the sender as the first argument.
    """

    __slots__ = ("factor", "swapped")

    def __init__(self, factor: EdgeFactor, swapped: bool):
        self.factor = factor
        self.swapped = swapped

    def value(self, a, b):
        return self.factor.value(b, a) if self.swapped else self.factor.value(a, b)

    def grad(self, a, b):
        if self.swapped:
            gb, ga = self.factor.grad(b, a)
            return ga, gb
        return self.factor.grad(a, b)

    def hess(self, a, b):
        if self.swapped:
            hbb, hab, haa = self.factor.hess(b, a)
            return haa, hab, hbb
        return self.factor.hess(a, b)


# ---------------------------------------------------------------------------
# hyper factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperFactor:
    scope: Tuple[int, ...]
    kind = ""
    quadratic = True

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        if len(self.scope) < 2:
            raise ProblemFormatError("hyper factor scope needs at least two variables")
        if len(set(self.scope)) != len(self.scope):
            raise ProblemFormatError(f"hyper factor scope has repeated variables: {self.scope}")

    def matrix(self) -> np.ndarray:
        """Constant Hessian over the scope (every catalog hyper factor is quadratic)."""
        raise NotImplementedError

    def value(self, xc):
        xc = np.asarray(xc, dtype=float)
        return 0.5 * xc @ self.matrix() @ xc

    def grad(self, xc):
        return self.matrix() @ np.asarray(xc, dtype=float)

    def hess(self, xc):
        return self.matrix()


@dataclass(frozen=True)
class QuadraticFormK(HyperFactor):
    """``1/2 x_C^T H x_C`` with ``H`` symmetric PSD."""

    H: Tuple[Tuple[float, ...], ...] = ()
    kind = "quadratic_form_k"

    def __post_init__(self):
        super().__post_init__()
        h = np.asarray(self.H, dtype=float)
        k = len(self.scope)
        if h.shape != (k, k):
            raise ProblemFormatError(f"quadratic_form_k: H must be {k}x{k}")
        object.__setattr__(self, "H", tuple(tuple(float(v) for v in row) for row in h))
        _check_psd(h, "quadratic_form_k")

    def matrix(self):
        return np.array(self.H, dtype=float)

    def params(self):
        return {"H": [list(r) for r in self.H]}


@dataclass(frozen=True)
class SquaredSpan(HyperFactor):
    """``c/2 (a^T x_C)^2``."""

    c: float = 0.0
    a: Tuple[float, ...] = ()
    kind = "squared_span"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if len(self.a) != len(self.scope):
            raise ProblemFormatError("squared_span: weights must match scope length")
        if self.c < 0:
            raise ProblemFormatError("squared_span needs c >= 0")

    def matrix(self):
        a = np.array(self.a, dtype=float)
        return self.c * np.outer(a, a)

    def params(self):
        return {"c": self.c, "a": list(self.a)}


# ---------------------------------------------------------------------------
# program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Program:
    """An immutable separable convex program.

    ``node_factors[i]`` is the single-variable factor of variable ``i``.
    ``B`` is an optional box half-width used by the piecewise engine and
    by sampled certification.
    """

    n: int
    node_factors: Tuple[NodeFactor, ...]
    edge_factors: Tuple[EdgeFactor, ...] = ()
    hyper_factors: Tuple[HyperFactor, ...] = ()
    B: Optional[float] = None
    _adj: Dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "node_factors", tuple(self.node_factors))
        object.__setattr__(self, "edge_factors", tuple(self.edge_factors))
        object.__setattr__(self, "hyper_factors", tuple(self.hyper_factors))
        if self.n < 1:
            raise ProblemFormatError("program needs at least one variable")
        if len(self.node_factors) != self.n:
            raise ProblemFormatError(
                f"expected one node factor per variable ({self.n}), got {len(self.node_factors)}"
            )
        if self.B is not None and not self.B > 0:
            raise ProblemFormatError("B must be positive")
        oriented = {}
        nbrs = [set() for _ in range(self.n)]
        for f in self.edge_factors:
            for v in (f.i, f.j):
                if not 0 <= v < self.n:
                    raise ProblemFormatError(f"edge endpoint {v} out of range")
            if (f.i, f.j) in oriented:
                raise ProblemFormatError(f"more than one edge factor on pair ({f.i}, {f.j})")
            oriented[(f.i, f.j)] = OrientedEdge(f, False)
            oriented[(f.j, f.i)] = OrientedEdge(f, True)
            nbrs[f.i].add(f.j)
            nbrs[f.j].add(f.i)
        fnbrs = [[] for _ in range(self.n)]
        for c, h in enumerate(self.hyper_factors):
            for v in h.scope:
                if not 0 <= v < self.n:
                    raise ProblemFormatError(f"hyper factor scope variable {v} out of range")
                fnbrs[v].append(c)
        adj = {
            "oriented": oriented,
            "neighbors": [tuple(sorted(s)) for s in nbrs],
            "factor_neighbors": [tuple(v) for v in fnbrs],
        }
        object.__setattr__(self, "_adj", adj)

    # adjacency -------------------------------------------------------------

    def neighbors(self, i) -> Tuple[int, ...]:
        """Pairwise neighbors of ``i`` (through edge factors)."""
        return self._adj["neighbors"][i]

    def factor_neighbors(self, i) -> Tuple[int, ...]:
        """Indices of hyper factors whose scope contains ``i``."""
        return self._adj["factor_neighbors"][i]

    def directed_edges(self) -> List[Tuple[int, int]]:
        """All ordered pairs ``(i, j)`` with ``i`` a neighbor of ``j``, sorted."""
        return sorted(self._adj["oriented"])

    def edge(self, i, j) -> OrientedEdge:
        """The edge factor between ``i`` and ``j``, oriented with ``i`` first."""
        return self._adj["oriented"][(i, j)]

    @property
    def is_pairwise(self):
        return not self.hyper_factors

    @property
    def is_quadratic(self):
        return (
            all(f.quadratic for f in self.node_factors)
            and all(f.quadratic for f in self.edge_factors)
            and all(f.quadratic for f in self.hyper_factors)
        )

    def with_factors(self, **changes) -> "Program":
        kw = dict(
            n=self.n,
            node_factors=self.node_factors,
            edge_factors=self.edge_factors,
            hyper_factors=self.hyper_factors,
            B=self.B,
        )
        kw.update(changes)
        return Program(**kw)


def _as_point(program: Program, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n,):
        raise DimensionError(f"expected a vector of length {program.n}, got shape {x.shape}")
    return x


def evaluate(program: Program, x) -> float:
    """Objective value ``F(x)``."""
    x = _as_point(program, x)
    total = 0.0
    for i, f in enumerate(program.node_factors):
        total += float(f.value(x[i]))
    for f in program.edge_factors:
        total += float(f.value(x[f.i], x[f.j]))
    for h in program.hyper_factors:
        total += float(h.value(x[list(h.scope)]))
    return total


def gradient(program: Program, x) -> np.ndarray:
    x = _as_point(program, x)
    g = np.array([float(f.d1(x[i])) for i, f in enumerate(program.node_factors)])
    for f in program.edge_factors:
        gi, gj = f.grad(x[f.i], x[f.j])
        g[f.i] += gi
        g[f.j] += gj
    for h in program.hyper_factors:
        idx = list(h.scope)
        g[idx] += h.grad(x[idx])
    return g


def hessian(program: Program, x) -> np.ndarray:
    """Dense Hessian of ``F`` at ``x``."""
    x = _as_point(program, x)
    H = np.diag([float(f.d2(x[i])) for i, f in enumerate(program.node_factors)])
    for f in program.edge_factors:
        hii, hij, hjj = f.hess(x[f.i], x[f.j])
        H[f.i, f.i] += hii
        H[f.j, f.j] += hjj
        H[f.i, f.j] += hij
        H[f.j, f.i] += hij
    for h in program.hyper_factors:
        idx = np.array(h.scope)
        H[np.ix_(idx, idx)] += h.hess(x[idx])
    return H


def hessian_row(program: Program, x, i: int) -> Dict[int, float]:
    """Row ``i`` of the Hessian, restricted to ``i`` and variables coupled to it."""
    x = _as_point(program, x)
    if not 0 <= i < program.n:
        raise DimensionError(f"variable {i} out of range for n={program.n}")
    row = {i: float(program.node_factors[i].d2(x[i]))}
    for j in program.neighbors(i):
        hii, hij, _ = program.edge(i, j).hess(x[i], x[j])
        row[i] += float(hii)
        row[j] = row.get(j, 0.0) + float(hij)
    for c in program.factor_neighbors(i):
        h = program.hyper_factors[c]
        idx = list(h.scope)
        k = idx.index(i)
        hrow = h.hess(x[idx])[k]
        for v, val in zip(idx, hrow):
            row[v] = row.get(v, 0.0) + float(val)
    return row


def shared_pairs(program: Program) -> Dict[Tuple[int, int], int]:
    """Number of factors (edge or hyper) containing each unordered variable pair."""
    counts: Dict[Tuple[int, int], int] = {}
    for f in program.edge_factors:
        key = (min(f.i, f.j), max(f.i, f.j))
        counts[key] = counts.get(key, 0) + 1
    for h in program.hyper_factors:
        for a, b in combinations(sorted(h.scope), 2):
            counts[(a, b)] = counts.get((a, b), 0) + 1
    return counts


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------

_NODE_KINDS = {cls.kind: cls for cls in (Quadratic, LogCosh, EvenQuartic, Sum)}
_EDGE_KINDS = {
    cls.kind: cls for cls in (QuadraticCoupling, QuadraticForm, LogCoshCoupling, QuarticCoupling)
}
_HYPER_KINDS = {cls.kind: cls for cls in (QuadraticFormK, SquaredSpan)}


def _node_record(f: NodeFactor) -> dict:
    return {"kind": f.kind, **f.params()}


def _node_from_record(rec: dict, where: str) -> NodeFactor:
    kind = rec.get("kind")
    if kind not in _NODE_KINDS:
        raise ProblemFormatError(f"{where}: unknown node factor kind {kind!r}")
    params = {k: v for k, v in rec.items() if k not in ("kind", "var")}
    if kind == "sum":
        terms = params.get("terms")
        if not isinstance(terms, list):
            raise ProblemFormatError(f"{where}: sum factor needs a 'terms' list")
        return Sum(tuple(_node_from_record(t, f"{where}.terms[{k}]") for k, t in enumerate(terms)))
    return _construct(_NODE_KINDS[kind], params, where)


def _construct(cls, params, where):
    try:
        return cls(**params)
    except ProblemFormatError as exc:
        raise ProblemFormatError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise ProblemFormatError(f"{where}: bad parameters for {cls.kind}: {exc}") from None


def program_to_dict(program: Program) -> dict:
    doc = {
        "n": program.n,
        "node_factors": [{"var": i, **_node_record(f)} for i, f in enumerate(program.node_factors)],
        "edge_factors": [{"i": f.i, "j": f.j, "kind": f.kind, **f.params()} for f in program.edge_factors],
        "hyper_factors": [
            {"scope": list(h.scope), "kind": h.kind, **h.params()} for h in program.hyper_factors
        ],
    }
    if program.B is not None:
        doc["B"] = program.B
    return doc


def program_from_dict(doc: dict) -> Program:
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    for key in ("n", "node_factors"):
        if key not in doc:
            raise ProblemFormatError(f"missing field {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise ProblemFormatError("field 'n' must be a positive integer")
    nodes: List[Optional[NodeFactor]] = [None] * n
    for k, rec in enumerate(doc["node_factors"]):
        where = f"node_factors[{k}]"
        var = rec.get("var")
        if not isinstance(var, int) or not 0 <= var < n:
            raise ProblemFormatError(f"{where}: 'var' must be an integer in [0, {n})")
        if nodes[var] is not None:
            raise ProblemFormatError(f"{where}: variable {var} already has a node factor")
        nodes[var] = _node_from_record(rec, where)
    missing = [i for i, f in enumerate(nodes) if f is None]
    if missing:
        raise ProblemFormatError(f"node_factors: no factor for variables {missing}")
    edges = []
    for k, rec in enumerate(doc.get("edge_factors", [])):
        where = f"edge_factors[{k}]"
        kind = rec.get("kind")
        if kind not in _EDGE_KINDS:
            raise ProblemFormatError(f"{where}: unknown edge factor kind {kind!r}")
        params = {key: v for key, v in rec.items() if key != "kind"}
        edges.append(_construct(_EDGE_KINDS[kind], params, where))
    hypers = []
    for k, rec in enumerate(doc.get("hyper_factors", [])):
        where = f"hyper_factors[{k}]"
        kind = rec.get("kind")
        if kind not in _HYPER_KINDS:
            raise ProblemFormatError(f"{where}: unknown hyper factor kind {kind!r}")
        params = {key: v for key, v in rec.items() if key != "kind"}
        hypers.append(_construct(_HYPER_KINDS[kind], params, where))
    B = doc.get("B")
    try:
        return Program(n, tuple(nodes), tuple(edges), tuple(hypers), None if B is None else float(B))
    except ProblemFormatError:
        raise
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc)) from None


def dumps_program(program: Program, indent: Optional[int] = 2) -> str:
    return json.dumps(program_to_dict(program), indent=indent)


def loads_program(text: str) -> Program:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return program_from_dict(doc)


def load_program(path) -> Program:
    with open(path) as fh:
        return loads_program(fh.read())


def save_program(program: Program, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_program(program))
        fh.write("\n")

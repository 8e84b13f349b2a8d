"""Reference solvers: damped Newton (ground truth) and two decentralized baselines.

Coordinate descent and gradient descent are written as vertex-local engines
so they run under exactly the same schedules as the min-sum engines.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from . import scheduler
from ._scalar import bisect_unbounded
from .dominance import normalize_box, sample_points
from .model import Program, evaluate, gradient, hessian
from .trace import Trace

NEWTON_MAX_ITER = 500


@dataclass
class SolveReport:
    x: np.ndarray
    iterations: int
    grad_norm: float
    converged: bool


def newton_solve(program: Program, x0=None, tol: float = 1e-10, max_iter: int = NEWTON_MAX_ITER) -> SolveReport:
    """Damped Newton with step halving; converged when ``||grad F||_inf <= tol``."""
    x = np.zeros(program.n) if x0 is None else np.array(x0, dtype=float)
    g = gradient(program, x)
    gn = float(np.max(np.abs(g)))
    fx = evaluate(program, x)
    it = 0
    while gn > tol and it < max_iter:
        step = np.linalg.solve(hessian(program, x), -g)
        alpha = 1.0
        for _ in range(60):
            cand = x + alpha * step
            fc = evaluate(program, cand)
            gc = gradient(program, cand)
            gcn = float(np.max(np.abs(gc)))
            # near the optimum F stops resolving; fall back on the gradient
            if fc < fx or (fc <= fx + 1e-14 * max(1.0, abs(fx)) and gcn < gn):
                break
            alpha *= 0.5
        else:
            break
        x, fx, g, gn = cand, fc, gc, gcn
        it += 1
    return SolveReport(x, it, gn, gn <= tol)


class CoordinateDescentEngine:
    """``x_i <- argmin_y f_i(y) + sum_u f_ui(x_u, y)`` with lagged ``x_u``."""

    name = "coordinate-descent"

    def __init__(self, program: Program, x0=None):
        self.program = program
        self.x0 = np.zeros(program.n) if x0 is None else np.asarray(x0, dtype=float)

    def reads(self, i):
        return self.program.neighbors(i)

    def initial(self):
        return {(i, "x"): float(self.x0[i]) for i in range(self.program.n)}

    def update(self, i, read):
        p = self.program
        f = p.node_factors[i]
        others = [(p.edge(u, i), read((u, "x"))) for u in p.neighbors(i)]

        def slope(y):
            s = f.d1(y)
            for e, xu in others:
                s += e.grad(xu, y)[1]
            return s

        return {(i, "x"): float(bisect_unbounded(slope, read((i, "x"))))}

    def estimate(self, i, read):
        return read((i, "x"))

    def on_estimate(self, i, x):
        return {}

    @staticmethod
    def delta(old, new):
        return abs(new - old)


class GradientDescentEngine(CoordinateDescentEngine):
    """``x_i <- x_i - alpha d/dx_i (f_i(x_i) + sum_u f_ui(x_u, x_i))`` with lagged ``x_u``."""

    name = "gradient-descent"

    def __init__(self, program: Program, alpha: float, x0=None):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        super().__init__(program, x0)
        self.alpha = float(alpha)

    def update(self, i, read):
        p = self.program
        xi = read((i, "x"))
        g = float(p.node_factors[i].d1(xi))
        for u in p.neighbors(i):
            g += float(p.edge(u, i).grad(read((u, "x")), xi)[1])
        return {(i, "x"): xi - self.alpha * g}


def default_alpha(program: Program, samples: int = 64) -> float:
    """``1 / max`` Hessian diagonal over the origin and (if ``B`` is set) the box."""
    pts = [np.zeros(program.n)]
    if program.B is not None:
        pts.extend(sample_points(normalize_box(program.B, program.n), samples))
    return 1.0 / max(float(np.max(np.diag(hessian(program, x)))) for x in pts)


def coordinate_descent_async(program: Program, schedule, x0=None) -> Trace:
    return scheduler.run(CoordinateDescentEngine(program, x0), program, schedule)


def gradient_descent_async(program: Program, schedule, alpha: Optional[float] = None, x0=None) -> Trace:
    """Divergence (``||x||_inf > 1e12``) ends the run with ``trace.diverged`` set."""
    if alpha is None:
        alpha = default_alpha(program)
    return scheduler.run(GradientDescentEngine(program, alpha, x0), program, schedule)

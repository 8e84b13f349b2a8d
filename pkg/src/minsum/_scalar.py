"""One-dimensional convex minimization by bisection on a (sub)gradient."""
import numpy as np

MAX_BISECTIONS = 60


def bisect_leftmost(slope, lo, hi, width, max_iter=MAX_BISECTIONS):
    """Leftmost minimizer of convex functions on ``[lo, hi]``, vectorized.

    ``slope(y)`` must return the right derivative (any subgradient that is
    nondecreasing in ``y`` works) for an array ``y``.  The leftmost minimizer
    is ``inf {y : slope(y) >= 0}``, clamped to the interval.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    left = lo.copy()
    lo = lo.copy()
    hi = hi.copy()
    at_left = slope(lo) >= 0
    for _ in range(max_iter):
        if np.all(hi - lo <= width):
            break
        mid = 0.5 * (lo + hi)
        up = slope(mid) >= 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return np.where(at_left, left, hi)


def bisect_unbounded(slope, x0, width=1e-13, max_iter=200):
    """Minimizer of a convex scalar function on the real line.

    Expands a bracket around ``x0`` geometrically, then bisects.
    """
    step = 1.0
    lo, hi = x0 - step, x0 + step
    for _ in range(200):
        if slope(lo) < 0:
            break
        step *= 2.0
        lo = x0 - step
    for _ in range(200):
        if slope(hi) >= 0:
            break
        step *= 2.0
        hi = x0 + step
    for _ in range(max_iter):
        if hi - lo <= width * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if slope(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)

"""Scaled diagonal dominance certificates.

A program is ``(lam, w)``-scaled diagonally dominant when, for every row
``i`` of the Hessian and every point ``x``,

    sum_{j != i} w_j |H_ij(x)|  <=  lam * w_i * H_ii(x),   0 < lam < 1, w > 0.

Quadratic programs are certified exactly (constant Hessian, Perron vector
of ``D^-1 |A_off|``).  Everything else is certified on a finite box by
sampling, which is only as good as the sample; the margin and the box
are recorded in the certificate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import DominanceRefused
from .model import Program, hessian, shared_pairs

SAFETY = 1e-9
SAMPLED_MARGIN = 1.05
LAMBDA_FLOOR = 1e-6
POWER_MAX_ITER = 10_000
POWER_TOL = 1e-12


@dataclass(frozen=True)
class DominanceCertificate:
    lam: float
    w: Tuple[float, ...]
    M: float
    K: float
    method: str
    box: Optional[Tuple[Tuple[float, float], ...]] = None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "w": list(self.w),
            "M": self.M,
            "K": self.K,
            "method": self.method,
            "box": None if self.box is None else [list(b) for b in self.box],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DominanceCertificate":
        box = doc.get("box")
        return cls(
            lam=float(doc["lambda"]),
            w=tuple(float(v) for v in doc["w"]),
            M=float(doc["M"]),
            K=float(doc["K"]),
            method=str(doc["method"]),
            box=None if box is None else tuple((float(a), float(b)) for a, b in box),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def constant_K(M, w) -> float:
    w = np.asarray(w, dtype=float)
    return float((1.0 / M) * (w.max() / w.min()))


def row_ratios(H: np.ndarray, w) -> np.ndarray:
    """Per-row ``sum_{j!=i} w_j |H_ij| / (w_i H_ii)``.

    Rows with zero diagonal and zero off-diagonal mass report 0; rows with
    a nonpositive diagonal and nonzero off-diagonal mass report ``inf``.
    """
    w = np.asarray(w, dtype=float)
    off = np.abs(H) @ w - np.abs(np.diag(H)) * w
    diag = np.diag(H) * w
    out = np.empty(len(w))
    for i in range(len(w)):
        if diag[i] > 0:
            out[i] = off[i] / diag[i]
        else:
            out[i] = 0.0 if off[i] <= 0 else np.inf
    return out


def _perron(B: np.ndarray) -> np.ndarray:
    """Positive Perron-type vector of a nonnegative matrix.

    Iterates on ``I + B + delta*J``: the identity shift removes periodicity
    (bipartite graphs) and the tiny all-ones term makes the matrix
    irreducible so the limit is strictly positive.
    """
    n = B.shape[0]
    delta = 1e-12 * max(1.0, float(B.max(initial=0.0)))
    A = np.eye(n) + B + delta
    v = np.ones(n) / n
    prev = np.inf
    for _ in range(POWER_MAX_ITER):
        u = A @ v
        est = u.sum() / v.sum()
        v = u / u.sum()
        if abs(est - prev) < POWER_TOL:
            break
        prev = est
    return v / v.max()


def certify_matrix(A, w=None) -> DominanceCertificate:
    """Exact certificate for a constant symmetric Hessian ``A``.

    Without ``w`` the weights come from the Perron vector of ``D^-1|A_off|``
    and ``lam`` is the Collatz-Wielandt bound ``max_i (Bw)_i / w_i`` (an
    upper bound on the spectral radius) plus a ``1e-9`` margin.  With a
    supplied ``w`` the row condition is evaluated exactly and no margin is
    added.
    """
    A = np.asarray(A, dtype=float)
    d = np.diag(A)
    if np.any(d <= 0):
        bad = [int(i) for i in np.nonzero(d <= 0)[0]]
        raise DominanceRefused(f"nonpositive diagonal Hessian entries at variables {bad}")
    Boff = np.abs(A) / d[:, None]
    np.fill_diagonal(Boff, 0.0)
    if w is None:
        w = _perron(Boff)
        rho = float(np.max(Boff @ w / w))
        if rho >= 1 - SAFETY:
            raise DominanceRefused(
                f"spectral radius of D^-1|A_off| is {rho:.12g} >= 1 - 1e-9; dominance not certifiable"
            )
        lam = max(rho + SAFETY, SAFETY)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != d.shape or np.any(w <= 0):
            raise DominanceRefused("weights must be positive, one per variable")
        lam = float(np.max(Boff @ w / w))
        if lam >= 1:
            raise DominanceRefused(f"row condition needs lambda = {lam:.12g} >= 1 for the given weights")
        lam = max(lam, LAMBDA_FLOOR)
    M = float(d.min())
    return DominanceCertificate(lam, tuple(float(v) for v in w), M, constant_K(M, w), "exact-quadratic")


def certify_quadratic(program: Program, w=None) -> DominanceCertificate:
    if not program.is_quadratic:
        raise DominanceRefused("certify_quadratic needs every factor to be quadratic")
    return certify_matrix(hessian(program, np.zeros(program.n)), w)


def normalize_box(box, n) -> np.ndarray:
    """Accept a scalar ``B`` (meaning ``[-B, B]^n``) or ``n`` intervals."""
    if np.isscalar(box):
        b = float(box)
        return np.array([[-b, b]] * n, dtype=float)
    arr = np.asarray(box, dtype=float)
    if arr.shape != (n, 2) or np.any(arr[:, 0] > arr[:, 1]) or not np.all(np.isfinite(arr)):
        raise ValueError(f"box must be {n} finite intervals [lo, hi]")
    return arr


def sample_points(box: np.ndarray, samples: int, skip: int = 0) -> np.ndarray:
    """Low-discrepancy points in the box, led by its center.

    ``skip`` advances the (unscrambled) Halton sequence so a second call can
    draw points disjoint from a first one.
    """
    n = box.shape[0]
    if n == 1:
        u = (np.arange(skip, skip + samples) + 0.5) / (skip + samples)
        u = u[:, None]
    else:
        eng = qmc.Halton(d=n, scramble=False)
        if skip:
            eng.fast_forward(skip)
        u = eng.random(samples)
    pts = box[:, 0] + u * (box[:, 1] - box[:, 0])
    if skip == 0:
        pts = np.vstack([box.mean(axis=1), pts])
    return pts


def certify_sampled(program: Program, box, samples: int = 2048, w=None) -> DominanceCertificate:
    """Certificate valid at every sampled point of ``box``.

    ``lam`` is the largest row ratio seen, times a 5% margin, capped below 1.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    box = normalize_box(box, program.n)
    w = np.ones(program.n) if w is None else np.asarray(w, dtype=float)
    worst = 0.0
    M = np.inf
    for x in sample_points(box, samples):
        H = hessian(program, x)
        d = np.diag(H)
        if np.any(d <= 0):
            raise DominanceRefused(f"nonpositive diagonal Hessian entry at sample {x.tolist()}")
        M = min(M, float(d.min()))
        worst = max(worst, float(row_ratios(H, w).max()))
    if worst >= 1:
        raise DominanceRefused(f"sampled row condition needs lambda = {worst:.6g} >= 1")
    lam = min(worst * SAMPLED_MARGIN, 0.5 * (1.0 + worst))
    lam = max(lam, LAMBDA_FLOOR)
    return DominanceCertificate(
        lam,
        tuple(float(v) for v in w),
        M,
        constant_K(M, w),
        "sampled-box",
        tuple((float(a), float(b)) for a, b in box),
    )


def certify(program: Program, box=None, samples: int = 2048) -> DominanceCertificate:
    """Exact certificate for quadratic programs, sampled otherwise."""
    if program.is_quadratic:
        return certify_quadratic(program)
    if box is None:
        if program.B is None:
            raise DominanceRefused("non-quadratic program: a sampling box (or B) is required")
        box = program.B
    return certify_sampled(program, box, samples)


def violations(program: Program, cert: DominanceCertificate, points) -> List[Tuple[int, int, float]]:
    """``(point index, row, ratio)`` for every point/row where the certificate fails."""
    bad = []
    for k, x in enumerate(points):
        r = row_ratios(hessian(program, x), cert.w)
        for i in np.nonzero(r > cert.lam)[0]:
            bad.append((k, int(i), float(r[i])))
    return bad


def revalidate(program: Program, cert: DominanceCertificate, samples: int, seed: int = 0, box=None):
    """Re-check a certificate at fresh points; returns the list of violations.

    Points come from a later Halton segment plus seeded uniform draws; the
    box defaults to the certificate's own (or ``[-B, B]^n`` / ``[-10, 10]^n``
    for exact certificates, whose claim is global).
    """
    if box is None:
        box = cert.box if cert.box is not None else (program.B or 10.0)
    box = normalize_box(box, program.n)
    rng = np.random.default_rng(seed)
    half = samples // 2
    pts = np.vstack(
        [
            sample_points(box, half, skip=100_003),
            box[:, 0] + rng.random((samples - half, program.n)) * (box[:, 1] - box[:, 0]),
        ]
    )
    return violations(program, cert, pts)


@dataclass(frozen=True)
class Theorem2Report:
    """Structural and per-factor dominance conditions for hyperedge programs.

    ``condition_i`` only covers the structural half (no vertex pair in two
    factors); dominance of the full objective is certified separately.
    """

    condition_i: bool
    condition_ii: bool
    shared: Tuple[Tuple[int, int], ...]
    factor_lambda: float


def check_theorem2_conditions(program: Program, w=None, box=None, samples: int = 256) -> Theorem2Report:
    counts = shared_pairs(program)
    shared = tuple(sorted(p for p, c in counts.items() if c > 1))
    w = np.ones(program.n) if w is None else np.asarray(w, dtype=float)
    if box is None:
        box = program.B or 1.0
    pts = sample_points(normalize_box(box, program.n), samples)
    worst = 0.0
    factors = [(list(h.scope), h.hess, True) for h in program.hyper_factors]
    for f in program.edge_factors:
        factors.append(([f.i, f.j], _edge_hess(f), f.quadratic))
    for idx, hess, constant in factors:
        for x in pts[:1] if constant else pts:
            H = hess(x[idx])
            worst = max(worst, float(row_ratios(H, w[idx]).max()))
    return Theorem2Report(not shared, worst < 1.0, shared, worst)


def _edge_hess(f):
    def hess(xc):
        a, b, c = f.hess(xc[0], xc[1])
        return np.array([[a, b], [b, c]], dtype=float)

    return hess

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minsum import dominance, instances
from minsum.dominance import (
    DominanceCertificate,
    certify,
    certify_matrix,
    certify_quadratic,
    certify_sampled,
    check_theorem2_conditions,
    revalidate,
)
from minsum.errors import DominanceRefused
from minsum.model import Program, Quadratic, QuadraticFormK, SquaredSpan


def test_two_by_two():
    cert = certify_matrix([[2.0, 1.0], [1.0, 2.0]])
    assert cert.lam == pytest.approx(0.5 + 1e-9, abs=1e-12)
    assert np.allclose(cert.w, [1.0, 1.0])
    assert cert.M == 2.0 and cert.method == "exact-quadratic"


def test_chain3_exact(chain3):
    cert = certify_quadratic(chain3)
    assert cert.lam <= 1 / 3 + 1e-9
    uniform = certify_quadratic(chain3, w=np.ones(3))
    assert uniform.lam == pytest.approx(1 / 3, abs=1e-15)
    assert uniform.M == 1.25 and uniform.K == pytest.approx(0.8)


@pytest.mark.parametrize("A", [[[1.0, 1.0], [1.0, 1.0]], [[0.0, 0.1], [0.1, 1.0]], [[-1.0, 0.0], [0.0, 1.0]]])
def test_refusals(A):
    with pytest.raises(DominanceRefused) as info:
        certify_matrix(A)
    assert info.value.diagnostic


def test_boundary_problem_file_is_refused():
    import pathlib

    from minsum.model import load_program

    path = pathlib.Path(__file__).resolve().parent.parent / "problems" / "boundary_refusal.json"
    with pytest.raises(DominanceRefused):
        certify(load_program(path))


def test_sampled_chain3(chain3):
    cert = certify_sampled(chain3, [[-3, 1], [0, 2], [-1, 1]], samples=64)
    assert cert.lam <= (1 / 3) * 1.05 + 1e-12
    assert cert.M == 1.25 and cert.K == pytest.approx(0.8)
    assert cert.method == "sampled-box" and cert.box is not None


def test_sampled_logcosh_matches_dense_grid():
    program = instances.logcosh_chain()
    cert = certify_sampled(program, 2.0, samples=1024)
    grid = np.linspace(-2, 2, 41)
    worst = 0.0
    for a in grid:
        for b in grid:
            for c in grid[::4]:
                H = dominance.hessian(program, np.array([a, b, c]))
                worst = max(worst, dominance.row_ratios(H, np.ones(3)).max())
    assert worst == pytest.approx(2 / 3, abs=1e-12)
    assert cert.lam == pytest.approx(2 / 3 * 1.05, rel=1e-6)


def test_decoupled_floor():
    p = Program(3, tuple(Quadratic(1.0) for _ in range(3)))
    cert = certify_sampled(p, 1.0, samples=8)
    assert cert.lam == 1e-6


def test_non_quadratic_needs_a_box():
    p = instances.logcosh_chain(B=2.0).with_factors(B=None)
    with pytest.raises(DominanceRefused):
        certify(p)
    with pytest.raises(DominanceRefused):
        certify_quadratic(p)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.integers(min_value=0, max_value=2**32 - 1))
def test_exact_and_sampled_agree_on_quadratics(n, seed):
    rng = np.random.default_rng(seed)
    p = instances.random_quadratic(rng, n, instances.random_tree_edges(rng, n))
    try:
        exact = certify_quadratic(p)
    except DominanceRefused:
        return
    sampled = certify_sampled(p, 1.0, samples=4, w=exact.w)
    assert sampled.lam <= exact.lam * 1.05 + 1e-9
    assert exact.K * exact.M * min(exact.w) == pytest.approx(max(exact.w), rel=1e-14)
    assert not revalidate(p, exact, 200, seed=seed)


def test_sampled_certificate_revalidates():
    p = instances.quartic_chain()
    cert = certify_sampled(p, 2.0, samples=256)
    assert cert.lam < 1
    assert revalidate(p, cert, 2560, seed=3) == []


def test_revalidate_detects_a_bad_certificate(chain3):
    forged = DominanceCertificate(0.2, (1.0, 1.0, 1.0), 1.25, 0.8, "exact-quadratic")
    assert revalidate(chain3, forged, 10)


def test_certificate_json():
    cert = certify_sampled(instances.logcosh_chain(), 2.0, samples=16)
    doc = json.loads(cert.dumps())
    assert set(doc) == {"lambda", "w", "M", "K", "method", "box"}
    assert DominanceCertificate.from_dict(doc) == cert


def test_hyper_structural_condition():
    assert check_theorem2_conditions(instances.two_triangle_factors()).condition_i
    hyper = (QuadraticFormK((0, 1, 2), H=np.eye(3)), QuadraticFormK((0, 1, 3), H=np.eye(3)))
    p = Program(4, tuple(Quadratic(1.0) for _ in range(4)), hyper_factors=hyper)
    rep = check_theorem2_conditions(p)
    assert not rep.condition_i and rep.shared == ((0, 1),)


def test_hyper_rank_one_boundary():
    p = Program(3, tuple(Quadratic(1.0) for _ in range(3)), hyper_factors=(SquaredSpan((0, 1, 2), c=1.0, a=(1, -1, 0)),))
    rep = check_theorem2_conditions(p)
    assert not rep.condition_ii and rep.factor_lambda == pytest.approx(1.0)

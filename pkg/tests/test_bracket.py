import math

import numpy as np
import pytest

from oracles import root_find_factorization, unipotent_diag_product
from modshadow.bracket import (
    ExceedsEtaError,
    OutsideChartError,
    ank_compose,
    ank_decompose,
    audit_local_product,
    bowen_bracket,
    bracket_in_quotient,
    local_product_constants,
    nak_compose,
    nak_decompose,
    sample_ball,
)
from modshadow.flow import geodesic_flow, leaf_residual, stable_move
from modshadow.frames import FrameElement, HalfPlanePoint, UnitTangent, chart_dist, tangent_to_frame
from modshadow.lattice import DeckElement, injectivity_radius, quotient_dist

I = FrameElement(1.0, 0.0, 0.0, 1.0)


def frame_at(re, im, angle=0.3):
    return tangent_to_frame(UnitTangent(HalfPlanePoint(re, im), angle))


def test_nak_examples():
    p = nak_decompose(np.eye(2))
    assert (p.sigma, p.nu, p.c) == (0.0, 0.0, 0.0)
    p = nak_decompose([[1.0, 0.7], [0.0, 1.0]])
    assert (p.sigma, p.nu, p.c) == (0.7, 0.0, 0.0)
    p = nak_decompose([[2.0, 1.0], [1.0, 1.0]])
    assert (p.sigma, p.nu, p.c) == (1.0, 1.0, 0.0)
    np.testing.assert_allclose(nak_compose(p), [[2.0, 1.0], [1.0, 1.0]], atol=1e-15)


def test_nak_roundtrip_and_sign():
    rng = np.random.default_rng(1)
    for params in rng.normal(scale=0.2, size=(500, 3)):
        h = unipotent_diag_product(*params)
        np.testing.assert_allclose(nak_compose(nak_decompose(h)), h, atol=1e-13)
        np.testing.assert_allclose(nak_compose(nak_decompose(-h)), h, atol=1e-13)
        np.testing.assert_allclose(ank_compose(ank_decompose(h)), h, atol=1e-13)


def test_nak_agrees_with_root_find():
    rng = np.random.default_rng(2)
    for params in rng.normal(scale=0.1, size=(25, 3)):
        h = unipotent_diag_product(*params)
        found, res = root_find_factorization(h)
        p = nak_decompose(h)
        assert res <= 1e-12
        np.testing.assert_allclose((p.sigma, p.nu, p.c), found, atol=1e-8)


def test_outside_chart():
    with pytest.raises(OutsideChartError):
        nak_decompose([[0.0, -1.0], [1.0, 0.0]])


def test_bracket_identity_and_stable_pair():
    y = frame_at(0.1, 1.4)
    res = bowen_bracket(y, y, 0.1)
    assert chart_dist(res.w, y) <= 1e-15 and res.params.magnitude <= 1e-15
    z = stable_move(y, 0.02)
    res = bowen_bracket(y, z, 0.1)
    assert chart_dist(res.w, y) <= 1e-14
    assert res.params.sigma == pytest.approx(-0.02, abs=1e-14)
    assert abs(res.params.nu) <= 1e-14 and abs(res.params.c) <= 1e-14


def test_bracket_leaf_memberships():
    rng = np.random.default_rng(3)
    x = frame_at(0.0, 1.5)
    for y, z in zip(sample_ball(x, 0.05, 50, rng), sample_ball(x, 0.05, 50, rng)):
        for mirrored, kinds in ((False, ("strong-stable", "center-unstable")),
                                (True, ("strong-unstable", "center-stable"))):
            res = bowen_bracket(y, z, mirrored=mirrored)
            assert leaf_residual(z, res.w, kinds[0]) <= 1e-12
            assert leaf_residual(y, res.w, kinds[1]) <= 1e-12


def test_bracket_dynamics():
    y = frame_at(0.0, 1.2)
    z = y @ FrameElement.from_matrix(unipotent_diag_product(0.02, -0.03, 0.01))
    eta = 0.05
    res = bowen_bracket(y, z, eta)
    w = res.w
    for t in (1, 2, 4, 8):
        assert quotient_dist(geodesic_flow(w, t), geodesic_flow(z, t)) <= 2 * math.exp(-t) * eta
    # backwards, w approaches the flow line of y
    ref = [chart_dist(geodesic_flow(w, -t), geodesic_flow(y, -t - res.params.c)) for t in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(ref, ref[1:]))


def test_bracket_in_quotient():
    y = frame_at(0.2, 1.3)
    deck = DeckElement(2, 1, 1, 1)
    res = bracket_in_quotient(deck.act(y), y)
    assert res.params.magnitude <= 1e-9
    # a pair straddling the wall re = 1/2
    a = frame_at(0.49, 1.3, 1.0)
    b = frame_at(-0.49, 1.3, 1.0)
    res = bracket_in_quotient(a, b, 0.1)
    assert res.deck.same_class_sign(DeckElement(1, -1, 0, 1))
    far = frame_at(0.0, 1.5) @ FrameElement.from_matrix(unipotent_diag_product(0.3, 0.0, 0.0))
    with pytest.raises(ExceedsEtaError):
        bracket_in_quotient(frame_at(0.0, 1.5), far, 0.03)


def test_local_product_constants():
    delta, eta = local_product_constants(frame_at(0.0, 1.0), 0.1)
    assert (delta, eta) == pytest.approx((0.00625, 0.025))
    high = frame_at(0.0, 10.0)
    d10, e10 = local_product_constants(high, 0.1)
    scale = injectivity_radius(high) / 0.2
    assert (d10, e10) == pytest.approx((0.00625 * scale, 0.025 * scale))


@pytest.mark.parametrize("im", [1.0, 8.0])
def test_local_product_audit(im):
    report = audit_local_product(frame_at(0.1, im), 0.2, pairs=300)
    assert report.passed, report

import math

import numpy as np
import pytest

from modshadow.flow import (
    AnosovConstants,
    MODEL_CONSTANTS,
    center_stable_point,
    center_unstable_point,
    diag_flow,
    geodesic_flow,
    leaf_residual,
    local_manifold,
    stable_move,
    unstable_move,
    verify_anosov_bounds,
)
from modshadow.frames import FrameElement, HalfPlanePoint, UnitTangent, chart_dist, random_frames, tangent_to_frame
from modshadow.lattice import quotient_dist

I = FrameElement(1.0, 0.0, 0.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def test_flow_examples(rng):
    g = random_frames(rng, 1)[0]
    assert geodesic_flow(g, 0.0) == g
    assert chart_dist(geodesic_flow(I, 2 * math.log(2)), FrameElement(2.0, 0.0, 0.0, 0.5)) <= 1e-15


def test_flow_property(rng):
    worst = 0.0
    for g in random_frames(rng, 1000):
        s, t = rng.uniform(-20, 20, 2)
        direct = geodesic_flow(g, s + t).matrix
        stepped = geodesic_flow(geodesic_flow(g, s), t).matrix
        worst = max(worst, np.abs(direct - stepped).max() / np.abs(direct).max())
    assert worst <= 1e-11


def test_flow_time_limit():
    with pytest.raises(OverflowError):
        diag_flow(701.0)


def test_conjugation_identities(rng):
    for g in random_frames(rng, 200):
        s, t = rng.uniform(-3, 3, 2)
        lhs = geodesic_flow(stable_move(g, s), t).matrix
        rhs = stable_move(geodesic_flow(g, t), s * math.exp(-t)).matrix
        assert np.abs(lhs - rhs).max() <= 1e-13 * np.abs(lhs).max() * 10
        lhs = geodesic_flow(unstable_move(g, s), t).matrix
        rhs = unstable_move(geodesic_flow(g, t), s * math.exp(t)).matrix
        assert np.abs(lhs - rhs).max() <= 1e-13 * np.abs(lhs).max() * 10


def test_stable_move_examples(rng):
    g = random_frames(rng, 1)[0]
    assert stable_move(g, 0.0) == g
    d = chart_dist(geodesic_flow(I, 1.0), geodesic_flow(stable_move(I, 0.5), 1.0))
    assert d == pytest.approx(0.5 * math.exp(-1), abs=1e-15)
    assert d == pytest.approx(0.1839397, abs=1e-7)


def test_center_unstable_points(rng):
    g = random_frames(rng, 1)[0]
    assert chart_dist(center_unstable_point(g, 0.0, 0.0), g) <= 1e-15
    assert chart_dist(center_unstable_point(g, 0.7, 0.0), geodesic_flow(g, 0.7)) <= 1e-15
    p = center_unstable_point(g, 0.3, 0.2)
    ref = geodesic_flow(g, 0.3)
    gaps = [chart_dist(geodesic_flow(p, -t), geodesic_flow(ref, -t)) for t in np.linspace(0, 10, 21)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    q = center_stable_point(g, 0.3, 0.2)
    gaps = [chart_dist(geodesic_flow(q, t), geodesic_flow(ref, t)) for t in np.linspace(0, 10, 21)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_local_manifold_sizes():
    at = lambda im: tangent_to_frame(UnitTangent(HalfPlanePoint(0.0, im), 0.0))
    assert local_manifold(at(1.0), "strong-stable", 5).size == pytest.approx(0.0125)
    high = local_manifold(at(10.0), "strong-stable", 5).size
    higher = local_manifold(at(20.0), "strong-stable", 5).size
    assert high == pytest.approx(2 * higher)
    with pytest.raises(ValueError):
        local_manifold(at(1.0), "sideways", 5)


@pytest.mark.parametrize("kind", ["strong-stable", "strong-unstable", "center-stable", "center-unstable"])
def test_local_manifold_membership(kind, rng):
    g = random_frames(rng, 1)[0]
    patch = local_manifold(g, kind, 11)
    assert max(leaf_residual(g, p, kind) for p in patch.samples) <= 1e-10


def test_anosov_bounds_and_negative_control():
    for direction in ("stable", "unstable"):
        report = verify_anosov_bounds(MODEL_CONSTANTS, n_samples=2000, direction=direction)
        assert report.passed and report.max_normalized_ratio <= 1.0
        assert report.parameter_ratio_error <= 1e-12
    control = verify_anosov_bounds(MODEL_CONSTANTS, n_samples=2000, direction="unstable-forward")
    assert not control.passed


def test_constants_are_validated():
    with pytest.raises(ValueError):
        AnosovConstants(C=0.5)
    with pytest.raises(ValueError):
        AnosovConstants(lam=1.0)


def test_flow_commutes_with_decks(rng):
    g = random_frames(rng, 1)[0]
    deck = FrameElement(2.0, 1.0, 1.0, 1.0)
    assert quotient_dist(geodesic_flow(deck @ g, 3.0), geodesic_flow(g, 3.0)) <= 1e-9

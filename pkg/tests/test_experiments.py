import numpy as np
import pytest

from modshadow.experiments import (
    BudgetExhausted,
    LeafGrid,
    Window,
    density_experiment,
    leaf_density_experiment,
    leaf_inclusion,
    replay_hit,
    thread_count,
    transitivity_experiment,
    validate_orbit,
)
from modshadow.flow import diag_flow, lower
from modshadow.frames import FrameElement, batch_chart_dist, chart_dist
from modshadow.lattice import DeckElement, quotient_dist
from modshadow.shadowing import SearchBudget, find_periodic_orbit

WINDOW = Window(1.0, 2.0)


@pytest.fixture(scope="module")
def generic_frame():
    return WINDOW.sample(np.random.default_rng(2024))


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("MODSHADOW_THREADS", "2")
    assert thread_count(8) == 2
    assert thread_count(1) == 1
    monkeypatch.setenv("MODSHADOW_THREADS", "zero")
    with pytest.raises(ValueError):
        thread_count(4)
    monkeypatch.setenv("MODSHADOW_THREADS", "0")
    with pytest.raises(ValueError):
        thread_count(4)


def test_window_validation():
    with pytest.raises(ValueError):
        Window(0.5, 2.0)
    with pytest.raises(ValueError):
        Window(2.0, 2.0)
    with pytest.raises(ValueError):
        Window(1.0, 2.0, re_lo=-0.7)


def test_window_samples_and_net():
    rng = np.random.default_rng(0)
    narrow = Window(1.0, 2.0, re_lo=0.0, re_hi=0.2)
    for _ in range(50):
        m = narrow.sample(rng).matrix
        z = (m[0, 0] * 1j + m[0, 1]) / (m[1, 0] * 1j + m[1, 1])
        assert 0.0 <= z.real <= 0.2 and 1.0 <= z.imag <= 2.0
    net = WINDOW.net(0.25)
    assert len(net) == 221
    # every sampled frame has a net point nearby
    frames = np.array([WINDOW.sample(rng).matrix for _ in range(200)])
    nearest = [batch_chart_dist(np.broadcast_to(f, net.shape), net).min() for f in frames]
    assert max(nearest) <= 0.25


def test_validate_orbit_flags_bad_results(generic_frame):
    result = find_periodic_orbit(generic_frame, 0.2, SearchBudget())
    assert validate_orbit(result, generic_frame, 0.2) == ""
    shifted = type(result)(**{**result.__dict__, "period": result.period + 1e-6})
    assert validate_orbit(shifted, generic_frame, 0.2).startswith("closure residual")
    wrong_deck = type(result)(**{**result.__dict__, "gamma": result.gamma.inverse()})
    assert validate_orbit(wrong_deck, generic_frame, 0.2) != ""
    far = FrameElement.from_matrix(generic_frame.matrix @ diag_flow(1.0))
    assert "start distance" in validate_orbit(result, far, 0.2)


def test_density_is_deterministic_across_threads():
    window = Window(1.0, 2.0, samples=12)
    one = density_experiment(window, 0.2, SearchBudget(), seed=5, threads=1)
    two = density_experiment(window, 0.2, SearchBudget(), seed=5, threads=2)
    assert one.coverage == two.coverage == 1.0
    for a, b in zip(one.records, two.records):
        assert a.x0 == b.x0 and a.word == b.word
        assert a.result.y == b.result.y
    assert one.max_start_distance <= 0.2


def test_leaf_density(generic_frame):
    report = leaf_density_experiment(generic_frame, WINDOW, 0.25)
    assert report.coverage >= 0.95
    assert report.samples == 221


def test_leaf_density_negative_control(generic_frame):
    short = LeafGrid(tau_max=5.0)
    flow_line = LeafGrid(tau_max=5.0, u_count=1)
    leaf = leaf_density_experiment(generic_frame, WINDOW, 0.25, short).coverage
    line = leaf_density_experiment(generic_frame, WINDOW, 0.25, flow_line).coverage
    assert line < 0.5 < leaf


def test_leaf_inclusion(generic_frame):
    violations, seen = leaf_inclusion(generic_frame, 3.0, 0.5, WINDOW, 0.25)
    assert violations == 0 and seen > 0


def test_transitivity_and_replay():
    rng = np.random.default_rng(9)
    for _ in range(3):
        u, v = WINDOW.sample(rng), WINDOW.sample(rng)
        hit = transitivity_experiment(u, v, 0.1)
        assert hit.t <= 200 and hit.end_distance <= 0.1
        assert hit.start_offset <= 0.1
        assert replay_hit(hit) == pytest.approx(hit.end_distance, abs=1e-10)
        # the start point lies on the unstable leaf of u
        rel = np.linalg.solve(u.matrix, hit.p.matrix)
        rel *= np.sign(rel[0, 0])
        assert abs(rel[0, 1]) <= 1e-12 and abs(rel[0, 0] - 1) <= 1e-12
        end = FrameElement.from_matrix(hit.deck.matrix @ hit.p.matrix @ diag_flow(hit.t))
        assert chart_dist(end, v) <= 0.1 + 1e-6


def test_transitivity_trivial_and_budget():
    u = WINDOW.sample(np.random.default_rng(1))
    near = FrameElement.from_matrix(u.matrix @ lower(0.01))
    assert transitivity_experiment(u, near, 0.1).t == 0.0
    v = FrameElement.from_matrix(DeckElement(2, 1, 1, 1).matrix @ u.matrix @ diag_flow(0.9))
    assert quotient_dist(u, v) > 0.1
    with pytest.raises(BudgetExhausted):
        transitivity_experiment(u, v, 1e-4, t_budget=0.5)

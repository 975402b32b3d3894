"""Density, leaf density and transitivity measured over compact windows."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.spatial import cKDTree

from .flow import diag_flow, lower, sample_window_frames
from .frames import FrameElement, batch_chart_dist, chart_dist
from .lattice import (
    DeckElement,
    _candidate_array,
    batch_reduce_frames,
    candidate_decks,
    classify,
    quotient_dist,
)
from .oracle import canonical_word, class_length
from .shadowing import (
    PeriodicOrbitError,
    PeriodicOrbitResult,
    SearchBudget,
    closure_residual,
    find_periodic_orbit,
    track_orbits,
)

THREADS_ENV = "MODSHADOW_THREADS"


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else os.cpu_count() or 1
    if cap is not None:
        if not cap.isdigit() or int(cap) < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {cap!r}")
        n = min(n, int(cap))
    return max(1, n)


@dataclass(frozen=True)
class Window:
    im_lo: float = 1.0
    im_hi: float = 4.0
    re_lo: float = -0.5
    re_hi: float = 0.5
    angle_resolution: int = 32
    samples: int = 500

    def __post_init__(self):
        if not self.im_lo >= 1:
            raise ValueError("window must satisfy im_lo >= 1")
        if not self.im_hi > self.im_lo:
            raise ValueError("window must satisfy im_hi > im_lo")
        if not -0.5 <= self.re_lo < self.re_hi <= 0.5:
            raise ValueError("window real range must lie in [-1/2, 1/2]")
        if self.samples < 1 or self.angle_resolution < 1:
            raise ValueError("sample budget must be positive")

    def sample(self, rng: np.random.Generator) -> FrameElement:
        m = sample_window_frames(rng, 1, self.im_lo, self.im_hi)[0]
        if (self.re_lo, self.re_hi) != (-0.5, 0.5):
            shift = rng.uniform(self.re_lo, self.re_hi) - (m[0, 0] * m[1, 0] + m[0, 1] * m[1, 1]) / (
                m[1, 0] ** 2 + m[1, 1] ** 2
            )
            m = np.array([[1.0, shift], [0.0, 1.0]]) @ m
        return FrameElement.from_matrix(m)

    def net(self, spacing: float) -> np.ndarray:
        """Frames spaced about ``spacing`` apart in the chart metric."""
        out = []
        n_im = max(1, math.ceil(math.log(self.im_hi / self.im_lo) / spacing))
        n_ang = max(1, math.ceil(2 * math.pi / (2 * spacing)))
        for y in np.exp(np.linspace(math.log(self.im_lo), math.log(self.im_hi), n_im + 1)):
            n_re = max(1, math.ceil((self.re_hi - self.re_lo) / (spacing * y)))
            root = math.sqrt(y)
            for x in np.linspace(self.re_lo, self.re_hi, n_re + 1):
                for ang in np.arange(n_ang) * (2 * math.pi / n_ang):
                    phi = (math.pi / 2 - ang) / 2
                    c, s = math.cos(phi), math.sin(phi)
                    m = np.array([[root, x / root], [0.0, 1 / root]]) @ np.array([[c, -s], [s, c]])
                    out.append(FrameElement.from_matrix(m).matrix)
        return np.array(out)


@dataclass
class SampleRecord:
    index: int
    x0: FrameElement
    success: bool
    result: PeriodicOrbitResult | None = None
    word: str | None = None
    diagnostic: str = ""


@dataclass
class DensityReport:
    epsilon: float
    samples: int
    successes: int
    coverage: float
    max_start_distance: float
    failures: list[SampleRecord] = field(default_factory=list)
    wall_time: float = 0.0
    records: list[SampleRecord] = field(default_factory=list)


def validate_orbit(result: PeriodicOrbitResult, x0: FrameElement, epsilon: float) -> str:
    """Independent re-check of a finder result; empty string when valid."""
    if classify(result.gamma) != "hyperbolic":
        return "gamma not hyperbolic"
    residual = closure_residual(result.y, result.period)
    if residual > 1e-9:
        return f"closure residual {residual:.3g}"
    moved = FrameElement.from_matrix(result.gamma.matrix @ result.y.matrix @ diag_flow(result.period))
    if chart_dist(moved, result.y) > 1e-9:
        return "gamma does not close the orbit in the lift"
    oracle = class_length(result.gamma.trace)
    if abs(oracle - result.period) > 1e-8:
        return f"period {result.period!r} differs from oracle length {oracle!r}"
    start = quotient_dist(result.y, x0)
    if start > epsilon:
        return f"start distance {start:.4g} > {epsilon}"
    return ""


def _density_sample(args) -> SampleRecord:
    index, seed, window, epsilon, budget = args
    rng = np.random.default_rng(seed)
    x0 = window.sample(rng)
    try:
        result = find_periodic_orbit(x0, epsilon, budget)
    except (PeriodicOrbitError, ValueError) as exc:
        return SampleRecord(index, x0, False, diagnostic=str(exc))
    problem = validate_orbit(result, x0, epsilon)
    if problem:
        return SampleRecord(index, x0, False, result, diagnostic=problem)
    return SampleRecord(index, x0, True, result, canonical_word(result.gamma))


def density_experiment(
    window: Window,
    epsilon: float,
    budget: SearchBudget = SearchBudget(),
    seed: int = 0,
    threads: int | None = 1,
) -> DensityReport:
    start = time.perf_counter()
    seeds = np.random.SeedSequence(seed).spawn(window.samples)
    jobs = [(i, s, window, epsilon, budget) for i, s in enumerate(seeds)]
    workers = thread_count(threads)
    if workers == 1:
        records = [_density_sample(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers) as pool:
            records = list(pool.map(_density_sample, jobs, chunksize=8))
    wins = [r for r in records if r.success]
    return DensityReport(
        epsilon,
        len(records),
        len(wins),
        len(wins) / len(records),
        max((r.result.start_distance for r in wins), default=0.0),
        [r for r in records if not r.success],
        time.perf_counter() - start,
        records,
    )


# ------------------------------------------------------------- leaf density


@dataclass(frozen=True)
class LeafGrid:
    tau_max: float = 30.0
    tau_step: float = 0.05
    u_max: float = 4.0
    u_count: int = 81

    def offsets(self) -> np.ndarray:
        if self.u_count == 1:
            return np.zeros(1)
        return np.linspace(-self.u_max, self.u_max, self.u_count)


def leaf_samples(x: FrameElement, grid: LeafGrid) -> np.ndarray:
    """Reduced frames of ``x a(tau) n-(u)`` over the grid.

    The orbit of ``x`` is followed in short reduced steps; float error grows
    only along the unstable direction, so every sample stays on the
    center-unstable leaf of ``x`` up to decaying stable error.
    """
    _, frames, _ = track_orbits(x.matrix[None], grid.tau_step, min(grid.tau_max, 60.0))
    orbit = frames[:, 0]
    pushes = np.array([lower(u) for u in grid.offsets()])
    samples = (orbit[:, None] @ pushes[None]).reshape(-1, 2, 2)
    reduced, _ = batch_reduce_frames(samples)
    return reduced


def _leaf_tree(samples: np.ndarray):
    flat = samples.reshape(-1, 4)
    return cKDTree(np.concatenate([flat, -flat])), np.concatenate([samples, -samples])


def covered(net: np.ndarray, samples: np.ndarray, epsilon: float) -> np.ndarray:
    """Which net frames lie within ``epsilon`` (quotient chart distance) of some sample."""
    tree, signed = _leaf_tree(samples)
    net_red, _ = batch_reduce_frames(net)
    cands = _candidate_array()
    inv = np.linalg.inv(cands)
    hit = np.zeros(len(net), dtype=bool)
    for k, h in enumerate(net_red):
        # cand @ g ~ h  <=>  g ~ cand^-1 h
        targets = inv @ h
        for target in targets:
            # ||g - target||_F <= ||target||_2 (1 + 2 eps) eps whenever the chart distance is <= eps
            radius = np.linalg.norm(target, 2) * (1 + 2 * epsilon) * epsilon
            idx = tree.query_ball_point(target.ravel(), radius)
            if idx and np.min(batch_chart_dist(signed[idx], np.broadcast_to(target, (len(idx), 2, 2)))) <= epsilon:
                hit[k] = True
                break
    return hit


def leaf_density_experiment(
    x: FrameElement, window: Window, epsilon: float, grid: LeafGrid = LeafGrid()
) -> DensityReport:
    start = time.perf_counter()
    net = window.net(epsilon)
    hit = covered(net, leaf_samples(x, grid), epsilon)
    records = [
        SampleRecord(i, FrameElement.from_matrix(m), bool(h), diagnostic="" if h else "no leaf sample within epsilon")
        for i, (m, h) in enumerate(zip(net, hit))
    ]
    wins = int(hit.sum())
    return DensityReport(
        epsilon, len(net), wins, wins / len(net), 0.0,
        [r for r in records if not r.success], time.perf_counter() - start, records,
    )


def leaf_inclusion(
    x: FrameElement, tau: float, u: float, window: Window, epsilon: float,
    grid: LeafGrid = LeafGrid(), slack: float = 1.1,
) -> tuple[int, int]:
    """Net points seen by the leaf of ``y = x a(tau) n-(u)`` but not by that of ``x``.

    Returns ``(violations, covered_by_y)``; the leaf of ``x`` is tested at
    ``slack * epsilon``.
    """
    y = FrameElement.from_matrix(x.matrix @ diag_flow(tau) @ lower(u))
    net = window.net(epsilon)
    by_y = covered(net, leaf_samples(y, grid), epsilon)
    by_x = covered(net[by_y], leaf_samples(x, grid), slack * epsilon)
    return int((~by_x).sum()), int(by_y.sum())


# ------------------------------------------------------------ transitivity


@dataclass
class HittingRecord:
    u_center: FrameElement
    v_center: FrameElement
    radius: float
    p: FrameElement
    t: float
    deck: DeckElement
    start_offset: float
    end_distance: float


class BudgetExhausted(RuntimeError):
    pass


def _mp_matrix(m):
    return mpmath.matrix([[mpmath.mpf(float(m[0][0])), mpmath.mpf(float(m[0][1]))],
                          [mpmath.mpf(float(m[1][0])), mpmath.mpf(float(m[1][1]))]])


def _mp_flow(t):
    h = mpmath.mpf(t) / 2
    return mpmath.matrix([[mpmath.exp(h), 0], [0, mpmath.exp(-h)]])


def _mp_chart_dist(g, h):
    rel = mpmath.inverse(g) * h
    plus = mpmath.sqrt(sum((rel[i, j] - (1 if i == j else 0)) ** 2 for i in range(2) for j in range(2)))
    minus = mpmath.sqrt(sum((rel[i, j] + (1 if i == j else 0)) ** 2 for i in range(2) for j in range(2)))
    return min(plus, minus)


def _digits_for(t: float) -> int:
    return 30 + int(t / 2 / math.log(10)) * 2


def _exact_hit(U: FrameElement, V: FrameElement, deck: DeckElement, t: float):
    """Refine ``(t, u)`` so that ``V^-1 deck U n-(u) a(t)`` is a pure ``n+``; high precision."""
    with mpmath.workdps(_digits_for(t)):
        Um, Vinv = _mp_matrix(U.matrix), mpmath.inverse(_mp_matrix(V.matrix))
        D = mpmath.matrix([[deck.entries[0], deck.entries[1]], [deck.entries[2], deck.entries[3]]])
        for _ in range(3):
            N = Vinv * D * Um * _mp_flow(t)
            if N[1, 1] < 0:
                N = -N
            c = -2 * mpmath.log(N[1, 1])
            t = t - float(c)
        N = Vinv * D * Um * _mp_flow(t)
        if N[1, 1] < 0:
            N = -N
        nu = N[1, 0] * N[1, 1]
        u = -nu * mpmath.exp(-mpmath.mpf(t))
        p = Um * mpmath.matrix([[1, 0], [u, 1]])
        end = _mp_chart_dist(_mp_matrix(V.matrix), D * p * _mp_flow(t))
        return t, float(u), p, float(end)


def replay_hit(record: HittingRecord) -> float:
    """Recompute the end distance from the record alone, in high precision."""
    with mpmath.workdps(_digits_for(record.t)):
        p = _mp_matrix(record.p.matrix)
        D = mpmath.matrix([[record.deck.entries[0], record.deck.entries[1]],
                           [record.deck.entries[2], record.deck.entries[3]]])
        # the stored p is rounded to float; re-solve its unstable coordinate
        rel = mpmath.inverse(_mp_matrix(record.u_center.matrix)) * p
        u = rel[1, 0] / rel[0, 0]
        p = _mp_matrix(record.u_center.matrix) * mpmath.matrix([[1, 0], [u, 1]])
        return float(_mp_chart_dist(_mp_matrix(record.v_center.matrix), D * p * _mp_flow(record.t)))


def transitivity_experiment(
    u_center: FrameElement,
    v_center: FrameElement,
    radius: float,
    t_budget: float = 200.0,
    dt: float = 0.05,
) -> HittingRecord:
    """Point ``p`` on the unstable leaf through ``u_center`` whose orbit enters the ball at ``v_center``."""
    if quotient_dist(u_center, v_center) <= radius:
        return HittingRecord(u_center, v_center, radius, u_center, 0.0, DeckElement(1, 0, 0, 1), 0.0,
                             quotient_dist(u_center, v_center))
    t_track = min(t_budget, 60.0)
    times, frames, decks = track_orbits(u_center.matrix[None], dt, t_track)
    orbit, decks = frames[:, 0], decks[:, 0]
    v_red, v_deck = batch_reduce_frames(v_center.matrix[None])
    v_red, v_deck = v_red[0], v_deck[0]
    cands = _candidate_array()
    # N[j, c] = v_red^-1 cand_c R_j, in the lift V^-1 kappa U a(t_j)
    N = np.linalg.inv(v_red)[None, None] @ (cands[None] @ orbit[:, None])
    sign = np.where(N[..., 1, 1] < 0, -1.0, 1.0)
    h22 = np.maximum(N[..., 1, 1] * sign, 1e-300)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sigma = sign * N[..., 0, 1] / h22
        c = -2 * np.log(h22)
    ok = (N[..., 1, 1] * sign > 1e-8) & (np.abs(c) <= dt) & (np.abs(sigma) <= 0.8 * radius)
    rows, cols = np.nonzero(ok)
    order = np.argsort(times[rows] - c[rows, cols], kind="stable")
    vd = tuple(int(e) for e in v_deck.ravel())
    v_inv = (vd[3], -vd[1], -vd[2], vd[0])
    for k in order:
        j, ci = int(rows[k]), int(cols[k])
        t = float(times[j] - c[j, ci])
        if t <= 0 or t > t_budget:
            continue
        dj = tuple(int(e) for e in decks[j].ravel())
        ce = candidate_decks()[ci].entries
        entries = _mul(_mul(v_inv, ce), dj)
        deck = DeckElement(*entries)
        t, u, p, end = _exact_hit(u_center, v_center, deck, t)
        if abs(u) <= 0.9 * radius and end <= radius:
            pf = FrameElement.from_matrix([[float(p[0, 0]), float(p[0, 1])], [float(p[1, 0]), float(p[1, 1])]])
            return HittingRecord(u_center, v_center, radius, pf, t, deck, abs(u), end)
    raise BudgetExhausted(f"no hit within t <= {t_track}")


def _mul(m, n):
    a, b, c, d = m
    p, q, r, s = n
    return (a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)

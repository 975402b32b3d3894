"""Piecewise shadowing of return segments and the periodic-orbit finder.

Everything runs in a lift. A return is a pair ``(t0, kappa)`` with
``kappa x0 a(t0)`` close to ``x0``; the forward iteration then only ever
touches frames near ``x0``, and the deck bookkeeping is exact integer
arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bracket import (
    BracketParams,
    bowen_bracket,
    local_product_constants,
    nak_decompose,
    sample_ball,
)
from .flow import MODEL_CONSTANTS, AnosovConstants, diag_flow, lower, upper
from .frames import FrameElement, batch_chart_dist, batch_inverse, chart_dist, inverse
from .lattice import (
    BULK_RADIUS,
    ENTRY_LIMIT,
    DeckElement,
    _candidate_array,
    axis_frame,
    batch_reduce_frames,
    candidate_decks,
    classify,
    injectivity_radius,
    quotient_align,
    quotient_dist,
    reduce_frame,
)

CONVERGENCE_TOL = 1e-12
DEFAULT_K_MAX = 20
DEFAULT_GRID_POINTS = 32
MAX_ITERATIONS = 200
PARAMETER_MARGIN = 0.1
# axis offset floor: kappa x0 a(t0) loses ~1e-16 e^{t0} to cancellation
AXIS_TOL_FLOOR = 1e-8
REVERSAL = np.array([[0.0, -1.0], [1.0, 0.0]])


class ShadowError(RuntimeError):
    pass


class RecurrenceError(RuntimeError):
    pass


class PeriodicOrbitError(RuntimeError):
    pass


# ------------------------------------------------------------------ lemma


def p_function(t: float, t0: float, lam: float, c_seq, m: int) -> float:
    """``lam^t + lam^(t0-t) + sum_{j<=m} lam^(t + j t0 + c_1 + ... + c_j)``."""
    if m < 0:
        raise ValueError("m must be >= 0")
    c = list(c_seq)
    if len(c) < m:
        raise ValueError(f"need {m} transition values, got {len(c)}")
    terms = [lam ** t, lam ** (t0 - t)]
    partial = 0.0
    for j in range(1, m + 1):
        partial += c[j - 1]
        terms.append(lam ** (t + j * t0 + partial))
    return math.fsum(terms)


def lemma_bound_K(t0: float, lam: float) -> float:
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    half = lam ** (t0 / 2)
    return 2.0 + half / (1.0 - half)


def epsilon_over_K(t: float, epsilon: float, lam: float) -> float:
    """``epsilon / K(t)``; increases to ``epsilon / 2`` as ``t`` grows."""
    half = lam ** (t / 2)
    return epsilon * (1.0 - half) / (2.0 - half)


@dataclass(frozen=True)
class LemmaAudit:
    trials: int
    t0: float
    lam: float
    K: float
    max_value: float

    @property
    def passed(self) -> bool:
        return self.max_value <= self.K + 1e-12


def lemma_audit(trials: int, t0: float, lam: float, seed: int = 0, m_max: int = 200) -> LemmaAudit:
    """Largest ``p_function`` over random admissible ``(t, m, c)`` with ``|c_i| < eta < t0/2``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        eta = rng.uniform(0.0, t0 / 2)
        m = int(rng.integers(0, m_max + 1))
        if trial % 4 == 0:
            # adversarial corner: endpoint time, transitions as negative as allowed
            c = np.full(m, -eta * (1 - 1e-12))
            t = float(rng.choice([0.0, t0]))
        else:
            c = rng.uniform(-eta, eta, m)
            t = rng.uniform(0.0, t0)
        worst = max(worst, p_function(t, t0, lam, c, m))
    return LemmaAudit(trials, t0, lam, lemma_bound_K(t0, lam), worst)


# ------------------------------------------------------------- parameters


@dataclass(frozen=True)
class ShadowParameters:
    epsilon: float
    delta: float
    eta: float
    t0: float
    C: float
    lam: float
    K: float
    l: int

    def invariants(self) -> dict[str, bool]:
        return {
            "t0 > 2 eta": self.t0 > 2 * self.eta,
            "C K eta <= epsilon/3": self.C * self.K * self.eta <= self.epsilon / 3,
            "C lam^t0 eta < delta/3 < epsilon": self.C * self.lam ** self.t0 * self.eta
            < self.delta / 3 < self.epsilon,
            "eta/l < delta": self.eta / self.l < self.delta,
            "K matches lemma bound": abs(self.K - lemma_bound_K(self.t0, self.lam)) <= 1e-12,
        }

    @property
    def valid(self) -> bool:
        return all(self.invariants().values())

    @property
    def precision(self) -> float:
        return self.eta / (4 * self.l)

    @property
    def epsilon_over_K(self) -> float:
        return epsilon_over_K(self.t0, self.epsilon, self.lam)


def _floor_sig(x: float, digits: int = 2) -> float:
    exponent = math.floor(math.log10(x)) - (digits - 1)
    scale = 10.0 ** exponent
    return math.floor(x / scale + 1e-9) * scale, scale


def epsilon_cap(x0: FrameElement) -> float:
    return injectivity_radius(x0) / BULK_RADIUS


def _continuity_holds(x0: FrameElement, eta: float, l: int, pairs: int = 64) -> bool:
    # d(z a(r), w a(r)) <= eta for z, w in B(x0, eta/l) and |r| <= 3 eta
    rng = np.random.default_rng(20240611)
    zs = np.array([g.matrix for g in sample_ball(x0, eta / l, pairs, rng)])
    ws = np.array([g.matrix for g in sample_ball(x0, eta / l, pairs, rng)])
    for r in np.linspace(-3 * eta, 3 * eta, 7):
        a = diag_flow(r)
        if np.max(batch_chart_dist(zs @ a, ws @ a)) > eta:
            return False
    return True


def select_parameters(
    epsilon: float,
    x0: FrameElement,
    t0_hint: float,
    constants: AnosovConstants = MODEL_CONSTANTS,
) -> ShadowParameters:
    cap = epsilon_cap(x0)
    if not 0 < epsilon <= cap:
        raise ValueError(f"epsilon too large for this base point (cap {cap:.4g})")
    C, lam = constants.C, constants.lam
    delta, eta_lp = local_product_constants(x0, epsilon)
    t0 = max(float(t0_hint), 2 * eta_lp + PARAMETER_MARGIN)
    K = lemma_bound_K(t0, lam)
    eta, unit = _floor_sig(min(eta_lp, epsilon / (3 * C * K)))
    while C * lam ** t0 * eta >= delta / 3:
        eta, unit = _floor_sig(eta - unit)
    l = math.ceil(eta / delta) + 1
    while not _continuity_holds(x0, eta, l):
        l += 1
    params = ShadowParameters(epsilon, delta, eta, t0, C, lam, K, l)
    if not params.valid:
        raise ValueError(f"no admissible parameters: {params.invariants()}")
    return params


# ------------------------------------------------------------- recurrence


@dataclass(frozen=True)
class Recurrence:
    """``deck @ x0 @ a(t0)`` lies within ``distance`` of ``x0`` (chart metric, lifted)."""

    x0: FrameElement
    t0: float
    deck: DeckElement
    distance: float

    def reversed(self) -> "Recurrence":
        return Recurrence(reverse_frame(self.x0), self.t0, self.deck.inverse(), self.distance)

    def returned_frame(self) -> FrameElement:
        return FrameElement.from_matrix(self.deck.matrix @ self.x0.matrix @ diag_flow(self.t0))


def reverse_frame(g: FrameElement) -> FrameElement:
    """``g k`` with ``k`` the half-turn; it conjugates ``a(t)`` to ``a(-t)``."""
    return FrameElement.from_matrix(g.matrix @ REVERSAL)


def _mul(m, n):
    a, b, c, d = m
    p, q, r, s = n
    return (a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s)


@dataclass
class OrbitTrack:
    """Reduced frames ``R_j ~ D_j x0 a(j dt)`` with exact cumulative decks ``D_j``."""

    times: np.ndarray
    frames: np.ndarray
    decks: list


def track_orbit(x0: FrameElement, dt: float, t_max: float) -> OrbitTrack:
    n = int(math.floor(t_max / dt + 1e-9))
    step = diag_flow(dt)
    red = reduce_frame(x0)
    frames = np.empty((n + 1, 2, 2))
    frames[0] = red.frame.matrix
    decks = [red.deck.entries]
    current = red.frame.matrix
    for j in range(1, n + 1):
        red = reduce_frame(FrameElement.from_matrix(current @ step))
        current = red.frame.matrix
        frames[j] = current
        decks.append(_mul(red.deck.entries, decks[-1]))
    return OrbitTrack(np.arange(n + 1) * dt, frames, decks)


def _deck_or_none(entries) -> DeckElement | None:
    if max(abs(e) for e in entries) > ENTRY_LIMIT:
        return None
    return DeckElement(*entries)


def _relative_deck(track: OrbitTrack, j: int, cand: DeckElement):
    # kappa = D_0^-1 cand D_j, so kappa x0 a(t_j) ~ D_0^-1 cand R_j
    a, b, c, d = track.decks[0]
    return _mul(_mul((d, -b, -c, a), cand.entries), track.decks[j])


def detect_recurrence(
    x0: FrameElement, delta: float, t_max: float, dt: float = 0.05, t_min: float | None = None
) -> Recurrence:
    """First sampled time with ``quotient_dist(phi^t x0, x0) < delta/3``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if t_min is None:
        t_min = max(dt, 8 * delta)  # 2 eta for the paired eta = 4 delta
    track = track_orbit(x0, dt, t_max)
    cands = _candidate_array()
    start = int(math.ceil(t_min / dt - 1e-9))
    ref = track.frames[0]
    for lo in range(start, len(track.times), 512):
        block = track.frames[lo:lo + 512]
        moved = cands[None] @ block[:, None]
        rel = batch_inverse(np.broadcast_to(ref, moved.shape)) @ moved
        off = rel[..., 0, 1] ** 2 + rel[..., 1, 0] ** 2
        dist = np.sqrt(
            np.minimum(
                (rel[..., 0, 0] - 1) ** 2 + (rel[..., 1, 1] - 1) ** 2,
                (rel[..., 0, 0] + 1) ** 2 + (rel[..., 1, 1] + 1) ** 2,
            )
            + off
        )
        best = dist.min(axis=1)
        hits = np.nonzero(best < delta / 3)[0]
        if len(hits):
            j = lo + int(hits[0])
            cand = candidate_decks()[int(np.argmin(dist[hits[0]]))]
            deck = _deck_or_none(_relative_deck(track, j, cand))
            if deck is None:
                raise RecurrenceError(f"return at t={track.times[j]:.3f} overflows the deck bound")
            rec = Recurrence(x0, float(track.times[j]), deck, 0.0)
            return Recurrence(x0, rec.t0, deck, chart_dist(rec.returned_frame(), x0))
    raise RecurrenceError(f"no return within budget t_max={t_max}")


@dataclass(frozen=True)
class LeafReturn:
    recurrence: Recurrence
    leaf_offset: float
    stable_offset: float
    unstable_offset: float
    predicted_distance: float


def track_orbits(starts: np.ndarray, dt: float, t_max: float):
    """Vectorized :func:`track_orbit` for many starts; decks are int64."""
    if t_max > 60:
        raise ValueError("vectorized tracking keeps decks in int64; t_max must be <= 60")
    n = int(math.floor(t_max / dt + 1e-9))
    step = diag_flow(dt)
    frames = np.empty((n + 1,) + starts.shape)
    decks = np.empty((n + 1,) + starts.shape, dtype=np.int64)
    cur, deck = batch_reduce_frames(starts)
    frames[0], decks[0] = cur, deck
    for j in range(1, n + 1):
        cur, d = batch_reduce_frames(cur @ step)
        frames[j] = cur
        decks[j] = d @ decks[j - 1]
    return np.arange(n + 1) * dt, frames, decks


def leaf_returns(
    x0: FrameElement,
    epsilon: float,
    t_max: float,
    dt: float = 0.05,
    t_min: float = 1.0,
    leaf_spacing: float = 0.01,
) -> list[LeafReturn]:
    """Candidate returns of points ``x0 n-(u)``, ``|u| <= epsilon``, earliest first.

    A closed orbit at unstable offset ``u`` from ``x0`` shows up in the return
    of ``x0`` itself with an unstable displacement of order ``u e^T``, which
    the short candidate decks cannot align; starting from the point of the
    unstable leaf nearest to the orbit removes that displacement.

    For each start ``x'`` and sampled time, ``x'^-1 kappa x' a(t) =
    n+(sigma) n-(nu) a(c)``; the center offset is removed with ``t* = t - c``
    and the closed orbit of ``kappa`` passes at roughly
    ``|sigma|/(1 - e^-t*) + |nu| e^-t*`` from ``x'``.
    """
    half = int(math.ceil(epsilon / leaf_spacing))
    offsets = np.linspace(-half * leaf_spacing, half * leaf_spacing, 2 * half + 1)
    offsets = offsets[np.argsort(np.abs(offsets), kind="stable")]
    starts = np.array([x0.matrix @ lower(u) for u in offsets])
    times, frames, decks = track_orbits(starts, dt, t_max)
    first = max(1, int(math.ceil(t_min / dt)))
    # left factor R0_i^-1 cand_c, shape (starts, cands, 2, 2)
    left = batch_inverse(frames[0])[:, None] @ _candidate_array()[None]
    right = frames[first:]
    # h[j, i, c] = left[i, c] @ right[j, i], written out entrywise
    l00, l01, l10, l11 = (left[None, :, :, r, q] for r, q in ((0, 0), (0, 1), (1, 0), (1, 1)))
    r00, r01, r10, r11 = (right[:, :, None, r, q] for r, q in ((0, 0), (0, 1), (1, 0), (1, 1)))
    h01 = l00 * r01 + l01 * r11
    h10 = l10 * r00 + l11 * r10
    h11 = l10 * r01 + l11 * r11
    sign = np.where(h11 < 0, -1.0, 1.0)
    h11 = h11 * sign
    h22 = np.maximum(h11, 1e-300)
    with np.errstate(over="ignore", invalid="ignore"):
        # cells outside the chart overflow here; the mask drops them
        sigma = sign * h01 / h22
        nu = sign * h10 * h22
        c = -2.0 * np.log(h22)
        tstar = times[first:, None, None] - c
        decay = np.exp(-np.maximum(tstar, 1e-9))
        est = np.abs(sigma) / (1 - decay) + np.abs(nu) * decay + np.abs(offsets)[None, :, None]
    mask = (h11 > 1e-8) & (np.abs(c) <= dt) & (tstar >= t_min) & (est <= 1.5 * epsilon)
    idx = np.nonzero(mask)
    order = np.argsort(tstar[idx], kind="stable")
    seen = set()
    out = []
    for k in order:
        j, i, ci = int(idx[0][k]), int(idx[1][k]), int(idx[2][k])
        d0 = decks[0, i]
        inv0 = (int(d0[1, 1]), -int(d0[0, 1]), -int(d0[1, 0]), int(d0[0, 0]))
        dj = tuple(int(v) for v in decks[j + first, i].ravel())
        entries = _mul(_mul(inv0, candidate_decks()[ci].entries), dj)
        key = entries if entries[0] > 0 or (entries[0] == 0 and entries[1] > 0) else tuple(-e for e in entries)
        if key in seen:
            continue
        seen.add(key)
        deck = _deck_or_none(key)
        if deck is None:
            continue
        start = FrameElement.from_matrix(starts[i])
        t = float(tstar[j, i, ci])
        rec = Recurrence(start, t, deck, 0.0)
        rec = Recurrence(start, t, deck, chart_dist(rec.returned_frame(), start))
        out.append(
            LeafReturn(rec, float(offsets[i]), float(abs(sigma[j, i, ci])),
                       float(abs(nu[j, i, ci])), float(est[j, i, ci]))
        )
    return out


# -------------------------------------------------------------- iteration


@dataclass(frozen=True)
class ShadowIterate:
    n: int
    y_n: FrameElement
    theta_n: FrameElement
    z_n: FrameElement
    s_n: float
    bracket: BracketParams
    gap: float
    backward: bool = False


def _lift_grid(t0: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, t0, points)


def _flowed_gap(x0: FrameElement, y: FrameElement, t: float) -> float:
    """Lifted chart distance between ``x0 a(t)`` and ``y a(t)``."""
    rel = np.linalg.solve(x0.matrix, y.matrix)
    e = math.exp(t)
    conj = np.array([[rel[0, 0], rel[0, 1] / e], [rel[1, 0] * e, rel[1, 1]]])
    eye = np.eye(2)
    return float(min(np.linalg.norm(conj - eye), np.linalg.norm(conj + eye)))


def _iterate_forward(
    rec: Recurrence,
    params: ShadowParameters | None,
    n_steps: int,
    strict: bool,
    start: FrameElement | None,
    tol: float,
) -> list[ShadowIterate]:
    x0, t0 = rec.x0, rec.t0
    x1 = rec.returned_frame()
    deck_inv = rec.deck.inverse().matrix
    back = diag_flow(-t0)
    y_prev = start if start is not None else x0
    eta = params.eta if (strict and params is not None) else math.inf
    out: list[ShadowIterate] = []
    for n in range(1, n_steps + 1):
        res = bowen_bracket(x1, y_prev, eta=eta)
        p = res.params
        z = res.w
        s = -p.c
        theta = FrameElement.from_matrix(z.matrix @ diag_flow(-s))
        y = FrameElement.from_matrix(deck_inv @ theta.matrix @ back)
        gap = chart_dist(y, y_prev)
        it = ShadowIterate(n, y, theta, z, s, p, gap)
        out.append(it)
        if strict and params is not None:
            _audit_iterate(it, x0, params)
        y_prev = y
        if gap < tol:
            break
    return out


def _audit_iterate(it: ShadowIterate, x0: FrameElement, params: ShadowParameters) -> None:
    if not abs(it.s_n) < params.eta:
        raise ShadowError(f"transition time |s_{it.n}| = {abs(it.s_n):.3g} exceeds eta")
    if not chart_dist(it.y_n, x0) < params.delta:
        raise ShadowError(f"iterate left the delta-ball at n={it.n}")
    for t in _lift_grid(params.t0):
        bound = params.C * params.lam ** (params.t0 - t) * params.eta
        if _flowed_gap(x0, it.y_n, t) > bound * (1 + 1e-9):
            raise ShadowError(f"leaf-distance audit failed at n={it.n}, t={t:.3f}")


def _reverse_iterate(it: ShadowIterate) -> ShadowIterate:
    return ShadowIterate(
        it.n,
        reverse_frame(it.y_n),
        reverse_frame(it.theta_n),
        reverse_frame(it.z_n),
        it.s_n,
        it.bracket,
        it.gap,
        not it.backward,
    )


def shadow_iteration(
    x0: FrameElement,
    params: ShadowParameters | None,
    n_steps: int,
    recurrence: Recurrence,
    *,
    strict: bool = True,
    start: FrameElement | None = None,
    backward: bool = False,
    tol: float = CONVERGENCE_TOL,
) -> list[ShadowIterate]:
    """Iterates ``y_n, theta_n, z_n, s_n``, stopping once the gap drops below ``tol``.

    ``z_n`` is the bracket of ``x1 = kappa x0 a(t0)`` with ``y_{n-1}``,
    ``theta_n = z_n a(-s_n)`` lies on the strong unstable leaf of ``x1`` and
    ``y_n = kappa^-1 theta_n a(-t0)``. With ``backward`` the same recursion
    runs for the reversed flow and the frames are mapped back, so that
    ``theta_n a(s_n) = z_n`` becomes ``theta_n a(-s_n) = z_n``.

    ``strict`` enforces the bracket size, the delta-ball and the leaf
    distance audit; the finder runs non-strict because its returns are only
    close along the stable and center directions.
    """
    if recurrence.x0 != x0:
        raise ValueError("recurrence belongs to a different base point")
    if not backward:
        return _iterate_forward(recurrence, params, n_steps, strict, start, tol)
    rev_start = reverse_frame(start) if start is not None else None
    iterates = _iterate_forward(recurrence.reversed(), params, n_steps, strict, rev_start, tol)
    return [_reverse_iterate(it) for it in iterates]


# ------------------------------------------------------------------ limits


@dataclass
class ShadowOrbit:
    y: FrameElement
    s: float
    k_max: int
    residuals: list[tuple[int, float]]
    period: float
    stable_shift: float
    backward: bool = False

    @property
    def worst_residual(self) -> float:
        return max(r for _, r in self.residuals)


def _shadow_residuals(x0, y, sigma, period, k_max, grid) -> list[tuple[int, float]]:
    # kappa^k y a(kT) = y n+(sigma (1 + e^-T + ... + e^-(k-1)T)), exactly
    base_rel = np.linalg.solve(x0.matrix, y.matrix)
    ratio = math.exp(-period)
    out = []
    shift = 0.0
    for k in range(k_max + 1):
        rel = base_rel @ upper(shift)
        worst = 0.0
        for t in grid:
            e = math.exp(t)
            conj = np.array([[rel[0, 0], rel[0, 1] / e], [rel[1, 0] * e, rel[1, 1]]])
            d = min(np.linalg.norm(conj - np.eye(2)), np.linalg.norm(conj + np.eye(2)))
            worst = max(worst, float(d))
        out.append((k, worst))
        shift += sigma * ratio ** k
    return out


def shadow_limit(
    iterates: list[ShadowIterate],
    params: ShadowParameters,
    k_max: int = DEFAULT_K_MAX,
    *,
    x0: FrameElement,
    t0: float,
    t_grid=None,
    check: bool = True,
) -> ShadowOrbit:
    """Limit point of the iteration and its k-fold return residuals.

    The residual for ``k`` is the lifted distance between
    ``phi^t(phi^{k(t0+s)} y)`` and ``phi^t x0`` maximized over the grid; the
    k-fold return is evaluated through the exact relation
    ``kappa y a(t0 + s) = y n+(sigma)`` rather than by flowing for ``k`` periods.
    """
    if not iterates:
        raise ValueError("no iterates")
    last = iterates[-1]
    if last.gap >= CONVERGENCE_TOL:
        raise ShadowError(f"iteration has not converged (last gap {last.gap:.3g})")
    backward = last.backward
    if backward:
        x0 = reverse_frame(x0)
        last = _reverse_iterate(last)
    grid = _lift_grid(t0) if t_grid is None else np.asarray(t_grid, dtype=float)
    period = t0 + last.s_n
    residuals = _shadow_residuals(x0, last.y_n, last.bracket.sigma, period, k_max, grid)
    y = reverse_frame(last.y_n) if backward else last.y_n
    orbit = ShadowOrbit(y, last.s_n, k_max, residuals, period, last.bracket.sigma, backward)
    if check:
        bound = params.epsilon / 3 + 1e-9
        for k, r in residuals:
            if r > bound:
                raise ShadowError(f"verification failed at k={k}: residual {r:.4g} > {bound:.4g}")
        if abs(last.s_n) > params.eta:
            raise ShadowError(f"transition time {last.s_n:.3g} exceeds eta {params.eta:.3g}")
    return orbit


@dataclass
class ShadowReport:
    epsilon: float
    k_max: int
    backward: bool
    entries: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max((d for _, _, d in self.entries), default=0.0)

    @property
    def failures(self) -> list[tuple[int, float, float]]:
        return [e for e in self.entries if e[2] > self.epsilon]

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_piecewise_shadow(
    y: FrameElement,
    x0: FrameElement,
    t0: float,
    transitions,
    epsilon: float,
    k_max: int,
    t_grid=None,
    backward: bool = False,
) -> ShadowReport:
    """Direct check by flowing ``y`` and reducing to the quotient.

    Unlike :func:`shadow_limit` this flows for the full time
    ``k t0 + s_1 + ... + s_k``, so it is only meaningful while that time stays
    well inside the float horizon (unstable errors grow like ``1e-16 e^t``).
    """
    grid = _lift_grid(t0) if t_grid is None else np.asarray(t_grid, dtype=float)
    trans = list(transitions)
    if len(trans) < k_max:
        raise ValueError(f"need {k_max} transitions, got {len(trans)}")
    sign = -1.0 if backward else 1.0
    report = ShadowReport(epsilon, k_max, backward)
    elapsed = 0.0
    for k in range(k_max + 1):
        for t in grid:
            moved = FrameElement.from_matrix(y.matrix @ diag_flow(sign * (elapsed + t)))
            ref = FrameElement.from_matrix(x0.matrix @ diag_flow(sign * t))
            report.entries.append((k, float(t), quotient_dist(moved, ref)))
        if k < k_max:
            elapsed += t0 + trans[k]
    return report


# ---------------------------------------------------------- periodic orbits


@dataclass(frozen=True)
class SearchBudget:
    t_max: float = 13.0
    dt: float = 0.05
    max_candidates: int = 60
    max_iterations: int = MAX_ITERATIONS


@dataclass(frozen=True)
class PeriodicOrbitResult:
    y: FrameElement
    period: float
    gamma: DeckElement
    closure_residual: float
    oracle_period: float
    start_distance: float
    shadow_period: float
    axis_offset: float
    return_time: float
    params: ShadowParameters | None = None


def _periodic_point_from_return(rec: Recurrence, budget: SearchBudget):
    fwd = shadow_iteration(rec.x0, None, budget.max_iterations, rec, strict=False)
    bwd = shadow_iteration(rec.x0, None, budget.max_iterations, rec, strict=False, backward=True)
    if fwd[-1].gap >= CONVERGENCE_TOL or bwd[-1].gap >= CONVERGENCE_TOL:
        raise ShadowError("shadow iteration did not converge")
    w = bowen_bracket(bwd[-1].y_n, fwd[-1].y_n).w
    gap = max(fwd[-1].gap, bwd[-1].gap)
    return w, rec.t0 + fwd[-1].s_n, gap


def project_to_axis(gamma: DeckElement, w: FrameElement) -> tuple[FrameElement, float, float]:
    """Closest frame to ``w`` on the axis of ``gamma^-1`` (so ``gamma y a(T) = y``)."""
    g, period = axis_frame(gamma.inverse())
    p = nak_decompose(np.linalg.solve(g.matrix, w.matrix))
    y = FrameElement.from_matrix(g.matrix @ diag_flow(p.c))
    return y, period, max(abs(p.sigma), abs(p.nu))


def closure_residual(y: FrameElement, period: float) -> float:
    return quotient_dist(FrameElement.from_matrix(y.matrix @ diag_flow(period)), y)


def find_periodic_orbit(
    x0: FrameElement, epsilon: float, budget: SearchBudget = SearchBudget()
) -> PeriodicOrbitResult:
    cap = epsilon_cap(x0)
    if not 0 < epsilon <= cap:
        raise ValueError(f"epsilon too large for this base point (cap {cap:.4g})")
    tried: set = set()
    examined = non_hyperbolic = 0
    for horizon in (budget.t_max / 2, budget.t_max):
        fresh = []
        for cand in leaf_returns(x0, epsilon, horizon, budget.dt):
            if cand.recurrence.deck.entries not in tried:
                tried.add(cand.recurrence.deck.entries)
                fresh.append(cand)
        fresh = fresh[: budget.max_candidates]
        result, skipped = _first_periodic(x0, epsilon, fresh, budget)
        if result is not None:
            return result
        examined += len(fresh)
        non_hyperbolic += skipped
    if examined and non_hyperbolic == examined:
        raise PeriodicOrbitError("non-hyperbolic return")
    raise PeriodicOrbitError("recurrence budget exhausted")


def _first_periodic(x0, epsilon, candidates, budget):
    non_hyperbolic = 0
    for cand in candidates:
        rec = cand.recurrence
        if classify(rec.deck) != "hyperbolic":
            non_hyperbolic += 1
            continue
        try:
            w, shadow_period, gap = _periodic_point_from_return(rec, budget)
        except (ShadowError, ValueError):
            continue
        y, period, offset = project_to_axis(rec.deck, w)
        if offset > max(10 * gap, AXIS_TOL_FLOOR):
            continue
        if abs(shadow_period - period) > 1e-8:
            continue
        start = quotient_dist(y, x0)
        if start > epsilon:
            continue
        residual = closure_residual(y, period)
        if residual > 1e-9:
            continue
        try:
            params = select_parameters(epsilon, x0, rec.t0)
        except ValueError:
            params = None
        oracle = 2.0 * math.acosh(abs(rec.deck.trace) / 2.0)
        return PeriodicOrbitResult(
            y, period, rec.deck, residual, oracle, start, shadow_period, offset, rec.t0, params
        ), non_hyperbolic
    return None, non_hyperbolic


# -------------------------------------------------------------- uniqueness


def _piecewise_times(t0, transitions, grid, sign):
    times = []
    elapsed = 0.0
    for k in range(len(transitions) + 1):
        times.extend(sign * (elapsed + t) for t in grid)
        if k < len(transitions):
            elapsed += t0 + transitions[k]
    return times


@dataclass
class UniquenessResult:
    unique: bool
    max_orbit_distance: float
    bracket: BracketParams | None
    deck: DeckElement
    reason: str = ""

    def __bool__(self) -> bool:
        return self.unique


def uniqueness_check(
    y1: FrameElement,
    y2: FrameElement,
    params: ShadowParameters,
    t0: float,
    transitions1,
    transitions2,
    t_grid=None,
    tol: float = 1e-9,
) -> UniquenessResult:
    """Both orbits stay within eta of each other forwards and backwards, and coincide."""
    grid = _lift_grid(t0) if t_grid is None else np.asarray(t_grid, dtype=float)
    _, deck = quotient_align(y2, y1)
    y2 = deck.act(y2)
    worst = 0.0
    for sign in (1.0, -1.0):
        times1 = _piecewise_times(t0, list(transitions1), grid, sign)
        times2 = _piecewise_times(t0, list(transitions2), grid, sign)
        for a, b in zip(times1, times2):
            p = FrameElement.from_matrix(y1.matrix @ diag_flow(a))
            q = FrameElement.from_matrix(y2.matrix @ diag_flow(b))
            worst = max(worst, quotient_dist(p, q))
    if worst > params.eta:
        return UniquenessResult(False, worst, None, deck, "orbits separate beyond eta")
    bracket = nak_decompose(inverse(y1).matrix @ y2.matrix)
    if bracket.magnitude > tol:
        return UniquenessResult(False, worst, bracket, deck, "bracket parameters exceed tolerance")
    return UniquenessResult(True, worst, bracket, deck)

"""Local product structure via the closed-form N+ N- A factorization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import diag_flow, leaf_residual, lower, upper
from .frames import FrameElement, batch_chart_dist, batch_sl2_exp, chart_dist
from .lattice import BULK_RADIUS, IDENTITY_DECK, DeckElement, injectivity_radius, quotient_align

CHART_THRESHOLD = 1e-8


class BracketError(ValueError):
    pass


class OutsideChartError(BracketError):
    """The two frames are not in general position for the product chart."""


class ExceedsEtaError(BracketError):
    def __init__(self, params, eta):
        self.params = params
        self.eta = eta
        super().__init__(
            f"bracket exceeds eta={eta:g}: |sigma|={abs(params.sigma):.3g}, "
            f"|nu|={abs(params.nu):.3g}, |c|={abs(params.c):.3g}"
        )


@dataclass(frozen=True)
class BracketParams:
    sigma: float
    nu: float
    c: float

    @property
    def magnitude(self) -> float:
        return max(abs(self.sigma), abs(self.nu), abs(self.c))


@dataclass(frozen=True)
class BracketResult:
    w: FrameElement
    params: BracketParams
    deck: DeckElement
    residual: float


def _positive_rep(h: np.ndarray, i: int, j: int) -> np.ndarray:
    if h[i, j] < 0:
        h = -h
    if h[i, j] <= CHART_THRESHOLD:
        raise OutsideChartError(f"entry ({i + 1},{j + 1}) = {h[i, j]:.3g}: outside product chart")
    return h


def nak_decompose(h) -> BracketParams:
    """Write ``h = n+(sigma) n-(nu) a(c)`` (up to sign)."""
    h = _positive_rep(np.asarray(getattr(h, "matrix", h), dtype=float), 1, 1)
    return BracketParams(float(h[0, 1] / h[1, 1]), float(h[1, 0] * h[1, 1]), -2.0 * math.log(h[1, 1]))


def nak_compose(p: BracketParams) -> np.ndarray:
    return upper(p.sigma) @ lower(p.nu) @ diag_flow(p.c)


def ank_decompose(h) -> BracketParams:
    """Mirrored factorization ``h = n-(nu) n+(sigma) a(c)``."""
    h = _positive_rep(np.asarray(getattr(h, "matrix", h), dtype=float), 0, 0)
    return BracketParams(float(h[0, 1] * h[0, 0]), float(h[1, 0] / h[0, 0]), 2.0 * math.log(h[0, 0]))


def ank_compose(p: BracketParams) -> np.ndarray:
    return lower(p.nu) @ upper(p.sigma) @ diag_flow(p.c)


def bowen_bracket(
    y: FrameElement, z: FrameElement, eta: float = math.inf, mirrored: bool = False
) -> BracketResult:
    """The intersection of W^cu(y) with W^ss(z) (or W^cs(y) with W^uu(z) if mirrored).

    With ``z^-1 y = n+(sigma) n-(nu) a(c)`` the point is ``w = z n+(sigma)``,
    which also equals ``y a(-c) n-(-nu)``.
    """
    h = np.linalg.solve(z.matrix, y.matrix)
    if mirrored:
        params = ank_decompose(h)
        w = FrameElement.from_matrix(z.matrix @ lower(params.nu))
        residual = max(leaf_residual(z, w, "strong-unstable"), leaf_residual(y, w, "center-stable"))
    else:
        params = nak_decompose(h)
        w = FrameElement.from_matrix(z.matrix @ upper(params.sigma))
        residual = max(leaf_residual(z, w, "strong-stable"), leaf_residual(y, w, "center-unstable"))
    if params.magnitude > eta:
        raise ExceedsEtaError(params, eta)
    return BracketResult(w, params, IDENTITY_DECK, residual)


def bracket_in_quotient(
    y: FrameElement, z: FrameElement, eta: float = math.inf, mirrored: bool = False
) -> BracketResult:
    """Align ``y`` with ``z`` by the best candidate deck, then bracket in the lift."""
    _, deck = quotient_align(y, z)
    result = bowen_bracket(deck.act(y), z, eta, mirrored)
    return BracketResult(result.w, result.params, deck, result.residual)


def local_product_constants(x: FrameElement, epsilon: float) -> tuple[float, float]:
    """(delta, eta) = (epsilon/16, epsilon/4), both scaled by injectivity_radius(x) / r0."""
    scale = injectivity_radius(x) / BULK_RADIUS
    return epsilon / 16.0 * scale, epsilon / 4.0 * scale


@dataclass
class ProductAudit:
    base: FrameElement
    epsilon: float
    delta: float
    eta: float
    pairs: int
    failures: int
    max_magnitude_over_eta: float
    max_distance_over_epsilon: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def sample_ball(x: FrameElement, radius: float, n: int, rng: np.random.Generator) -> list[FrameElement]:
    """Frames in the closed chart ball of ``radius`` about ``x`` (rejection sampling)."""
    found: list[np.ndarray] = []
    count = 0
    eye = np.broadcast_to(np.eye(2), (2 * n, 2, 2))
    while count < n:
        b = batch_sl2_exp(rng.normal(scale=radius / 1.5, size=(2 * n, 3)))
        keep = b[batch_chart_dist(eye, b) <= radius][: n - count]
        found.append(keep)
        count += len(keep)
    return [FrameElement.from_matrix(x.matrix @ m) for m in np.concatenate(found)]


def audit_local_product(
    x: FrameElement, epsilon: float, pairs: int = 1000, seed: int = 0
) -> ProductAudit:
    delta, eta = local_product_constants(x, epsilon)
    rng = np.random.default_rng(seed)
    ys = sample_ball(x, delta, pairs, rng)
    zs = sample_ball(x, delta, pairs, rng)
    failures = 0
    worst_mag = worst_dist = 0.0
    for y, z in zip(ys, zs):
        try:
            res = bowen_bracket(y, z)
        except OutsideChartError:
            failures += 1
            continue
        worst_mag = max(worst_mag, res.params.magnitude / eta)
        worst_dist = max(worst_dist, chart_dist(x, res.w) / epsilon)
        if res.params.magnitude > eta or chart_dist(x, res.w) >= epsilon:
            failures += 1
    return ProductAudit(x, epsilon, delta, eta, pairs, failures, worst_mag, worst_dist)

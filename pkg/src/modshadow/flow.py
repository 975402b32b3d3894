"""Geodesic and horocycle flows, the Anosov splitting, and local leaf patches.

All flows are exact right multiplications::

    geodesic   g -> g a(t),   a(t) = diag(e^{t/2}, e^{-t/2})
    stable     g -> g n+(s),  n+(s) = [[1, s], [0, 1]]
    unstable   g -> g n-(u),  n-(u) = [[1, 0], [u, 1]]

with ``a(t)^-1 n+(s) a(t) = n+(s e^-t)`` and ``a(t)^-1 n-(u) a(t) = n-(u e^t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import FrameElement, batch_inverse, random_frames
from .lattice import batch_quotient_dist, local_size, reduced_height

MAX_FLOW_TIME = 700.0
LEAF_KINDS = ("strong-stable", "strong-unstable", "center-stable", "center-unstable")
DEFAULT_T_GRID = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class AnosovConstants:
    C: float = 2.0
    lam: float = math.exp(-1.0)

    def __post_init__(self):
        if not self.C >= 1:
            raise ValueError(f"C must be >= 1, got {self.C}")
        if not 0 < self.lam < 1:
            raise ValueError(f"lambda must lie in (0, 1), got {self.lam}")


MODEL_CONSTANTS = AnosovConstants()


def diag_flow(t: float) -> np.ndarray:
    if abs(t) > MAX_FLOW_TIME:
        raise OverflowError(f"flow time {t} exceeds {MAX_FLOW_TIME}")
    return np.array([[math.exp(t / 2), 0.0], [0.0, math.exp(-t / 2)]])


def upper(s: float) -> np.ndarray:
    return np.array([[1.0, s], [0.0, 1.0]])


def lower(u: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [u, 1.0]])


def geodesic_flow(g: FrameElement, t: float) -> FrameElement:
    return FrameElement.from_matrix(g.matrix @ diag_flow(t))


def stable_move(g: FrameElement, s: float) -> FrameElement:
    return FrameElement.from_matrix(g.matrix @ upper(s))


def unstable_move(g: FrameElement, u: float) -> FrameElement:
    return FrameElement.from_matrix(g.matrix @ lower(u))


def center_unstable_point(g: FrameElement, tau: float, u: float) -> FrameElement:
    return FrameElement.from_matrix(g.matrix @ diag_flow(tau) @ lower(u))


def center_stable_point(g: FrameElement, tau: float, s: float) -> FrameElement:
    return FrameElement.from_matrix(g.matrix @ diag_flow(tau) @ upper(s))


@dataclass(frozen=True)
class SplittingBasis:
    """Lie-algebra directions of E^s, E^u and the flow at a frame (left-translated)."""

    base: FrameElement
    e_s: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0], [0.0, 0.0]]))
    e_u: np.ndarray = field(default_factory=lambda: np.array([[0.0, 0.0], [1.0, 0.0]]))
    e_c: np.ndarray = field(default_factory=lambda: np.array([[0.5, 0.0], [0.0, -0.5]]))

    def tangent_vectors(self) -> np.ndarray:
        g = self.base.matrix
        return np.array([(g @ e).ravel() for e in (self.e_s, self.e_u, self.e_c)])


def splitting(g: FrameElement) -> SplittingBasis:
    return SplittingBasis(g)


@dataclass(frozen=True)
class LocalManifoldPatch:
    base: FrameElement
    kind: str
    size: float
    params: tuple[float, ...]
    samples: tuple[FrameElement, ...]


def local_manifold(g: FrameElement, kind: str, n_samples: int) -> LocalManifoldPatch:
    """Equi-spaced samples of the local leaf of ``kind`` through ``g``.

    The parameter range is ``local_size(g) / 4``; for the strong leaves the
    parameter is also the chart distance to the base (unipotent norm). For
    center leaves the same range is split evenly between flow time and leaf
    parameter.
    """
    if kind not in LEAF_KINDS:
        raise ValueError(f"unknown leaf kind {kind!r}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    size = local_size(g) / 4.0
    params = tuple(np.linspace(-size, size, n_samples)) if n_samples > 1 else (0.0,)
    if kind == "strong-stable":
        samples = [stable_move(g, p) for p in params]
    elif kind == "strong-unstable":
        samples = [unstable_move(g, p) for p in params]
    elif kind == "center-stable":
        samples = [center_stable_point(g, p / 2, p / 2) for p in params]
    else:
        samples = [center_unstable_point(g, p / 2, p / 2) for p in params]
    return LocalManifoldPatch(g, kind, size, tuple(float(p) for p in params), tuple(samples))


def leaf_residual(base: FrameElement, sample: FrameElement, kind: str) -> float:
    """How far ``base^-1 sample`` is from the subgroup that defines the leaf.

    strong-stable: N+ ; strong-unstable: N- ; center-stable: A N+ ;
    center-unstable: A N-. Measured on the sign representative with positive
    diagonal.
    """
    rel = np.linalg.solve(base.matrix, sample.matrix)
    if rel[0, 0] + rel[1, 1] < 0:
        rel = -rel
    if kind == "strong-stable":
        return float(max(abs(rel[1, 0]), abs(rel[0, 0] - 1), abs(rel[1, 1] - 1)))
    if kind == "strong-unstable":
        return float(max(abs(rel[0, 1]), abs(rel[0, 0] - 1), abs(rel[1, 1] - 1)))
    if kind == "center-stable":
        return float(abs(rel[1, 0]))
    if kind == "center-unstable":
        return float(abs(rel[0, 1]))
    raise ValueError(f"unknown leaf kind {kind!r}")


@dataclass
class AnosovReport:
    constants: AnosovConstants
    t_grid: tuple[float, ...]
    direction: str
    n_samples: int
    max_normalized_ratio: float
    parameter_ratio_error: float
    passed: bool


def sample_window_frames(
    rng: np.random.Generator, n: int, im_lo: float = 1.0, im_hi: float = 4.0
) -> np.ndarray:
    """Random frames over the strip ``|re| <= 1/2, im in [im_lo, im_hi]`` with uniform angle."""
    x = rng.uniform(-0.5, 0.5, n)
    y = rng.uniform(im_lo, im_hi, n)
    phi = (math.pi / 2 - rng.uniform(0, 2 * math.pi, n)) / 2
    root = np.sqrt(y)
    m = np.zeros((n, 2, 2))
    c, s = np.cos(phi), np.sin(phi)
    m[:, 0, 0] = root * c + x / root * s
    m[:, 0, 1] = -root * s + x / root * c
    m[:, 1, 0] = s / root
    m[:, 1, 1] = c / root
    return m


def verify_anosov_bounds(
    constants: AnosovConstants = MODEL_CONSTANTS,
    t_grid=DEFAULT_T_GRID,
    n_samples: int = 10_000,
    im_lo: float = 1.0,
    im_hi: float = 4.0,
    h: float = 1e-3,
    direction: str = "stable",
    seed: int = 0,
) -> AnosovReport:
    """Check ``d(phi^t g, phi^t g') <= C lam^t d(g, g')`` for leaf displacements.

    ``direction='stable'`` displaces along n+ and flows forward;
    ``'unstable'`` displaces along n- and flows backward. The negative
    control ``'unstable-forward'`` flows unstable displacements forward,
    which must violate the bound.
    """
    if im_hi > 10:
        raise ValueError("window must stay within im <= 10")
    rng = np.random.default_rng(seed)
    g = sample_window_frames(rng, n_samples, im_lo, im_hi)
    if direction == "stable":
        disp, sign = upper(h), 1.0
    elif direction == "unstable":
        disp, sign = lower(h), -1.0
    elif direction == "unstable-forward":
        disp, sign = lower(h), 1.0
    else:
        raise ValueError(f"unknown direction {direction!r}")
    moved = g @ disp
    d0 = batch_quotient_dist(g, moved)
    worst = 0.0
    param_err = 0.0
    for t in t_grid:
        a = diag_flow(sign * t)
        dt = batch_quotient_dist(g @ a, moved @ a)
        bound = constants.C * constants.lam ** t
        worst = max(worst, float(np.max(dt / (bound * d0))))
        # the leaf parameter itself scales exactly by e^-t
        rel = batch_inverse(g @ a) @ (moved @ a)
        entry = rel[:, 0, 1] if direction == "stable" else rel[:, 1, 0]
        expected = h * math.exp(-t) if direction != "unstable-forward" else h * math.exp(t)
        param_err = max(param_err, float(np.max(np.abs(entry / expected - 1.0))))
    return AnosovReport(
        constants, tuple(t_grid), direction, n_samples, worst, param_err, worst <= 1.0
    )


__all__ = [
    "AnosovConstants",
    "AnosovReport",
    "LocalManifoldPatch",
    "MODEL_CONSTANTS",
    "SplittingBasis",
    "center_stable_point",
    "center_unstable_point",
    "diag_flow",
    "geodesic_flow",
    "leaf_residual",
    "local_manifold",
    "lower",
    "random_frames",
    "reduced_height",
    "sample_window_frames",
    "splitting",
    "stable_move",
    "unstable_move",
    "upper",
    "verify_anosov_bounds",
]

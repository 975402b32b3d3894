"""The modular group acting on frames.

Fundamental-domain reduction with deck bookkeeping, the quotient distance,
classification of deck elements, closed-geodesic data for hyperbolic ones,
and the cusp-aware injectivity radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .frames import (
    FrameElement,
    HalfPlanePoint,
    as_matrix,
    batch_base_points,
    batch_chart_dist,
    tangent_to_frame,
    UnitTangent,
)

ENTRY_LIMIT = 2 ** 62
BOUNDARY_TOL = 1e-12
MAX_REDUCTION_STEPS = 200

# injectivity-radius policy, chart units
BULK_RADIUS = 0.2
CUSP_CONSTANT = 0.5

GENERATORS = {
    "S": ((0, -1), (1, 0)),
    "T": ((1, 1), (0, 1)),
    "T^-1": ((1, -1), (0, 1)),
}


@dataclass(frozen=True)
class DeckElement:
    a: int
    b: int
    c: int
    d: int
    word: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in "abcd":
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)):
                raise TypeError(f"deck entry {name}={value!r} is not an integer")
            object.__setattr__(self, name, int(value))
            if abs(int(value)) > ENTRY_LIMIT:
                raise OverflowError(f"deck entry {name} exceeds 2^62")
        if self.a * self.d - self.b * self.c != 1:
            raise ValueError(f"deck {self.entries} does not have determinant 1")
        if self.word is not None:
            prod = word_product(self.word)
            if prod != self.entries and prod != tuple(-x for x in self.entries):
                raise ValueError(f"word {self.word} does not multiply to {self.entries}")

    @classmethod
    def from_matrix(cls, m, word=None) -> "DeckElement":
        m = np.asarray(m).reshape(2, 2)
        return cls(int(m[0, 0]), int(m[0, 1]), int(m[1, 0]), int(m[1, 1]), word)

    @property
    def entries(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    @property
    def trace(self) -> int:
        return self.a + self.d

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    def as_frame(self) -> FrameElement:
        return FrameElement.from_matrix(self.matrix, renormalize=False)

    def __matmul__(self, other: "DeckElement") -> "DeckElement":
        word = None
        if self.word is not None and other.word is not None:
            word = self.word + other.word
        return DeckElement(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
            word,
        )

    def inverse(self) -> "DeckElement":
        word = None
        if self.word is not None:
            swap = {"S": "S", "T": "T^-1", "T^-1": "T"}
            word = tuple(swap[w] for w in reversed(self.word))
        return DeckElement(self.d, -self.b, -self.c, self.a, word)

    def power(self, k: int) -> "DeckElement":
        result = DeckElement(1, 0, 0, 1)
        base = self if k >= 0 else self.inverse()
        for _ in range(abs(k)):
            result = result @ base
        return result

    def act(self, g: FrameElement) -> FrameElement:
        return FrameElement.from_matrix(self.matrix @ g.matrix)

    def same_class_sign(self, other: "DeckElement") -> bool:
        """Equality in PSL(2, Z)."""
        return self.entries == other.entries or self.entries == tuple(-x for x in other.entries)


def word_product(word) -> tuple[int, int, int, int]:
    a, b, c, d = 1, 0, 0, 1
    for w in word:
        (p, q), (r, s) = GENERATORS[w]
        a, b, c, d = a * p + b * r, a * q + b * s, c * p + d * r, c * q + d * s
    return (a, b, c, d)


IDENTITY_DECK = DeckElement(1, 0, 0, 1, ())


# ---------------------------------------------------------------- reduction

def reduce_point(z: HalfPlanePoint) -> tuple[HalfPlanePoint, DeckElement]:
    """Move ``z`` into the closed standard fundamental domain.

    Ties are canonical: ``re = 1/2`` goes to ``-1/2`` and points on the unit
    circle end with ``re <= 0``.
    """
    w = z.z
    a, b, c, d = 1, 0, 0, 1
    word: list[str] = []
    for _ in range(MAX_REDUCTION_STEPS):
        n = math.floor(w.real + 0.5)
        if n:
            w -= n
            a, b = a - n * c, b - n * d
            word[:0] = ["T^-1" if n > 0 else "T"] * abs(n)
        r2 = w.real * w.real + w.imag * w.imag
        if r2 < 1 - BOUNDARY_TOL or (r2 <= 1 + BOUNDARY_TOL and w.real > BOUNDARY_TOL):
            w = -1 / w
            a, b, c, d = -c, -d, a, b
            word.insert(0, "S")
            continue
        break
    else:
        raise RuntimeError(f"reduction of {z} did not terminate")
    deck = DeckElement(a, b, c, d, tuple(word))
    return HalfPlanePoint(w.real, w.imag), deck


def batch_reduce_points(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`reduce_point`; decks are returned as an int64 array (n, 2, 2)."""
    w = np.array(z, dtype=complex).ravel()
    n = w.shape[0]
    deck = np.zeros((n, 2, 2), dtype=np.int64)
    deck[:, 0, 0] = 1
    deck[:, 1, 1] = 1
    active = np.ones(n, dtype=bool)
    for _ in range(MAX_REDUCTION_STEPS):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        wi = w[idx]
        shift = np.floor(wi.real + 0.5)
        wi = wi - shift
        k = shift.astype(np.int64)
        deck[idx, 0, :] -= k[:, None] * deck[idx, 1, :]
        r2 = wi.real ** 2 + wi.imag ** 2
        flip = (r2 < 1 - BOUNDARY_TOL) | ((r2 <= 1 + BOUNDARY_TOL) & (wi.real > BOUNDARY_TOL))
        wi = np.where(flip, -1 / np.where(flip, wi, 1j), wi)
        fi = idx[flip]
        top = deck[fi, 0, :].copy()
        deck[fi, 0, :] = -deck[fi, 1, :]
        deck[fi, 1, :] = top
        w[idx] = wi
        active[idx] = flip
    else:
        raise RuntimeError("batch reduction did not terminate")
    return w, deck


@dataclass(frozen=True)
class ReducedFrame:
    frame: FrameElement
    deck: DeckElement


def reduce_frame(g: FrameElement) -> ReducedFrame:
    base = HalfPlanePoint.from_complex((g.m11 * 1j + g.m12) / (g.m21 * 1j + g.m22))
    _, deck = reduce_point(base)
    return ReducedFrame(deck.act(g), deck)


def batch_reduce_frames(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _, deck = batch_reduce_points(batch_base_points(m))
    return deck.astype(float) @ m, deck


# ---------------------------------------------------------- quotient distance

@lru_cache(maxsize=None)
def candidate_decks(max_length: int = 6) -> tuple[DeckElement, ...]:
    """All elements given by words of length <= ``max_length`` in S, T, T^-1, up to sign."""
    seen: dict[tuple[int, int, int, int], DeckElement] = {}

    def key(entries):
        a, b, c, d = entries
        for x in entries:
            if x:
                return entries if x > 0 else (-a, -b, -c, -d)
        return entries

    frontier = [IDENTITY_DECK]
    seen[key(IDENTITY_DECK.entries)] = IDENTITY_DECK
    for _ in range(max_length):
        nxt = []
        for g in frontier:
            for name in ("S", "T", "T^-1"):
                h = g @ DeckElement(*word_product((name,)), (name,))
                k = key(h.entries)
                if k not in seen:
                    seen[k] = h
                    nxt.append(h)
        frontier = nxt
    return tuple(seen.values())


@lru_cache(maxsize=None)
def _candidate_array(max_length: int = 6) -> np.ndarray:
    return np.array([d.matrix for d in candidate_decks(max_length)])


def _align(g_red: np.ndarray, h_red: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For reduced frames (n,2,2), min over candidates of chart_dist(cand @ g, h)."""
    cands = _candidate_array()
    moved = cands[None, :, :, :] @ g_red[:, None, :, :]
    dist = batch_chart_dist(moved, np.broadcast_to(h_red[:, None], moved.shape))
    best = np.argmin(dist, axis=1)
    return dist[np.arange(len(best)), best], best


def quotient_align(g: FrameElement, h: FrameElement) -> tuple[float, DeckElement]:
    """Quotient distance together with the deck ``k`` realizing ``chart_dist(k g, h)``."""
    rg, rh = reduce_frame(g), reduce_frame(h)
    dist, best = _align(rg.frame.matrix[None], rh.frame.matrix[None])
    cand = candidate_decks()[int(best[0])]
    deck = rh.deck.inverse() @ cand @ rg.deck
    return float(dist[0]), DeckElement(*deck.entries)


def quotient_dist(g: FrameElement, h: FrameElement) -> float:
    return quotient_align(g, h)[0]


def batch_quotient_dist(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float).reshape(-1, 2, 2)
    h = np.asarray(h, dtype=float).reshape(-1, 2, 2)
    g_red, _ = batch_reduce_frames(g)
    h_red, _ = batch_reduce_frames(h)
    out = np.empty(len(g))
    chunk = 2048
    for start in range(0, len(g), chunk):
        out[start:start + chunk] = _align(g_red[start:start + chunk], h_red[start:start + chunk])[0]
    return out


# ------------------------------------------------------- deck classification

def classify(gamma: DeckElement) -> str:
    if gamma.entries in ((1, 0, 0, 1), (-1, 0, 0, -1)):
        return "identity"
    t = abs(gamma.trace)
    if t < 2:
        return "elliptic"
    if t == 2:
        return "parabolic"
    return "hyperbolic"


def _trace_of(gamma) -> float:
    if isinstance(gamma, DeckElement):
        return abs(gamma.trace)
    m = as_matrix(gamma)
    return abs(m[0, 0] + m[1, 1])


def _require_hyperbolic(gamma):
    if isinstance(gamma, DeckElement):
        ok = classify(gamma) == "hyperbolic"
    else:
        ok = _trace_of(gamma) > 2 + 1e-12
    if not ok:
        raise ValueError(f"{gamma} is not hyperbolic: no closed geodesic")


def translation_length(gamma) -> float:
    _require_hyperbolic(gamma)
    t = _trace_of(gamma)
    if isinstance(gamma, DeckElement):
        disc = math.sqrt(float(gamma.trace ** 2 - 4))
    else:
        disc = math.sqrt(t * t - 4)
    return 2.0 * math.log((t + disc) / 2.0)


def fixed_points(gamma) -> tuple[float, float]:
    """(attracting, repelling) boundary fixed points; ``inf`` for the point at infinity."""
    _require_hyperbolic(gamma)
    if isinstance(gamma, DeckElement):
        sgn = 1 if gamma.trace > 0 else -1
        a, b, c, d = (sgn * x for x in gamma.entries)
        diff = a - d
        disc = math.sqrt(float((a + d) ** 2 - 4))
        a, b, c, d, diff = float(a), float(b), float(c), float(d), float(diff)
    else:
        m = as_matrix(gamma)
        if m[0, 0] + m[1, 1] < 0:
            m = -m
        (a, b), (c, d) = m
        diff = a - d
        disc = math.sqrt((a + d) ** 2 - 4)
    lam = (a + d + disc) / 2
    if c == 0:
        # upper triangular: fixed points infinity and b / (d - a)
        finite = b / (d - a)
        return (math.inf, finite) if a > d else (finite, math.inf)
    # roots of c x^2 - (a - d) x - b = 0, evaluated without cancellation
    q = 0.5 * (diff + math.copysign(disc, diff if diff != 0 else 1.0))
    roots = (q / c, -b / q) if q != 0 else (0.0, 0.0)
    # attracting point x has c x + d = lam > 1
    r0, r1 = roots
    if abs(c * r0 + d - lam) <= abs(c * r1 + d - lam):
        return r0, r1
    return r1, r0


def axis_frame(gamma) -> tuple[FrameElement, float]:
    """Frame on the oriented axis of ``gamma`` and the translation length.

    The frame sits at the top of the axis semicircle (height one for vertical
    axes) pointing towards the attracting fixed point, so that
    ``g^-1 gamma g = +/- diag(e^{T/2}, e^{-T/2})``.
    """
    period = translation_length(gamma)
    attract, repel = fixed_points(gamma)
    if math.isinf(attract):
        frame = tangent_to_frame(UnitTangent(HalfPlanePoint(repel, 1.0), math.pi / 2))
    elif math.isinf(repel):
        frame = tangent_to_frame(UnitTangent(HalfPlanePoint(attract, 1.0), 3 * math.pi / 2))
    else:
        centre = 0.5 * (attract + repel)
        radius = 0.5 * abs(attract - repel)
        angle = 0.0 if attract > repel else math.pi
        frame = tangent_to_frame(UnitTangent(HalfPlanePoint(centre, radius), angle))
    return frame, period


# ----------------------------------------------------------- injectivity

def reduced_height(g: FrameElement) -> float:
    base = (g.m11 * 1j + g.m12) / (g.m21 * 1j + g.m22)
    return reduce_point(HalfPlanePoint.from_complex(base))[0].im


def injectivity_radius(g: FrameElement) -> float:
    return min(BULK_RADIUS, CUSP_CONSTANT / reduced_height(g))


def local_size(g: FrameElement) -> float:
    """Point-dependent local-manifold size: a quarter of the injectivity radius."""
    return injectivity_radius(g) / 4.0

"""Frame group algebra: unit-determinant 2x2 real matrices modulo sign.

A frame ``g`` is identified with the unit tangent vector ``g_*(i, up)`` of
the upper half-plane. The geodesic flow, stable and unstable horocycle
flows are right multiplications by one-parameter subgroups (see
:mod:`modshadow.flow`); the lattice acts on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DET_TOL = 1e-12
SIGN_TOL = 1e-14


def _normalize_sign(m: np.ndarray) -> np.ndarray:
    for entry in (m[0, 0], m[0, 1], m[1, 0]):
        if abs(entry) > SIGN_TOL:
            return -m if entry < 0 else m
    return -m if m[1, 1] < 0 else m


@dataclass(frozen=True)
class FrameElement:
    m11: float
    m12: float
    m21: float
    m22: float

    def __post_init__(self):
        det = self.m11 * self.m22 - self.m12 * self.m21
        if not abs(det - 1.0) <= DET_TOL * max(1.0, abs(self.m11 * self.m22)):
            raise ValueError(f"frame determinant {det!r} is not 1")

    @classmethod
    def from_matrix(cls, m, renormalize: bool = True) -> "FrameElement":
        """Build a frame from any 2x2 array-like.

        With ``renormalize`` the matrix is rescaled by ``1/sqrt(det)``, which
        absorbs floating-point determinant drift. The sign is normalized so
        that equal elements of PSL(2, R) compare equal.
        """
        m = np.asarray(m, dtype=float).reshape(2, 2)
        if renormalize:
            det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
            if not det > 0:
                raise ValueError(f"cannot renormalize a matrix with det {det!r}")
            m = m / math.sqrt(det)
        m = _normalize_sign(m)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    def __matmul__(self, other: "FrameElement") -> "FrameElement":
        return compose(self, other)

    def __iter__(self):
        return iter((self.m11, self.m12, self.m21, self.m22))


IDENTITY = FrameElement(1.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class HalfPlanePoint:
    re: float
    im: float

    def __post_init__(self):
        if not self.im > 0:
            raise ValueError(f"point {self.re!r} + {self.im!r}i is not in the upper half-plane")

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)

    @classmethod
    def from_complex(cls, z: complex) -> "HalfPlanePoint":
        return cls(float(z.real), float(z.imag))


@dataclass(frozen=True)
class UnitTangent:
    base: HalfPlanePoint
    angle: float

    def __post_init__(self):
        wrapped = self.angle % (2 * math.pi)
        if wrapped == 2 * math.pi:
            wrapped = 0.0
        object.__setattr__(self, "angle", wrapped)


def as_matrix(g) -> np.ndarray:
    if isinstance(g, FrameElement):
        return g.matrix
    return np.asarray(g, dtype=float).reshape(2, 2)


def compose(g: FrameElement, h: FrameElement) -> FrameElement:
    return FrameElement.from_matrix(as_matrix(g) @ as_matrix(h))


def inverse(g: FrameElement) -> FrameElement:
    return FrameElement.from_matrix([[g.m22, -g.m12], [-g.m21, g.m11]], renormalize=False)


def mobius_act(g: FrameElement, z: HalfPlanePoint) -> HalfPlanePoint:
    w = z.z
    return HalfPlanePoint.from_complex((g.m11 * w + g.m12) / (g.m21 * w + g.m22))


def frame_to_tangent(g: FrameElement) -> UnitTangent:
    """Base point ``g(i)`` and direction angle of ``g_*`` applied to the upward vector at i."""
    base = mobius_act(g, HalfPlanePoint(0.0, 1.0))
    # derivative of z -> g(z) at i is (c i + d)^-2, applied to the vector i
    angle = math.pi / 2 - 2.0 * math.atan2(g.m21, g.m22)
    return UnitTangent(base, angle)


def tangent_to_frame(u: UnitTangent) -> FrameElement:
    x, y = u.base.re, u.base.im
    root = math.sqrt(y)
    # rotation by phi about i turns the upward vector by -2 phi
    phi = (math.pi / 2 - u.angle) / 2
    c, s = math.cos(phi), math.sin(phi)
    m = np.array([[root, x / root], [0.0, 1.0 / root]]) @ np.array([[c, -s], [s, c]])
    return FrameElement.from_matrix(m)


def chart_dist(g: FrameElement, h: FrameElement) -> float:
    """Left-invariant chart distance: min over sign of ``||g^-1 h -/+ I||_F``."""
    rel = as_matrix(inverse(g)) @ as_matrix(h)
    eye = np.eye(2)
    return float(min(np.linalg.norm(rel - eye), np.linalg.norm(rel + eye)))


# Batched helpers on arrays of shape (n, 2, 2).

def batch_inverse(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 0, 1]
    out[..., 1, 0] = -m[..., 1, 0]
    out[..., 1, 1] = m[..., 0, 0]
    return out


def batch_chart_dist(g: np.ndarray, h: np.ndarray) -> np.ndarray:
    rel = batch_inverse(g) @ h
    d00, d01, d10, d11 = rel[..., 0, 0], rel[..., 0, 1], rel[..., 1, 0], rel[..., 1, 1]
    off = d01 ** 2 + d10 ** 2
    plus = np.sqrt((d00 - 1) ** 2 + (d11 - 1) ** 2 + off)
    minus = np.sqrt((d00 + 1) ** 2 + (d11 + 1) ** 2 + off)
    return np.minimum(plus, minus)


def batch_base_points(m: np.ndarray) -> np.ndarray:
    return (m[..., 0, 0] * 1j + m[..., 0, 1]) / (m[..., 1, 0] * 1j + m[..., 1, 1])


def batch_sl2_exp(coeffs: np.ndarray) -> np.ndarray:
    """exp of ``[[a, b], [c, -a]]`` for rows ``(a, b, c)``, using ``X^2 = (a^2 + bc) I``."""
    a, b, c = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    q = a * a + b * c
    root = np.sqrt(np.abs(q))
    small = root < 1e-8
    safe = np.where(small, 1.0, root)
    even = np.where(q >= 0, np.cosh(root), np.cos(root))
    odd = np.where(small, 1.0 + q / 6.0, np.where(q >= 0, np.sinh(root), np.sin(root)) / safe)
    out = np.empty((len(a), 2, 2))
    out[:, 0, 0] = even + odd * a
    out[:, 0, 1] = odd * b
    out[:, 1, 0] = odd * c
    out[:, 1, 1] = even - odd * a
    return out


def random_frames(rng: np.random.Generator, n: int, scale: float = 1.0) -> list[FrameElement]:
    """Frames ``exp(X)`` with Gaussian Lie-algebra coordinates of size ``scale``."""
    return [FrameElement.from_matrix(m) for m in batch_sl2_exp(rng.normal(scale=scale, size=(n, 3)))]

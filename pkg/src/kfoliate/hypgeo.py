"""Hyperbolic 3-space in the hyperboloid model.

Points and vectors are plain numpy arrays whose last axis has length 4,
ordered (x0, x1, x2, x3) with Minkowski signature (-, +, +, +).  Points lie
on the sheet <p, p> = -1, x0 > 0.  Every function broadcasts over leading
axes unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-10

ORIGIN = np.array([1.0, 0.0, 0.0, 0.0])
E1 = np.array([0.0, 1.0, 0.0, 0.0])
E2 = np.array([0.0, 0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 0.0, 1.0])

_J = np.array([-1.0, 1.0, 1.0, 1.0])


class GeometryError(ValueError):
    """Invalid input to a hyperbolic geometry routine."""


def mink_inner(x, y):
    """Minkowski product -x0*y0 + x1*y1 + x2*y2 + x3*y3."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.sum(_J * x * y, axis=-1)


def is_point(p, tol: float = NORM_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    return bool(np.all(np.abs(mink_inner(p, p) + 1.0) <= tol) and np.all(p[..., 0] > 0))


def is_unit_spacelike(v, tol: float = NORM_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.abs(mink_inner(v, v) - 1.0) <= tol))


def normalize_point(p):
    """Project onto the upper sheet by rescaling."""
    p = np.asarray(p, dtype=float)
    return p / np.sqrt(-mink_inner(p, p))[..., None]


def normalize_normal(n, p):
    """Remove the component of ``n`` along the point ``p`` and rescale to unit length."""
    n = np.asarray(n, dtype=float)
    n = n + mink_inner(n, p)[..., None] * p
    return n / np.sqrt(mink_inner(n, n))[..., None]


def dist(p, q):
    """Hyperbolic distance arccosh(-<p, q>)."""
    c = -mink_inner(p, q)
    if np.any(c < 1.0 - 1e-9):
        raise GeometryError("-<p,q> < 1: inputs are not points of the same sheet")
    return np.arccosh(np.maximum(c, 1.0))


def normal_flow(p, n, t):
    """Follow the geodesic through ``p`` with unit velocity ``n`` for time ``t``.

    Returns the new point and the transported unit vector.
    """
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    ch, sh = np.cosh(t), np.sinh(t)
    return ch * p + sh * n, sh * p + ch * n


@dataclass(frozen=True)
class IdealPoint:
    """A point of the Riemann sphere: finite complex value or infinity."""

    z: complex | None = None
    infinite: bool = False

    def __post_init__(self):
        if (self.z is None) == (not self.infinite):
            raise GeometryError("IdealPoint needs exactly one of a finite value or the infinity flag")

    @classmethod
    def infinity(cls) -> "IdealPoint":
        return cls(None, True)


@dataclass(frozen=True)
class GeodesicPlane:
    """Totally geodesic plane {p : <p, normal> = 0}; the normal picks the positive side."""

    normal: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.normal, dtype=float)
        if not is_unit_spacelike(v):
            raise GeometryError("plane normal must be unit spacelike")
        object.__setattr__(self, "normal", v)

    def flipped(self) -> "GeodesicPlane":
        return GeodesicPlane(-self.normal)


BASE_PLANE = GeodesicPlane(E3)


def dist_to_plane(p, plane: GeodesicPlane):
    """Signed distance to ``plane``, positive on the side its normal points to."""
    return np.arcsinh(mink_inner(p, plane.normal))


def plane_foot(p, plane: GeodesicPlane):
    """Foot of the perpendicular from ``p`` to ``plane``."""
    p = np.asarray(p, dtype=float)
    s = mink_inner(p, plane.normal)[..., None]
    return (p - s * plane.normal) / np.sqrt(1.0 + s * s)


def dist_to_geodesic(p, e0, e1):
    """Distance to the geodesic spanned by a timelike unit ``e0`` and spacelike unit ``e1``."""
    e0 = np.asarray(e0, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    if (abs(mink_inner(e0, e0) + 1.0) > NORM_TOL or abs(mink_inner(e1, e1) - 1.0) > NORM_TOL
            or abs(mink_inner(e0, e1)) > NORM_TOL):
        raise GeometryError("degenerate geodesic frame")
    a = mink_inner(p, e0)
    b = mink_inner(p, e1)
    return np.arccosh(np.sqrt(np.maximum(a * a - b * b, 1.0)))


@dataclass(frozen=True)
class WedgeCore:
    """Dihedral wedge {<p, vA> <= 0, <p, vB> <= 0} with a common ridge geodesic.

    ``bend_angle`` is the exterior dihedral angle, i.e. the angle between the
    outward normals.  Use :meth:`from_bend_angle` for the standard placement:
    ridge along the x1 axis through the origin, bisecting normal along +x3.
    """

    plane_a: GeodesicPlane
    plane_b: GeodesicPlane
    bend_angle: float
    ridge: tuple = field(default=(ORIGIN, E1))

    def __post_init__(self):
        if not 0.0 <= self.bend_angle < np.pi:
            raise GeometryError("bend angle must lie in [0, pi)")
        va, vb = self.plane_a.normal, self.plane_b.normal
        e0, e1 = self.ridge
        for v in (va, vb):
            if abs(mink_inner(v, e0)) > 1e-9 or abs(mink_inner(v, e1)) > 1e-9:
                raise GeometryError("face normals must be orthogonal to the ridge")

    @classmethod
    def from_bend_angle(cls, bend_angle: float) -> "WedgeCore":
        s, c = np.sin(bend_angle / 2), np.cos(bend_angle / 2)
        va = np.array([0.0, 0.0, -s, c])
        vb = np.array([0.0, 0.0, s, c])
        return cls(GeodesicPlane(va), GeodesicPlane(vb), float(bend_angle))

    def face_direction(self, which: str) -> np.ndarray:
        """Unit vector at the ridge, tangent to the face, pointing away from the ridge."""
        plane, other = (self.plane_a, self.plane_b) if which == "a" else (self.plane_b, self.plane_a)
        e0, e1 = self.ridge
        # orthogonal complement of (e0, e1, normal) inside the 4-space
        basis = np.linalg.svd(np.stack([_J * e0, _J * e1, _J * plane.normal]))[2][-1]
        m = basis / np.sqrt(mink_inner(basis, basis))
        if mink_inner(m, other.normal) > 0:
            m = -m
        return m

    def contains(self, p) -> np.ndarray:
        da = dist_to_plane(p, self.plane_a)
        db = dist_to_plane(p, self.plane_b)
        return (da < 0) & (db < 0)


def dist_to_wedge(p, wedge: WedgeCore):
    """Distance from points outside ``wedge`` to the wedge."""
    p = np.asarray(p, dtype=float)
    if np.any(wedge.contains(p)):
        raise GeometryError("point lies inside the wedge")
    best = dist_to_geodesic(p, *wedge.ridge)
    for plane, other in ((wedge.plane_a, wedge.plane_b), (wedge.plane_b, wedge.plane_a)):
        foot = plane_foot(p, plane)
        on_face = mink_inner(foot, other.normal) <= 0
        d = np.abs(dist_to_plane(p, plane))
        best = np.where(on_face, np.minimum(best, d), best)
    return best


def gauss_minkowski(p, n) -> IdealPoint:
    """Ideal endpoint of the geodesic ray from ``p`` in direction ``n``.

    Stereographic chart from the north pole (0, 0, 1) of the sphere at infinity.
    """
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    null = p + n
    s = null[1:] / null[0]
    s = s / np.linalg.norm(s)
    if abs(1.0 - s[2]) <= 1e-12:
        return IdealPoint.infinity()
    return IdealPoint(complex(s[0], s[1]) / (1.0 - s[2]))


def gauss_minkowski_array(p, n):
    """Vectorised :func:`gauss_minkowski`; infinity is returned as complex inf."""
    null = np.asarray(p, dtype=float) + np.asarray(n, dtype=float)
    s = null[..., 1:] / null[..., :1]
    s = s / np.linalg.norm(s, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (s[..., 0] + 1j * s[..., 1]) / (1.0 - s[..., 2])
    return np.where(np.abs(1.0 - s[..., 2]) <= 1e-12, complex(np.inf, np.inf), z)


def to_ball(p):
    """Poincare ball coordinates (x1, x2, x3) / (1 + x0)."""
    p = np.asarray(p, dtype=float)
    return p[..., 1:] / (1.0 + p[..., :1])


def from_ball(y):
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1, keepdims=True)
    return np.concatenate([(1.0 + r2), 2.0 * y], axis=-1) / (1.0 - r2)

"""Finite-difference surface calculus on structured parameter grids.

Fields live on an ``(n1, n2)`` node grid, with any trailing axes for vector
or matrix values: points and normals are ``(n1, n2, 4)``, metrics and shape
operators ``(n1, n2, 2, 2)``.  Axis 0 is the radial/first parameter, axis 1
the angular/second one.

All derivatives go through the sparse matrices of :class:`Stencils`, so the
Hessian used by the elliptic operator in :mod:`kfoliate.continuation` is
literally the same linear map as :func:`hessian_endomorphism`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .hypgeo import E3, mink_inner


class SurfaceError(ValueError):
    """Degenerate immersion or metric."""


def _first_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    if periodic:
        d = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format="lil")
        d[0, n - 1] = -0.5
        d[n - 1, 0] = 0.5
    else:
        d = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n), format="lil")
        d[0, :3] = [-1.5, 2.0, -0.5]
        d[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return (d / h).tocsr()


def _second_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    d = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="lil")
    if periodic:
        d[0, n - 1] = 1.0
        d[n - 1, 0] = 1.0
    else:
        d[0, :4] = [2.0, -5.0, 4.0, -1.0]
        d[n - 1, n - 4:] = [-1.0, 4.0, -5.0, 2.0]
    return (d / (h * h)).tocsr()


class Stencils:
    """Second-order difference matrices acting on flattened node fields."""

    def __init__(self, shape: tuple[int, int], spacing: tuple[float, float],
                 periodic: tuple[bool, bool]):
        n1, n2 = shape
        h1, h2 = spacing
        i1, i2 = sp.identity(n1, format="csr"), sp.identity(n2, format="csr")
        a1, a2 = _first_1d(n1, h1, periodic[0]), _first_1d(n2, h2, periodic[1])
        self.shape = shape
        self.d1 = sp.kron(a1, i2, format="csr")
        self.d2 = sp.kron(i1, a2, format="csr")
        self.d11 = sp.kron(_second_1d(n1, h1, periodic[0]), i2, format="csr")
        self.d22 = sp.kron(i1, _second_1d(n2, h2, periodic[1]), format="csr")
        self.d12 = sp.kron(a1, a2, format="csr")

    def apply(self, op: sp.csr_matrix, field: np.ndarray) -> np.ndarray:
        field = np.asarray(field, dtype=float)
        n = self.shape[0] * self.shape[1]
        out = op @ field.reshape(n, -1)
        return out.reshape(field.shape)

    def grad(self, field):
        return self.apply(self.d1, field), self.apply(self.d2, field)


@dataclass(frozen=True)
class BasePlaneChart:
    """Polar annulus chart on the plane x3 = 0: b(rho, theta), periodic in theta."""

    rho_min: float = 0.1
    rho_max: float = 1.0
    n_rho: int = 64
    n_theta: int = 64

    def __post_init__(self):
        if not 0 < self.rho_min < self.rho_max:
            raise SurfaceError("need 0 < rho_min < rho_max")
        if self.n_rho < 5 or self.n_theta < 8:
            raise SurfaceError("need n_rho >= 5 and n_theta >= 8")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rho, self.n_theta)

    @property
    def h_rho(self) -> float:
        return (self.rho_max - self.rho_min) / (self.n_rho - 1)

    @property
    def h_theta(self) -> float:
        return 2 * np.pi / self.n_theta

    @property
    def spacing(self) -> tuple[float, float]:
        return (self.h_rho, self.h_theta)

    periodic = (False, True)

    @property
    def rho(self) -> np.ndarray:
        return np.linspace(self.rho_min, self.rho_max, self.n_rho)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.h_theta

    @property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.rho, self.theta, indexing="ij")

    @cached_property
    def stencils(self) -> Stencils:
        return Stencils(self.shape, self.spacing, self.periodic)

    def refined(self, factor: int = 2) -> "BasePlaneChart":
        return BasePlaneChart(self.rho_min, self.rho_max, self.n_rho * factor, self.n_theta * factor)

    def base_points(self) -> np.ndarray:
        r, t = self.grid
        return np.stack([np.cosh(r), np.sinh(r) * np.cos(t), np.sinh(r) * np.sin(t),
                         np.zeros_like(r)], axis=-1)

    def base_metric(self) -> np.ndarray:
        r, _ = self.grid
        g = np.zeros(self.shape + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = np.sinh(r) ** 2
        return g

    def quadrature_weights(self) -> np.ndarray:
        w1 = np.full(self.n_rho, self.h_rho)
        w1[[0, -1]] *= 0.5
        return np.outer(w1, np.full(self.n_theta, self.h_theta))

    def interior(self, margin: int = 1) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[margin:self.n_rho - margin, :] = True
        return mask

    def interior_band(self, fraction: float = 0.5) -> np.ndarray:
        """Nodes in the middle ``fraction`` of the radial range.

        Unlike :meth:`interior` this is a fixed physical sub-annulus, so it
        does not creep towards the boundary under refinement.
        """
        span = self.rho_max - self.rho_min
        lo = self.rho_min + 0.5 * (1 - fraction) * span
        hi = self.rho_max - 0.5 * (1 - fraction) * span
        r, _ = self.grid
        eps = 1e-12 * span
        return (r >= lo - eps) & (r <= hi + eps)


@dataclass(frozen=True)
class PatchGrid:
    """Rectangular parameter grid, used for parametric surface pieces."""

    s1_min: float
    s1_max: float
    n1: int
    s2_min: float
    s2_max: float
    n2: int

    periodic = (False, False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def spacing(self) -> tuple[float, float]:
        return ((self.s1_max - self.s1_min) / (self.n1 - 1), (self.s2_max - self.s2_min) / (self.n2 - 1))

    @property
    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(np.linspace(self.s1_min, self.s1_max, self.n1),
                           np.linspace(self.s2_min, self.s2_max, self.n2), indexing="ij")

    @cached_property
    def stencils(self) -> Stencils:
        return Stencils(self.shape, self.spacing, self.periodic)

    def quadrature_weights(self) -> np.ndarray:
        h1, h2 = self.spacing
        w1 = np.full(self.n1, h1)
        w1[[0, -1]] *= 0.5
        w2 = np.full(self.n2, h2)
        w2[[0, -1]] *= 0.5
        return np.outer(w1, w2)

    def interior(self, margin: int = 1) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[margin:self.n1 - margin, margin:self.n2 - margin] = True
        return mask


@dataclass
class FermiGraph:
    """Signed height ``u`` above the base plane over a polar chart."""

    chart: BasePlaneChart
    u: np.ndarray

    def __post_init__(self):
        self.u = np.broadcast_to(np.asarray(self.u, dtype=float), self.chart.shape).copy()
        if not np.all(np.isfinite(self.u)):
            raise SurfaceError("graph heights must be finite")

    @classmethod
    def constant(cls, chart: BasePlaneChart, d: float) -> "FermiGraph":
        return cls(chart, np.full(chart.shape, float(d)))


@dataclass
class ImmersionField:
    """Points, exterior unit normals and coordinate tangents of a discrete surface."""

    chart: BasePlaneChart | PatchGrid
    points: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray  # (n1, n2, 2, 4)


def fermi_point(rho, theta, u):
    """cosh(u) b(rho, theta) + sinh(u) e3."""
    rho, theta, u = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (rho, theta, u)))
    ch, sh = np.cosh(u), np.sinh(u)
    return np.stack([ch * np.cosh(rho), ch * np.sinh(rho) * np.cos(theta),
                     ch * np.sinh(rho) * np.sin(theta), sh], axis=-1)


def fermi_coordinates(p):
    """Inverse of :func:`fermi_point`: returns (rho, theta, u)."""
    p = np.asarray(p, dtype=float)
    u = np.arcsinh(p[..., 3])
    ch = np.cosh(u)
    rho = np.arccosh(np.maximum(p[..., 0] / ch, 1.0))
    theta = np.mod(np.arctan2(p[..., 2], p[..., 1]), 2 * np.pi)
    return rho, theta, u


def _check_tangents(t1, t2):
    g11 = mink_inner(t1, t1)
    g22 = mink_inner(t2, t2)
    g12 = mink_inner(t1, t2)
    det = g11 * g22 - g12 * g12
    with np.errstate(invalid="ignore", divide="ignore"):
        sin_angle = np.sqrt(np.maximum(det, 0.0) / (g11 * g22))
    if not np.all(sin_angle >= 1e-6):
        raise SurfaceError("singular immersion: tangents (nearly) parallel")


def immerse(graph: FermiGraph) -> ImmersionField:
    """Immersion of a Fermi graph.

    Tangents use the exact chain rule applied to centred differences of ``u``;
    the normal is the closed-form unit normal of the graph in Fermi
    coordinates, oriented towards increasing ``u``.
    """
    chart = graph.chart
    st = chart.stencils
    u = graph.u
    r, th = chart.grid
    u1, u2 = st.grad(u)
    ch, sh = np.cosh(u)[..., None], np.sinh(u)[..., None]
    b = chart.base_points()
    b1 = np.stack([np.sinh(r), np.cosh(r) * np.cos(th), np.cosh(r) * np.sin(th), 0 * r], axis=-1)
    b2 = np.stack([0 * r, -np.sinh(r) * np.sin(th), np.sinh(r) * np.cos(th), 0 * r], axis=-1)
    nu = sh * b + ch * E3
    points = ch * b + sh * E3
    t1 = ch * b1 + u1[..., None] * nu
    t2 = ch * b2 + u2[..., None] * nu
    _check_tangents(t1, t2)
    # covector du - u1 d(rho) - u2 d(theta), raised by du^2 + cosh^2(u) g_P
    sr2 = np.sinh(r)[..., None] ** 2
    n = nu - (u1[..., None] / ch) * b1 - (u2[..., None] / (ch * sr2)) * b2
    n = n / np.sqrt(mink_inner(n, n))[..., None]
    return ImmersionField(chart, points, n, np.stack([t1, t2], axis=-2))


def immersion_from_points(chart, points, normals) -> ImmersionField:
    """Immersion with tangents taken by finite differences of the node points."""
    st = chart.stencils
    t1, t2 = st.grad(points)
    _check_tangents(t1, t2)
    return ImmersionField(chart, np.asarray(points, float), np.asarray(normals, float),
                          np.stack([t1, t2], axis=-2))


def induced_metric(imm: ImmersionField) -> np.ndarray:
    t = imm.tangents
    g = mink_inner(t[..., :, None, :], t[..., None, :, :])
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    if not (np.all(det > 1e-12) and np.all(g[..., 0, 0] > 0)):
        raise SurfaceError("degenerate induced metric")
    return g


def metric_det(g):
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def inverse2(m):
    """Closed-form inverse of a field of 2x2 matrices."""
    det = metric_det(m)
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1]
    inv[..., 1, 1] = m[..., 0, 0]
    inv[..., 0, 1] = -m[..., 0, 1]
    inv[..., 1, 0] = -m[..., 1, 0]
    return inv / det[..., None, None]


def second_fundamental_form(imm: ImmersionField) -> np.ndarray:
    """h_ij = <d_i N, d_j Phi>, the sign making exterior-convex surfaces positive."""
    dn = np.stack(imm.chart.stencils.grad(imm.normals), axis=-2)
    return mink_inner(dn[..., :, None, :], imm.tangents[..., None, :, :])


def shape_operator(imm: ImmersionField, g: np.ndarray) -> np.ndarray:
    """Weingarten endomorphism A = g^{-1} h in chart coordinates."""
    if not np.all(metric_det(g) > 1e-12):
        raise SurfaceError("degenerate induced metric")
    return inverse2(g) @ second_fundamental_form(imm)


def second_fundamental_form_hessian(imm: ImmersionField) -> np.ndarray:
    """Alternative form -<d_i d_j Phi, N> from second differences of the points.

    Only used as a cross-check for :func:`second_fundamental_form`.
    """
    st = imm.chart.stencils
    p = imm.points
    dd = [[st.apply(st.d11, p), st.apply(st.d12, p)], [st.apply(st.d12, p), st.apply(st.d22, p)]]
    h = np.empty(p.shape[:2] + (2, 2))
    for i in range(2):
        for j in range(2):
            h[..., i, j] = -mink_inner(dd[i][j], imm.normals)
    return h


def gaussian_curvature(A):
    """Extrinsic curvature det A."""
    return metric_det(np.asarray(A, dtype=float))


def intrinsic_curvature(g: np.ndarray, chart) -> np.ndarray:
    """Gauss curvature of the metric ``g`` from the Brioschi formula."""
    st = chart.stencils
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]
    E1, E2 = st.grad(E)
    F1, F2 = st.grad(F)
    G1, G2 = st.grad(G)
    E22 = st.apply(st.d22, E)
    G11 = st.apply(st.d11, G)
    F12 = st.apply(st.d12, F)
    m1 = np.stack([
        np.stack([-0.5 * E22 + F12 - 0.5 * G11, 0.5 * E1, F1 - 0.5 * E2], -1),
        np.stack([F2 - 0.5 * G1, E, F], -1),
        np.stack([0.5 * G2, F, G], -1)], -2)
    z = np.zeros_like(E)
    m2 = np.stack([
        np.stack([z, 0.5 * E2, 0.5 * G1], -1),
        np.stack([0.5 * E2, E, F], -1),
        np.stack([0.5 * G1, F, G], -1)], -2)
    return (np.linalg.det(m1) - np.linalg.det(m2)) / (E * G - F * F) ** 2


def christoffel(g: np.ndarray, chart) -> np.ndarray:
    """Gamma[..., k, i, j] of the metric ``g``."""
    st = chart.stencils
    dg = np.stack(st.grad(g), axis=-3)  # dg[..., l, i, j] = d_l g_ij
    ginv = inverse2(g)
    # lowered[..., l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    lowered = 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return np.einsum("...kl,...lij->...kij", ginv, lowered)


def covariant_hessian(g: np.ndarray, f: np.ndarray, chart) -> np.ndarray:
    """Symmetric covariant Hessian d_i d_j f - Gamma^k_ij d_k f."""
    st = chart.stencils
    f = np.asarray(f, dtype=float)
    df = np.stack(st.grad(f), axis=-1)
    h = np.empty(f.shape + (2, 2))
    h[..., 0, 0] = st.apply(st.d11, f)
    h[..., 1, 1] = st.apply(st.d22, f)
    h[..., 0, 1] = h[..., 1, 0] = st.apply(st.d12, f)
    return h - np.einsum("...kij,...k->...ij", christoffel(g, chart), df)


def hessian_endomorphism(g: np.ndarray, f: np.ndarray, chart) -> np.ndarray:
    """Covariant Hessian of ``f`` with one index raised by ``g``."""
    return inverse2(g) @ covariant_hessian(g, f, chart)


def laplace_beltrami(g: np.ndarray, f: np.ndarray, chart) -> np.ndarray:
    """Divergence-form Laplacian (1/sqrt|g|) d_i(sqrt|g| g^ij d_j f)."""
    st = chart.stencils
    sq = np.sqrt(metric_det(g))
    df = np.stack(st.grad(f), axis=-1)
    flux = sq[..., None] * np.einsum("...ij,...j->...i", inverse2(g), df)
    return (st.apply(st.d1, flux[..., 0]) + st.apply(st.d2, flux[..., 1])) / sq


def surface_gradient(g: np.ndarray, f: np.ndarray, chart) -> np.ndarray:
    """Chart components g^ij d_j f."""
    df = np.stack(chart.stencils.grad(f), axis=-1)
    return np.einsum("...ij,...j->...i", inverse2(g), df)


def ambient_gradient(imm: ImmersionField, g: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Surface gradient pushed into Minkowski space through the tangents."""
    comp = surface_gradient(g, f, imm.chart)
    return np.einsum("...i,...ia->...a", comp, imm.tangents)


def area(g: np.ndarray, chart) -> float:
    """Trapezoidal surface area; summation order is fixed by the flattened grid."""
    return float(np.sum(np.sqrt(metric_det(g)) * chart.quadrature_weights()))

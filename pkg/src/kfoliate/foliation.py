"""Leaves of the foliation and the quantities tabulated for them.

Over the plane core the leaf of curvature k is the equidistant surface at
distance arctanh(sqrt(k)); everything else here (perturbed leaves, the wedge
core, continued leaves) is measured against that family.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import griddata

from .hypgeo import (BASE_PLANE, GeodesicPlane, WedgeCore, dist_to_plane, dist_to_wedge,
                     mink_inner, to_ball)
from .surfcalc import (BasePlaneChart, FermiGraph, ImmersionField, PatchGrid, area, fermi_coordinates,
                       fermi_point, gaussian_curvature, immerse, immersion_from_points,
                       induced_metric, shape_operator)

log = logging.getLogger(__name__)


class FoliationError(ValueError):
    pass


def fuchsian_exact_distance(k):
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0) or np.any(k >= 1):
        raise FoliationError("curvature must lie in (0, 1)")
    return np.arctanh(np.sqrt(k))


def fuchsian_leaf(chart: BasePlaneChart, k: float) -> FermiGraph:
    return FermiGraph.constant(chart, float(fuchsian_exact_distance(k)))


def core_distance(points, core):
    if isinstance(core, WedgeCore):
        return dist_to_wedge(points, core)
    if isinstance(core, GeodesicPlane):
        return np.abs(dist_to_plane(points, core))
    raise FoliationError(f"unsupported core {core!r}")


def leaf_core_distance(imm: ImmersionField, core=BASE_PLANE, mask=None) -> tuple[float, float]:
    """(min, max) distance from the leaf's nodes to the core; interior nodes by default."""
    mask = imm.chart.interior(1) if mask is None else mask
    d = core_distance(imm.points[mask], core)
    return float(d.min()), float(d.max())


def wedge_height(chart: BasePlaneChart, wedge: WedgeCore) -> np.ndarray:
    """Fermi height of the top of the wedge above each chart node."""
    b = chart.base_points()
    heights = []
    for plane in (wedge.plane_a, wedge.plane_b):
        v = plane.normal
        ratio = -mink_inner(b, v) / v[3]
        # a Fermi line that never meets this plane is not bounded by it
        with np.errstate(invalid="ignore", divide="ignore"):
            heights.append(np.where(np.abs(ratio) < 1, np.arctanh(ratio), np.inf))
    top = np.minimum(*heights)
    if not np.all(np.isfinite(top)):
        raise FoliationError("chart extends past the wedge")
    return top


def core_height(chart: BasePlaneChart, core) -> np.ndarray:
    if isinstance(core, WedgeCore):
        return wedge_height(chart, core)
    if isinstance(core, GeodesicPlane) and np.allclose(core.normal, BASE_PLANE.normal):
        return np.zeros(chart.shape)
    raise FoliationError("core heights are only available for the base plane and wedges")


def equidistant_height(chart: BasePlaneChart, core, d: float, iterations: int = 80) -> np.ndarray:
    """Fermi height of the distance-``d`` surface of ``core`` above each node (bisection)."""
    r, th = chart.grid
    lo = core_height(chart, core) + d * (1 - 1e-12)
    hi = lo + d + 10.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        far = core_distance(fermi_point(r, th, mid), core) > d
        hi = np.where(far, mid, hi)
        lo = np.where(far, lo, mid)
    return 0.5 * (lo + hi)


def _cosh2_antiderivative(u):
    return u / 2 + np.sinh(2 * u) / 4


def volume_between(leaf: FermiGraph, reference=None) -> float:
    """Volume between a graph leaf and a reference below it.

    ``reference`` is another graph over the same chart, a core (its top
    surface), or None for the base plane.
    """
    chart = leaf.chart
    if reference is None:
        u_ref = np.zeros(chart.shape)
    elif isinstance(reference, FermiGraph):
        u_ref = reference.u
    else:
        u_ref = core_height(chart, reference)
    if np.any(leaf.u < u_ref - 1e-14):
        raise FoliationError("leaf dips below the reference surface")
    r, _ = chart.grid
    column = _cosh2_antiderivative(leaf.u) - _cosh2_antiderivative(u_ref)
    return float(np.sum(column * np.sinh(r) * chart.quadrature_weights()))


def graph_from_immersion(imm: ImmersionField) -> FermiGraph:
    """Resample a (slightly drifted) leaf as a Fermi graph over its chart."""
    chart = imm.chart
    rho, theta, u = fermi_coordinates(imm.points)
    r, th = chart.grid
    if np.allclose(rho, r, atol=1e-12, rtol=0) and np.allclose(
            np.angle(np.exp(1j * (theta - th))), 0, atol=1e-12):
        return FermiGraph(chart, u)
    # interpolate in the (rho cos, rho sin) plane; the theta wrap is then automatic
    src = np.column_stack([(rho * np.cos(theta)).ravel(), (rho * np.sin(theta)).ravel()])
    dst = np.column_stack([(r * np.cos(th)).ravel(), (r * np.sin(th)).ravel()])
    out = griddata(src, u.ravel(), dst, method="cubic")
    missing = np.isnan(out)
    if missing.any():
        out[missing] = griddata(src, u.ravel(), dst[missing], method="nearest")
    return FermiGraph(chart, out.reshape(chart.shape))


@dataclass(frozen=True)
class NestingResult:
    nested: bool
    margin: float

    def __bool__(self):
        return self.nested


def nesting_check(lower: FermiGraph, upper: FermiGraph) -> NestingResult:
    """Is ``upper`` strictly above ``lower`` at every node?"""
    if lower.chart != upper.chart:
        raise FoliationError("leaves must share a chart")
    margin = float(np.min(upper.u - lower.u))
    return NestingResult(margin > 0, margin)


@dataclass
class LeafRecord:
    k: float
    t: float
    det_min: float
    det_max: float
    dist_min: float
    dist_max: float
    area: float
    volume_to_core: float
    ball_gap: float = float("nan")
    failed: bool = False
    message: str = ""

    @classmethod
    def failure(cls, k: float, message: str) -> "LeafRecord":
        nan = float("nan")
        return cls(k, nan, nan, nan, nan, nan, nan, nan, nan, True, message)

    def csv_row(self) -> list[float]:
        return [self.k, self.t, self.det_min, self.det_max, self.dist_min, self.dist_max,
                self.area, self.volume_to_core]


CSV_COLUMNS = ("k", "t", "det_min", "det_max", "dist_min", "dist_max", "area", "volume")


def leaf_record(imm: ImmersionField, A, g, core, k: float, t: float = 0.0,
                graph: FermiGraph | None = None) -> LeafRecord:
    mask = imm.chart.interior(1)
    det = gaussian_curvature(A)[mask]
    dmin, dmax = leaf_core_distance(imm, core, mask)
    graph = graph_from_immersion(imm) if graph is None else graph
    vol = volume_between(graph, None if core is BASE_PLANE else core)
    gap = float(np.max(1.0 - np.linalg.norm(to_ball(imm.points), axis=-1)))
    return LeafRecord(float(k), float(t), float(det.min()), float(det.max()), dmin, dmax,
                      area(g, imm.chart), vol, gap)


def leaf_record_from_state(state, k: float, core=BASE_PLANE) -> LeafRecord:
    return leaf_record(state.imm, state.A, state.g, core, k, state.t)


@dataclass
class FoliationTable:
    records: list[LeafRecord]
    core: str = "plane"

    def __post_init__(self):
        ks = [r.k for r in self.records]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise FoliationError("records must be strictly increasing in k")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def ok(self) -> bool:
        return not any(r.failed for r in self.records)


# --- constant-curvature graphs ------------------------------------------------


def _theta_colours(n_theta: int, reach: int) -> int:
    for c in range(2 * reach + 1, n_theta // 2 + 1):
        if n_theta % c == 0:
            return c
    return n_theta


def curvature_residual(chart: BasePlaneChart, u) -> np.ndarray:
    imm = immerse(FermiGraph(chart, u))
    return gaussian_curvature(shape_operator(imm, induced_metric(imm)))


def solve_k_surface(chart: BasePlaneChart, k: float, boundary_u, guess=None, tol: float = 1e-11,
                    max_iter: int = 30) -> FermiGraph:
    """Newton solve for a graph with discrete curvature ``k`` at all interior nodes.

    Heights on the two radial edges are held at ``boundary_u``.  The Jacobian
    is built by coloured central differences: a node's curvature only sees
    heights within two nodes in each direction.
    """
    boundary_u = np.broadcast_to(np.asarray(boundary_u, dtype=float), chart.shape)
    u = np.array(boundary_u if guess is None else guess, dtype=float)
    edge = ~chart.interior(1)
    u[edge] = boundary_u[edge]
    inner = chart.interior(1)
    idx = -np.ones(chart.shape, dtype=int)
    idx[inner] = np.arange(inner.sum())
    n_rho, n_theta = chart.shape
    reach = 2
    c1, c2 = 2 * reach + 1, _theta_colours(n_theta, reach)
    ii, jj = np.meshgrid(np.arange(n_rho), np.arange(n_theta), indexing="ij")
    eps = 1e-6
    for it in range(max_iter):
        res = curvature_residual(chart, u) - k
        err = float(np.max(np.abs(res[inner])))
        log.debug("k-surface newton %d: residual %.3e", it, err)
        if err < tol:
            return FermiGraph(chart, u)
        rows, cols, vals = [], [], []
        for a in range(c1):
            for b in range(c2):
                colour = inner & (ii % c1 == a) & (jj % c2 == b)
                if not colour.any():
                    continue
                du = np.where(colour, eps, 0.0)
                diff = (curvature_residual(chart, u + du) - curvature_residual(chart, u - du)) / (2 * eps)
                # each residual node within reach of a coloured node belongs to exactly one
                ci, cj = np.nonzero(colour)
                for di in range(-reach, reach + 1):
                    for dj in range(-reach, reach + 1):
                        ri, rj = ci + di, (cj + dj) % n_theta
                        ok = (ri >= 1) & (ri <= n_rho - 2)
                        rows.append(idx[ri[ok], rj[ok]])
                        cols.append(idx[ci[ok], cj[ok]])
                        vals.append(diff[ri[ok], rj[ok]])
        n = int(inner.sum())
        J = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        delta = np.zeros(chart.shape)
        delta[inner] = spla.spsolve(J, res[inner])
        # backtrack until the residual drops; far from the root a full step can leave the chart
        lam = 1.0
        while lam > 1e-3:
            trial = u - lam * delta
            with np.errstate(all="ignore"):
                try:
                    new = float(np.max(np.abs(curvature_residual(chart, trial)[inner] - k)))
                except ValueError:
                    new = np.inf
            if new < err:
                break
            lam /= 2
        else:
            raise FoliationError(f"k-surface Newton stalled (residual {err:.3e})")
        u = trial
    raise FoliationError(f"k-surface Newton did not converge (residual {err:.3e})")


def radial_ramp(chart: BasePlaneChart) -> np.ndarray:
    r, _ = chart.grid
    return (r - chart.rho_min) / (chart.rho_max - chart.rho_min)


def perturbed_leaf(chart: BasePlaneChart, k: float, amplitude: float = 0.01,
                   frequency: int = 1) -> FermiGraph:
    """Curvature-k graph whose outer-edge heights are displaced by amplitude*cos(frequency*theta).

    The start guess is arctanh(sqrt(k)) + amplitude*cos(frequency*theta)*ramp(rho)
    with a ramp running from 0 on the inner edge to 1 on the outer edge.
    """
    _, th = chart.grid
    u0 = fuchsian_exact_distance(k) + amplitude * np.cos(frequency * th) * radial_ramp(chart)
    return solve_k_surface(chart, k, u0, u0)


def wedge_leaf(chart: BasePlaneChart, wedge: WedgeCore, k: float) -> FermiGraph:
    """Curvature-k graph spanning the distance-arctanh(sqrt k) surface of the wedge on the chart edges."""
    u0 = equidistant_height(chart, wedge, float(fuchsian_exact_distance(k)))
    return solve_k_surface(chart, k, u0, u0)


# --- wedge equidistant surfaces -----------------------------------------------


@dataclass
class WedgeCheck:
    d: float
    bend_angle: float
    band_det: np.ndarray = field(repr=False)
    tube_det: np.ndarray = field(repr=False)

    @property
    def min_det(self) -> float:
        return float(min(self.band_det.min(), self.tube_det.min()))

    def passed(self, tol: float = 1e-6) -> bool:
        return self.min_det >= math.tanh(self.d) ** 2 - tol


def _piece_curvature(grid: PatchGrid, points, normals) -> np.ndarray:
    imm = immersion_from_points(grid, points, normals)
    A = shape_operator(imm, induced_metric(imm))
    return gaussian_curvature(A)


def wedge_equidistant_pieces(wedge: WedgeCore, d: float, n: int = 24, length: float = 1.0,
                             width: float = 1.0):
    """Sample the smooth pieces of the distance-``d`` surface of ``wedge``.

    Yields ``(name, grid, points, normals)`` for the two face bands and, when
    the wedge is bent, the tube sector around the ridge.
    """
    e0, e1 = wedge.ridge
    s_grid = PatchGrid(-length, length, n, 0.0, width, n)
    s, r = s_grid.grid
    ridge = np.cosh(s)[..., None] * e0 + np.sinh(s)[..., None] * e1
    for name, plane in (("band-a", wedge.plane_a), ("band-b", wedge.plane_b)):
        m = wedge.face_direction(name[-1])
        q = np.cosh(r)[..., None] * ridge + np.sinh(r)[..., None] * m
        v = plane.normal
        yield name, s_grid, math.cosh(d) * q + math.sinh(d) * v, math.sinh(d) * q + math.cosh(d) * v
    if wedge.bend_angle > 0:
        va, vb = wedge.plane_a.normal, wedge.plane_b.normal
        w2 = vb - mink_inner(va, vb) * va
        w2 = w2 / math.sqrt(mink_inner(w2, w2))
        t_grid = PatchGrid(-length, length, n, 0.0, wedge.bend_angle, n)
        s, psi = t_grid.grid
        ridge = np.cosh(s)[..., None] * e0 + np.sinh(s)[..., None] * e1
        w = np.cos(psi)[..., None] * va + np.sin(psi)[..., None] * w2
        yield "tube", t_grid, math.cosh(d) * ridge + math.sinh(d) * w, math.sinh(d) * ridge + math.cosh(d) * w


def wedge_equidistant_curvature_check(wedge: WedgeCore, d: float, n: int = 24) -> WedgeCheck:
    """Curvature of each smooth piece of the distance-``d`` surface of the wedge."""
    if d <= 0:
        raise FoliationError("distance must be positive")
    band, tube = [], []
    for name, grid, points, normals in wedge_equidistant_pieces(wedge, d, n):
        det = _piece_curvature(grid, points, normals)
        (tube if name == "tube" else band).append(det.ravel())
    tube_det = np.concatenate(tube) if tube else np.array([np.inf])
    return WedgeCheck(float(d), wedge.bend_angle, np.concatenate(band), tube_det)


# --- sweeps -------------------------------------------------------------------


def exact_fuchsian_record(chart: BasePlaneChart, k: float):
    """Record and immersion of the exact leaf at curvature ``k`` over the plane."""
    from .continuation import fuchsian_state

    state = fuchsian_state(chart, k)
    graph = fuchsian_leaf(chart, k)
    return leaf_record(state.imm, state.A, state.g, BASE_PLANE, k, 0.0, graph), state.imm


def convergence_sweep(ks, core=BASE_PLANE, chart: BasePlaneChart | None = None, cfg=None,
                      method: str = "exact", perturbation: tuple[float, int] = (0.0, 1),
                      forcing="det-normalized", on_leaf=None) -> FoliationTable:
    """Tabulate leaves for increasing curvatures ``ks``.

    ``method`` is ``"exact"`` (closed-form leaves over the plane),
    ``"continuation"`` (one run from ks[0], recording every k) or ``"newton"``
    (independent constant-curvature solves, the only option for a wedge core).
    ``on_leaf(k, immersion)`` is called for every leaf that was built.
    """
    from .continuation import (ContinuationAbort, ForcingMode, continue_to, fuchsian_state,
                               state_from_graph)

    chart = chart or BasePlaneChart()
    ks = [float(k) for k in ks]
    if not ks or any(b <= a for a, b in zip(ks, ks[1:])) or ks[0] <= 0 or ks[-1] >= 1:
        raise FoliationError("curvatures must increase strictly inside (0, 1)")
    emit = on_leaf or (lambda k, imm: None)
    core_name = "wedge" if isinstance(core, WedgeCore) else "plane"
    records = []
    if method == "exact":
        if core_name != "plane":
            raise FoliationError("exact leaves exist only over the plane core")
        for k in ks:
            rec, imm = exact_fuchsian_record(chart, k)
            records.append(rec)
            emit(k, imm)
    elif method == "continuation":
        if core_name != "plane":
            raise FoliationError("continuation starts from a plane-core leaf")
        amp, freq = perturbation
        mode = ForcingMode(forcing)
        if amp:
            state = state_from_graph(perturbed_leaf(chart, ks[0], amp, freq), ks[0], mode)
        else:
            state = fuchsian_state(chart, ks[0], mode)
        records.append(leaf_record_from_state(state, ks[0], core))
        emit(ks[0], state.imm)
        try:
            for k in ks[1:]:
                state, recs = continue_to(state, k, cfg, core)
                records += recs
                emit(k, state.imm)
        except ContinuationAbort as exc:
            log.info("continuation aborted: %s", exc)
            records += [LeafRecord.failure(k, str(exc)) for k in ks[len(records):]]
    elif method == "newton":
        for k in ks:
            try:
                graph = wedge_leaf(chart, core, k) if core_name == "wedge" else fuchsian_leaf(chart, k)
                imm = immerse(graph)
                g = induced_metric(imm)
                records.append(leaf_record(imm, shape_operator(imm, g), g, core, k, 0.0, graph))
                emit(k, imm)
            except (FoliationError, ValueError) as exc:
                records.append(LeafRecord.failure(k, str(exc)))
    else:
        raise FoliationError(f"unknown sweep method {method!r}")
    return FoliationTable(records, core_name)

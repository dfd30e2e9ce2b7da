"""Curvature continuation of a leaf.

A leaf of constant curvature k is pushed along its normal with a speed f
that solves the linear elliptic problem

    Tr(A^{-1} Hess f) + Tr(A - A^{-1}) f = rhs,

and the shape operator, metric, points and normals are advanced together by
their deformation equations.  Differentiating det A along the flow gives

    d/dt det A = -det A * (Tr(A^{-1} Hess f) + Tr(A - A^{-1}) f) = -det A * rhs,

so rhs = -1 makes the curvature grow like k0 * e^t ("paper-literal") while
rhs = -1/det A makes it grow like k0 + t ("det-normalized").  Because the
elliptic operator and the A update share the same discrete Hessian, this
identity holds node by node up to the time-stepping error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .equiflow import metric_deformation_rhs, normal_deformation_rhs
from .hypgeo import BASE_PLANE, normalize_normal, normalize_point
from .surfcalc import (BasePlaneChart, FermiGraph, ImmersionField, ambient_gradient, christoffel,
                       gaussian_curvature, hessian_endomorphism, immerse, immersion_from_points,
                       induced_metric, inverse2, metric_det, shape_operator)

log = logging.getLogger(__name__)


class ForcingMode(str, Enum):
    PAPER_LITERAL = "paper-literal"
    DET_NORMALIZED = "det-normalized"


class ContinuationAbort(RuntimeError):
    """A run stopped because an invariant failed.

    ``check`` names the failed invariant so reports can point at it.
    """

    def __init__(self, message: str, check: str, measured: float = float("nan"),
                 bound: float = float("nan")):
        super().__init__(message)
        self.check = check
        self.measured = measured
        self.bound = bound


@dataclass
class SolverConfig:
    dt: float = 1e-2
    bc: str = "dirichlet"
    tol_solve: float = 1e-9
    tol_det: float = 1e-4
    max_steps: int = 10_000
    # assert det A == k0 + t after each step (the normalized determinant law)
    det_law_check: bool = False
    det_law_tol: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0 or self.tol_solve <= 0 or self.tol_det <= 0 or self.det_law_tol <= 0:
            raise ValueError("dt and tolerances must be positive")
        if self.bc != "dirichlet":
            raise ValueError("only Dirichlet data in rho (periodic in theta) is supported")


@dataclass
class ContinuationState:
    t: float
    imm: ImmersionField
    g: np.ndarray
    A: np.ndarray
    f: np.ndarray
    k0: float
    mode: ForcingMode = ForcingMode.DET_NORMALIZED

    @property
    def chart(self):
        return self.imm.chart

    @property
    def curvature(self) -> float:
        """Curvature predicted by the determinant law at the current time."""
        return nominal_curvature(self.k0, self.t, self.mode)

    def copy(self) -> "ContinuationState":
        imm = ImmersionField(self.imm.chart, self.imm.points.copy(), self.imm.normals.copy(),
                             self.imm.tangents.copy())
        return replace(self, imm=imm, g=self.g.copy(), A=self.A.copy(), f=self.f.copy())


def nominal_curvature(k0: float, t: float, mode: ForcingMode) -> float:
    if ForcingMode(mode) is ForcingMode.PAPER_LITERAL:
        return k0 * math.exp(t)
    return k0 + t


def time_to_curvature(k0: float, k: float, mode: ForcingMode) -> float:
    if ForcingMode(mode) is ForcingMode.PAPER_LITERAL:
        return math.log(k / k0)
    return k - k0


def trace_coefficient(A) -> np.ndarray:
    """Tr(A - A^{-1}), the zeroth-order coefficient of the speed equation."""
    A = np.asarray(A, dtype=float)
    det = metric_det(A)
    tr = A[..., 0, 0] + A[..., 1, 1]
    if np.any(det <= 0) or np.any(det >= 1) or np.any(tr <= 0):
        raise ValueError("trace coefficient needs a positive A with 0 < det A < 1")
    return tr - tr / det


def trace_coefficient_closed_form(A) -> np.ndarray:
    """(k - 1)(lam^2 + k) / (lam k) with k = det A and lam the smaller eigenvalue.

    lam comes from the characteristic polynomial in the cancellation-free form
    2k / (tr + sqrt(tr^2 - 4k)); a general eigensolver loses digits on
    non-normal input.
    """
    A = np.asarray(A, dtype=float)
    k = metric_det(A)
    tr = A[..., 0, 0] + A[..., 1, 1]
    lam = 2 * k / (tr + np.sqrt(np.maximum(tr * tr - 4 * k, 0.0)))
    return (k - 1) * (lam * lam + k) / (lam * k)


def homogeneous_speed(k: float, mode: ForcingMode) -> float:
    """Speed solving the equation on a leaf with A = sqrt(k) Id."""
    f = math.sqrt(k) / (2 * (1 - k))
    return f / k if ForcingMode(mode) is ForcingMode.DET_NORMALIZED else f


def forcing_rhs(A, mode: ForcingMode) -> np.ndarray:
    det = metric_det(np.asarray(A, dtype=float))
    if ForcingMode(mode) is ForcingMode.DET_NORMALIZED:
        return -1.0 / det
    return -np.ones_like(det)


@dataclass
class EllipticOperator:
    """f -> Tr(A^{-1} Hess f) + Tr(A - A^{-1}) f on every node of the chart."""

    matrix: sp.csr_matrix
    coefficient: np.ndarray
    chart: BasePlaneChart
    interior: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.interior is None:
            self.interior = self.chart.interior(1)

    def apply(self, f) -> np.ndarray:
        return (self.matrix @ np.ravel(f)).reshape(self.chart.shape)


def assemble_operator(g, A, chart) -> EllipticOperator:
    st = chart.stencils
    det = metric_det(A)
    if np.any(det <= 0) or np.any(det >= 1):
        raise ContinuationAbort("det A left (0, 1) inside a stage", "det-range",
                                float(np.max(det)), 1.0)
    try:
        c = trace_coefficient(A)
    except ValueError as exc:
        raise ContinuationAbort(str(exc), "solvability") from exc
    if np.any(c >= 0):
        raise ContinuationAbort("zeroth-order coefficient is not negative; the speed equation "
                                "loses its maximum principle", "solvability", float(np.max(c)), 0.0)
    M = inverse2(A) @ inverse2(g)
    gamma = christoffel(g, chart)
    # Tr(M S) with S the covariant Hessian; S is symmetric so the mixed term takes M01 + M10
    b = np.einsum("...ji,...kij->...k", M, gamma)
    d = sp.diags
    L = (d(M[..., 0, 0].ravel()) @ st.d11 + d(M[..., 1, 1].ravel()) @ st.d22
         + d((M[..., 0, 1] + M[..., 1, 0]).ravel()) @ st.d12
         - d(b[..., 0].ravel()) @ st.d1 - d(b[..., 1].ravel()) @ st.d2 + d(c.ravel()))
    return EllipticOperator(L.tocsr(), c, chart)


def solve_f(op: EllipticOperator, rhs, boundary, tol: float = 1e-9) -> np.ndarray:
    """Solve op f = rhs on interior nodes with f = ``boundary`` on the radial edges."""
    shape = op.chart.shape
    inner = op.interior.ravel()
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), shape).ravel()
    bvals = np.broadcast_to(np.asarray(boundary, dtype=float), shape).ravel()
    keep = sp.diags(inner.astype(float))
    system = (keep @ op.matrix + sp.diags((~inner).astype(float))).tocsc()
    b = np.where(inner, rhs, bvals)
    try:
        f = spla.spsolve(system, b)
    except RuntimeError as exc:
        raise ContinuationAbort(f"linear solve failed: {exc}", "solve") from exc
    resid = np.max(np.abs(system @ f - b)) / max(1.0, np.max(np.abs(b)))
    if not np.isfinite(resid) or resid > tol:
        raise ContinuationAbort(f"speed equation residual {resid:.3e} above {tol:.1e}", "solve",
                                float(resid), tol)
    return f.reshape(shape)


def state_from_graph(graph: FermiGraph, k0: float,
                     mode: ForcingMode = ForcingMode.DET_NORMALIZED) -> ContinuationState:
    """Initial state with A and g measured from the discrete graph."""
    imm = immerse(graph)
    g = induced_metric(imm)
    A = shape_operator(imm, g)
    return ContinuationState(0.0, imm, g, A, np.zeros(graph.chart.shape), float(k0), ForcingMode(mode))


def fuchsian_state(chart: BasePlaneChart, k0: float,
                   mode: ForcingMode = ForcingMode.DET_NORMALIZED) -> ContinuationState:
    """Exact leaf at distance arctanh(sqrt(k0)) over the base plane, A = sqrt(k0) Id."""
    d = math.atanh(math.sqrt(k0))
    imm = immerse(FermiGraph.constant(chart, d))
    g = chart.base_metric() * math.cosh(d) ** 2
    A = np.broadcast_to(math.sqrt(k0) * np.eye(2), chart.shape + (2, 2)).copy()
    return ContinuationState(0.0, imm, g, A, np.zeros(chart.shape), float(k0), ForcingMode(mode))


def _speed(A, g, chart, k0, t, mode, cfg):
    op = assemble_operator(g, A, chart)
    boundary = homogeneous_speed(nominal_curvature(k0, t, mode), mode)
    return solve_f(op, forcing_rhs(A, mode), boundary, cfg.tol_solve)


def solve_speed(state: ContinuationState, cfg: SolverConfig | None = None) -> np.ndarray:
    """Normal speed f for the current state (boundary rows: the homogeneous constant)."""
    cfg = cfg or SolverConfig()
    return _speed(state.A, state.g, state.chart, state.k0, state.t, state.mode, cfg)


def _rates(y, t, chart, k0, mode, cfg, speed=None):
    A, g, P, N = y
    f = _speed(A, g, chart, k0, t, mode, cfg) if speed is None else speed
    Hf = hessian_endomorphism(g, f, chart)
    imm = immersion_from_points(chart, P, N)
    dP = f[..., None] * N
    dN = f[..., None] * P - ambient_gradient(imm, g, f)
    return (normal_deformation_rhs(A, f, Hf), metric_deformation_rhs(g, A, f), dP, dN), f


def _renormalized(y):
    A, g, P, N = y
    P = normalize_point(P)
    return (A, g, P, normalize_normal(N, P))


def _axpy(y, h, k):
    return tuple(a + h * b for a, b in zip(y, k))


def det_dispersion(state: ContinuationState) -> float:
    det = gaussian_curvature(state.A)[state.chart.interior(1)]
    return float(det.max() - det.min())


def check_state(state: ContinuationState, cfg: SolverConfig) -> None:
    det = gaussian_curvature(state.A)
    if np.any(det <= 0) or np.any(det >= 1):
        raise ContinuationAbort(f"det A left (0, 1) at t = {state.t:.4f}", "det-range",
                                float(det.max()), 1.0)
    spread = det_dispersion(state)
    if spread > cfg.tol_det:
        raise ContinuationAbort(f"det A dispersion {spread:.3e} above {cfg.tol_det:.1e} "
                                f"at t = {state.t:.4f}", "det-dispersion", spread, cfg.tol_det)
    if cfg.det_law_check:
        gap = float(np.max(np.abs(det[state.chart.interior(1)] - (state.k0 + state.t))))
        if gap > cfg.det_law_tol:
            raise ContinuationAbort(
                f"determinant law: det A deviates from k0 + t by {gap:.3e} at t = {state.t:.4f} "
                f"(forcing {state.mode.value}; paper-literal forcing follows k0 * exp(t))",
                "det-law", gap, cfg.det_law_tol)


def step(state: ContinuationState, dt: float, cfg: SolverConfig | None = None,
         speed=None) -> ContinuationState:
    """One classical RK4 step, re-solving the speed at every stage.

    ``speed`` replaces the elliptic solve by a prescribed field (testing aid).
    """
    cfg = cfg or SolverConfig()
    chart, k0, mode, t = state.chart, state.k0, state.mode, state.t
    if speed is not None:
        speed = np.broadcast_to(np.asarray(speed, dtype=float), chart.shape)
    y0 = (state.A, state.g, state.imm.points, state.imm.normals)
    args = (chart, k0, mode, cfg, speed)
    k1, f = _rates(y0, t, *args)
    k2, _ = _rates(_renormalized(_axpy(y0, dt / 2, k1)), t + dt / 2, *args)
    k3, _ = _rates(_renormalized(_axpy(y0, dt / 2, k2)), t + dt / 2, *args)
    k4, _ = _rates(_renormalized(_axpy(y0, dt, k3)), t + dt, *args)
    incr = tuple((a + 2 * b + 2 * c + d) / 6 for a, b, c, d in zip(k1, k2, k3, k4))
    A, g, P, N = _renormalized(_axpy(y0, dt, incr))
    new = ContinuationState(t + dt, immersion_from_points(chart, P, N), g, A, f, k0, mode)
    check_state(new, cfg)
    return new


@dataclass
class ConsistencyReport:
    a_gap: float
    g_gap: float
    det_dispersion: float
    det_predicted: float
    det_mean: float

    @property
    def det_law_gap(self) -> float:
        return abs(self.det_mean - self.det_predicted)


def consistency_report(state: ContinuationState, mask=None) -> ConsistencyReport:
    """Compare the evolved A and g with those recomputed from the evolved immersion."""
    chart = state.chart
    mask = chart.interior(1) if mask is None else mask
    imm = immersion_from_points(chart, state.imm.points, state.imm.normals)
    g_imm = induced_metric(imm)
    A_imm = shape_operator(imm, g_imm)
    det = gaussian_curvature(state.A)[mask]
    a_gap = float(np.max(np.abs(A_imm - state.A)[mask]))
    g_gap = float(np.max(np.abs(g_imm - state.g)[mask] / np.abs(state.g)[mask].max()))
    return ConsistencyReport(a_gap, g_gap, float(det.max() - det.min()),
                             state.curvature, float(det.mean()))


def continue_to(state: ContinuationState, k_target: float, cfg: SolverConfig | None = None,
                core=BASE_PLANE, checkpoints=(), on_step=None):
    """March ``state`` until its curvature reaches ``k_target``.

    A :class:`~kfoliate.foliation.LeafRecord` is produced at every checkpoint
    curvature and at the target.  ``on_step``, if given, is called with each
    accepted state.  Returns the final state and the records.
    """
    from .foliation import leaf_record_from_state

    cfg = cfg or SolverConfig()
    if not 0 < k_target < 1:
        raise ValueError("target curvature must lie in (0, 1)")
    k_now = state.curvature
    if k_target < k_now - 1e-12:
        raise ValueError("continuation only increases the curvature")
    targets = sorted({float(k) for k in checkpoints if k_now < k < k_target} | {float(k_target)})
    records = []
    steps = 0
    for k in targets:
        t_goal = time_to_curvature(state.k0, k, state.mode)
        span = t_goal - state.t
        n = max(0, math.ceil(span / cfg.dt - 1e-9))
        for i in range(n):
            steps += 1
            if steps > cfg.max_steps:
                raise ContinuationAbort("step budget exhausted", "max-steps", steps, cfg.max_steps)
            # land exactly on t_goal
            h = (t_goal - state.t) / (n - i)
            state = step(state, h, cfg)
            if on_step is not None:
                on_step(state)
        log.debug("reached k=%.4f at t=%.4f after %d steps", k, state.t, steps)
        records.append(leaf_record_from_state(state, k, core))
    return state, records

"""Shape operator evolution under normal deformations.

Moving a surface along its unit normal with speed f changes the Weingarten
operator by  dA/dt = f Id - Hess(f) - f A^2  and the metric by
dg/dt = f (gA + (gA)^T).  For f = 1 (equidistant surfaces) the first reduces
to the Riccati equation dA/dt = Id - A^2, whose scalar solutions are tanh,
coth or the constant 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ID = np.eye(2)


class FlowError(ValueError):
    """Input outside the convex, forward-time setting."""


def riccati_rhs(A):
    A = np.asarray(A, dtype=float)
    return _ID - A @ A


@dataclass(frozen=True)
class RiccatiBranch:
    """Closed-form solution of lambda' = 1 - lambda^2 through a seed value.

    ``kind`` is ``"tanh"``, ``"coth"`` or ``"unit"``; ``t0`` is the offset so
    that lambda(t) = tanh(t0 + t) or coth(t0 + t).
    """

    kind: str
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tanh", "coth", "unit"):
            raise FlowError(f"unknown branch kind {self.kind!r}")
        if self.kind == "coth" and self.t0 <= 0:
            raise FlowError("coth branch needs a positive offset")


def classify_branch(lam0: float) -> RiccatiBranch:
    if lam0 < 0:
        raise FlowError("negative principal curvature: seed is not convex")
    if abs(lam0 - 1.0) <= 1e-12:
        return RiccatiBranch("unit")
    if lam0 < 1.0:
        return RiccatiBranch("tanh", float(np.arctanh(lam0)))
    return RiccatiBranch("coth", float(np.arctanh(1.0 / lam0)))


def evolve_eigen(branch: RiccatiBranch, t):
    t = np.asarray(t, dtype=float)
    if branch.kind == "unit":
        return np.ones_like(t)
    if branch.kind == "tanh":
        return np.tanh(branch.t0 + t)
    return 1.0 / np.tanh(branch.t0 + t)


def evolve_eigenvalues(lam0, t):
    """Vectorised closed form: every seed in ``lam0`` flowed for time ``t``."""
    lam0, t = np.broadcast_arrays(np.asarray(lam0, dtype=float), np.asarray(t, dtype=float))
    if np.any(lam0 < 0):
        raise FlowError("negative principal curvature: seed is not convex")
    out = np.ones_like(lam0)
    lo = lam0 < 1.0 - 1e-12
    hi = lam0 > 1.0 + 1e-12
    out[lo] = np.tanh(np.arctanh(lam0[lo]) + t[lo])
    out[hi] = 1.0 / np.tanh(np.arctanh(1.0 / lam0[hi]) + t[hi])
    return out


def rk4(rhs, y0, t_end: float, step: float, t_start: float = 0.0):
    """Classical fixed-step Runge-Kutta; the last step is shortened to land on ``t_end``."""
    y = np.array(y0, dtype=float)
    t = t_start
    while t < t_end - 1e-15:
        h = min(step, t_end - t)
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def _frame_decompose(A, g, tol):
    """Eigen-decomposition of A in a g-orthonormal frame (g = L L^T)."""
    gA = g @ A
    if np.max(np.abs(gA - np.swapaxes(gA, -1, -2))) > tol * max(1.0, np.max(np.abs(gA))):
        raise FlowError("A is not self-adjoint with respect to g")
    Lt = np.swapaxes(np.linalg.cholesky(g), -1, -2)
    B = Lt @ A @ np.linalg.inv(Lt)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    w, V = np.linalg.eigh(B)
    return w, V, Lt


def g_eigen(A, g=None, tol: float = 1e-8):
    """Eigenvalues (ascending) and chart eigenvectors of a g-self-adjoint A."""
    A = np.asarray(A, dtype=float)
    g = _ID if g is None else np.asarray(g, dtype=float)
    w, V, Lt = _frame_decompose(A, g, tol)
    return w, np.linalg.solve(Lt, V)


def evolve_shape(A0, g=None, t=0.0, tol: float = 1e-8):
    """Equidistant-flow shape operator: eigenvectors frozen, eigenvalues on their branches."""
    A0 = np.asarray(A0, dtype=float)
    g = _ID if g is None else np.asarray(g, dtype=float)
    w, V, Lt = _frame_decompose(A0, g, tol)
    lam = evolve_eigenvalues(w, np.broadcast_to(t, w.shape))
    Bt = V @ (lam[..., :, None] * np.swapaxes(V, -1, -2))
    return np.linalg.solve(Lt, Bt @ Lt)


def normal_deformation_rhs(A, f, Hf):
    """dA/dt = f Id - Hess(f) - f A^2 for a normal variation of speed f."""
    A = np.asarray(A, dtype=float)
    f = np.asarray(f, dtype=float)[..., None, None]
    return f * _ID - np.asarray(Hf, dtype=float) - f * (A @ A)


def metric_deformation_rhs(g, A, f):
    """dg/dt = f (gA + (gA)^T)."""
    gA = np.asarray(g, dtype=float) @ np.asarray(A, dtype=float)
    return np.asarray(f, dtype=float)[..., None, None] * (gA + np.swapaxes(gA, -1, -2))


def phi(c, t):
    """coth(c + t) tanh(t) and its t-derivative.

    The derivative is sinh(c) cosh(c + 2t) / (cosh(t) sinh(c + t))^2, which is
    positive for c > 0, so the value increases from 0 towards 1.
    """
    c = np.asarray(c, dtype=float)
    t = np.asarray(t, dtype=float)
    value = np.tanh(t) / np.tanh(c + t)
    deriv = np.sinh(c) * np.cosh(c + 2 * t) / (np.cosh(t) * np.sinh(c + t)) ** 2
    return value, deriv


def phi_derivative_printed(c, t):
    """The expression sinh(2c) / (2 (cosh(t) sinh(c + t))^2).

    Kept for comparison only: it agrees with the true derivative of
    :func:`phi` at t = 0 but not for t > 0.
    """
    c = np.asarray(c, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.sinh(2 * c) / (2 * (np.cosh(t) * np.sinh(c + t)) ** 2)


@dataclass(frozen=True)
class CurvatureBoundParams:
    """a: lower bound on the principal curvatures at t = 0; k: constant curvature."""

    a: float
    k: float

    def __post_init__(self):
        if not 0 < self.k < 1:
            raise FlowError("k must lie in (0, 1)")
        if not 0 < self.a <= np.sqrt(self.k) * (1 + 1e-12):
            raise FlowError("need 0 < a <= sqrt(k)")


def curvature_bound_cases(p: CurvatureBoundParams, t):
    """The three case bounds (K1, K2, K3); K1 is NaN when a >= k (case unreachable)."""
    a, k = p.a, p.k
    t = np.asarray(t, dtype=float)
    if a < k:
        # coth-branch case: lambda1 < k, lambda2 = k / lambda1 <= k / a
        k1 = np.tanh(np.arctanh(k) + t) / np.tanh(np.arctanh(a / k) + t)
    else:
        k1 = np.full_like(t, np.nan)
    k2 = np.tanh(np.arctanh(k) + t)
    second = np.tanh(np.arctanh(k / a) + t) if a > k else np.ones_like(t)
    k3 = np.tanh(np.arctanh(np.sqrt(k)) + t) * second
    return k1, k2, k3


def curvature_bound(p: CurvatureBoundParams, t):
    """Upper bound on the curvature of the distance-t equidistant surface."""
    k1, k2, k3 = curvature_bound_cases(p, t)
    raw = np.fmax(np.fmax(k1, k2), k3)
    return np.minimum(1.0, raw)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfoliate.equiflow import (CurvatureBoundParams, FlowError, RiccatiBranch, classify_branch,
                               curvature_bound, curvature_bound_cases, evolve_eigen, evolve_eigenvalues,
                               evolve_shape, g_eigen, metric_deformation_rhs, normal_deformation_rhs, phi,
                               phi_derivative_printed, riccati_rhs, rk4)

HALF_LOG3 = 0.5 * math.log(3)


def spd(rng, lo=0.2, hi=2.0):
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    return q @ np.diag(rng.uniform(lo, hi, 2)) @ q.T


def test_riccati_rhs_examples():
    np.testing.assert_array_equal(riccati_rhs(np.eye(2)), np.zeros((2, 2)))
    np.testing.assert_array_equal(riccati_rhs(np.zeros((2, 2))), np.eye(2))
    np.testing.assert_allclose(riccati_rhs(np.diag([0.5, 2.0])), np.diag([0.75, -3.0]))


def test_classify_branch_examples():
    b = classify_branch(0.5)
    assert b.kind == "tanh" and b.t0 == pytest.approx(0.5493061, abs=1e-7)
    assert classify_branch(1.0).kind == "unit"
    assert classify_branch(1.0 + 5e-13).kind == "unit"
    b = classify_branch(2.0)
    assert b.kind == "coth" and b.t0 == pytest.approx(HALF_LOG3, abs=1e-15)
    with pytest.raises(FlowError):
        classify_branch(-0.1)
    with pytest.raises(FlowError):
        RiccatiBranch("sinh")


def test_evolve_eigen_examples():
    t = np.linspace(0, 3, 7)
    np.testing.assert_allclose(evolve_eigen(RiccatiBranch("tanh", 0.0), t), np.tanh(t))
    for lam0 in (0.0, 0.3, 1.0, 4.0):
        assert evolve_eigen(classify_branch(lam0), 20.0) == pytest.approx(1.0, abs=1e-8)


def test_evolve_eigen_matches_rk4_at_t2():
    for lam0 in (0.05, 0.5, 1.0, 1.7, 3.0):
        y = rk4(lambda t, y: 1 - y * y, lam0, 2.0, 1e-3)
        assert abs(y - evolve_eigen(classify_branch(lam0), 2.0)) <= 1e-8


def test_vectorised_closed_form_matches_branches(rng):
    lam0 = rng.uniform(0, 3, 50)
    t = rng.uniform(0, 4, 50)
    expected = [evolve_eigen(classify_branch(l), s) for l, s in zip(lam0, t)]
    np.testing.assert_allclose(evolve_eigenvalues(lam0, t), expected, rtol=1e-14)


def test_evolve_shape_examples():
    d, t = 0.4, 1.3
    np.testing.assert_allclose(evolve_shape(math.tanh(d) * np.eye(2), None, t), math.tanh(d + t) * np.eye(2),
                               atol=1e-15)
    a0, b0 = 0.3, 0.8
    A = evolve_shape(np.diag([math.tanh(a0), 1 / math.tanh(b0)]), None, t)
    np.testing.assert_allclose(A, np.diag([math.tanh(a0 + t), 1 / math.tanh(b0 + t)]), atol=1e-14)


def test_evolve_shape_matches_matrix_rk4(rng):
    for _ in range(10):
        A0 = spd(rng, 0.1, 3.0)
        A = rk4(lambda t, y: riccati_rhs(y), A0, 2.0, 1e-3)
        assert np.max(np.abs(A - evolve_shape(A0, None, 2.0))) <= 1e-8


def test_evolve_shape_with_metric(rng):
    # A self-adjoint for g: A = g^{-1} S with S symmetric positive
    g, S = spd(rng), spd(rng)
    A0 = np.linalg.solve(g, S)
    A = rk4(lambda t, y: riccati_rhs(y), A0, 1.5, 1e-3)
    np.testing.assert_allclose(evolve_shape(A0, g, 1.5), A, atol=1e-8)
    w, V = g_eigen(A0, g)
    np.testing.assert_allclose(A0 @ V, V * w, atol=1e-12)
    np.testing.assert_allclose(V.T @ g @ V, np.eye(2), atol=1e-12)
    with pytest.raises(FlowError):
        evolve_shape(np.array([[0.5, 0.3], [0.0, 0.5]]), None, 1.0)


@given(s=st.floats(0, 3), t=st.floats(0, 3))
@settings(max_examples=40, deadline=None)
def test_flow_property(s, t):
    rng = np.random.default_rng(7)
    A0 = spd(rng, 0.05, 2.5)
    np.testing.assert_allclose(evolve_shape(evolve_shape(A0, None, s), None, t), evolve_shape(A0, None, s + t),
                               atol=1e-10)


def test_determinant_nondecreasing_for_sub_unit_seeds(rng):
    ts = np.linspace(0, 4, 41)
    for _ in range(50):
        A0 = spd(rng, 0.01, 0.99)
        dets = [np.linalg.det(evolve_shape(A0, None, t)) for t in ts]
        assert np.min(np.diff(dets)) >= 0


def test_normal_deformation_rhs_examples(rng):
    A = spd(rng)
    np.testing.assert_allclose(normal_deformation_rhs(A, 1.0, np.zeros((2, 2))), riccati_rhs(A))
    np.testing.assert_array_equal(normal_deformation_rhs(A, 0.0, np.zeros((2, 2))), np.zeros((2, 2)))
    np.testing.assert_array_equal(normal_deformation_rhs(np.eye(2), 1.0, np.zeros((2, 2))), np.zeros((2, 2)))


def test_metric_deformation_rhs_fermi_family():
    rho = 0.7
    gP = np.diag([1.0, math.sinh(rho) ** 2])
    for t in np.linspace(0, 2, 9):
        g = math.cosh(t) ** 2 * gP
        dg = 2 * math.cosh(t) * math.sinh(t) * gP
        assert np.max(np.abs(metric_deformation_rhs(g, math.tanh(t) * np.eye(2), 1.0) - dg)) <= 1e-10
    np.testing.assert_array_equal(metric_deformation_rhs(gP, np.eye(2), 0.0), np.zeros((2, 2)))
    np.testing.assert_array_equal(metric_deformation_rhs(gP, np.zeros((2, 2)), 1.0), np.zeros((2, 2)))


def test_phi_examples():
    assert phi(0.8, 0.0)[0] == 0.0
    assert phi(1.0, 20.0)[0] == pytest.approx(1.0, abs=1e-8)
    c, t, eps = 0.7, 0.9, 1e-5
    fd = (phi(c, t + eps)[0] - phi(c, t - eps)[0]) / (2 * eps)
    assert abs(phi(c, t)[1] - fd) <= 1e-6


def test_phi_printed_derivative_only_matches_at_zero():
    c = np.linspace(0.1, 2, 10)
    np.testing.assert_allclose(phi_derivative_printed(c, 0.0), phi(c, 0.0)[1], rtol=1e-13)
    assert abs(phi_derivative_printed(0.7, 0.9) - phi(0.7, 0.9)[1]) > 0.3


def test_phi_increasing_in_t():
    c = np.linspace(0.05, 3, 30)[:, None]
    t = np.linspace(0, 5, 60)[None, :]
    value, _ = phi(c, t)
    assert np.all(np.diff(value, axis=1) > 0)
    assert np.all((value >= 0) & (value < 1))


def test_bound_params_validation():
    with pytest.raises(FlowError):
        CurvatureBoundParams(0.6, 0.25)  # a > sqrt(k)
    with pytest.raises(FlowError):
        CurvatureBoundParams(0.1, 1.0)
    CurvatureBoundParams(0.5, 0.25)


def test_bound_cases():
    p = CurvatureBoundParams(0.1, 0.4)
    k1, k2, k3 = curvature_bound_cases(p, 0.0)
    assert k2 == pytest.approx(0.4)
    assert k1 == pytest.approx(0.4 * 4.0)  # tanh(atanh k) * coth(arccoth(k/a))
    # a >= k makes the first case unreachable
    k1, _, _ = curvature_bound_cases(CurvatureBoundParams(0.45, 0.4), 0.0)
    assert np.isnan(k1)
    assert curvature_bound(p, 20.0) == pytest.approx(1.0, abs=1e-6)


def test_bound_dominates_small_sample():
    from kfoliate.verify import bound_margins

    excess, drop, limit = bound_margins(n=500, seed=3)
    assert excess <= 1e-12 and drop >= 0 and limit <= 1e-6

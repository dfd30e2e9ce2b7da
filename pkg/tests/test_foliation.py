import math

import numpy as np
import pytest

from kfoliate.continuation import SolverConfig, continue_to, fuchsian_state, state_from_graph
from kfoliate.foliation import (FoliationError, FoliationTable, LeafRecord, convergence_sweep,
                                core_distance, curvature_residual, equidistant_height, fuchsian_exact_distance,
                                fuchsian_leaf, graph_from_immersion, leaf_core_distance, nesting_check,
                                perturbed_leaf, solve_k_surface, volume_between, wedge_equidistant_curvature_check,
                                wedge_height, wedge_leaf)
from kfoliate.hypgeo import BASE_PLANE, WedgeCore
from kfoliate.surfcalc import BasePlaneChart, FermiGraph, ImmersionField, fermi_point, immerse

BASE_AREA = 2 * math.pi * (math.cosh(1.0) - math.cosh(0.1))


def test_exact_distance_examples():
    assert fuchsian_exact_distance(1e-12) == pytest.approx(0.0, abs=1e-5)
    assert fuchsian_exact_distance(0.25) == pytest.approx(0.5493061, abs=1e-7)
    assert fuchsian_exact_distance(0.99) == pytest.approx(2.993223, abs=1e-6)
    ks = np.linspace(1e-4, 1 - 1e-4, 10_001)
    assert np.max(np.abs(np.tanh(fuchsian_exact_distance(ks)) ** 2 - ks)) <= 1e-14
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(FoliationError):
            fuchsian_exact_distance(bad)


def test_leaf_core_distance(chart32):
    for k in (0.1, 0.5, 0.9):
        lo, hi = leaf_core_distance(immerse(fuchsian_leaf(chart32, k)))
        assert abs(lo - math.atanh(math.sqrt(k))) <= 1e-10
        assert abs(hi - math.atanh(math.sqrt(k))) <= 1e-10
    assert leaf_core_distance(immerse(FermiGraph.constant(chart32, 0.0))) == (0.0, 0.0)


def test_continued_leaf_obeys_patch_maximum_principle(chart32):
    """Away from the boundary a k-leaf cannot rise above arctanh(sqrt k)."""
    s, _ = continue_to(state_from_graph(perturbed_leaf(chart32, 0.25), 0.25), 0.3)
    all_nodes = np.ones(chart32.shape, dtype=bool)
    edge = ~chart32.interior(1)
    _, d_all = leaf_core_distance(s.imm, mask=all_nodes)
    _, d_edge = leaf_core_distance(s.imm, mask=edge)
    h = max(chart32.spacing)
    assert d_all <= max(fuchsian_exact_distance(0.3), d_edge) + h ** 2


class TestVolume:
    def test_zero_between_identical(self, chart32):
        leaf = fuchsian_leaf(chart32, 0.4)
        assert volume_between(leaf, leaf) == 0.0

    def test_closed_form(self, chart64):
        d = fuchsian_exact_distance(0.5)
        exact = (d / 2 + math.sinh(2 * d) / 4) * BASE_AREA
        assert volume_between(fuchsian_leaf(chart64, 0.5)) == pytest.approx(exact, rel=1e-3)

    def test_additivity(self, chart32):
        a, b = fuchsian_leaf(chart32, 0.2), fuchsian_leaf(chart32, 0.6)
        assert abs(volume_between(a) + volume_between(b, a) - volume_between(b)) <= 1e-10

    def test_order_violation(self, chart32):
        with pytest.raises(FoliationError):
            volume_between(fuchsian_leaf(chart32, 0.2), fuchsian_leaf(chart32, 0.6))

    def test_wedge_reference(self, chart32):
        wedge = WedgeCore.from_bend_angle(math.pi / 3)
        top = FermiGraph(chart32, wedge_height(chart32, wedge))
        assert volume_between(top, wedge) == 0.0


def test_nesting_check(chart32):
    a, b = fuchsian_leaf(chart32, 0.25), fuchsian_leaf(chart32, 0.5)
    res = nesting_check(a, b)
    assert res.nested and res.margin == pytest.approx(0.332068, abs=1e-6)
    same = nesting_check(a, fuchsian_leaf(chart32, 0.25))
    assert not same.nested and same.margin == 0.0
    assert not nesting_check(b, a)


def test_equidistant_heights(chart32):
    np.testing.assert_allclose(equidistant_height(chart32, BASE_PLANE, 0.7), 0.7, atol=1e-12)
    wedge = WedgeCore.from_bend_angle(math.pi / 3)
    u = equidistant_height(chart32, wedge, 0.4)
    r, th = chart32.grid
    np.testing.assert_allclose(core_distance(fermi_point(r, th, u), wedge), 0.4, atol=1e-12)
    # the top of the wedge is at distance zero; arccosh near 1 only resolves sqrt(eps)
    top = fermi_point(r, th, wedge_height(chart32, wedge) + 1e-12)
    np.testing.assert_allclose(core_distance(top, wedge), 0.0, atol=1e-7)
    # with a right-angle bend, Fermi lines near rho = 1 escape past both faces
    with pytest.raises(FoliationError):
        wedge_height(chart32, WedgeCore.from_bend_angle(math.pi / 2))


class TestWedgeCheck:
    @pytest.mark.parametrize("angle", [math.pi / 6, math.pi / 2])
    def test_pieces(self, angle):
        d = 0.5
        res = wedge_equidistant_curvature_check(WedgeCore.from_bend_angle(angle), d, 16)
        np.testing.assert_allclose(res.band_det, math.tanh(d) ** 2, atol=1e-10)
        np.testing.assert_allclose(res.tube_det, 1.0, atol=1e-10)
        assert res.passed()

    def test_flat_limit(self):
        res = wedge_equidistant_curvature_check(WedgeCore.from_bend_angle(0.0), 1.0, 16)
        np.testing.assert_allclose(res.band_det, math.tanh(1.0) ** 2, atol=1e-10)
        assert res.min_det == pytest.approx(math.tanh(1.0) ** 2, abs=1e-10)

    def test_distance_must_be_positive(self):
        with pytest.raises(FoliationError):
            wedge_equidistant_curvature_check(WedgeCore.from_bend_angle(1.0), 0.0)


class TestKSurface:
    def test_constant_boundary(self, chart32):
        k = 0.3
        d0 = fuchsian_exact_distance(k)
        leaf = solve_k_surface(chart32, k, d0)
        inner = chart32.interior(1)
        assert np.max(np.abs(curvature_residual(chart32, leaf.u)[inner] - k)) <= 1e-10
        assert np.max(np.abs(leaf.u - d0)) <= max(chart32.spacing) ** 2

    def test_perturbed_leaf_boundary(self, chart32):
        leaf = perturbed_leaf(chart32, 0.25, 0.02, 2)
        _, th = chart32.grid
        np.testing.assert_allclose(leaf.u[-1], math.atanh(0.5) + 0.02 * np.cos(2 * th[-1]), atol=1e-14)
        np.testing.assert_allclose(leaf.u[0], math.atanh(0.5), atol=1e-14)

    def test_wedge_leaf_below_exact_distance(self, chart32):
        wedge = WedgeCore.from_bend_angle(math.pi / 3)
        for k in (0.3, 0.6):
            leaf = wedge_leaf(chart32, wedge, k)
            _, dmax = leaf_core_distance(immerse(leaf), wedge, np.ones(chart32.shape, dtype=bool))
            assert dmax <= fuchsian_exact_distance(k) + 1e-12


def test_graph_resampling(chart32):
    leaf = fuchsian_leaf(chart32, 0.3)
    imm = immerse(leaf)
    assert np.array_equal(graph_from_immersion(imm).u, leaf.u)
    # nodes drifted tangentially along a graph of known height
    r, th = chart32.grid
    height = lambda r, th: 0.5 + 0.05 * np.sin(th) * r  # noqa: E731
    r2, th2 = r + 0.3 * chart32.h_rho * np.sin(th), th + 0.3 * chart32.h_theta
    r2 = np.clip(r2, chart32.rho_min, chart32.rho_max)
    pts = fermi_point(r2, th2, height(r2, th2))
    moved = ImmersionField(chart32, pts, imm.normals, imm.tangents)
    u = graph_from_immersion(moved).u
    assert np.max(np.abs(u - height(r, th))[chart32.interior(2)]) <= 1e-4


class TestSweep:
    def test_fuchsian_table_properties(self, chart32):
        ks = [0.05, 0.2, 0.4, 0.6, 0.8, 0.95]
        leaves = {}
        table = convergence_sweep(ks, chart=chart32, on_leaf=lambda k, imm: leaves.__setitem__(k, imm))
        assert table.ok and table.core == "plane" and sorted(leaves) == ks
        for name in ("dist_min", "area", "volume_to_core"):
            assert np.all(np.diff(table.column(name)) > 0)
        assert np.all(np.diff(table.column("ball_gap")) < 0)
        scaled = table.column("area") * (1 - table.column("k"))
        assert np.ptp(scaled) <= 1e-12
        assert abs(scaled[0] - BASE_AREA) <= max(chart32.spacing) ** 2
        assert table.records[0].volume_to_core < 1.0
        for r in table.records:
            assert r.det_min <= r.k + 1e-12 and r.k - 1e-12 <= r.det_max and r.dist_min <= r.dist_max

    def test_volume_vanishes_as_k_to_zero(self, chart32):
        table = convergence_sweep([1e-6, 1e-4, 1e-2], chart=chart32)
        vols = table.column("volume_to_core")
        assert vols[0] < 1e-2 and np.all(np.diff(vols) > 0)

    def test_continuation_graphs_increase_pointwise(self, chart32):
        graphs = []
        table = convergence_sweep([0.25, 0.3, 0.35], chart=chart32, method="continuation",
                                  perturbation=(0.01, 1),
                                  on_leaf=lambda k, imm: graphs.append(graph_from_immersion(imm)))
        assert table.ok
        assert all(nesting_check(a, b) for a, b in zip(graphs, graphs[1:]))

    def test_continuation_abort_marks_rows(self, chart32):
        cfg = SolverConfig(tol_det=1e-14)
        table = convergence_sweep([0.25, 0.3, 0.35], chart=chart32, cfg=cfg, method="continuation",
                                  perturbation=(0.01, 1))
        assert not table.records[0].failed
        assert all(r.failed and "dispersion" in r.message for r in table.records[1:])

    def test_newton_failure_marks_row(self, chart32, monkeypatch):
        import kfoliate.foliation as fol

        real = fol.wedge_leaf

        def flaky(chart, core, k):
            if k > 0.5:
                raise FoliationError("forced failure")
            return real(chart, core, k)

        monkeypatch.setattr(fol, "wedge_leaf", flaky)
        table = convergence_sweep([0.3, 0.6], WedgeCore.from_bend_angle(1.0), chart32, method="newton")
        assert [r.failed for r in table.records] == [False, True]
        assert table.core == "wedge" and not table.ok

    def test_bad_inputs(self, chart32):
        with pytest.raises(FoliationError):
            convergence_sweep([0.5, 0.4], chart=chart32)
        with pytest.raises(FoliationError):
            convergence_sweep([0.5], WedgeCore.from_bend_angle(1.0), chart32, method="exact")
        with pytest.raises(FoliationError):
            convergence_sweep([0.5], chart=chart32, method="magic")
        with pytest.raises(FoliationError):
            FoliationTable([LeafRecord.failure(0.5, ""), LeafRecord.failure(0.5, "")])

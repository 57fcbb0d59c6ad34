import numpy as np
import pytest

from grushinmfg.errors import ConfigurationError, DomainError
from grushinmfg.geometry import (
    Band,
    BoundaryClass,
    Cone,
    CurveFn,
    CurveGraph,
    Rectangle,
    Sublevel,
    UnionSet,
    Witness,
    check_x1_convex,
    classify_point,
    contains,
    verify_hypotheses,
)


class TestContains:
    def test_rectangle_interior(self, unit_rect):
        assert contains(unit_rect, (0.5, 0.5))

    def test_cone_above_upper_slope(self, cone_12):
        assert not contains(cone_12, (1.0, 3.0))

    def test_band_point_on_lower_curve(self, band_ex53):
        # equality on the lower curve: 0.5^2 == 0.25
        assert contains(band_ex53, (0.5, 0.25))

    def test_closed_under_tolerance(self, unit_rect):
        # exact set distance half the tolerance -> still inside
        assert contains(unit_rect, (1.0 + 0.5e-9, 0.5))
        assert not contains(unit_rect, (1.0 + 1e-6, 0.5))

    def test_union_or_property(self, cone_12, unit_rect):
        u = UnionSet((cone_12, Rectangle(3.0, 4.0, 3.0, 4.0)))
        rng = np.random.default_rng(7)
        pts = rng.uniform(-1.0, 5.0, size=(200, 2))
        lhs = u.contains_many(pts)
        rhs = cone_12.contains_many(pts) | Rectangle(3.0, 4.0, 3.0, 4.0).contains_many(pts)
        assert np.array_equal(lhs, rhs)

    def test_malformed_cone(self):
        with pytest.raises(ConfigurationError):
            Cone(2.0, 1.0)
        with pytest.raises(ConfigurationError):
            Cone(2.0, 2.0)

    def test_malformed_rectangle(self):
        with pytest.raises(ConfigurationError):
            Rectangle(1.0, 0.0, 0.0, 1.0)


class TestX1Convex:
    def test_rectangle_clean(self, unit_rect):
        rep = check_x1_convex(unit_rect, 25, seed=0)
        assert rep.passed

    def test_cone_clean(self, cone_12):
        # oracle: the section at height x2 > 0 is the interval [x2/m2, x2/m1]
        rep = check_x1_convex(cone_12, 40, seed=1)
        assert rep.passed
        for x2 in (0.3, 0.9):
            lo, hi = x2 / cone_12.m2, x2 / cone_12.m1
            inside = np.array([[0.5 * (lo + hi), x2]])
            outside = np.array([[lo - 0.05, x2], [hi + 0.05, x2]])
            assert cone_12.contains_many(inside).all()
            assert not cone_12.contains_many(outside).any()

    def test_union_bridging_pair_detected(self, cone_12):
        # translated cone piece expressed as an affine band; sections at small
        # heights hit both components with a gap in between
        shifted = Band(
            CurveFn("affine", (-2.0, 1.0)), CurveFn("affine", (-4.0, 2.0)), 2.0, 3.0
        )
        rep = check_x1_convex(UnionSet((cone_12, shifted)), 60, seed=2)
        assert not rep.passed
        bad = rep.violations[0]
        assert bad.violation > 1e-6
        assert bad.x1_left < bad.x1_right

    def test_requires_samples(self, unit_rect):
        with pytest.raises(ConfigurationError):
            check_x1_convex(unit_rect, 0, seed=0)


class TestClassifyPoint:
    def test_rectangle_interior(self, unit_rect):
        bc = classify_point(unit_rect, (0.5, 0.5), 0.1)
        assert bc.kind == "interior" and not bc.is_characteristic

    def test_cone_apex_on_axis(self, cone_12):
        bc = classify_point(cone_12, (0.0, 0.0), 0.05)
        assert bc.kind == "boundary_on_axis"
        assert not bc.is_characteristic

    def test_sublevel_flat_tangent_is_characteristic(self):
        sub = Sublevel(CurveFn("power", (1.0, 2.0)), -1.0, 1.0)
        bc = classify_point(sub, (0.0, 0.0), 0.05)
        assert bc.kind == "boundary_on_axis"
        assert bc.is_characteristic

    def test_off_axis_boundary(self, unit_rect):
        bc = classify_point(unit_rect, (1.0, 0.5), 0.05)
        assert bc.kind == "boundary_off_axis"

    def test_outside_point_rejected(self, unit_rect):
        with pytest.raises(DomainError):
            classify_point(unit_rect, (2.0, 2.0), 0.05)

    def test_characteristic_requires_on_axis(self):
        with pytest.raises(ConfigurationError):
            BoundaryClass("interior", True)


class TestVerifyHypotheses:
    def test_band_cusp_witness_passes(self, band_ex53):
        rep = verify_hypotheses(band_ex53, 1.0, 0.01)
        assert rep.passed
        assert rep.checks[0].max_violation <= 1e-9

    def test_cone_segment_passes_power_curve_fails(self):
        # the sloped segment x2 = 1.5 x1 lies in the cone, but the curve
        # x2 = x1^2 drops below the lower edge x2 = x1 near the apex
        cset = Cone(
            1.0, 2.0,
            witnesses=(
                Witness((0.0, 0.0), 1.5, 1.0, "segment_slope_pos"),
                Witness((0.0, 0.0), 1.0, 1.0, "power_curve_pos"),
            ),
        )
        rep = verify_hypotheses(cset, 1.0, 0.01)
        assert rep.checks[0].passed
        assert not rep.checks[1].passed
        # oracle: max over the sample grid of dist((x1, x1^2), lower edge)
        xs = np.linspace(0.0, 1.0, 101)
        expected = np.max((xs - xs**2) / np.hypot(1.0, 1.0))
        assert rep.checks[1].max_violation == pytest.approx(expected, rel=1e-2)

    def test_rectangle_vertical_edge_witness(self):
        rect = Rectangle(0.0, 1.0, 0.0, 1.0,
                         witnesses=(Witness((0.5, 0.0), 1.0, 1.0, "segment_vertical"),))
        rep = verify_hypotheses(rect, 1.0, 0.01)
        assert rep.passed

    def test_smooth_sublevel_flat_boundary(self):
        # f(x1) = x1^2 with f(0) = f'(0) = 0: the curve x2 = C x1^2 stays
        # above the boundary for C >= 1
        for c in (1.0, 2.0):
            sub = Sublevel(
                CurveFn("power", (1.0, 2.0)), -1.0, 1.0,
                witnesses=(Witness((0.0, 0.0), c, 0.5, "power_curve_pos"),),
            )
            assert verify_hypotheses(sub, 1.0, 0.01).passed

    def test_power_curve_off_axis_rejected(self):
        rect = Rectangle(0.0, 1.0, 0.0, 1.0,
                         witnesses=(Witness((0.5, 0.0), 1.0, 0.4, "power_curve_pos"),))
        with pytest.raises(ConfigurationError):
            verify_hypotheses(rect, 1.0, 0.01)

    def test_power_exponent_needs_large_rho_on_axis(self):
        sub = Sublevel(
            CurveFn("power", (1.0, 2.0)), -1.0, 1.0,
            witnesses=(Witness((0.0, 0.0), 1.0, 0.5, "power_exponent", rho=1.2),),
        )
        with pytest.raises(ConfigurationError):
            verify_hypotheses(sub, 1.0, 0.01)

    def test_report_json_schema(self, band_ex53):
        rows = verify_hypotheses(band_ex53, 1.0, 0.01).to_json()
        assert set(rows[0]) == {"witness_index", "pass", "max_violation"}

    def test_no_witnesses_is_config_error(self, unit_rect):
        with pytest.raises(ConfigurationError):
            verify_hypotheses(unit_rect, 1.0, 0.01)


class TestWitnessValidation:
    def test_positive_constants_required(self):
        with pytest.raises(ConfigurationError):
            Witness((0.0, 0.0), -1.0, 1.0, "segment_vertical")
        with pytest.raises(ConfigurationError):
            Witness((0.0, 0.0), 1.0, 0.0, "segment_vertical")
        with pytest.raises(ConfigurationError):
            Witness((0.0, 0.0), 1.0, 1.0, "not_a_family")
        with pytest.raises(ConfigurationError):
            Witness((0.0, 0.0), 1.0, 1.0, "power_exponent")


class TestCurveFn:
    def test_kinds(self):
        assert CurveFn("const", (2.0,))(0.3) == 2.0
        assert CurveFn("affine", (1.0, 2.0))(0.5) == 2.0
        assert CurveFn("poly", (0.0, 0.0, 1.0))(3.0) == 9.0
        assert CurveFn("power", (2.0, 1.5))(-4.0) == 16.0

    def test_config_round_trip(self):
        c = CurveFn("power", (1.0, 2.0))
        assert CurveFn.from_config(c.to_config()) == c

    def test_bad_kind(self):
        with pytest.raises(ConfigurationError):
            CurveFn("exp", (1.0,))


class TestProjection:
    def test_cone_projection_exact(self, cone_12):
        pts = np.array([[1.0, -0.5], [-1.0, -1.0], [0.2, 1.5]])
        proj = cone_12.project_many(pts)
        assert (cone_12.violation_many(proj) <= 1e-12).all()
        # apex is the closest point for the far lower-left quadrant
        assert np.allclose(proj[1], [0.0, 0.0])

    def test_band_projection_inside(self, band_ex53):
        pts = np.array([[0.5, -1.0], [0.5, 2.0], [2.0, 0.5]])
        proj = band_ex53.project_many(pts)
        assert (band_ex53.violation_many(proj) <= 1e-9).all()

    def test_curve_graph_has_no_interior(self):
        curve = CurveGraph(CurveFn("power", (1.0, 2.0)), 0.0, 1.0)
        bc = classify_point(curve, (0.5, 0.25), 0.01)
        assert bc.kind == "boundary_off_axis"

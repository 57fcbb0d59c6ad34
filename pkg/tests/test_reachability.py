import math

import numpy as np
import pytest

from grushinmfg.dynamics import ControlSignal, admissibility_check, integrate
from grushinmfg.errors import DomainError, UnsupportedWitnessError
from grushinmfg.geometry import Band, Cone, CurveFn, Rectangle, Sublevel, Witness
from grushinmfg.reachability import (
    cone_gronwall_bound,
    connect,
    random_cone_trajectories,
    truncated_cone_cost,
    truncated_cone_control,
    uniform_modulus_probe,
    verify_reachability_sequence,
)


@pytest.fixture
def wide_band():
    # band wide enough to contain sources below the witness curve x2 = x1^2
    return Band(
        CurveFn("power", (0.25, 2.0)), CurveFn("const", (1.0,)), 0.0, 1.0,
        witnesses=(Witness((0.0, 0.0), 1.0, 1.0, "power_curve_pos"),),
    )


class TestConnectFormulas:
    def test_vertical_rail_durations(self):
        # legs: |x01-xn1| horizontally, then |x02-xn2| down the rail
        rect = Rectangle(0.0, 2.0, 0.0, 1.0,
                         witnesses=(Witness((1.0, 0.0), 1.0, 1.0, "segment_vertical"),))
        res = connect(rect, 1.0, (1.2, 0.5), (1.0, 0.0))
        assert res.case_tag == "off_axis_vertical"
        assert res.delta == pytest.approx(0.7, rel=1e-12)
        assert np.allclose(res.traj.final, [1.0, 0.0], atol=1e-12)
        # second-leg control is (0, sign(x02-xn2)/|x01|^nu) = (0, -1)
        assert np.allclose(res.traj.control.value_at(0.65), [0.0, -1.0])
        # the off-axis sup bound |a| <= C_nu (1/|x01|^nu + 1) holds with C_nu = 1
        sup_a = np.max(np.abs(res.traj.control.values))
        assert sup_a <= (1.0 / abs(1.0) ** 1.0 + 1.0) + 1e-12

    def test_sloped_rail_durations(self):
        # boundary target on the left edge; s2 = |x01 - xn1 + (xn2-x02)/C| + |(xn2-x02)/C|
        rect = Rectangle(0.25, 2.0, 0.0, 2.0,
                         witnesses=(Witness((0.25, 0.5), 1.0, 1.0, "segment_slope_pos"),))
        res = connect(rect, 1.0, (1.25, 0.9), (0.25, 0.5))
        assert res.case_tag == "off_axis_slope"
        assert res.delta == pytest.approx(abs(0.25 - 1.25 + 0.4) + 0.4, rel=1e-9)
        assert np.allclose(res.traj.final, [0.25, 0.5], atol=1e-9)
        assert admissibility_check(res.traj, rect).max_violation <= 1e-9

    def test_cusp_curve_durations(self, wide_band):
        # xi = sqrt((xn2-x02)/C) = 0.2, s1 = |0.3-0.2| = 0.1, s2 = 0.3
        res = connect(wide_band, 1.0, (0.3, 0.04), (0.0, 0.0))
        assert res.case_tag == "on_axis_power"
        assert res.delta == pytest.approx(0.3, rel=1e-12)
        assert np.allclose(res.traj.final, [0.0, 0.0], atol=1e-12)
        # curve leg control is (-1, -C(nu+1)) = (-1, -2)
        assert np.allclose(res.traj.control.values[-1], [-1.0, -2.0])

    def test_source_equals_target(self, band_ex53):
        res = connect(band_ex53, 1.0, (0.3, 0.09), (0.3, 0.09))
        assert res.delta == 0.0
        assert res.control_l2 == 0.0

    def test_mirrored_negative_side_curve(self):
        sym = Band(CurveFn("power", (1.0, 2.0)), CurveFn("const", (1.0,)), -1.0, 1.0,
                   witnesses=(Witness((0.0, 0.0), 1.0, 1.0, "power_curve_neg"),))
        res = connect(sym, 1.0, (-0.3, 0.09), (0.0, 0.0))
        assert np.allclose(res.traj.final, [0.0, 0.0], atol=1e-10)
        assert admissibility_check(res.traj, sym).max_violation <= 1e-9

    def test_experimental_rho_curve(self):
        # rho = 1.75 > nu + 1/2; the rail x2 = x1^1.75 sits above the boundary
        sub = Sublevel(CurveFn("power", (1.0, 2.0)), -1.0, 1.0,
                       witnesses=(Witness((0.0, 0.0), 1.0, 0.8, "power_exponent", rho=1.75),))
        src = (0.2, 0.2**1.75)
        res = connect(sub, 1.0, src, (0.0, 0.0))
        assert np.allclose(res.traj.final, [0.0, 0.0], atol=1e-7)
        assert admissibility_check(res.traj, sub).max_violation <= 1e-9

    def test_connector_admissibility_on_band_cusp(self, band_ex53):
        for k in range(1, 8):
            src = (2.0**-k, 4.0**-k)
            res = connect(band_ex53, 1.0, src, (0.0, 0.0))
            rep = admissibility_check(res.traj, band_ex53)
            assert rep.max_violation <= 1e-9
            assert np.hypot(*(res.traj.final - np.array([0.0, 0.0]))) <= 1e-7

    def test_source_outside_rejected(self, band_ex53):
        with pytest.raises(DomainError):
            connect(band_ex53, 1.0, (0.3, 0.04), (0.0, 0.0))

    def test_dilation_scales_duration_and_controls(self, wide_band):
        base = connect(wide_band, 1.0, (0.3, 0.04), (0.0, 0.0))
        slow = connect(wide_band, 1.0, (0.3, 0.04), (0.0, 0.0), dilation=4.0)
        assert slow.delta == pytest.approx(4.0 * base.delta, rel=1e-12)
        assert slow.control_l2 == pytest.approx(base.control_l2 / 2.0, rel=1e-9)
        assert np.allclose(slow.traj.final, base.traj.final, atol=1e-10)


class TestReachabilitySequence:
    def test_band_cusp_sequence_vanishes(self, band_ex53):
        sources = [(2.0**-k, 4.0**-k) for k in range(1, 11)]
        rep = verify_reachability_sequence(band_ex53, 1.0, (0.0, 0.0), sources)
        assert rep.established
        assert rep.deltas == sorted(rep.deltas, reverse=True)
        assert rep.l2norms == sorted(rep.l2norms, reverse=True)
        assert rep.deltas[-1] <= 1e-2
        assert rep.energies[-1] <= 1e-2

    def test_rectangle_interior_radial(self, unit_rect):
        target = (0.5, 0.5)
        sources = [(0.5 + 2.0**-k * 0.6, 0.5 + 2.0**-k * 0.8) for k in range(1, 9)]
        rep = verify_reachability_sequence(unit_rect, 1.0, target, sources,
                                           delta_threshold=1e-2, l2_threshold=0.2)
        assert rep.established
        assert rep.monotone_to_zero
        assert rep.deltas[-1] <= 1e-2 and rep.l2norms[-1] <= 0.2

    def test_cone_apex_not_established(self, cone_12):
        sources = [(2.0**-k, 1.5 * 2.0**-k) for k in range(1, 6)]
        rep = verify_reachability_sequence(cone_12, 1.0, (0.0, 0.0), sources)
        assert not rep.established
        assert not rep.monotone_to_zero
        assert len(rep.failures) == len(sources)


class TestConeCertificates:
    def test_refusal_at_apex(self, cone_12):
        with pytest.raises(UnsupportedWitnessError):
            connect(cone_12, 1.0, (0.5, 0.75), (0.0, 0.0))

    def test_gronwall_constant_trajectory(self, cone_12):
        traj = integrate((1.0, 1.5), ControlSignal.zero(0.0, 1.0, 2), 1.0)
        cert = cone_gronwall_bound(1.0, traj)
        assert cert.observed_min_ratio == pytest.approx(1.0)
        assert cert.bound_values[-1] == pytest.approx(1.5)

    def test_gronwall_bound_formula(self):
        # |a2| integral exactly 2 at x02 = 1.5 gives the bound 1.5*exp(-2)
        ctrl = ControlSignal.uniform(0.0, 2.0, [[0.0, 1.0], [0.0, -1.0]])
        traj = integrate((1.0, 1.5), ctrl, 1.0, substeps=8)
        cert = cone_gronwall_bound(1.0, traj)
        assert cert.abs_a2_integral == pytest.approx(2.0)
        assert cert.bound_values[-1] == pytest.approx(1.5 * math.exp(-2.0), rel=1e-12)
        assert cert.observed_min_ratio >= 1.0 - 1e-6

    def test_gronwall_explicit_connector(self):
        ctrl = truncated_cone_control((1.0, 1.2), 1e-3)
        traj = integrate((1.0, 1.2), ctrl, 1.0, substeps=2)
        cert = cone_gronwall_bound(1.0, traj)
        assert cert.observed_min_ratio >= 1.0 - 1e-6
        # the bound itself decays with the diverging |a2| integral
        assert cert.bound_values[-1] < 0.4 * 1.2

    def test_exit_rejected(self):
        traj = integrate((1.0, 1.5), ControlSignal.uniform(0.0, 1.0, [[0.0, -3.0]]), 1.0,
                         substeps=8)
        with pytest.raises(DomainError):
            cone_gronwall_bound(1.0, traj)

    def test_random_admissible_ratios(self):
        trajs = random_cone_trajectories(1.0, 2.0, (1.0, 1.5), 20, seed=3)
        cone = Cone(1.0, 2.0)
        for tr in trajs:
            assert admissibility_check(tr, cone).max_violation <= 1e-12
            assert cone_gronwall_bound(1.0, tr).observed_min_ratio >= 1.0 - 1e-6


class TestTruncatedConeCost:
    def test_frozen_values(self):
        # oracle: (x01-eps)/2 + (x02^2/(2 x01^2)) (1/eps - 1/x01)
        assert truncated_cone_cost((1.0, 1.0), 0.1) == pytest.approx(4.95, rel=1e-6)
        assert truncated_cone_cost((1.0, 1.0), 0.5) == pytest.approx(0.75, rel=1e-6)

    def test_matches_symbolic_antiderivative(self):
        x01, x02 = 1.3, 0.9
        for eps in (0.2, 0.05):
            expected = (x01 - eps) / 2.0 + (x02**2 / (2 * x01**2)) * (1.0 / eps - 1.0 / x01)
            assert truncated_cone_cost((x01, x02), eps) == pytest.approx(expected, rel=1e-9)

    def test_vanishing_horizon_limit(self):
        assert truncated_cone_cost((1.0, 1.0), 0.999) < 1e-2

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            truncated_cone_cost((1.0, 1.0), 0.0)
        with pytest.raises(DomainError):
            truncated_cone_cost((1.0, 1.0), 1.0)
        with pytest.raises(DomainError):
            truncated_cone_cost((-1.0, 1.0), 0.1)

    def test_log_log_slope(self):
        eps = np.array([10.0**-k for k in range(1, 7)])
        costs = np.array([truncated_cone_cost((1.0, 1.0), e) for e in eps])
        coef = np.polyfit(np.log(eps), np.log(costs), 1)
        assert coef[0] == pytest.approx(-1.0, abs=0.02)
        fit = np.polyval(coef, np.log(eps))
        ss_res = np.sum((np.log(costs) - fit) ** 2)
        ss_tot = np.sum((np.log(costs) - np.log(costs).mean()) ** 2)
        assert 1.0 - ss_res / ss_tot >= 0.999


class TestModulusProbe:
    def test_band_random_pairs(self, band_ex53):
        rng = np.random.default_rng(42)
        pairs = []
        for _ in range(50):
            tx = rng.uniform(0.1, 0.9)
            ty = rng.uniform(tx**2 + 0.05, 0.95)
            sx = rng.uniform(0.0, 1.0)
            sy = rng.uniform(sx**2, 1.0)
            pairs.append(((sx, sy), (tx, ty)))
        rep = uniform_modulus_probe(band_ex53, 1.0, pairs)
        assert rep.single_modulus_ok
        assert rep.delta_exponent > 0 and rep.l2_exponent > 0
        for row in rep.per_pair:
            assert row["delta"] <= rep.delta_coeff * row["distance"] ** rep.delta_exponent * (1 + 1e-9)

    def test_rectangle_manhattan_under_unit_controls(self, unit_rect):
        # vertical rails give exactly |dx1| + |dx2| away from the axis
        pairs = [
            ((0.6, 0.3), (0.9, 0.3)),
            ((0.7, 0.2), (0.7, 0.6)),
            ((0.55, 0.1), (0.8, 0.45)),
        ]
        rep = uniform_modulus_probe(unit_rect, 1.0, pairs, interior_rails=("vertical",))
        for (src, tgt), row in zip(pairs, rep.per_pair):
            manhattan = abs(tgt[0] - src[0]) + abs(tgt[1] - src[1])
            assert row["delta"] == pytest.approx(manhattan, rel=1e-12)

    def test_coincident_pair(self, unit_rect):
        rep = uniform_modulus_probe(unit_rect, 1.0, [((0.5, 0.5), (0.5, 0.5))])
        assert rep.per_pair[0]["delta"] == 0.0

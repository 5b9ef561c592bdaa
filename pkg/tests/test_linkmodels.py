from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uwpt import linkmodels as lm
from uwpt.errors import DomainError, SchemaError

angles = st.floats(0.0, math.pi / 2 - 1e-3)
unit = st.floats(0.0, 1.0)


class TestEfficiencyChain:
    def test_product(self):
        assert lm.end_to_end_efficiency(lm.EfficiencyChain(0.9, 0.5, 0.8)) == pytest.approx(0.36)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, math.nan])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(DomainError):
            lm.EfficiencyChain(bad, 0.5, 0.5)

    @given(unit, unit, unit)
    def test_bounded_by_weakest_stage(self, a, b, c):
        eta = lm.end_to_end_efficiency(lm.EfficiencyChain(a, b, c))
        assert 0.0 <= eta <= min(a, b, c)


class TestLambertian:
    def test_sixty_degrees_is_order_one(self):
        assert lm.lambertian_order(math.radians(60)) == pytest.approx(1.0, abs=1e-12)

    def test_thirty_degrees_matches_oracle(self):
        assert lm.lambertian_order(math.radians(30)) == pytest.approx(4.8188416793064180092, rel=1e-12)

    @pytest.mark.parametrize("bad", [0.0, 1e-7, math.pi / 2, 2.0])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            lm.lambertian_order(bad)

    @given(st.floats(0.01, 1.5), st.floats(0.01, 1.5))
    def test_narrower_beam_higher_order(self, a, b):
        if a < b:
            assert lm.lambertian_order(a) >= lm.lambertian_order(b)


class TestTransmitPower:
    def test_constant_flux_integrates_to_area(self):
        spec = lm.EmissionSpectrum.constant(2.0, 400e-9, 700e-9)
        # flux 2 W/(rad m) over the full circle and 300 nm
        assert lm.owpt_transmit_power(spec) == pytest.approx(2.0 * (2 * math.pi) * 300e-9, rel=1e-12)

    def test_shape_checked(self):
        with pytest.raises(SchemaError):
            lm.EmissionSpectrum(np.array([1e-7, 2e-7]), np.array([0.0, 1.0]), np.ones((3, 2)))


class TestOwptGain:
    led = lm.OwptLedParams(math.radians(60), 1e-4)

    def test_on_axis_anchor(self):
        assert lm.owpt_dc_gain(self.led, lm.LinkGeometry(1.0)) == pytest.approx(3.1830988618379067e-5, rel=1e-12)

    def test_blocked_is_zero(self):
        assert lm.owpt_dc_gain(self.led, lm.LinkGeometry(1.0, los_clear=False)) == 0.0

    def test_behind_emitter_is_zero(self):
        assert lm.owpt_dc_gain(self.led, lm.LinkGeometry(1.0, irradiance_angle=math.pi / 2)) == 0.0

    def test_fov_edge_inclusive(self):
        led = lm.OwptLedParams(math.radians(60), 1e-4, fov_width=0.5)
        assert lm.owpt_dc_gain(led, lm.LinkGeometry(1.0, incidence_angle=0.5)) > 0.0
        assert lm.owpt_dc_gain(led, lm.LinkGeometry(1.0, incidence_angle=0.5 + 1e-12)) == 0.0

    def test_gain_table_applies(self):
        table = lm.GainTable([0.0, 1.0], [2.0, 1.0])
        led = lm.OwptLedParams(math.radians(60), 1e-4, concentrator_gain=table)
        base = lm.owpt_dc_gain(self.led, lm.LinkGeometry(1.0, incidence_angle=0.5))
        assert lm.owpt_dc_gain(led, lm.LinkGeometry(1.0, incidence_angle=0.5)) == pytest.approx(1.5 * base)

    def test_received_power(self):
        spec = lm.EmissionSpectrum.constant(1.0)
        out = lm.owpt_received_power(spec, self.led, lm.LinkGeometry(1.0))
        assert out.received_w == pytest.approx(out.transmitted_w * out.dc_gain)

    @given(angles, angles, st.floats(0.1, 100.0))
    def test_non_negative(self, inc, irr, d):
        assert lm.owpt_dc_gain(self.led, lm.LinkGeometry(d, inc, irr)) >= 0.0


class TestLaserAndRf:
    def test_laser_anchor(self):
        p = lm.LaserParams(1000.0, 1e-4, 0.9)
        assert lm.laser_received_flux(p, lm.LinkGeometry(10.0)) == pytest.approx(9e-4, rel=1e-12)

    def test_laser_blocked(self):
        p = lm.LaserParams(1000.0, 1e-4, 0.9)
        assert lm.laser_received_flux(p, lm.LinkGeometry(10.0, los_clear=False)) == 0.0
        assert lm.evaluate_link(p, lm.LinkGeometry(10.0, los_clear=False)).eta_env == 0.0

    def test_rf_anchor(self):
        res = lm.rf_max_efficiency(lm.RfParams(0.01, 0.01, 0.01), lm.LinkGeometry(10.0))
        assert res.efficiency == pytest.approx(0.01, rel=1e-12)
        assert not res.far_field_violation

    def test_rf_near_field_clamped_and_flagged(self):
        res = lm.rf_max_efficiency(lm.RfParams(0.01, 0.01, 0.01), lm.LinkGeometry(0.5))
        assert res.efficiency == 1.0
        assert res.far_field_violation
        assert res.raw == pytest.approx(4.0)


class TestNearField:
    def test_iwpt_anchor(self):
        eta = lm.iwpt_efficiency_from_factors(0.2, 100.0, 100.0, 0.1, 10.0)
        assert eta == pytest.approx(0.79049821149779648624, rel=1e-12)

    def test_iwpt_from_circuit_matches_factors(self):
        p = lm.IwptParams.from_factors(k=0.2, q1=100.0, q2=100.0, r2=0.1, r_load=10.0)
        assert p.k == pytest.approx(0.2)
        assert p.q1 == pytest.approx(100.0)
        assert lm.iwpt_efficiency(p) == pytest.approx(0.79049821149779648624, rel=1e-12)

    def test_iwpt_zero_coupling(self):
        assert lm.iwpt_efficiency_from_factors(0.0, 100.0, 100.0, 0.1, 10.0) == 0.0

    def test_iwpt_rejects_impossible_mutual(self):
        with pytest.raises(DomainError):
            lm.IwptParams(1e-4, 1e-4, 2e-4, 0.1, 0.1, 10.0, 1e5)

    @given(st.floats(1e-3, 1.0), st.floats(1.0, 1e4), st.floats(1.0, 1e4))
    def test_series_bounded(self, k, q1, q2):
        assert 0.0 <= lm.cwpt_series_max_eff(k, q1, q2) < 1.0

    @given(st.floats(1e-3, 0.99), st.floats(1.0, 1e3))
    def test_cwpt_monotone_in_coupling(self, k, q):
        assert lm.cwpt_parallel_max_eff(k, q) <= lm.cwpt_parallel_max_eff(min(1.0, k * 1.01), q) + 1e-15

    def test_cwpt_dispatch(self):
        par = lm.CwptParams("parallel", k=1.0, q=math.sqrt(3.0))
        ser = lm.CwptParams("series", k=0.5, q1=4.0, q2=3.0)
        assert lm.cwpt_max_efficiency(par) == pytest.approx(1 / 3, abs=1e-12)
        assert lm.cwpt_max_efficiency(ser) == pytest.approx(1 / 3, abs=1e-12)

    def test_near_field_ignores_los(self):
        p = lm.CwptParams("parallel", k=1.0, q=math.sqrt(3.0))
        assert lm.evaluate_link(p, lm.LinkGeometry(0.01, los_clear=False)).eta_env == pytest.approx(1 / 3)


class TestDispatch:
    def test_params_type(self):
        assert lm.params_type("laser") is lm.LaserParams
        with pytest.raises(SchemaError):
            lm.params_type("sonar")

    def test_requires_los(self):
        assert lm.requires_los(lm.LaserParams(1.0, 1.0, 0.5))
        assert not lm.requires_los(lm.CwptParams("parallel", k=0.5, q=2.0))

    @given(st.floats(0.05, 50.0))
    def test_evaluation_in_unit_interval(self, d):
        for p in (lm.LaserParams(1e4, 1e-3, 0.9), lm.RfParams(0.1, 0.1, 0.01), lm.OwptLedParams(0.3, 0.05)):
            ev = lm.evaluate_link(p, lm.LinkGeometry(d))
            assert 0.0 <= ev.eta_env <= 1.0
            assert ev.clamped == (ev.raw > 1.0)

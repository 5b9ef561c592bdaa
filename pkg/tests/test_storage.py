from __future__ import annotations

import pytest
from helpers import hybrid, reservoir
from hypothesis import given
from hypothesis import strategies as st

from uwpt import storage
from uwpt.errors import DomainError

DT = 3600.0  # one hour, so watts and watt-hours coincide


class TestReservoir:
    def test_soc_bounds_checked(self):
        with pytest.raises(DomainError):
            reservoir(10.0, 11.0)

    def test_efficiency_bounds_checked(self):
        with pytest.raises(DomainError):
            reservoir(10.0, 1.0, eff_in=1.2)


class TestCharge:
    def test_supercap_first(self):
        store = hybrid(reservoir(100.0, 0.0), reservoir(10.0, 0.0))
        res = storage.accept_charge(store, 5.0, DT)
        assert res.store.supercap.soc == 5.0
        assert res.store.battery.soc == 0.0

    def test_overflow_to_battery(self):
        store = hybrid(reservoir(100.0, 0.0), reservoir(10.0, 8.0))
        res = storage.accept_charge(store, 5.0, DT)
        assert res.store.supercap.soc == 10.0
        assert res.store.battery.soc == 3.0
        assert res.rejected_wh == 0.0

    def test_rejects_when_full(self):
        store = hybrid(reservoir(100.0, 99.0), reservoir(10.0, 10.0))
        res = storage.accept_charge(store, 5.0, DT)
        assert res.accepted_wh == pytest.approx(1.0)
        assert res.rejected_wh == pytest.approx(4.0)

    def test_power_limit(self):
        store = hybrid(reservoir(100.0, 0.0, p_in=2.0), reservoir(10.0, 10.0))
        res = storage.accept_charge(store, 5.0, DT)
        assert res.accepted_wh == pytest.approx(2.0)
        assert res.rejected_wh == pytest.approx(3.0)

    def test_conversion_loss(self):
        store = hybrid(reservoir(100.0, 0.0), reservoir(10.0, 0.0, eff_in=0.8))
        res = storage.accept_charge(store, 5.0, DT)
        assert res.accepted_wh == pytest.approx(4.0)
        assert res.loss_wh == pytest.approx(1.0)

    def test_negative_power_rejected(self):
        with pytest.raises(DomainError):
            storage.accept_charge(hybrid(), -1.0, DT)


class TestDischarge:
    def test_supercap_first(self):
        store = hybrid(reservoir(100.0, 50.0), reservoir(10.0, 4.0))
        res = storage.provide_discharge(store, 6.0, DT)
        assert res.store.supercap.soc == 0.0
        assert res.store.battery.soc == 48.0
        assert res.delivered_wh == 6.0

    def test_output_efficiency_drains_more(self):
        store = hybrid(reservoir(100.0, 50.0, eff_out=0.5), reservoir(10.0, 0.0))
        res = storage.provide_discharge(store, 4.0, DT)
        assert res.store.battery.soc == pytest.approx(42.0)
        assert res.loss_wh == pytest.approx(4.0)

    def test_empty_store_delivers_nothing(self):
        res = storage.provide_discharge(hybrid(reservoir(100.0, 0.0), reservoir(10.0, 0.0)), 5.0, DT)
        assert res.delivered_wh == 0.0


class TestTrickle:
    def test_moves_supercap_to_battery(self):
        store = hybrid(reservoir(100.0, 0.0), reservoir(10.0, 5.0), trickle=2.0)
        res = storage.trickle(store, DT)
        assert res.moved_wh == 2.0
        assert res.store.supercap.soc == 3.0
        assert res.store.battery.soc == 2.0

    def test_limited_by_battery_headroom(self):
        store = hybrid(reservoir(100.0, 99.5), reservoir(10.0, 5.0), trickle=2.0)
        assert storage.trickle(store, DT).moved_wh == pytest.approx(0.5)

    def test_zero_dt_rejected(self):
        with pytest.raises(DomainError):
            storage.trickle(hybrid(), 0.0)


res_strategy = st.builds(
    lambda cap, frac, pin, pout, ein, eout: storage.Reservoir(cap, cap * frac, pin, pout, ein, eout),
    st.floats(0.1, 1000.0),
    st.floats(0.0, 1.0),
    st.floats(0.1, 1e4),
    st.floats(0.1, 1e4),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
stores = st.builds(storage.HybridStore, res_strategy, res_strategy, st.floats(0.0, 500.0))


class TestProperties:
    @given(stores, st.floats(0.0, 1e5), st.sampled_from([0.05, 1.0, 60.0]))
    def test_charge_conserves(self, store, power, dt):
        res = storage.accept_charge(store, power, dt)
        delta = res.store.total_soc - store.total_soc
        assert abs(power * dt / 3600.0 - res.rejected_wh - res.loss_wh - delta) < 1e-9
        assert storage.is_within_bounds(res.store)
        assert res.rejected_wh >= -1e-12 and res.loss_wh >= -1e-12

    @given(stores, st.floats(0.0, 1e5), st.sampled_from([0.05, 1.0, 60.0]))
    def test_discharge_conserves(self, store, power, dt):
        res = storage.provide_discharge(store, power, dt)
        delta = store.total_soc - res.store.total_soc
        assert abs(delta - res.delivered_wh - res.loss_wh) < 1e-9
        assert res.delivered_wh <= power * dt / 3600.0 + 1e-12
        assert storage.is_within_bounds(res.store)

    @given(stores, st.sampled_from([0.05, 1.0, 60.0]))
    def test_trickle_never_gains(self, store, dt):
        res = storage.trickle(store, dt)
        assert res.store.total_soc <= store.total_soc + 1e-12
        assert storage.is_within_bounds(res.store)

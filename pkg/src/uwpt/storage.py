"""Hybrid battery + supercapacitor energy store.

The supercapacitor is the fast buffer: it takes incoming wireless power
first and supplies outgoing power first. The battery only participates once
the supercapacitor saturates, and a slow trickle moves buffered energy from
the supercapacitor into the battery.

Energies are in watt-hours, powers in watts, durations in seconds. All
operations return a new store; nothing is mutated in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from uwpt.errors import DomainError

_SECONDS_PER_HOUR = 3600.0


def _hours(dt):
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    return dt / _SECONDS_PER_HOUR


@dataclass(frozen=True)
class Reservoir:
    capacity: float
    soc: float
    max_charge_power: float
    max_discharge_power: float
    in_efficiency: float = 1.0
    out_efficiency: float = 1.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise DomainError("reservoir capacity must be positive")
        if not (0.0 <= self.soc <= self.capacity):
            raise DomainError(f"soc {self.soc!r} outside [0, {self.capacity!r}]")
        if not (self.max_charge_power > 0 and self.max_discharge_power > 0):
            raise DomainError("reservoir power limits must be positive")
        for name in ("in_efficiency", "out_efficiency"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise DomainError(f"{name} must lie in [0, 1]")

    @property
    def headroom(self) -> float:
        return self.capacity - self.soc

    def charge_power_limit(self, dt_h: float) -> float:
        """Largest terminal input power that fits both the rating and headroom."""
        if self.in_efficiency == 0.0:
            return 0.0
        return min(self.max_charge_power, self.headroom / dt_h / self.in_efficiency)

    def discharge_power_limit(self, dt_h: float) -> float:
        """Largest terminal output power sustainable for one step."""
        return min(self.max_discharge_power, self.soc * self.out_efficiency / dt_h)


def _set_soc(r: Reservoir, soc: float) -> Reservoir:
    # absorb rounding at the bounds so the invariant holds exactly
    return replace(r, soc=min(r.capacity, max(0.0, soc)))


@dataclass(frozen=True)
class HybridStore:
    battery: Reservoir
    supercap: Reservoir
    trickle_power: float = 0.0

    def __post_init__(self):
        if self.trickle_power < 0:
            raise DomainError("trickle_power must be non-negative")

    @property
    def total_soc(self) -> float:
        return self.battery.soc + self.supercap.soc

    def discharge_power_limit(self, dt: float) -> float:
        dt_h = _hours(dt)
        return self.supercap.discharge_power_limit(dt_h) + self.battery.discharge_power_limit(dt_h)


class ChargeResult(NamedTuple):
    store: HybridStore
    accepted_wh: float
    loss_wh: float
    rejected_wh: float


class DischargeResult(NamedTuple):
    store: HybridStore
    delivered_wh: float
    loss_wh: float


class TrickleResult(NamedTuple):
    store: HybridStore
    moved_wh: float
    loss_wh: float


def trickle(store: HybridStore, dt: float) -> TrickleResult:
    """Move up to ``trickle_power * dt`` from the supercap into the battery."""
    dt_h = _hours(dt)
    sc, bat = store.supercap, store.battery
    if store.trickle_power == 0.0 or sc.soc == 0.0 or bat.in_efficiency == 0.0:
        return TrickleResult(store, 0.0, 0.0)
    moved = min(store.trickle_power * dt_h, sc.soc, bat.headroom / bat.in_efficiency)
    if moved <= 0.0:
        return TrickleResult(store, 0.0, 0.0)
    stored = moved * bat.in_efficiency
    new = replace(
        store,
        supercap=_set_soc(sc, sc.soc - moved),
        battery=_set_soc(bat, bat.soc + stored),
    )
    return TrickleResult(new, moved, moved - stored)


def accept_charge(
    store: HybridStore, offered_power: float, dt: float, apply_trickle: bool = True
) -> ChargeResult:
    """Route incoming power into the store, supercap first.

    ``accepted_wh`` is the energy that ends up in the reservoirs before the
    trickle step; ``loss_wh`` covers conversion losses of routing and
    trickle; ``rejected_wh`` is offered energy no reservoir could take.
    """
    if offered_power < 0:
        raise DomainError("offered power must be non-negative")
    dt_h = _hours(dt)
    sc, bat = store.supercap, store.battery
    p_sc = min(offered_power, sc.charge_power_limit(dt_h))
    p_bat = min(offered_power - p_sc, bat.charge_power_limit(dt_h))
    e_sc = p_sc * dt_h * sc.in_efficiency
    e_bat = p_bat * dt_h * bat.in_efficiency
    loss = p_sc * dt_h - e_sc + p_bat * dt_h - e_bat
    rejected = (offered_power - p_sc - p_bat) * dt_h
    new = replace(
        store,
        supercap=_set_soc(sc, sc.soc + e_sc),
        battery=_set_soc(bat, bat.soc + e_bat),
    )
    accepted = e_sc + e_bat
    if apply_trickle:
        tr = trickle(new, dt)
        new = tr.store
        loss += tr.loss_wh
    return ChargeResult(new, accepted, loss, rejected)


def provide_discharge(store: HybridStore, requested_power: float, dt: float) -> DischargeResult:
    """Draw power from the store, supercap first.

    ``delivered_wh`` is terminal energy; each reservoir's state of charge
    drops by its share divided by its output efficiency.
    """
    if requested_power < 0:
        raise DomainError("requested power must be non-negative")
    dt_h = _hours(dt)
    sc, bat = store.supercap, store.battery
    p_sc = min(requested_power, sc.discharge_power_limit(dt_h))
    p_bat = min(requested_power - p_sc, bat.discharge_power_limit(dt_h))
    out_sc = p_sc * dt_h
    out_bat = p_bat * dt_h
    drain_sc = min(sc.soc, out_sc / sc.out_efficiency) if out_sc > 0 else 0.0
    drain_bat = min(bat.soc, out_bat / bat.out_efficiency) if out_bat > 0 else 0.0
    new = replace(
        store,
        supercap=_set_soc(sc, sc.soc - drain_sc),
        battery=_set_soc(bat, bat.soc - drain_bat),
    )
    delivered = out_sc + out_bat
    return DischargeResult(new, delivered, drain_sc + drain_bat - delivered)


def is_within_bounds(store: HybridStore) -> bool:
    return all(
        0.0 <= r.soc <= r.capacity and math.isfinite(r.soc) for r in (store.battery, store.supercap)
    )

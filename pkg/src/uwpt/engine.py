"""Fixed-timestep multi-agent simulation of wireless energy trading.

One call to :meth:`Simulation.step` runs these phases in a fixed order:

1. formation control computes accelerations for formation members;
2. motion is integrated and optical/RF transmitters slew toward receivers;
3. due orders are submitted; every ``market_interval`` ticks the book
   expires stale orders and clears with the rendezvous-feasibility filter;
4. each WPT session is activated or suspended from the current geometry;
5. energy moves over every active session;
6. moving agents pay their motion load and stores trickle internally;
7. one metrics row per agent is emitted.

Nothing in a step depends on wall-clock time, hashing order or thread
scheduling, so identical inputs give identical outputs.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from uwpt import storage
from uwpt.errors import DegenerateGeometryError, DomainError, SimulationFault
from uwpt.formation import FormationSpec, formation_control
from uwpt.linkmodels import (
    NEAR_FIELD_TECHNOLOGIES,
    CwptParams,
    IwptParams,
    LinkTechnologyParams,
    evaluate_link,
    requires_los,
)
from uwpt.market import OPEN, Order, OrderBook
from uwpt.world import (
    Obstacle,
    Pose,
    SafetyPolicy,
    integrate_motion,
    link_geometry,
    safe_distance,
    track_target,
)

log = logging.getLogger(__name__)

AGENT_KINDS = (
    "ground_ev",
    "aerial_ev",
    "surface_vessel",
    "underwater_ev",
    "charging_base",
    "charging_lane_segment",
    "grid_facility",
)
STATIONARY_KINDS = frozenset({"charging_base", "charging_lane_segment", "grid_facility"})

PENDING = "pending"
ACTIVE = "active"
SUSPENDED = "suspended"
DONE = "done"

_SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class TxCapability:
    technology: LinkTechnologyParams
    max_power_w: float
    max_range_m: float
    eta_tr: float = 0.9

    @property
    def kind(self) -> str:
        return self.technology.kind


@dataclass(frozen=True)
class RxCapability:
    kind: str
    eta_rc: float = 0.9


@dataclass(frozen=True)
class CouplingMap:
    """Distance to coupling coefficient for near-field links.

    ``k(d) = k_ref * (d_ref / d) ** exponent`` capped at ``k_ref``, and 0
    beyond ``cutoff``.
    """

    d_ref: float
    k_ref: float
    exponent: float = 3.0
    cutoff: float = math.inf

    def __post_init__(self):
        if not (self.d_ref > 0 and 0 < self.k_ref <= 1 and self.exponent >= 1 and self.cutoff > 0):
            raise DomainError("coupling map needs d_ref > 0, k_ref in (0, 1], exponent >= 1, cutoff > 0")

    def k(self, distance: float) -> float:
        if distance > self.cutoff:
            return 0.0
        if distance <= self.d_ref:
            return self.k_ref
        return self.k_ref * (self.d_ref / distance) ** self.exponent


@dataclass(eq=False)
class Agent:
    """A vehicle, charging base, lane segment or grid facility.

    ``store`` is ``None`` only for grid facilities, which act as unlimited
    sources and sinks.
    """

    id: str
    kind: str
    pose: Pose
    store: Optional[storage.HybridStore]
    tx: Tuple[TxCapability, ...] = ()
    rx: Tuple[RxCapability, ...] = ()
    consumption_w: float = 0.0
    max_speed: Optional[float] = None
    renewable_source: bool = False
    slew_rate: float = math.inf

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise DomainError(f"agent {self.id}: unknown kind {self.kind!r}")
        if not self.tx and not self.rx:
            raise DomainError(f"agent {self.id}: needs a transmit or receive capability")
        if self.store is None and self.kind != "grid_facility":
            raise DomainError(f"agent {self.id}: only grid facilities may omit a store")
        if self.stationary and self.pose.speed != 0.0:
            raise DomainError(f"agent {self.id}: stationary kinds must have zero velocity")
        self.tx = tuple(self.tx)
        self.rx = tuple(self.rx)

    @property
    def stationary(self) -> bool:
        return self.kind in STATIONARY_KINDS

    @property
    def mobile(self) -> bool:
        return not self.stationary

    @property
    def unlimited(self) -> bool:
        return self.store is None

    @property
    def speed_bound(self) -> float:
        if self.stationary:
            return 0.0
        return self.pose.speed if self.max_speed is None else self.max_speed

    def common_technology(self, receiver: "Agent") -> Optional[int]:
        """Index of the first transmit capability the receiver can accept."""
        kinds = {r.kind for r in receiver.rx}
        for i, cap in enumerate(self.tx):
            if cap.kind in kinds:
                return i
        return None

    def rx_for(self, kind: str) -> RxCapability:
        return next(r for r in self.rx if r.kind == kind)


@dataclass
class WptSession:
    contract_id: str
    tx_agent: str
    rx_agent: str
    technology: str
    cap_index: int
    state: str = PENDING
    eta_env: float = 0.0
    eta_wpt: float = 0.0
    clamped: bool = False


@dataclass(frozen=True)
class Fault:
    tick: int
    code: str
    agent_id: str
    detail: str = ""


@dataclass
class TickEnergy:
    """Energy flows of one tick, in Wh, summed over agents."""

    delivered: float = 0.0
    losses: float = 0.0
    consumption: float = 0.0
    grid_supplied: float = 0.0
    grid_absorbed: float = 0.0
    rejected: float = 0.0

    def residual(self, soc_delta: float) -> float:
        """Conservation residual given the summed change of all finite stores."""
        return soc_delta + self.losses + self.consumption - self.grid_supplied + self.grid_absorbed


class MetricsRow(NamedTuple):
    tick: int
    time_s: float
    agent_id: str
    soc_battery_wh: Optional[float]
    soc_supercap_wh: Optional[float]
    delivered_wh: float
    losses_wh: float
    faults: str


class AggregateResult(NamedTuple):
    store: Optional[storage.HybridStore]
    credited_wh: List[float]
    accept_ratio: float
    accepted_wh: float
    loss_wh: float
    rejected_wh: float


def multi_peer_aggregate(store, offered_powers: Sequence[float], dt: float) -> AggregateResult:
    """Charge one receiver from several simultaneous transmitters.

    Offered powers are summed before the receiver's limits apply. Accepted
    energy is credited to each session in proportion to its offered power;
    ``accept_ratio`` is the fraction of offered input energy taken in.
    ``store=None`` is an unlimited sink.
    """
    total = math.fsum(offered_powers)
    if total <= 0.0:
        return AggregateResult(store, [0.0] * len(offered_powers), 0.0, 0.0, 0.0, 0.0)
    dt_h = dt / _SECONDS_PER_HOUR
    if store is None:
        accepted, loss, rejected, ratio = total * dt_h, 0.0, 0.0, 1.0
    else:
        res = storage.accept_charge(store, total, dt, apply_trickle=False)
        store, accepted, loss, rejected = res.store, res.accepted_wh, res.loss_wh, res.rejected_wh
        ratio = (accepted + loss) / (total * dt_h)
    credited = [accepted * p / total for p in offered_powers]
    return AggregateResult(store, credited, ratio, accepted, loss, rejected)


def _soc_pair(agent: Agent):
    if agent.store is None:
        return None, None
    return agent.store.battery.soc, agent.store.supercap.soc


class Simulation:
    """Deterministic simulation state plus the step function that advances it."""

    def __init__(
        self,
        agents: Sequence[Agent],
        orders: Sequence[Order] = (),
        *,
        dt: float,
        market_interval: float = 5.0,
        obstacles: Sequence[Obstacle] = (),
        formations: Sequence[FormationSpec] = (),
        coupling_maps: Optional[Mapping[str, CouplingMap]] = None,
        safety: SafetyPolicy = SafetyPolicy(),
        strict: bool = False,
    ):
        if not dt > 0:
            raise DomainError("dt must be positive")
        self.dt = float(dt)
        self.market_every = max(1, int(round(market_interval / dt)))
        self.agents: Dict[str, Agent] = {}
        for a in agents:
            if a.id in self.agents:
                raise DomainError(f"duplicate agent id {a.id!r}")
            self.agents[a.id] = a
        self.obstacles = tuple(obstacles)
        self.formations = tuple(formations)
        self.coupling_maps = dict(coupling_maps or {})
        self.safety = safety
        self.strict = strict
        self.book = OrderBook()
        self.pending_orders = sorted(orders, key=lambda o: (o.submitted_tick, o.id))
        self.sessions: Dict[str, WptSession] = {}
        self.tick = 0
        self.faults: List[Fault] = []
        self.rows: List[MetricsRow] = []
        self.energy: List[TickEnergy] = []
        self.delivered_by_deadline: Dict[str, float] = defaultdict(float)
        self.clamped_ticks = 0
        self._agent_delivered: Dict[str, float] = {}
        self._agent_losses: Dict[str, float] = {}
        self._agent_faults: Dict[str, List[str]] = {}

    # -- bookkeeping --------------------------------------------------------

    def _fault(self, code: str, agent_id: str, detail: str = "") -> None:
        fault = Fault(self.tick, code, agent_id, detail)
        self.faults.append(fault)
        self._agent_faults.setdefault(agent_id, []).append(code)
        log.debug("fault %s", fault)
        if self.strict:
            raise SimulationFault(fault)

    def _loss(self, agent_id: str, wh: float, flows: TickEnergy) -> None:
        self._agent_losses[agent_id] = self._agent_losses.get(agent_id, 0.0) + wh
        flows.losses += wh

    def total_soc(self) -> float:
        return math.fsum(a.store.total_soc for a in self.agents.values() if a.store is not None)

    # -- market feasibility -------------------------------------------------

    def link_range(self, tx: Agent, cap_index: int) -> float:
        cap = tx.tx[cap_index]
        rng = cap.max_range_m
        cmap = self.coupling_maps.get(cap.kind)
        if cap.kind in NEAR_FIELD_TECHNOLOGIES and cmap is not None:
            rng = min(rng, cmap.cutoff)
        return rng

    def rendezvous_feasible(self, bid: Order, offer: Order, tick: Optional[int] = None) -> bool:
        """Can the seller reach WPT range of the buyer before the earlier deadline?

        Both agents are assumed to close the gap at their speed bounds; the
        seller must hold a transmit capability the buyer can receive.
        """
        tick = self.tick if tick is None else tick
        rx = self.agents.get(bid.agent_id)
        tx = self.agents.get(offer.agent_id)
        if rx is None or tx is None or rx is tx:
            return False
        cap = tx.common_technology(rx)
        if cap is None:
            return False
        time_left = (min(bid.deadline, offer.deadline) - tick) * self.dt
        if time_left < 0:
            return False
        d = float(np.linalg.norm(rx.pose.position - tx.pose.position))
        gap = max(0.0, d - self.link_range(tx, cap))
        return gap <= (tx.speed_bound + rx.speed_bound) * time_left

    # -- phases -------------------------------------------------------------

    def _move(self) -> None:
        accel: Dict[str, np.ndarray] = {}
        for spec in self.formations:
            accel.update(formation_control(spec, {m: self.agents[m].pose for m in spec.members}))
        for a in self.agents.values():
            if a.mobile:
                a.pose = integrate_motion(a.pose, accel.get(a.id, (0.0, 0.0, 0.0)), self.dt)
        tracked = set()
        for s in sorted(self.sessions.values(), key=lambda s: s.contract_id):
            if s.state == DONE or not requires_los(s.technology) or s.tx_agent in tracked:
                continue
            tracked.add(s.tx_agent)
            tx = self.agents[s.tx_agent]
            target = self.agents[s.rx_agent].pose.position
            try:
                tx.pose = track_target(tx.pose, target, tx.slew_rate * self.dt)
            except DegenerateGeometryError:
                pass

    def _market(self) -> None:
        while self.pending_orders and self.pending_orders[0].submitted_tick <= self.tick:
            order = self.pending_orders.pop(0)
            try:
                self.book.submit_order(order, self.tick)
            except Exception as exc:  # rejected orders are faults, not crashes
                self._fault("order_rejected", order.agent_id, str(exc))
        if self.tick % self.market_every:
            return
        self.book.expire(self.tick)
        for c in self.book.clear(self.rendezvous_feasible, self.tick):
            tx, rx = self.agents[c.offer_agent], self.agents[c.bid_agent]
            cap = tx.common_technology(rx)
            self.sessions[c.id] = WptSession(c.id, tx.id, rx.id, tx.tx[cap].kind, cap)

    def _link_params(self, cap: TxCapability, distance: float):
        tech = cap.technology
        cmap = self.coupling_maps.get(cap.kind)
        if cmap is not None and isinstance(tech, (IwptParams, CwptParams)):
            tech = tech.with_coupling(cmap.k(distance))
        return tech

    def _update_session(self, s: WptSession) -> None:
        contract = self.book.contracts[s.contract_id]
        if contract.status != OPEN:
            s.state = DONE
            return
        s.state, s.eta_env, s.eta_wpt, s.clamped = SUSPENDED, 0.0, 0.0, False
        if self.tick > max(contract.bid_deadline, contract.offer_deadline):
            return
        tx, rx = self.agents[s.tx_agent], self.agents[s.rx_agent]
        cap = tx.tx[s.cap_index]
        try:
            geom = link_geometry(tx.pose, rx.pose, self.obstacles)
        except DegenerateGeometryError:
            if tx.mobile and rx.mobile:
                self._fault("safe_distance", tx.id, f"coincident with {rx.id}")
            return
        if tx.mobile and rx.mobile:
            rel = float(np.linalg.norm(tx.pose.velocity - rx.pose.velocity))
            need = safe_distance(self.safety, rel)
            if geom.distance < need:
                self._fault("safe_distance", tx.id, f"{geom.distance!r} m < {need!r} m to {rx.id}")
                return
        if geom.distance > cap.max_range_m:
            return
        if requires_los(cap.kind) and not geom.los_clear:
            return
        ev = evaluate_link(self._link_params(cap, geom.distance), geom)
        eta = cap.eta_tr * ev.eta_env * rx.rx_for(cap.kind).eta_rc
        s.eta_env, s.eta_wpt, s.clamped = ev.eta_env, eta, ev.clamped
        if ev.clamped:
            self.clamped_ticks += 1
        if eta > 0.0:
            s.state = ACTIVE

    def _transfer(self, sessions: Sequence[WptSession], flows: TickEnergy) -> Dict[str, float]:
        dt, dt_h = self.dt, self.dt / _SECONDS_PER_HOUR
        sessions = sorted(sessions, key=lambda s: s.contract_id)
        if not sessions:
            return {}
        for s in sessions:
            if s.state != ACTIVE:
                raise DomainError(f"session {s.contract_id} is {s.state}, not active")

        # transmit power per session: capability rating shared among its sessions,
        # capped by what the contract still needs, then by the store's output limit
        request: Dict[str, float] = {}
        by_cap: Dict[Tuple[str, int], List[WptSession]] = defaultdict(list)
        for s in sessions:
            by_cap[(s.tx_agent, s.cap_index)].append(s)
        for (tx_id, ci), group in by_cap.items():
            share = self.agents[tx_id].tx[ci].max_power_w / len(group)
            for s in group:
                need = self.book.contracts[s.contract_id].remaining
                rx = self.agents[s.rx_agent]
                eff_in = _min_in_efficiency(rx)
                cap_p = need * _SECONDS_PER_HOUR / (dt * s.eta_wpt * eff_in) if eff_in > 0 else math.inf
                request[s.contract_id] = min(share, cap_p)
        by_tx: Dict[str, List[WptSession]] = defaultdict(list)
        for s in sessions:
            by_tx[s.tx_agent].append(s)
        for tx_id, group in by_tx.items():
            tx = self.agents[tx_id]
            if tx.unlimited:
                continue
            limit = tx.store.discharge_power_limit(dt)
            want = math.fsum(request[s.contract_id] for s in group)
            if want > limit:
                scale = limit / want
                for s in group:
                    request[s.contract_id] *= scale

        # receivers take the summed offer; rejected energy is never drawn
        used: Dict[str, float] = {}
        credited: Dict[str, float] = {}
        by_rx: Dict[str, List[WptSession]] = defaultdict(list)
        for s in sessions:
            by_rx[s.rx_agent].append(s)
        for rx_id, group in by_rx.items():
            rx = self.agents[rx_id]
            offers = [request[s.contract_id] * s.eta_wpt for s in group]
            agg = multi_peer_aggregate(rx.store, offers, dt)
            rx.store = agg.store
            if rx.unlimited:
                flows.grid_absorbed += agg.accepted_wh
            self._loss(rx_id, agg.loss_wh, flows)
            flows.rejected += agg.rejected_wh
            flows.delivered += agg.accepted_wh
            self._agent_delivered[rx_id] = self._agent_delivered.get(rx_id, 0.0) + agg.accepted_wh
            for s, c in zip(group, agg.credited_wh):
                used[s.contract_id] = request[s.contract_id] * agg.accept_ratio
                credited[s.contract_id] = c

        for tx_id, group in by_tx.items():
            tx = self.agents[tx_id]
            total = math.fsum(used[s.contract_id] for s in group)
            for s in group:
                self._loss(tx_id, used[s.contract_id] * dt_h * (1.0 - s.eta_wpt), flows)
            if tx.unlimited:
                flows.grid_supplied += total * dt_h
            elif total > 0:
                res = storage.provide_discharge(tx.store, total, dt)
                tx.store = res.store
                self._loss(tx_id, res.loss_wh, flows)

        for s in sessions:
            c = self.book.contracts[s.contract_id]
            d = self.book.record_delivery(s.contract_id, credited[s.contract_id], self.tick)
            if self.tick <= c.bid_deadline:
                self.delivered_by_deadline[s.contract_id] += d.credited_wh
        return credited

    def transfer_tick(self, session: WptSession) -> Tuple[float, float]:
        """Run the transfer phase for a single active session.

        Returns the energy delivered into the receiver's store and the
        losses incurred along the way, both in Wh.
        """
        flows = TickEnergy()
        self._transfer([session], flows)
        return flows.delivered, flows.losses

    def _consume(self, flows: TickEnergy) -> None:
        dt_h = self.dt / _SECONDS_PER_HOUR
        for a in self.agents.values():
            if a.unlimited:
                continue
            if a.mobile and a.consumption_w > 0 and a.pose.speed > 0:
                res = storage.provide_discharge(a.store, a.consumption_w, self.dt)
                a.store = res.store
                flows.consumption += res.delivered_wh
                self._loss(a.id, res.loss_wh, flows)
                short = a.consumption_w * dt_h - res.delivered_wh
                if short > 1e-12:
                    self._fault("energy_depleted", a.id, f"motion load short by {short!r} Wh")
            tr = storage.trickle(a.store, self.dt)
            a.store = tr.store
            self._loss(a.id, tr.loss_wh, flows)
            if not storage.is_within_bounds(a.store):
                self._fault("soc_bounds", a.id, "state of charge outside reservoir bounds")

    def _emit(self) -> None:
        t = (self.tick + 1) * self.dt
        for a in self.agents.values():
            bat, sc = _soc_pair(a)
            self.rows.append(
                MetricsRow(
                    self.tick,
                    t,
                    a.id,
                    bat,
                    sc,
                    self._agent_delivered.get(a.id, 0.0),
                    self._agent_losses.get(a.id, 0.0),
                    ";".join(self._agent_faults.get(a.id, ())),
                )
            )

    # -- main loop ----------------------------------------------------------

    def step(self, dt: Optional[float] = None) -> TickEnergy:
        """Advance one tick and return that tick's energy flows."""
        if dt is not None and dt != self.dt:
            raise DomainError(f"step dt {dt!r} differs from configured {self.dt!r}")
        self._agent_delivered = {}
        self._agent_losses = {}
        self._agent_faults = {}
        flows = TickEnergy()
        self._move()
        self._market()
        for s in sorted(self.sessions.values(), key=lambda s: s.contract_id):
            if s.state != DONE:
                self._update_session(s)
        active = [s for s in self.sessions.values() if s.state == ACTIVE]
        self._transfer(active, flows)
        self._consume(flows)
        self._emit()
        self.energy.append(flows)
        self.tick += 1
        return flows

    def run(self, n_ticks: int) -> None:
        for _ in range(n_ticks):
            self.step()

    # -- reporting ----------------------------------------------------------

    def summary(self) -> dict:
        contracts = []
        for c in self.book.contracts.values():
            contracts.append(
                {
                    "id": c.id,
                    "bid_id": c.bid_id,
                    "offer_id": c.offer_id,
                    "bid_agent": c.bid_agent,
                    "offer_agent": c.offer_agent,
                    "quantity_wh": c.quantity,
                    "clearing_price": c.clearing_price,
                    "matched_tick": c.matched_tick,
                    "delivered_wh": c.delivered,
                    "delivered_by_deadline_wh": self.delivered_by_deadline.get(c.id, 0.0),
                    "status": c.status,
                }
            )
        demanded = math.fsum(o.quantity for o in self.book.orders.values() if o.side == "bid")
        fulfilled = math.fsum(self.delivered_by_deadline.values())
        return {
            "ticks": self.tick,
            "dt": self.dt,
            "contracts": contracts,
            "totals": {
                "delivered_wh": math.fsum(e.delivered for e in self.energy),
                "contract_delivered_wh": math.fsum(c.delivered for c in self.book.contracts.values()),
                "losses_wh": math.fsum(e.losses for e in self.energy),
                "consumption_wh": math.fsum(e.consumption for e in self.energy),
                "grid_supplied_wh": math.fsum(e.grid_supplied for e in self.energy),
                "rejected_wh": math.fsum(e.rejected for e in self.energy),
                "demanded_wh": demanded,
                "availability": (fulfilled / demanded) if demanded > 0 else None,
                "clamped_link_ticks": self.clamped_ticks,
                "fault_count": len(self.faults),
            },
            "faults": [
                {"tick": f.tick, "code": f.code, "agent_id": f.agent_id, "detail": f.detail}
                for f in self.faults
            ],
        }


def _min_in_efficiency(agent: Agent) -> float:
    if agent.store is None:
        return 1.0
    effs = [r.in_efficiency for r in (agent.store.supercap, agent.store.battery) if r.in_efficiency > 0]
    return min(effs) if effs else 0.0

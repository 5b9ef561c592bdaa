"""Scenario documents: strict JSON schema, semantic checks, simulation builder.

``validate`` and ``run`` both go through :func:`load_scenario`, so a
document is accepted by one exactly when it is accepted by the other.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from uwpt import linkmodels as lm
from uwpt.engine import STATIONARY_KINDS, Agent, CouplingMap, RxCapability, Simulation, TxCapability
from uwpt.errors import UwptError
from uwpt.formation import FormationSpec
from uwpt.market import Order
from uwpt.storage import HybridStore, Reservoir
from uwpt.world import Obstacle, Pose, SafetyPolicy, safe_distance

Technology = Literal["owpt", "laser", "rf", "iwpt", "cwpt"]
AgentKind = Literal[
    "ground_ev",
    "aerial_ev",
    "surface_vessel",
    "underwater_ev",
    "charging_base",
    "charging_lane_segment",
    "grid_facility",
]
Vec3 = Annotated[List[float], Field(min_length=3, max_length=3)]
Fraction = Annotated[float, Field(ge=0.0, le=1.0)]
Positive = Annotated[float, Field(gt=0.0)]
NonNegative = Annotated[float, Field(ge=0.0)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MetaDoc(_Strict):
    name: str
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    dt: Positive
    duration: Positive
    market_interval: Positive = 5.0


class ReservoirDoc(_Strict):
    capacity_wh: Positive
    soc_wh: NonNegative
    max_charge_w: Positive
    max_discharge_w: Positive
    in_efficiency: Fraction = 1.0
    out_efficiency: Fraction = 1.0


class StoreDoc(_Strict):
    battery: ReservoirDoc
    supercap: ReservoirDoc
    trickle_power_w: NonNegative = 0.0


class GainTableDoc(_Strict):
    angles: List[float]
    gains: List[float]


class OwptDoc(_Strict):
    technology: Literal["owpt"]
    half_angle: float
    receiver_area: float
    fov_width: float = math.pi / 2
    filter_gain: Union[float, GainTableDoc] = 1.0
    concentrator_gain: Union[float, GainTableDoc] = 1.0


class LaserDoc(_Strict):
    technology: Literal["laser"]
    radiance: float
    source_area: float
    absorption_eff: float


class RfDoc(_Strict):
    technology: Literal["rf"]
    rx_aperture: float
    tx_aperture: float
    wavelength: float


class IwptDoc(_Strict):
    technology: Literal["iwpt"]
    l1: float
    l2: float
    lm: float
    r1: float
    r2: float
    r_load: float
    omega: float


class CwptDoc(_Strict):
    technology: Literal["cwpt"]
    topology: Literal["parallel", "series"]
    k: float
    q: Optional[float] = None
    q1: Optional[float] = None
    q2: Optional[float] = None


LinkDoc = Annotated[
    Union[OwptDoc, LaserDoc, RfDoc, IwptDoc, CwptDoc], Field(discriminator="technology")
]


class TxDoc(_Strict):
    link: LinkDoc
    max_power_w: Positive
    max_range_m: Positive
    eta_tr: Optional[Fraction] = None


class RxDoc(_Strict):
    technology: Technology
    eta_rc: Optional[Fraction] = None


class UniformBoxDoc(_Strict):
    low: Vec3
    high: Vec3


class RandomPositionDoc(_Strict):
    uniform: UniformBoxDoc


class AgentDoc(_Strict):
    id: str
    kind: AgentKind
    position: Union[Vec3, RandomPositionDoc]
    velocity: Vec3 = [0.0, 0.0, 0.0]
    boresight: Vec3 = [1.0, 0.0, 0.0]
    store: Optional[StoreDoc] = None
    tx: List[TxDoc] = []
    rx: List[RxDoc] = []
    consumption_w: NonNegative = 0.0
    max_speed: Optional[NonNegative] = None
    renewable_source: bool = False
    slew_rate: Optional[Positive] = None


class ObstacleDoc(_Strict):
    center: Vec3
    radius: Positive


class FormationDoc(_Strict):
    id: str
    members: List[str]
    offsets: List[Vec3]
    adjacency: Optional[List[List[NonNegative]]] = None
    gain_p: Positive = 1.0
    gain_d: Positive = 2.0
    max_accel: Positive = 5.0


class OrderDoc(_Strict):
    id: str
    agent: str
    side: Literal["bid", "offer"]
    quantity_wh: Positive
    limit_price: NonNegative
    deadline_tick: Annotated[int, Field(ge=0)]
    submitted_tick: Annotated[int, Field(ge=0)] = 0
    renewable: Optional[bool] = None


class CouplingDoc(_Strict):
    d_ref: Positive
    k_ref: Annotated[float, Field(gt=0.0, le=1.0)]
    exponent: Annotated[float, Field(ge=1.0)] = 3.0
    cutoff: Positive


class SafetyDoc(_Strict):
    base_distance: NonNegative = 2.0
    time_headway: NonNegative = 1.5


class TechDefaultsDoc(_Strict):
    eta_tr: Fraction = 0.9
    eta_rc: Fraction = 0.9


class ScenarioDoc(_Strict):
    meta: MetaDoc
    agents: List[AgentDoc] = []
    obstacles: List[ObstacleDoc] = []
    formations: List[FormationDoc] = []
    orders: List[OrderDoc] = []
    coupling_maps: Dict[Technology, CouplingDoc] = {}
    safety: SafetyDoc = SafetyDoc()
    technology_defaults: Dict[Technology, TechDefaultsDoc] = {}


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self):
        return f"{self.path}: {self.message}"


class ScenarioError(UwptError):
    """A scenario failed to load.

    ``schema`` is true for unreadable or structurally malformed documents
    (wrong types, unknown fields) and false for semantic breaches.
    """

    def __init__(self, violations: List[Violation], schema: bool):
        self.violations = list(violations)
        self.schema = schema
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass
class Scenario:
    doc: ScenarioDoc
    seed: int
    agents: List[Agent]
    orders: List[Order]
    obstacles: List[Obstacle]
    formations: List[FormationSpec]
    coupling_maps: Dict[str, CouplingMap]
    safety: SafetyPolicy

    @property
    def name(self) -> str:
        return self.doc.meta.name

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.doc.meta.duration / self.doc.meta.dt + 1e-9))

    def build(self, strict: bool = False) -> Simulation:
        return Simulation(
            [copy.copy(a) for a in self.agents],
            self.orders,
            dt=self.doc.meta.dt,
            market_interval=self.doc.meta.market_interval,
            obstacles=self.obstacles,
            formations=self.formations,
            coupling_maps=self.coupling_maps,
            safety=self.safety,
            strict=strict,
        )


def _loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out or "<root>"


def parse_document(data) -> ScenarioDoc:
    try:
        return ScenarioDoc.model_validate(data)
    except ValidationError as exc:
        seen = []
        for err in exc.errors():
            raw = list(err["loc"])
            # drop the discriminator tag pydantic inserts after a tagged union
            loc = [p for k, p in enumerate(raw) if not (k > 0 and raw[k - 1] == "link" and p in lm.TECHNOLOGIES)]
            v = Violation(_loc(loc), err["msg"])
            if v not in seen:
                seen.append(v)
        raise ScenarioError(seen, schema=True) from None


def _gain(g):
    if isinstance(g, GainTableDoc):
        return lm.GainTable(g.angles, g.gains)
    return g


def _link_params(doc):
    fields = doc.model_dump(exclude={"technology"})
    if isinstance(doc, OwptDoc):
        fields["filter_gain"] = _gain(doc.filter_gain)
        fields["concentrator_gain"] = _gain(doc.concentrator_gain)
    return lm.params_type(doc.technology)(**fields)


def _reservoir(doc: ReservoirDoc) -> Reservoir:
    return Reservoir(
        capacity=doc.capacity_wh,
        soc=doc.soc_wh,
        max_charge_power=doc.max_charge_w,
        max_discharge_power=doc.max_discharge_w,
        in_efficiency=doc.in_efficiency,
        out_efficiency=doc.out_efficiency,
    )


def _positions(doc: ScenarioDoc, seed: int) -> List[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = []
    for a in doc.agents:
        if isinstance(a.position, RandomPositionDoc):
            lo = np.array(a.position.uniform.low, dtype=float)
            hi = np.array(a.position.uniform.high, dtype=float)
            out.append(lo + (hi - lo) * rng.random(3))
        else:
            out.append(np.array(a.position, dtype=float))
    return out


def check_document(doc: ScenarioDoc, seed: Optional[int] = None) -> Scenario:
    """Semantic validation and conversion to engine objects.

    Raises:
        ScenarioError: listing every violation found, with document paths.
    """
    seed = doc.meta.seed if seed is None else seed
    bad: List[Violation] = []

    def fail(path, msg):
        bad.append(Violation(path, msg))

    meta = doc.meta
    if meta.duration < meta.dt:
        fail("meta.duration", f"duration {meta.duration!r} is shorter than dt {meta.dt!r}")

    defaults = {t: doc.technology_defaults.get(t, TechDefaultsDoc()) for t in lm.TECHNOLOGIES}
    coupling = {}
    for tech, c in doc.coupling_maps.items():
        if tech not in lm.NEAR_FIELD_TECHNOLOGIES:
            fail(f"coupling_maps.{tech}", "coupling maps apply only to iwpt and cwpt")
            continue
        try:
            coupling[tech] = CouplingMap(c.d_ref, c.k_ref, c.exponent, c.cutoff)
        except UwptError as exc:
            fail(f"coupling_maps.{tech}", str(exc))

    positions = _positions(doc, seed)
    agents: List[Agent] = []
    index: Dict[str, int] = {}
    for i, (a, pos) in enumerate(zip(doc.agents, positions)):
        path = f"agents[{i}]"
        if a.id in index:
            fail(f"{path}.id", f"duplicate agent id {a.id!r}")
            continue
        index[a.id] = i
        ok = True
        if a.kind in STATIONARY_KINDS and any(a.velocity):
            fail(f"{path}.velocity", f"{a.kind} agents must be stationary")
            ok = False
        if a.store is None and a.kind != "grid_facility":
            fail(f"{path}.store", "store is required (only grid facilities may omit it)")
            ok = False
        if not a.tx and not a.rx:
            fail(path, "agent needs at least one tx or rx capability")
            ok = False
        try:
            pose = Pose(pos, a.velocity, a.boresight)
        except UwptError as exc:
            fail(f"{path}.boresight", str(exc))
            ok = False
        store = None
        if a.store is not None:
            try:
                store = HybridStore(
                    _reservoir(a.store.battery), _reservoir(a.store.supercap), a.store.trickle_power_w
                )
            except UwptError as exc:
                fail(f"{path}.store", str(exc))
                ok = False
        tx = []
        for j, t in enumerate(a.tx):
            tpath = f"{path}.tx[{j}]"
            try:
                params = _link_params(t.link)
            except UwptError as exc:
                fail(f"{tpath}.link", str(exc))
                ok = False
                continue
            kind = t.link.technology
            if kind in lm.NEAR_FIELD_TECHNOLOGIES and kind not in doc.coupling_maps:
                fail(tpath, f"no coupling map declared for near-field technology {kind!r}")
                ok = False
            eta = defaults[kind].eta_tr if t.eta_tr is None else t.eta_tr
            tx.append(TxCapability(params, t.max_power_w, t.max_range_m, eta))
        rx = []
        for r in a.rx:
            eta = defaults[r.technology].eta_rc if r.eta_rc is None else r.eta_rc
            rx.append(RxCapability(r.technology, eta))
        if ok:
            slew = math.inf if a.slew_rate is None else a.slew_rate
            agents.append(
                Agent(
                    a.id, a.kind, pose, store, tuple(tx), tuple(rx),
                    a.consumption_w, a.max_speed, a.renewable_source, slew,
                )
            )

    by_id = {a.id: a for a in agents}

    obstacles = [Obstacle(o.center, o.radius) for o in doc.obstacles]

    formations = []
    owner: Dict[str, str] = {}
    for k, f in enumerate(doc.formations):
        path = f"formations[{k}]"
        ok = True
        for m in f.members:
            if m not in index:
                fail(f"{path}.members", f"unknown agent {m!r}")
                ok = False
            elif m in by_id and by_id[m].stationary:
                fail(f"{path}.members", f"agent {m!r} is stationary and cannot fly in formation")
                ok = False
            elif m in owner:
                fail(f"{path}.members", f"agent {m!r} already belongs to formation {owner[m]!r}")
                ok = False
            else:
                owner[m] = f.id
        if not ok:
            continue
        n = len(f.members)
        try:
            if f.adjacency is None:
                spec = FormationSpec.ring(
                    f.members, f.offsets, gain_p=f.gain_p, gain_d=f.gain_d, max_accel=f.max_accel
                )
            else:
                spec = FormationSpec(
                    tuple(f.members), np.array(f.offsets, dtype=float).reshape(-1, 3),
                    np.array(f.adjacency, dtype=float).reshape(n, -1) if n else f.adjacency,
                    f.gain_p, f.gain_d, f.max_accel,
                )
            formations.append(spec)
        except (UwptError, ValueError) as exc:
            fail(path, str(exc))

    orders = []
    order_ids = set()
    for i, o in enumerate(doc.orders):
        path = f"orders[{i}]"
        if o.id in order_ids:
            fail(f"{path}.id", f"duplicate order id {o.id!r}")
            continue
        order_ids.add(o.id)
        if o.agent not in index:
            fail(f"{path}.agent", f"order {o.id!r} references unknown agent {o.agent!r}")
            continue
        if o.deadline_tick < o.submitted_tick:
            fail(f"{path}.deadline_tick", f"order {o.id!r} deadline precedes its submission tick")
            continue
        ag = by_id.get(o.agent)
        if ag is not None:
            if o.side == "bid" and not ag.rx:
                fail(f"{path}.side", f"order {o.id!r}: agent {o.agent!r} cannot receive energy")
                continue
            if o.side == "offer" and not ag.tx:
                fail(f"{path}.side", f"order {o.id!r}: agent {o.agent!r} cannot transmit energy")
                continue
        renewable = o.renewable
        if renewable is None:
            renewable = bool(ag.renewable_source) if ag is not None and o.side == "offer" else False
        orders.append(
            Order(o.id, o.agent, o.side, o.quantity_wh, o.limit_price, o.deadline_tick, renewable, o.submitted_tick)
        )

    safety = SafetyPolicy(doc.safety.base_distance, doc.safety.time_headway)
    mobile = [a for a in agents if a.mobile]
    for x in range(len(mobile)):
        for y in range(x):
            a, b = mobile[x], mobile[y]
            d = float(np.linalg.norm(a.pose.position - b.pose.position))
            need = safe_distance(safety, float(np.linalg.norm(a.pose.velocity - b.pose.velocity)))
            if d < need:
                fail(
                    f"agents[{index[a.id]}].position",
                    f"{a.id!r} starts {d:.6g} m from {b.id!r}, inside the safe distance {need:.6g} m",
                )

    if bad:
        raise ScenarioError(bad, schema=False)
    return Scenario(doc, seed, agents, orders, obstacles, formations, coupling, safety)


def load_scenario(source, seed: Optional[int] = None) -> Scenario:
    """Read, parse and validate a scenario from a path, JSON text or dict."""
    if isinstance(source, dict):
        data = source
    else:
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            try:
                text = Path(source).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise ScenarioError([Violation("<file>", str(exc))], schema=True) from None
        else:
            text = source
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(
                [Violation("<document>", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")],
                schema=True,
            ) from None
    return check_document(parse_document(data), seed)


def shipped_scenarios() -> Dict[str, Path]:
    """Example scenarios bundled with the package, by file stem."""
    here = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(here.glob("*.json"))}


def json_schema() -> dict:
    return ScenarioDoc.model_json_schema()

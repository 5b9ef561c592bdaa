"""Peer-to-peer energy market: order book, double-auction clearing, contracts.

Clearing runs as a discrete double auction. The highest bid is matched
against the cheapest *feasible* offer for as long as prices cross; each
match trades the smaller remaining quantity at the midpoint of the two
limit prices. Among offers at the same price, renewable energy wins, then
the earlier submission, then the lexicographically smaller id.

Every accepted order, match, delivery and expiry is appended to the book's
hash-chained :class:`~uwpt.ledger.Ledger`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, NamedTuple

from uwpt.errors import ContractError, OrderRejected
from uwpt.ledger import Ledger

BID = "bid"
OFFER = "offer"

OPEN = "open"
FULFILLED = "fulfilled"
EXPIRED = "expired"

#: deliveries within this many Wh of the contract quantity complete it
FULFILL_TOL_WH = 1e-9

Feasibility = Callable[["Order", "Order"], bool]


def always_feasible(bid: "Order", offer: "Order") -> bool:
    return True


@dataclass(frozen=True)
class Order:
    id: str
    agent_id: str
    side: str
    quantity: float
    limit_price: float
    deadline: int
    renewable: bool = False
    submitted_tick: int = 0

    def validate(self):
        if self.side not in (BID, OFFER):
            raise OrderRejected(f"order {self.id}: side must be 'bid' or 'offer'")
        if not (self.quantity > 0 and math.isfinite(self.quantity)):
            raise OrderRejected(f"order {self.id}: quantity must be positive")
        if not (self.limit_price >= 0 and math.isfinite(self.limit_price)):
            raise OrderRejected(f"order {self.id}: limit price must be non-negative")
        if self.deadline < self.submitted_tick:
            raise OrderRejected(f"order {self.id}: deadline precedes submission")


@dataclass(frozen=True)
class Contract:
    id: str
    bid_id: str
    offer_id: str
    bid_agent: str
    offer_agent: str
    quantity: float
    clearing_price: float
    matched_tick: int
    bid_deadline: int
    offer_deadline: int
    delivered: float = 0.0
    status: str = OPEN

    @property
    def remaining(self) -> float:
        return self.quantity - self.delivered


class Delivery(NamedTuple):
    contract: Contract
    credited_wh: float
    excess_wh: float


def _bid_priority(o: Order):
    return (-o.limit_price, o.submitted_tick, o.id)


def _offer_priority(o: Order):
    return (o.limit_price, not o.renewable, o.submitted_tick, o.id)


def surplus(contracts, orders: Dict[str, Order]) -> float:
    """Total gains from trade, sum of (bid limit - offer limit) * quantity."""
    return sum(
        (orders[c.bid_id].limit_price - orders[c.offer_id].limit_price) * c.quantity
        for c in contracts
    )


class OrderBook:
    """Resting orders, issued contracts and the transaction ledger.

    A book has a single owner; it is not thread-safe.
    """

    def __init__(self):
        self.ledger = Ledger()
        self.orders: Dict[str, Order] = {}
        self.remaining: Dict[str, float] = {}
        self.filled: Dict[str, float] = {}
        self.expired: Dict[str, float] = {}
        self.contracts: Dict[str, Contract] = {}
        self._resting: List[str] = []

    # -- intake -------------------------------------------------------------

    def submit_order(self, order: Order, tick: int | None = None) -> None:
        """Place an order in the book.

        Raises:
            OrderRejected: duplicate id, invalid fields, or a deadline that
                has already passed at ``tick``.
        """
        tick = order.submitted_tick if tick is None else tick
        if order.id in self.orders:
            raise OrderRejected(f"duplicate order id {order.id!r}")
        order.validate()
        if order.deadline < tick:
            raise OrderRejected(f"order {order.id}: expired on arrival (deadline {order.deadline} < tick {tick})")
        self.orders[order.id] = order
        self.remaining[order.id] = order.quantity
        self.filled[order.id] = 0.0
        self.expired[order.id] = 0.0
        self._resting.append(order.id)
        self.ledger.append({"type": "order", "tick": tick, "order": asdict(order)})

    @property
    def resting(self) -> List[Order]:
        return [self.orders[i] for i in self._resting]

    def __len__(self):
        return len(self._resting)

    # -- clearing -----------------------------------------------------------

    def clear(self, feasible: Feasibility = always_feasible, tick: int = 0) -> List[Contract]:
        """Match crossing bids and offers; returns the new contracts in match order."""
        bids = sorted((o for o in self.resting if o.side == BID), key=_bid_priority)
        offers = sorted((o for o in self.resting if o.side == OFFER), key=_offer_priority)
        new: List[Contract] = []
        for bid in bids:
            for offer in offers:
                if self.remaining[bid.id] <= 0:
                    break
                if offer.limit_price > bid.limit_price:
                    break
                if self.remaining[offer.id] <= 0 or offer.agent_id == bid.agent_id:
                    continue
                if not feasible(bid, offer):
                    continue
                new.append(self._match(bid, offer, tick))
        self._resting = [i for i in self._resting if self.remaining[i] > 0]
        return new

    def _match(self, bid: Order, offer: Order, tick: int) -> Contract:
        rb, ro = self.remaining[bid.id], self.remaining[offer.id]
        qty = min(rb, ro)
        if rb <= ro:
            self.remaining[bid.id] = 0.0
            self.remaining[offer.id] = ro - qty
        else:
            self.remaining[offer.id] = 0.0
            self.remaining[bid.id] = rb - qty
        self.filled[bid.id] += qty
        self.filled[offer.id] += qty
        contract = Contract(
            id=f"C{len(self.contracts):06d}",
            bid_id=bid.id,
            offer_id=offer.id,
            bid_agent=bid.agent_id,
            offer_agent=offer.agent_id,
            quantity=qty,
            clearing_price=(bid.limit_price + offer.limit_price) / 2.0,
            matched_tick=tick,
            bid_deadline=bid.deadline,
            offer_deadline=offer.deadline,
        )
        self.contracts[contract.id] = contract
        self.ledger.append({"type": "match", "tick": tick, "contract": asdict(contract)})
        return contract

    # -- lifecycle ----------------------------------------------------------

    def expire(self, tick: int) -> None:
        """Drop orders whose deadline has passed and close stale contracts."""
        keep = []
        for oid in self._resting:
            order = self.orders[oid]
            if order.deadline < tick:
                left = self.remaining[oid]
                self.expired[oid] += left
                self.remaining[oid] = 0.0
                self.ledger.append(
                    {"type": "order_expiry", "tick": tick, "order_id": oid, "expired_wh": left}
                )
            else:
                keep.append(oid)
        self._resting = keep
        for cid, c in list(self.contracts.items()):
            if c.status != OPEN or tick <= max(c.bid_deadline, c.offer_deadline):
                continue
            if c.delivered >= c.quantity:
                self.contracts[cid] = replace(c, status=FULFILLED)
                self.ledger.append(
                    {"type": "fulfilled", "tick": tick, "contract_id": cid, "delivered_wh": c.delivered}
                )
            else:
                self.contracts[cid] = replace(c, status=EXPIRED)
                self.ledger.append(
                    {"type": "contract_expiry", "tick": tick, "contract_id": cid, "delivered_wh": c.delivered}
                )

    def record_delivery(self, contract_id: str, energy: float, tick: int = 0) -> Delivery:
        """Credit delivered energy to an open contract, capped at its quantity.

        Raises:
            ContractError: if the contract is not open or ``energy`` is negative.
        """
        c = self.contracts[contract_id]
        if c.status != OPEN:
            raise ContractError(f"contract {contract_id} is {c.status}, not open")
        if energy < 0:
            raise ContractError("delivered energy must be non-negative")
        if energy == 0:
            return Delivery(c, 0.0, 0.0)
        total = c.delivered + energy
        status = OPEN
        if total >= c.quantity - FULFILL_TOL_WH:
            total = c.quantity
            status = FULFILLED
        credited = total - c.delivered
        c = replace(c, delivered=total, status=status)
        self.contracts[contract_id] = c
        self.ledger.append(
            {
                "type": "delivery",
                "tick": tick,
                "contract_id": contract_id,
                "energy_wh": credited,
                "delivered_wh": total,
                "status": status,
            }
        )
        return Delivery(c, credited, max(0.0, energy - credited))

    def open_contracts(self) -> List[Contract]:
        return [c for c in self.contracts.values() if c.status == OPEN]

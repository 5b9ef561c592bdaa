"""Small builders shared by the test modules."""

from __future__ import annotations

from pathlib import Path

from uwpt import storage
from uwpt.engine import Agent, RxCapability, TxCapability
from uwpt.linkmodels import LaserParams
from uwpt.world import Pose

DATA = Path(__file__).parent / "data"


def reservoir(capacity=100.0, soc=0.0, p_in=1e6, p_out=1e6, eff_in=1.0, eff_out=1.0):
    return storage.Reservoir(capacity, soc, p_in, p_out, eff_in, eff_out)


def hybrid(battery=None, supercap=None, trickle=0.0):
    return storage.HybridStore(battery or reservoir(), supercap or reservoir(10.0), trickle)


def big_store(soc=1e6):
    """A store that never limits a test: huge, lossless, fast."""
    return hybrid(reservoir(1e9, soc), reservoir(1e6, 0.0))


def make_agent(agent_id, kind, position, *, velocity=(0.0, 0.0, 0.0), boresight=(1.0, 0.0, 0.0),
               store=None, tx=(), rx=(), **kwargs):
    if store is None and kind != "grid_facility":
        store = big_store()
    return Agent(
        agent_id,
        kind,
        Pose(position, velocity, boresight),
        store,
        tuple(tx),
        tuple(rx),
        **kwargs,
    )


def laser_tx(power=1000.0, rng=100.0, eta_tr=1.0, absorption=0.9):
    return TxCapability(LaserParams(1e6, 1e-4, absorption), power, rng, eta_tr)


def rx(kind, eta_rc=1.0):
    return RxCapability(kind, eta_rc)

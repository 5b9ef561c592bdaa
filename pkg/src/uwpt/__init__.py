"""Universal wireless power transfer: link models, market and multi-agent simulation."""

from uwpt.engine import Agent, CouplingMap, RxCapability, Simulation, TxCapability
from uwpt.linkmodels import (
    CwptParams,
    EfficiencyChain,
    EmissionSpectrum,
    IwptParams,
    LaserParams,
    LinkGeometry,
    OwptLedParams,
    RfParams,
    end_to_end_efficiency,
    link_env_efficiency,
)
from uwpt.market import Order, OrderBook
from uwpt.scenario import load_scenario
from uwpt.storage import HybridStore, Reservoir
from uwpt.world import Obstacle, Pose, SafetyPolicy

__version__ = "0.1.0"

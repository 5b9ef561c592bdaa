"""Efficiency and power-transfer models for each wireless power technology.

Every function here is pure: it maps immutable parameter records and a
:class:`LinkGeometry` to a number. Nothing depends on simulation state.

Technologies covered:

* LED optical transfer (``owpt``): Lambertian emitter, DC channel gain.
* Laser optical transfer (``laser``): radiance-area flux law.
* Microwave / RF (``rf``): Friis aperture form, clamped to unity.
* Inductive, incl. resonant (``iwpt``): two-coil load efficiency.
* Capacitive (``cwpt``): maximum efficiency for parallel and series circuits.

Overall efficiency is the product of transmitter, path and receiver
efficiencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Union

import numpy as np

from uwpt.errors import DomainError, SchemaError

#: Smallest LED half-angle accepted; the Lambertian order diverges as it goes to 0.
MIN_HALF_ANGLE = 1e-6

TECHNOLOGIES = ("owpt", "laser", "rf", "iwpt", "cwpt")
LOS_TECHNOLOGIES = frozenset({"owpt", "laser", "rf"})
NEAR_FIELD_TECHNOLOGIES = frozenset({"iwpt", "cwpt"})


def _check_unit_interval(name, value):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {value!r}")


def _check_positive(name, value):
    if not (value > 0.0 and math.isfinite(value)):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class EfficiencyChain:
    """Transmitter, path and receiver efficiencies of one link."""

    eta_tr: float
    eta_env: float
    eta_rc: float

    def __post_init__(self):
        _check_unit_interval("eta_tr", self.eta_tr)
        _check_unit_interval("eta_env", self.eta_env)
        _check_unit_interval("eta_rc", self.eta_rc)


def end_to_end_efficiency(chain: EfficiencyChain) -> float:
    """Overall link efficiency, the product of the three stage efficiencies."""
    return chain.eta_tr * chain.eta_env * chain.eta_rc


@dataclass(frozen=True)
class LinkGeometry:
    """Relative placement of a transmitter/receiver pair.

    ``incidence_angle`` is measured at the receiver (between its normal and
    the direction to the transmitter); ``irradiance_angle`` at the
    transmitter (between its boresight and the direction to the receiver).
    """

    distance: float
    incidence_angle: float = 0.0
    irradiance_angle: float = 0.0
    los_clear: bool = True

    def __post_init__(self):
        _check_positive("distance", self.distance)
        for name in ("incidence_angle", "irradiance_angle"):
            angle = getattr(self, name)
            if not (0.0 <= angle <= math.pi):
                raise DomainError(f"{name} must lie in [0, pi], got {angle!r}")

    def at_distance(self, distance: float) -> "LinkGeometry":
        return replace(self, distance=distance)


# ---------------------------------------------------------------------------
# LED optical transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmissionSpectrum:
    """Sampled radiant flux of an LED over emission angle and wavelength.

    ``flux[i, j]`` is the flux density (W per radian per metre) at
    ``angles[i]`` and ``wavelengths[j]``.
    """

    wavelengths: np.ndarray
    angles: np.ndarray
    flux: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        th = np.asarray(self.angles, dtype=float)
        fx = np.asarray(self.flux, dtype=float)
        if wl.ndim != 1 or th.ndim != 1 or wl.size < 2 or th.size < 2:
            raise SchemaError("spectrum grids need at least 2 points per axis")
        if fx.shape != (th.size, wl.size):
            raise SchemaError(f"flux shape {fx.shape} does not match grids ({th.size}, {wl.size})")
        if np.any(np.diff(wl) <= 0) or np.any(np.diff(th) <= 0):
            raise SchemaError("spectrum grids must be strictly increasing")
        if wl[0] <= 0:
            raise SchemaError("wavelengths must be positive")
        if th[0] < 0 or th[-1] > 2 * math.pi + 1e-12:
            raise SchemaError("emission angles must lie in [0, 2*pi]")
        if not np.all(np.isfinite(fx)) or np.any(fx < 0):
            raise SchemaError("flux samples must be finite and non-negative")
        for name, arr in (("wavelengths", wl), ("angles", th), ("flux", fx)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def constant(cls, value, wl_min=400e-9, wl_max=700e-9, n_angles=33, n_wavelengths=31):
        """Uniform flux over the full circle and a wavelength band."""
        wl = np.linspace(wl_min, wl_max, n_wavelengths)
        th = np.linspace(0.0, 2 * math.pi, n_angles)
        return cls(wl, th, np.full((n_angles, n_wavelengths), float(value)))


def owpt_transmit_power(spectrum: EmissionSpectrum) -> float:
    """Radiant power of an LED: flux integrated over angle and wavelength.

    Uses the trapezoidal rule on the supplied grids, so constant and
    bilinear integrands are integrated exactly.
    """
    over_angle = np.trapezoid(spectrum.flux, spectrum.angles, axis=0)
    return float(np.trapezoid(over_angle, spectrum.wavelengths))


@dataclass(frozen=True, eq=False)
class GainTable:
    """Piecewise-linear gain curve over incidence angle (held flat outside)."""

    angles: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        g = np.asarray(self.gains, dtype=float)
        if a.ndim != 1 or a.shape != g.shape or a.size < 2:
            raise SchemaError("gain table needs matching 1-D angle/gain arrays of length >= 2")
        if np.any(np.diff(a) <= 0):
            raise SchemaError("gain table angles must be strictly increasing")
        if np.any(g < 0):
            raise SchemaError("gains must be non-negative")
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "gains", g)

    def __call__(self, angle: float) -> float:
        return float(np.interp(angle, self.angles, self.gains))


Gain = Union[float, GainTable]


def _gain_at(gain: Gain, angle: float) -> float:
    if isinstance(gain, GainTable):
        return gain(angle)
    return float(gain)


def lambertian_order(half_angle: float, min_angle: float = MIN_HALF_ANGLE) -> float:
    """Lambertian emission order from the LED semi-angle at half illuminance.

    Raises:
        DomainError: if ``half_angle`` is not in ``[min_angle, pi/2)``.
    """
    if not (min_angle <= half_angle < math.pi / 2):
        raise DomainError(
            f"half_angle must lie in [{min_angle!r}, pi/2), got {half_angle!r}"
        )
    c = math.cos(half_angle)
    if not (0.0 < c < 1.0):
        raise DomainError(f"cos(half_angle) = {c!r} leaves the Lambertian order undefined")
    return -math.log(2.0) / math.log(c)


@dataclass(frozen=True, eq=False)
class OwptLedParams:
    """LED emitter and photodetector receiver of an optical link."""

    half_angle: float
    receiver_area: float
    fov_width: float = math.pi / 2
    filter_gain: Gain = 1.0
    concentrator_gain: Gain = 1.0

    kind = "owpt"

    def __post_init__(self):
        lambertian_order(self.half_angle)
        _check_positive("receiver_area", self.receiver_area)
        if not (0.0 < self.fov_width <= math.pi / 2):
            raise DomainError(f"fov_width must lie in (0, pi/2], got {self.fov_width!r}")
        for name in ("filter_gain", "concentrator_gain"):
            g = getattr(self, name)
            if not isinstance(g, GainTable) and not (g >= 0 and math.isfinite(g)):
                raise DomainError(f"{name} must be a non-negative constant or a GainTable")

    @property
    def order(self) -> float:
        return lambertian_order(self.half_angle)


def owpt_dc_gain(params: OwptLedParams, geom: LinkGeometry) -> float:
    """DC channel gain of a line-of-sight LED link.

    Zero when the line of sight is blocked, when the receiver sees the LED
    outside its field of view, or when the receiver lies behind the emitter
    plane (irradiance angle of 90 degrees or more).
    """
    phi_in = geom.incidence_angle
    if not geom.los_clear or phi_in > params.fov_width:
        return 0.0
    if geom.irradiance_angle >= math.pi / 2:
        return 0.0
    m = params.order
    d = geom.distance
    return (
        (m + 1.0) * params.receiver_area / (2.0 * math.pi * d * d)
        * math.cos(geom.irradiance_angle) ** m
        * _gain_at(params.filter_gain, phi_in)
        * _gain_at(params.concentrator_gain, phi_in)
        * math.cos(phi_in)
    )


class OpticalPower(NamedTuple):
    received_w: float
    transmitted_w: float
    dc_gain: float


def owpt_received_power(
    spectrum: EmissionSpectrum, params: OwptLedParams, geom: LinkGeometry
) -> OpticalPower:
    """Power on the receiver surface; ``dc_gain`` doubles as the path efficiency."""
    p_tr = owpt_transmit_power(spectrum)
    h0 = owpt_dc_gain(params, geom)
    return OpticalPower(h0 * p_tr, p_tr, h0)


# ---------------------------------------------------------------------------
# Laser optical transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaserParams:
    """Laser source.

    The flux law carries no receiver area, so any fraction of the beam
    missed by the receiver has to be folded into ``absorption_eff``.
    """

    radiance: float
    source_area: float
    absorption_eff: float

    kind = "laser"

    def __post_init__(self):
        _check_positive("radiance", self.radiance)
        _check_positive("source_area", self.source_area)
        _check_unit_interval("absorption_eff", self.absorption_eff)


def laser_received_flux(params: LaserParams, geom: LinkGeometry) -> float:
    if not geom.los_clear:
        return 0.0
    d = geom.distance
    return params.radiance * params.source_area * params.absorption_eff / (d * d)


# ---------------------------------------------------------------------------
# RF / microwave
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RfParams:
    rx_aperture: float
    tx_aperture: float
    wavelength: float

    kind = "rf"

    def __post_init__(self):
        _check_positive("rx_aperture", self.rx_aperture)
        _check_positive("tx_aperture", self.tx_aperture)
        _check_positive("wavelength", self.wavelength)


class FriisResult(NamedTuple):
    efficiency: float
    far_field_violation: bool
    raw: float


def rf_max_efficiency(params: RfParams, geom: LinkGeometry) -> FriisResult:
    """Friis aperture efficiency, clamped at 1.

    The aperture form grows without bound as the antennas approach each
    other; past unity the link is not in the far field and the flag is set.
    """
    if not geom.los_clear:
        return FriisResult(0.0, False, 0.0)
    d = geom.distance
    lam = params.wavelength
    raw = params.rx_aperture * params.tx_aperture / (d * d * lam * lam)
    if raw > 1.0:
        return FriisResult(1.0, True, raw)
    return FriisResult(raw, False, raw)


# ---------------------------------------------------------------------------
# Inductive
# ---------------------------------------------------------------------------


def iwpt_efficiency_from_factors(k, q1, q2, r2, r_load):
    """Inductive link efficiency from coupling, quality factors and resistances."""
    x = k * k * q1 * q2
    if x == 0.0:
        return 0.0
    s = r2 + r_load
    return r_load / (s * s / (x * r2) + r2 + r_load)


@dataclass(frozen=True)
class IwptParams:
    """Two-coil inductive link: inductances, resistances, load and drive frequency."""

    l1: float
    l2: float
    lm: float
    r1: float
    r2: float
    r_load: float
    omega: float

    kind = "iwpt"

    def __post_init__(self):
        for name in ("l1", "l2", "r1", "r2", "r_load", "omega"):
            _check_positive(name, getattr(self, name))
        if not (self.lm >= 0.0):
            raise DomainError(f"lm must be non-negative, got {self.lm!r}")
        # small slack so k = 1 survives the sqrt round trip
        if self.lm > math.sqrt(self.l1 * self.l2) * (1 + 1e-12):
            raise DomainError("mutual inductance exceeds sqrt(l1*l2); coupling would exceed 1")

    @property
    def k(self) -> float:
        return min(1.0, self.lm / math.sqrt(self.l1 * self.l2))

    @property
    def q1(self) -> float:
        return self.omega * self.l1 / self.r1

    @property
    def q2(self) -> float:
        return self.omega * self.l2 / self.r2

    def with_coupling(self, k: float) -> "IwptParams":
        _check_unit_interval("k", k)
        return replace(self, lm=k * math.sqrt(self.l1 * self.l2))

    @classmethod
    def from_factors(cls, k, q1, q2, r2, r_load, omega=2 * math.pi * 85e3, r1=None):
        """Build physical coil values that reproduce the given k, Q1, Q2.

        Coil inductances are chosen equal; ``r1`` defaults to ``r2``.
        """
        _check_unit_interval("k", k)
        _check_positive("q1", q1)
        _check_positive("q2", q2)
        l2 = q2 * r2 / omega
        r1 = r2 if r1 is None else r1
        l1 = q1 * r1 / omega
        return cls(l1=l1, l2=l2, lm=k * math.sqrt(l1 * l2), r1=r1, r2=r2, r_load=r_load, omega=omega)


def iwpt_efficiency(params: IwptParams) -> float:
    """Load efficiency of an inductive link; zero for uncoupled coils."""
    return iwpt_efficiency_from_factors(params.k, params.q1, params.q2, params.r2, params.r_load)


# ---------------------------------------------------------------------------
# Capacitive
# ---------------------------------------------------------------------------


def cwpt_parallel_max_eff(k: float, q: float) -> float:
    _check_unit_interval("k", k)
    _check_positive("q", q)
    root = math.sqrt(1.0 + (k * q) ** 2)
    return (root - 1.0) / (root + 1.0)


def cwpt_series_max_eff(k: float, q1: float, q2: float) -> float:
    _check_unit_interval("k", k)
    _check_positive("q1", q1)
    _check_positive("q2", q2)
    x = k * k * q1 * q2
    root = math.sqrt(1.0 + x) + 1.0
    return x / (root * root)


@dataclass(frozen=True)
class CwptParams:
    """Capacitive link; ``q`` is used by the parallel topology, ``q1``/``q2`` by series."""

    topology: str
    k: float
    q: float | None = None
    q1: float | None = None
    q2: float | None = None

    kind = "cwpt"

    def __post_init__(self):
        _check_unit_interval("k", self.k)
        if self.topology == "parallel":
            if self.q is None:
                raise SchemaError("parallel CWPT needs q")
            _check_positive("q", self.q)
        elif self.topology == "series":
            if self.q1 is None or self.q2 is None:
                raise SchemaError("series CWPT needs q1 and q2")
            _check_positive("q1", self.q1)
            _check_positive("q2", self.q2)
        else:
            raise SchemaError(f"unknown CWPT topology {self.topology!r}")

    def with_coupling(self, k: float) -> "CwptParams":
        return replace(self, k=k)


def cwpt_max_efficiency(params: CwptParams) -> float:
    if params.topology == "parallel":
        return cwpt_parallel_max_eff(params.k, params.q)
    return cwpt_series_max_eff(params.k, params.q1, params.q2)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

LinkTechnologyParams = Union[OwptLedParams, LaserParams, RfParams, IwptParams, CwptParams]


class LinkEvaluation(NamedTuple):
    eta_env: float
    #: raw model value exceeded 1 and was clamped
    clamped: bool
    raw: float


def evaluate_link(tech: LinkTechnologyParams, geom: LinkGeometry) -> LinkEvaluation:
    """Path efficiency of any technology plus a flag for clamped values.

    Optical and RF links need a clear line of sight; inductive and
    capacitive links are near-field and ignore ``geom.los_clear`` (their
    distance dependence enters through the coupling coefficient).
    """
    if isinstance(tech, OwptLedParams):
        raw = owpt_dc_gain(tech, geom)
    elif isinstance(tech, LaserParams):
        raw = tech.absorption_eff / geom.distance**2 if geom.los_clear else 0.0
    elif isinstance(tech, RfParams):
        raw = rf_max_efficiency(tech, geom).raw
    elif isinstance(tech, IwptParams):
        raw = iwpt_efficiency(tech)
    elif isinstance(tech, CwptParams):
        raw = cwpt_max_efficiency(tech)
    else:
        raise SchemaError(f"unknown link technology record {type(tech).__name__}")
    if raw > 1.0:
        return LinkEvaluation(1.0, True, raw)
    return LinkEvaluation(raw, False, raw)


def link_env_efficiency(tech: LinkTechnologyParams, geom: LinkGeometry) -> float:
    return evaluate_link(tech, geom).eta_env


def requires_los(tech) -> bool:
    kind = tech if isinstance(tech, str) else tech.kind
    return kind in LOS_TECHNOLOGIES


_PARAM_TYPES = {
    "owpt": OwptLedParams,
    "laser": LaserParams,
    "rf": RfParams,
    "iwpt": IwptParams,
    "cwpt": CwptParams,
}


def params_type(kind: str):
    try:
        return _PARAM_TYPES[kind]
    except KeyError:
        raise SchemaError(f"unknown link technology {kind!r}") from None

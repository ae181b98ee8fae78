"""Propagation, antenna, LOS, noise, and fading models.

Three base-station technologies: sub-6 GHz macro cells (UHF), fixed
millimeter-wave small cells with sectored directional antennas, and
drone-mounted mmWave cells with a downward cone antenna.  All internal
computation is in SI linear units (watts, hertz, meters, radians);
dB/dBm conversions happen at config load and report emission only.

Blockage enters as a deterministic expectation: received power is the
LOS-path power multiplied by the LOS probability (a step function of
range for fixed mmWave cells, an elevation-angle logistic for drones),
never a sampled on/off state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "C_LIGHT",
    "BsKind",
    "Position",
    "BaseStation",
    "User",
    "FadingDraw",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "watts_to_dbm",
    "near_field_loss",
    "path_loss",
    "mmwave_los_probability",
    "uav_los_probability",
    "mmwave_antenna_gain",
    "uav_antenna_gain",
    "received_power",
    "noise_power",
    "sinr",
    "sample_fading",
]

#: Speed of light, m/s.
C_LIGHT = 299_792_458.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    if linear <= 0:
        raise ValueError(f"cannot express non-positive ratio {linear} in dB")
    return 10.0 * math.log10(linear)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError(f"cannot express non-positive power {watts} in dBm")
    return 10.0 * math.log10(watts) + 30.0


class BsKind(enum.Enum):
    UHF = "uhf"
    MMWAVE = "mmwave"
    UAV_MMWAVE = "uav_mmwave"


@dataclass(frozen=True)
class Position:
    """3-D location in meters; z is altitude above ground."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError("position coordinates must be finite")
        if self.z < 0:
            raise ValueError(f"altitude must be non-negative, got {self.z}")

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def horizontal_distance_to(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class BaseStation:
    """One base station with kind-specific propagation parameters.

    Required per kind (all linear SI units):

    * UHF: ``path_loss_exponent``; optional ``cochannel_group``.
    * mmWave: ``los_exponent``, ``nlos_exponent``, ``main_lobe_gain``,
      ``side_lobe_gain``, ``beam_halfwidth`` (half of the main beamwidth),
      ``los_area_fraction``, ``los_radius``.
    * UAV mmWave: ``path_loss_exponent``, ``main_lobe_gain``,
      ``beam_halfwidth`` (half of the cone beamwidth), ``env_b``, ``env_c``.
    """

    id: str
    kind: BsKind
    position: Position
    tx_power: float
    bandwidth: float
    carrier_freq: float
    noise_power: float
    path_loss_exponent: Optional[float] = None
    los_exponent: Optional[float] = None
    nlos_exponent: Optional[float] = None
    main_lobe_gain: Optional[float] = None
    side_lobe_gain: Optional[float] = None
    beam_halfwidth: Optional[float] = None
    los_area_fraction: Optional[float] = None
    los_radius: Optional[float] = None
    env_b: Optional[float] = None
    env_c: Optional[float] = None
    cochannel_group: Optional[str] = None

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError(f"{self.id}: tx_power must be positive")
        if self.bandwidth <= 0:
            raise ValueError(f"{self.id}: bandwidth must be positive")
        if self.carrier_freq <= 0:
            raise ValueError(f"{self.id}: carrier_freq must be positive")
        if self.noise_power <= 0:
            raise ValueError(f"{self.id}: noise_power must be positive")
        required = {
            BsKind.UHF: ("path_loss_exponent",),
            BsKind.MMWAVE: (
                "los_exponent",
                "nlos_exponent",
                "main_lobe_gain",
                "side_lobe_gain",
                "beam_halfwidth",
                "los_area_fraction",
                "los_radius",
            ),
            BsKind.UAV_MMWAVE: (
                "path_loss_exponent",
                "main_lobe_gain",
                "beam_halfwidth",
                "env_b",
                "env_c",
            ),
        }[self.kind]
        for name in required:
            if getattr(self, name) is None:
                raise ValueError(f"{self.id}: {self.kind.value} requires {name}")
        if self.kind is not BsKind.UHF and self.cochannel_group is not None:
            raise ValueError(f"{self.id}: cochannel_group applies to UHF only")
        if self.kind is BsKind.MMWAVE and not (0.0 <= self.los_area_fraction <= 1.0):
            raise ValueError(f"{self.id}: los_area_fraction must lie in [0, 1]")
        if self.kind is BsKind.UAV_MMWAVE and not (0.0 < self.beam_halfwidth < math.pi / 2):
            raise ValueError(f"{self.id}: cone halfwidth must lie in (0, pi/2)")


@dataclass(frozen=True)
class User:
    """A service customer with an omnidirectional antenna.

    ``net_values`` maps base-station id to the net utility per bit
    (intrinsic value minus price).  ``beam_offsets`` optionally gives the
    user's angle from the best mmWave beam alignment per BS; missing
    entries mean perfectly aligned (main lobe).
    """

    id: str
    position: Position
    net_values: Dict[str, float]
    uhf_antenna_gain: float = 1.0
    beam_offsets: Dict[str, float] = dc_field(default_factory=dict)

    def __post_init__(self):
        for bs_id, v in self.net_values.items():
            if not math.isfinite(v):
                raise ValueError(f"{self.id}: net value for {bs_id} must be finite")
        if self.uhf_antenna_gain <= 0:
            raise ValueError(f"{self.id}: uhf_antenna_gain must be positive")


@dataclass(frozen=True)
class FadingDraw:
    """One snapshot of small-scale channel gains per (BS, user) link."""

    gains: Dict[Tuple[str, str], float]

    def __post_init__(self):
        for link, g in self.gains.items():
            if g < 0:
                raise ValueError(f"fading gain for {link} must be non-negative")

    def get(self, bs_id: str, user_id: str) -> float:
        return self.gains.get((bs_id, user_id), 1.0)

    @classmethod
    def ones(cls, links: Iterable[Tuple[str, str]]) -> "FadingDraw":
        return cls({link: 1.0 for link in links})


def near_field_loss(freq: float) -> float:
    """Near-field path loss at 1 m: (c / (4 pi f))^2."""
    if freq <= 0:
        raise ValueError(f"frequency must be positive, got {freq}")
    return (C_LIGHT / (4.0 * math.pi * freq)) ** 2


def path_loss(dist: float, exponent: float) -> float:
    """Power-law path loss dist^exponent."""
    if dist <= 0:
        raise ValueError(
            f"degenerate geometry: link distance must be positive, got {dist}"
        )
    return dist**exponent


def mmwave_los_probability(r: float, los_area_fraction: float, los_radius: float) -> float:
    """Step LOS model: constant fraction inside the LOS ball, 0 beyond."""
    return los_area_fraction if r <= los_radius else 0.0


def uav_los_probability(r_2d: float, altitude: float, b: float, c: float) -> float:
    """Elevation-angle logistic LOS model for air-to-ground links.

    The elevation angle is measured in degrees; directly overhead
    (r_2d = 0) it is 90 degrees.
    """
    if altitude <= 0:
        raise ValueError(f"altitude must be positive, got {altitude}")
    if r_2d < 0:
        raise ValueError(f"horizontal distance must be non-negative, got {r_2d}")
    elevation_deg = math.degrees(math.atan2(altitude, r_2d))
    return 1.0 / (1.0 + b * math.exp(-c * (elevation_deg - b)))


def mmwave_antenna_gain(theta: float, main_beamwidth: float, g_main: float, g_side: float) -> float:
    """Sectored gain: main lobe within half the beamwidth (inclusive)."""
    return g_main if abs(theta) <= main_beamwidth / 2.0 else g_side


def uav_antenna_gain(
    bs_position: Position,
    user_position: Position,
    cone_halfwidth: float,
    g_main: float,
) -> float:
    """Downward-cone gain: g_main inside the ground footprint, else 0.

    The footprint radius is H tan(cone_halfwidth) where H is the
    altitude difference; the boundary is inclusive.
    """
    altitude = bs_position.z - user_position.z
    if altitude <= 0:
        raise ValueError("drone must be above the user")
    r_2d = bs_position.horizontal_distance_to(user_position)
    return g_main if r_2d <= altitude * math.tan(cone_halfwidth) else 0.0


def received_power(bs: BaseStation, user: User, fading: float = 1.0) -> float:
    """Downlink received power at the user, in watts.

    UHF:     P_t h rho G_u / d^alpha
    mmWave:  p_los P_t h rho G(theta) / d^alpha_los   (alpha_nlos beyond
             the LOS radius, where p_los = 0 anyway)
    UAV:     p_los P_t h rho G_cone / d^alpha
    """
    if fading < 0:
        raise ValueError(f"fading must be non-negative, got {fading}")
    rho = near_field_loss(bs.carrier_freq)
    dist = bs.position.distance_to(user.position)
    if bs.kind is BsKind.UHF:
        loss = path_loss(dist, bs.path_loss_exponent)
        return bs.tx_power * fading * rho * user.uhf_antenna_gain / loss
    if bs.kind is BsKind.MMWAVE:
        p_los = mmwave_los_probability(dist, bs.los_area_fraction, bs.los_radius)
        exponent = bs.los_exponent if dist <= bs.los_radius else bs.nlos_exponent
        loss = path_loss(dist, exponent)
        theta = user.beam_offsets.get(bs.id, 0.0)
        gain = mmwave_antenna_gain(
            theta, 2.0 * bs.beam_halfwidth, bs.main_lobe_gain, bs.side_lobe_gain
        )
        return p_los * bs.tx_power * fading * rho * gain / loss
    # UAV-mounted mmWave
    altitude = bs.position.z - user.position.z
    r_2d = bs.position.horizontal_distance_to(user.position)
    p_los = uav_los_probability(r_2d, altitude, bs.env_b, bs.env_c)
    gain = uav_antenna_gain(bs.position, user.position, bs.beam_halfwidth, bs.main_lobe_gain)
    loss = path_loss(dist, bs.path_loss_exponent)
    return p_los * bs.tx_power * fading * rho * gain / loss


def noise_power(bandwidth: float, noise_figure_db: float = 10.0) -> float:
    """Thermal noise floor in watts: -174 dBm/Hz + 10 log10(W) + NF."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    dbm = -174.0 + 10.0 * math.log10(bandwidth) + noise_figure_db
    return dbm_to_watts(dbm)


def sinr(signal: float, interference: Sequence[float], noise: float) -> float:
    """Signal over (summed interference + noise); SNR when no interferers."""
    if noise <= 0:
        raise ValueError("noise power must be positive")
    return signal / (sum(interference) + noise)


def sample_fading(
    rng: np.random.Generator, links: Sequence[Tuple[str, str]]
) -> FadingDraw:
    """I.i.d. unit-mean exponential gains, one per link, in link order."""
    draws = rng.exponential(1.0, size=len(links))
    return FadingDraw({link: float(g) for link, g in zip(links, draws)})

"""Scenario schema, unit-aware loading, validation, and built-in presets.

A scenario file is a single YAML document with explicit unit suffixes on
every dimensional quantity ("46 dBm", "1.8 GHz", "[1, 0, 0] km").  All
values are converted to SI linear units at load time; nothing downstream
ever sees a dB or a kilometer.  Two presets ship with the package:

* ``homogeneous-paper``:   one BS of each kind, one user group of 10.
* ``heterogeneous-paper``: 2 UHF + 2 mmWave + 4 drone BSs, 16 users in
  two clusters, coverage pinned from the geometry.
"""

from __future__ import annotations

import enum
import hashlib
import math
import re
from dataclasses import dataclass, field as dc_field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from .netmodel import (
    BaseStation,
    BsKind,
    Position,
    User,
    db_to_linear,
    dbm_to_watts,
    noise_power,
)

__all__ = [
    "GameKind",
    "DynamicsDefaults",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "derive_coverage",
    "PRESET_NAMES",
]

PRESET_NAMES = ("homogeneous-paper", "heterogeneous-paper")

#: Default distance rules for coverage derivation (meters).
UHF_COVERAGE_RANGE = 2000.0
UAV_COVERAGE_RANGE = 50.0

_SIMPLEX_TOL = 1e-9


class ScenarioError(ValueError):
    """Schema or invariant violation, with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class GameKind(enum.Enum):
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class DynamicsDefaults:
    beta: float
    delta: float
    step: float
    horizon: float
    initial_strategies: Dict[str, Tuple[float, ...]]


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: GameKind
    group_size: int
    base_stations: Tuple[BaseStation, ...]
    users: Tuple[User, ...]
    coverage: Dict[str, Tuple[str, ...]]
    dynamics: DynamicsDefaults
    source_sha256: str = dc_field(default="", compare=False)
    source_name: str = dc_field(default="", compare=False)

    def bs_by_id(self, bs_id: str) -> BaseStation:
        for bs in self.base_stations:
            if bs.id == bs_id:
                return bs
        raise KeyError(bs_id)

    def user_by_id(self, user_id: str) -> User:
        for u in self.users:
            if u.id == user_id:
                return u
        raise KeyError(user_id)

    @property
    def cochannel_groups(self) -> Dict[str, Tuple[str, ...]]:
        groups: Dict[str, List[str]] = {}
        for bs in self.base_stations:
            if bs.cochannel_group is not None:
                groups.setdefault(bs.cochannel_group, []).append(bs.id)
        return {g: tuple(ids) for g, ids in groups.items()}

    def interferers_of(self, bs_id: str) -> Tuple[str, ...]:
        bs = self.bs_by_id(bs_id)
        if bs.cochannel_group is None:
            return ()
        members = self.cochannel_groups[bs.cochannel_group]
        return tuple(m for m in members if m != bs_id)

    @property
    def links(self) -> Tuple[Tuple[str, str], ...]:
        """All (BS, user) pairs, in catalog order; the canonical fading order."""
        return tuple(
            (bs.id, u.id) for u in self.users for bs in self.base_stations
        )


# ----------------------------------------------------------------------
# Quantity parsing
# ----------------------------------------------------------------------

_LINEAR_UNITS = {
    "w": 1.0, "mw": 1e-3, "kw": 1e3,
    "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9,
    "m": 1.0, "km": 1e3, "mm": 1e-3,
    "s": 1.0, "ms": 1e-3,
    "rad": 1.0, "deg": math.pi / 180.0,
}

_QTY_RE = re.compile(r"^\s*(\[[^\]]*\]|[-+0-9.eE]+)\s*([a-zA-Z°]*)\s*$")


def _parse_quantity(raw, path: str):
    """Parse '46 dBm' / '[1, 0, 0] km' / bare numbers into (value, unit)."""
    if isinstance(raw, (int, float)):
        return float(raw), ""
    if isinstance(raw, list):
        return [float(v) for v in raw], ""
    if not isinstance(raw, str):
        raise ScenarioError(path, f"expected number or quantity string, got {raw!r}")
    m = _QTY_RE.match(raw)
    if not m:
        raise ScenarioError(path, f"cannot parse quantity {raw!r}")
    mag, unit = m.group(1), m.group(2)
    if mag.startswith("["):
        try:
            vec = [float(v) for v in mag[1:-1].split(",")]
        except ValueError:
            raise ScenarioError(path, f"cannot parse vector {raw!r}") from None
        return vec, unit
    try:
        return float(mag), unit
    except ValueError:
        raise ScenarioError(path, f"cannot parse number {raw!r}") from None


def _convert(value, unit: str, dimension: str, path: str) -> float:
    """Convert a parsed magnitude to SI linear units for its dimension."""
    u = unit.lower().replace("°", "deg")
    if dimension == "power":
        if u == "dbm":
            return dbm_to_watts(value)
        if u in ("w", "mw", "kw"):
            return value * _LINEAR_UNITS[u]
        if u == "":
            return value  # bare numbers are watts
    elif dimension == "gain":
        if u in ("db", "dbi"):
            return db_to_linear(value)
        if u == "":
            return value  # bare numbers are linear
    elif dimension == "db":
        if u in ("db", ""):
            return value
    elif dimension == "frequency":
        if u in ("hz", "khz", "mhz", "ghz"):
            return value * _LINEAR_UNITS[u]
        if u == "":
            return value
    elif dimension == "length":
        if u in ("m", "km", "mm"):
            return value * _LINEAR_UNITS[u]
        if u == "":
            return value
    elif dimension == "time":
        if u in ("s", "ms"):
            return value * _LINEAR_UNITS[u]
        if u == "":
            return value
    elif dimension == "angle":
        if u in ("rad", "deg"):
            return value * _LINEAR_UNITS[u]
        if u == "":
            return value
    elif dimension == "bare":
        if u == "":
            return value
    raise ScenarioError(path, f"unit {unit!r} not valid for {dimension}")


def _get_scalar(mapping: dict, key: str, dimension: str, path: str, default=None):
    if key not in mapping:
        if default is not None:
            return default
        raise ScenarioError(f"{path}.{key}", "missing required field")
    value, unit = _parse_quantity(mapping[key], f"{path}.{key}")
    if isinstance(value, list):
        raise ScenarioError(f"{path}.{key}", "expected scalar, got vector")
    return _convert(value, unit, dimension, f"{path}.{key}")


def _get_position(mapping: dict, key: str, path: str) -> Position:
    if key not in mapping:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    value, unit = _parse_quantity(mapping[key], f"{path}.{key}")
    if not isinstance(value, list) or len(value) != 3:
        raise ScenarioError(f"{path}.{key}", "position must be a 3-vector")
    scale = _convert(1.0, unit, "length", f"{path}.{key}")
    try:
        return Position(value[0] * scale, value[1] * scale, value[2] * scale)
    except ValueError as err:
        raise ScenarioError(f"{path}.{key}", str(err)) from None


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------

def _load_base_station(raw: dict, index: int) -> BaseStation:
    path = f"base_stations[{index}]"
    if "id" not in raw:
        raise ScenarioError(path, "missing id")
    if "kind" not in raw:
        raise ScenarioError(f"{path}.kind", "missing required field")
    try:
        kind = BsKind(str(raw["kind"]).lower())
    except ValueError:
        raise ScenarioError(f"{path}.kind", f"unknown kind {raw['kind']!r}") from None
    bandwidth = _get_scalar(raw, "bandwidth", "frequency", path)
    if "noise_power" in raw:
        noise = _get_scalar(raw, "noise_power", "power", path)
    else:
        nf = _get_scalar(raw, "noise_figure", "db", path, default=10.0)
        noise = noise_power(bandwidth, nf)
    common = dict(
        id=str(raw["id"]),
        kind=kind,
        position=_get_position(raw, "position", path),
        tx_power=_get_scalar(raw, "tx_power", "power", path),
        bandwidth=bandwidth,
        carrier_freq=_get_scalar(raw, "carrier_freq", "frequency", path),
        noise_power=noise,
    )
    extra = {}
    if kind is BsKind.UHF:
        extra["path_loss_exponent"] = _get_scalar(raw, "path_loss_exponent", "bare", path)
        if raw.get("cochannel_group") is not None:
            extra["cochannel_group"] = str(raw["cochannel_group"])
    elif kind is BsKind.MMWAVE:
        extra["los_exponent"] = _get_scalar(raw, "los_exponent", "bare", path)
        extra["nlos_exponent"] = _get_scalar(raw, "nlos_exponent", "bare", path)
        extra["main_lobe_gain"] = _get_scalar(raw, "main_lobe_gain", "gain", path)
        extra["side_lobe_gain"] = _get_scalar(raw, "side_lobe_gain", "gain", path)
        extra["beam_halfwidth"] = _get_scalar(raw, "beamwidth", "angle", path) / 2.0
        extra["los_area_fraction"] = _get_scalar(raw, "los_area_fraction", "bare", path)
        extra["los_radius"] = _get_scalar(raw, "los_radius", "length", path)
    else:
        extra["path_loss_exponent"] = _get_scalar(raw, "path_loss_exponent", "bare", path)
        extra["main_lobe_gain"] = _get_scalar(raw, "main_lobe_gain", "gain", path)
        extra["beam_halfwidth"] = _get_scalar(raw, "beamwidth", "angle", path) / 2.0
        extra["env_b"] = _get_scalar(raw, "env_b", "bare", path)
        extra["env_c"] = _get_scalar(raw, "env_c", "bare", path)
    try:
        return BaseStation(**common, **extra)
    except ValueError as err:
        raise ScenarioError(path, str(err)) from None


def _load_user(raw: dict, index: int) -> User:
    path = f"users[{index}]"
    if "id" not in raw:
        raise ScenarioError(path, "missing id")
    net_values = raw.get("net_values")
    if not isinstance(net_values, dict) or not net_values:
        raise ScenarioError(f"{path}.net_values", "missing or empty net value map")
    beam_offsets = {}
    for bs_id, ang in (raw.get("beam_offsets") or {}).items():
        value, unit = _parse_quantity(ang, f"{path}.beam_offsets.{bs_id}")
        beam_offsets[str(bs_id)] = _convert(value, unit, "angle", f"{path}.beam_offsets.{bs_id}")
    try:
        return User(
            id=str(raw["id"]),
            position=_get_position(raw, "position", path),
            net_values={str(k): float(v) for k, v in net_values.items()},
            uhf_antenna_gain=_get_scalar(raw, "uhf_antenna_gain", "gain", path, default=1.0),
            beam_offsets=beam_offsets,
        )
    except ValueError as err:
        raise ScenarioError(path, str(err)) from None


def _load_dynamics(raw: dict, coverage: Dict[str, Tuple[str, ...]]) -> DynamicsDefaults:
    path = "dynamics"
    if not isinstance(raw, dict):
        raise ScenarioError(path, "missing dynamics section")
    beta = _get_scalar(raw, "beta", "bare", path)
    if not (0.0 < beta < 2.0):
        raise ScenarioError(f"{path}.beta", f"beta must lie in (0, 2), got {beta}")
    step = _get_scalar(raw, "step", "time", path)
    horizon = _get_scalar(raw, "horizon", "time", path)
    if step <= 0 or horizon < step:
        raise ScenarioError(f"{path}.step", "need step > 0 and horizon >= step")
    initial_raw = raw.get("initial_strategies", "uniform")
    initial: Dict[str, Tuple[float, ...]] = {}
    if initial_raw == "uniform":
        for owner, choices in coverage.items():
            k = len(choices)
            initial[owner] = tuple(1.0 / k for _ in range(k))
    elif isinstance(initial_raw, dict):
        for owner, choices in coverage.items():
            if owner not in initial_raw:
                k = len(choices)
                initial[owner] = tuple(1.0 / k for _ in range(k))
                continue
            vec = [float(v) for v in initial_raw[owner]]
            if len(vec) != len(choices):
                raise ScenarioError(
                    f"{path}.initial_strategies.{owner}",
                    f"expected {len(choices)} entries, got {len(vec)}",
                )
            if any(v < 0 or v > 1 for v in vec) or abs(sum(vec) - 1.0) > _SIMPLEX_TOL:
                raise ScenarioError(
                    f"{path}.initial_strategies.{owner}",
                    f"not a probability vector (sum {sum(vec)!r})",
                )
            initial[owner] = tuple(vec)
    else:
        raise ScenarioError(
            f"{path}.initial_strategies", "expected 'uniform' or an owner map"
        )
    return DynamicsDefaults(
        beta=beta,
        delta=_get_scalar(raw, "delta", "bare", path),
        step=step,
        horizon=horizon,
        initial_strategies=initial,
    )


def _validate_cross_references(
    base_stations: Tuple[BaseStation, ...],
    users: Tuple[User, ...],
    coverage: Dict[str, Tuple[str, ...]],
):
    bs_ids = {bs.id for bs in base_stations}
    user_ids = [u.id for u in users]
    if len(set(user_ids)) != len(user_ids):
        raise ScenarioError("users", "duplicate user ids")
    if len(bs_ids) != len(base_stations):
        raise ScenarioError("base_stations", "duplicate base-station ids")
    for owner, choices in coverage.items():
        if owner not in user_ids:
            raise ScenarioError(f"coverage.{owner}", "unknown user id")
        if not choices:
            raise ScenarioError(f"coverage.{owner}", "coverage must not be empty")
        for c in choices:
            if c not in bs_ids:
                raise ScenarioError(f"coverage.{owner}", f"unknown base station {c!r}")
        if len(set(choices)) != len(choices):
            raise ScenarioError(f"coverage.{owner}", "duplicate choices")
    for u in users:
        if u.id not in coverage:
            raise ScenarioError(f"coverage.{u.id}", "user has no coverage entry")
        for c in coverage[u.id]:
            if c not in u.net_values:
                raise ScenarioError(
                    f"users.{u.id}.net_values", f"no net value for covered BS {c!r}"
                )


def _scenario_from_dict(doc: dict, name: str, sha256: str) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario file must be a mapping")
    try:
        kind = GameKind(str(doc.get("kind", "")).lower())
    except ValueError:
        raise ScenarioError("kind", f"unknown game kind {doc.get('kind')!r}") from None
    group_size = int(doc.get("group_size", 1))
    if group_size < 1:
        raise ScenarioError("group_size", "group size must be >= 1")
    raw_bs = doc.get("base_stations")
    if not isinstance(raw_bs, list) or not raw_bs:
        raise ScenarioError("base_stations", "missing or empty")
    base_stations = tuple(_load_base_station(b, i) for i, b in enumerate(raw_bs))
    raw_users = doc.get("users")
    if not isinstance(raw_users, list) or not raw_users:
        raise ScenarioError("users", "missing or empty")
    users = tuple(_load_user(u, i) for i, u in enumerate(raw_users))
    raw_cov = doc.get("coverage")
    if not isinstance(raw_cov, dict) or not raw_cov:
        raise ScenarioError("coverage", "missing or empty")
    coverage = {str(k): tuple(str(c) for c in v) for k, v in raw_cov.items()}
    _validate_cross_references(base_stations, users, coverage)
    if kind is GameKind.HOMOGENEOUS:
        if len(users) != 1:
            raise ScenarioError("users", "homogeneous scenarios have exactly one group entry")
        kinds = [base_stations[i].kind for i in range(len(base_stations))]
        if len(base_stations) != 3 or len(set(kinds)) != 3:
            raise ScenarioError(
                "base_stations", "homogeneous scenarios need exactly one BS per kind"
            )
    dynamics = _load_dynamics(doc.get("dynamics"), coverage)
    return Scenario(
        name=str(doc.get("name", name)),
        kind=kind,
        group_size=group_size,
        base_stations=base_stations,
        users=users,
        coverage=coverage,
        dynamics=dynamics,
        source_sha256=sha256,
        source_name=name,
    )


def load_scenario(path_or_preset: Union[str, Path]) -> Scenario:
    """Load a scenario from a YAML file or a built-in preset name."""
    name = str(path_or_preset)
    if name in PRESET_NAMES:
        data = (
            resources.files("hetnetsel")
            .joinpath(f"presets/{name}.yaml")
            .read_bytes()
        )
    else:
        p = Path(path_or_preset)
        if not p.exists():
            raise ScenarioError(
                "<file>", f"{name!r} is neither a preset {PRESET_NAMES} nor a file"
            )
        data = p.read_bytes()
        name = p.name
    sha256 = hashlib.sha256(data).hexdigest()
    try:
        doc = yaml.safe_load(data)
    except yaml.YAMLError as err:
        raise ScenarioError("<file>", f"YAML parse error: {err}") from None
    return _scenario_from_dict(doc, name, sha256)


# ----------------------------------------------------------------------
# Serialization (SI units out, for exact round-trips)
# ----------------------------------------------------------------------

def scenario_to_dict(scn: Scenario) -> dict:
    """Plain-data form of a scenario in SI units; reloads to an equal value."""
    def bs_dict(bs: BaseStation) -> dict:
        out = {
            "id": bs.id,
            "kind": bs.kind.value,
            "position": [bs.position.x, bs.position.y, bs.position.z],
            "tx_power": bs.tx_power,
            "bandwidth": bs.bandwidth,
            "carrier_freq": bs.carrier_freq,
            "noise_power": bs.noise_power,
        }
        for name in (
            "path_loss_exponent", "los_exponent", "nlos_exponent",
            "main_lobe_gain", "side_lobe_gain", "los_area_fraction",
            "los_radius", "env_b", "env_c", "cochannel_group",
        ):
            if getattr(bs, name) is not None:
                out[name] = getattr(bs, name)
        if bs.beam_halfwidth is not None:
            out["beamwidth"] = 2.0 * bs.beam_halfwidth
        return out

    def user_dict(u: User) -> dict:
        out = {
            "id": u.id,
            "position": [u.position.x, u.position.y, u.position.z],
            "net_values": dict(u.net_values),
            "uhf_antenna_gain": u.uhf_antenna_gain,
        }
        if u.beam_offsets:
            out["beam_offsets"] = dict(u.beam_offsets)
        return out

    return {
        "name": scn.name,
        "kind": scn.kind.value,
        "group_size": scn.group_size,
        "base_stations": [bs_dict(b) for b in scn.base_stations],
        "users": [user_dict(u) for u in scn.users],
        "coverage": {k: list(v) for k, v in scn.coverage.items()},
        "dynamics": {
            "beta": scn.dynamics.beta,
            "delta": scn.dynamics.delta,
            "step": scn.dynamics.step,
            "horizon": scn.dynamics.horizon,
            "initial_strategies": {
                k: list(v) for k, v in scn.dynamics.initial_strategies.items()
            },
        },
    }


def save_scenario(scn: Scenario, path: Union[str, Path]) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(scn), fh, sort_keys=False)


def derive_coverage(
    base_stations: Tuple[BaseStation, ...],
    users: Tuple[User, ...],
    uhf_range: float = UHF_COVERAGE_RANGE,
    uav_range: float = UAV_COVERAGE_RANGE,
) -> Dict[str, Tuple[str, ...]]:
    """Distance-rule coverage: UHF within ``uhf_range``, mmWave within its
    LOS radius, drones within ``uav_range`` (3-D distances).

    Presets pin their coverage explicitly; this helper documents how those
    pins were derived and serves ad-hoc scenario construction.
    """
    out: Dict[str, Tuple[str, ...]] = {}
    for u in users:
        choices = []
        for bs in base_stations:
            d = bs.position.distance_to(u.position)
            if bs.kind is BsKind.UHF and d <= uhf_range:
                choices.append(bs.id)
            elif bs.kind is BsKind.MMWAVE and d <= bs.los_radius:
                choices.append(bs.id)
            elif bs.kind is BsKind.UAV_MMWAVE and d <= uav_range:
                choices.append(bs.id)
        out[u.id] = tuple(choices)
    return out

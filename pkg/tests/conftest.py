import math

import pytest

from hetnetsel.netmodel import (
    BaseStation,
    BsKind,
    Position,
    User,
    db_to_linear,
    dbm_to_watts,
    noise_power,
)
from hetnetsel.scenarios import DynamicsDefaults, GameKind, Scenario


def uhf_bs(bs_id="u", pos=Position(1000.0, 0.0, 0.0), cochannel=None, tx_dbm=46.0):
    return BaseStation(
        id=bs_id,
        kind=BsKind.UHF,
        position=pos,
        tx_power=dbm_to_watts(tx_dbm),
        bandwidth=20e6,
        carrier_freq=1.8e9,
        noise_power=noise_power(20e6),
        path_loss_exponent=2.7,
        cochannel_group=cochannel,
    )


def mmwave_bs(bs_id="m", pos=Position(0.0, 0.0, 0.0)):
    return BaseStation(
        id=bs_id,
        kind=BsKind.MMWAVE,
        position=pos,
        tx_power=dbm_to_watts(30.0),
        bandwidth=1e9,
        carrier_freq=70e9,
        noise_power=noise_power(1e9),
        los_exponent=2.0,
        nlos_exponent=4.0,
        main_lobe_gain=db_to_linear(18.0),
        side_lobe_gain=db_to_linear(-2.0),
        beam_halfwidth=math.radians(15.0),
        los_area_fraction=0.081,
        los_radius=250.0,
    )


def uav_bs(bs_id="a", pos=Position(0.0, 100.0, 20.0)):
    return BaseStation(
        id=bs_id,
        kind=BsKind.UAV_MMWAVE,
        position=pos,
        tx_power=dbm_to_watts(23.0),
        bandwidth=1e9,
        carrier_freq=70e9,
        noise_power=noise_power(1e9),
        path_loss_exponent=2.0,
        main_lobe_gain=db_to_linear(18.0),
        beam_halfwidth=math.radians(22.5),
        env_b=1.5,
        env_c=1.0,
    )


def dynamics_defaults(coverage, beta=1.0, delta=2.0, step=0.01, horizon=10.0):
    initial = {
        owner: tuple(1.0 / len(choices) for _ in choices)
        for owner, choices in coverage.items()
    }
    return DynamicsDefaults(
        beta=beta, delta=delta, step=step, horizon=horizon, initial_strategies=initial
    )


def homog_scenario(group_size=10, net_values=None, delta=2.0):
    net = net_values or {"u": 1e-7, "m": 1.5e-9, "a": 1e-9}
    coverage = {"group": ("u", "m", "a")}
    return Scenario(
        name="test-homog",
        kind=GameKind.HOMOGENEOUS,
        group_size=group_size,
        base_stations=(uhf_bs(), mmwave_bs(), uav_bs()),
        users=(
            User(id="group", position=Position(0.0, 100.0, 0.0), net_values=net),
        ),
        coverage=coverage,
        dynamics=dynamics_defaults(coverage, delta=delta),
    )


def het_single_user_scenario(net_values=None):
    """Heterogeneous twin of homog_scenario with one independent user."""
    net = net_values or {"u": 1e-7, "m": 1.5e-9, "a": 1e-9}
    coverage = {"solo": ("u", "m", "a")}
    return Scenario(
        name="test-het-single",
        kind=GameKind.HETEROGENEOUS,
        group_size=1,
        base_stations=(uhf_bs(), mmwave_bs(), uav_bs()),
        users=(
            User(id="solo", position=Position(0.0, 100.0, 0.0), net_values=net),
        ),
        coverage=coverage,
        dynamics=dynamics_defaults(coverage),
    )


def het_interference_scenario(n_uhf=3, users_per_cell=2, spacing=3000.0):
    """n_uhf co-channel UHF cells in a row, plus one mmWave per cell so every
    user has two choices; users sit near their own cell."""
    stations = []
    users = []
    coverage = {}
    for c in range(n_uhf):
        cx = c * spacing
        stations.append(uhf_bs(f"u{c}", Position(cx, 500.0, 0.0), cochannel="band"))
        stations.append(mmwave_bs(f"m{c}", Position(cx, 0.0, 0.0)))
        for k in range(users_per_cell):
            uid = f"user{c}-{k}"
            users.append(
                User(
                    id=uid,
                    position=Position(cx + 10.0 * (k + 1), 100.0, 0.0),
                    net_values={f"u{c}": 1e-7, f"m{c}": 1.5e-9},
                )
            )
            coverage[uid] = (f"u{c}", f"m{c}")
    return Scenario(
        name="test-het-interference",
        kind=GameKind.HETEROGENEOUS,
        group_size=1,
        base_stations=tuple(stations),
        users=tuple(users),
        coverage=coverage,
        dynamics=dynamics_defaults(coverage),
    )


@pytest.fixture
def homog():
    return homog_scenario()


@pytest.fixture
def het_single():
    return het_single_user_scenario()


@pytest.fixture
def het_interference():
    return het_interference_scenario()

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnetsel.netmodel import (
    C_LIGHT,
    BaseStation,
    BsKind,
    FadingDraw,
    Position,
    User,
    db_to_linear,
    dbm_to_watts,
    linear_to_db,
    mmwave_antenna_gain,
    mmwave_los_probability,
    near_field_loss,
    noise_power,
    path_loss,
    received_power,
    sample_fading,
    sinr,
    uav_antenna_gain,
    uav_los_probability,
    watts_to_dbm,
)


def make_uhf(pos=Position(1000.0, 0.0, 0.0), **kw):
    args = dict(
        id="uhf-1",
        kind=BsKind.UHF,
        position=pos,
        tx_power=dbm_to_watts(46.0),
        bandwidth=20e6,
        carrier_freq=1.8e9,
        noise_power=noise_power(20e6),
        path_loss_exponent=2.7,
    )
    args.update(kw)
    return BaseStation(**args)


def make_mmwave(pos=Position(0.0, 0.0, 0.0), **kw):
    args = dict(
        id="mm-1",
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
    args.update(kw)
    return BaseStation(**args)


def make_uav(pos=Position(0.0, 100.0, 20.0), **kw):
    args = dict(
        id="uav-1",
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
    args.update(kw)
    return BaseStation(**args)


def make_user(pos=Position(0.0, 100.0, 0.0)):
    return User(
        id="u1",
        position=pos,
        net_values={"uhf-1": 1e-7, "mm-1": 1.5e-9, "uav-1": 1e-9},
    )


class TestConversions:
    def test_dbm_anchor(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-12)
        assert dbm_to_watts(46.0) == pytest.approx(39.810717, rel=1e-6)

    @given(st.floats(-120.0, 60.0))
    @settings(max_examples=50, deadline=None)
    def test_db_round_trip(self, db):
        assert linear_to_db(db_to_linear(db)) == pytest.approx(db, abs=1e-9)
        assert watts_to_dbm(dbm_to_watts(db)) == pytest.approx(db, abs=1e-9)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            linear_to_db(0.0)
        with pytest.raises(ValueError):
            watts_to_dbm(-1.0)


class TestNearFieldLoss:
    def test_uhf_carrier(self):
        expected = (C_LIGHT / (4.0 * math.pi * 1.8e9)) ** 2
        assert near_field_loss(1.8e9) == pytest.approx(expected, rel=1e-12)
        assert near_field_loss(1.8e9) == pytest.approx(1.755e-4, rel=2e-3)

    def test_mmwave_carrier(self):
        expected = (C_LIGHT / (4.0 * math.pi * 70e9)) ** 2
        assert near_field_loss(70e9) == pytest.approx(expected, rel=1e-12)
        assert near_field_loss(70e9) == pytest.approx(1.161e-7, rel=2e-3)

    def test_inverse_square_scaling(self):
        assert near_field_loss(1e9) / near_field_loss(2e9) == pytest.approx(4.0, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            near_field_loss(0.0)


class TestPathLoss:
    def test_unit_distance(self):
        assert path_loss(1.0, 2.7) == 1.0

    def test_arithmetic(self):
        assert path_loss(100.0, 2.7) == pytest.approx(100.0**2.7, rel=1e-12)
        assert path_loss(100.0, 2.7) == pytest.approx(2.512e5, rel=1e-3)
        assert path_loss(2.0, 2.0) == 4.0

    def test_degenerate_geometry(self):
        with pytest.raises(ValueError, match="degenerate"):
            path_loss(0.0, 2.0)


class TestLosProbability:
    def test_mmwave_step(self):
        assert mmwave_los_probability(100.0, 0.081, 250.0) == 0.081
        assert mmwave_los_probability(251.0, 0.081, 250.0) == 0.0
        # boundary inclusive, Manhattan constants
        assert mmwave_los_probability(200.0, 0.117, 200.0) == 0.117

    def test_uav_elevation_45(self):
        p = uav_los_probability(20.0, 20.0, 1.5, 1.0)
        assert p == pytest.approx(1.0 / (1.0 + 1.5 * math.exp(-43.5)), rel=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_uav_grazing_limit(self):
        p = uav_los_probability(1e12, 20.0, 1.5, 1.0)
        assert p == pytest.approx(1.0 / (1.0 + 1.5 * math.exp(1.5)), rel=1e-6)

    def test_uav_overhead_limit(self):
        p = uav_los_probability(0.0, 20.0, 1.5, 1.0)
        assert p == pytest.approx(1.0 / (1.0 + 1.5 * math.exp(-(90.0 - 1.5))), rel=1e-12)


class TestAntennaGain:
    def test_mmwave_main_lobe(self):
        gm, gs = db_to_linear(18.0), db_to_linear(-2.0)
        bw = math.radians(30.0)
        assert mmwave_antenna_gain(0.0, bw, gm, gs) == pytest.approx(63.0957, rel=1e-4)
        assert mmwave_antenna_gain(bw, bw, gm, gs) == pytest.approx(0.63096, rel=1e-4)
        # boundary inclusive
        assert mmwave_antenna_gain(bw / 2.0, bw, gm, gs) == gm
        assert mmwave_antenna_gain(-bw / 2.0, bw, gm, gs) == gm

    def test_uav_cone(self):
        ga = db_to_linear(18.0)
        half = math.radians(22.5)
        uav = Position(0.0, 0.0, 20.0)
        assert uav_antenna_gain(uav, Position(0.0, 0.0, 0.0), half, ga) == ga
        edge = 20.0 * math.tan(half)
        assert edge == pytest.approx(8.2843, abs=1e-4)
        assert uav_antenna_gain(uav, Position(edge, 0.0, 0.0), half, ga) == ga
        assert uav_antenna_gain(uav, Position(9.0, 0.0, 0.0), half, ga) == 0.0

    def test_uav_below_rejected(self):
        with pytest.raises(ValueError):
            uav_antenna_gain(Position(0, 0, 0), Position(0, 0, 10.0), 0.4, 1.0)

    @given(
        x=st.floats(-500, 500), y=st.floats(-500, 500),
        h=st.floats(5.0, 120.0), half_deg=st.floats(5.0, 80.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_cone_zero_outside(self, x, y, h, half_deg):
        half = math.radians(half_deg / 2.0)
        gain = uav_antenna_gain(Position(0, 0, h), Position(x, y, 0), half, 2.0)
        inside = math.hypot(x, y) <= h * math.tan(half)
        assert gain == (2.0 if inside else 0.0)


class TestReceivedPower:
    def test_zero_fading(self):
        assert received_power(make_uhf(), make_user(), fading=0.0) == 0.0

    def test_mmwave_blocked_beyond_los_radius(self):
        user = make_user(Position(0.0, 300.0, 0.0))
        assert received_power(make_mmwave(), user) == 0.0

    def test_uhf_table_geometry(self):
        # chained oracle: P_t * rho * G / d^alpha for the homogeneous layout
        bs, user = make_uhf(), make_user()
        d = math.sqrt(1000.0**2 + 100.0**2)
        expected = (
            dbm_to_watts(46.0) * near_field_loss(1.8e9) * 1.0 / d**2.7
        )
        assert received_power(bs, user) == pytest.approx(expected, rel=1e-12)

    def test_mmwave_expectation_form(self):
        bs, user = make_mmwave(), make_user()
        expected = (
            0.081
            * dbm_to_watts(30.0)
            * near_field_loss(70e9)
            * db_to_linear(18.0)
            / 100.0**2
        )
        assert received_power(bs, user) == pytest.approx(expected, rel=1e-12)

    def test_uav_under_drone(self):
        bs, user = make_uav(), make_user()
        p_los = uav_los_probability(0.0, 20.0, 1.5, 1.0)
        expected = (
            p_los
            * dbm_to_watts(23.0)
            * near_field_loss(70e9)
            * db_to_linear(18.0)
            / 20.0**2
        )
        assert received_power(bs, user) == pytest.approx(expected, rel=1e-12)

    def test_side_lobe_override(self):
        bs = make_mmwave()
        aligned = make_user()
        offset = User(
            id="u2",
            position=Position(0.0, 100.0, 0.0),
            net_values={},
            beam_offsets={"mm-1": math.pi / 2},
        )
        ratio = received_power(bs, aligned) / received_power(bs, offset)
        assert ratio == pytest.approx(db_to_linear(20.0), rel=1e-9)

    @given(st.floats(10.0, 240.0), st.floats(10.0, 240.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_distance(self, d1, d2):
        near, far = sorted((d1, d2))
        bs = make_mmwave()
        p_near = received_power(bs, make_user(Position(0.0, near, 0.0)))
        p_far = received_power(bs, make_user(Position(0.0, far, 0.0)))
        assert p_near >= p_far


class TestNoise:
    def test_table_formula(self):
        assert watts_to_dbm(noise_power(20e6, 10.0)) == pytest.approx(-90.9897, abs=1e-3)
        assert noise_power(20e6, 10.0) == pytest.approx(7.96e-13, rel=1e-2)
        assert watts_to_dbm(noise_power(1e9, 10.0)) == pytest.approx(-74.0, abs=1e-9)
        assert watts_to_dbm(noise_power(1.0, 0.0)) == pytest.approx(-174.0, abs=1e-9)

    def test_rejects_nonpositive_bandwidth(self):
        with pytest.raises(ValueError):
            noise_power(0.0)


class TestSinr:
    def test_no_interference_is_snr(self):
        assert sinr(2.0, [], 0.5) == pytest.approx(4.0, rel=1e-15)

    def test_with_interference(self):
        assert sinr(2.0, [1.0, 0.5], 0.5) == pytest.approx(1.0, rel=1e-15)


class TestFading:
    def test_deterministic_per_seed(self):
        links = [("a", "u"), ("b", "u")]
        d1 = sample_fading(np.random.default_rng(42), links)
        d2 = sample_fading(np.random.default_rng(42), links)
        assert d1 == d2

    def test_unit_mean(self):
        links = [(f"bs{i}", "u") for i in range(100_000)]
        draw = sample_fading(np.random.default_rng(7), links)
        mean = np.mean(list(draw.gains.values()))
        assert 0.99 <= mean <= 1.01

    def test_ones_override(self):
        draw = FadingDraw.ones([("a", "u")])
        assert draw.get("a", "u") == 1.0
        assert draw.get("missing", "u") == 1.0

    def test_negative_gain_rejected(self):
        with pytest.raises(ValueError):
            FadingDraw({("a", "u"): -0.1})


class TestValidation:
    def test_missing_kind_fields(self):
        with pytest.raises(ValueError, match="requires"):
            make_mmwave(los_radius=None)

    def test_cochannel_only_uhf(self):
        with pytest.raises(ValueError, match="cochannel"):
            make_mmwave(cochannel_group="g1")

    def test_cone_halfwidth_range(self):
        with pytest.raises(ValueError):
            make_uav(beam_halfwidth=math.pi / 2)

    def test_position_validation(self):
        with pytest.raises(ValueError):
            Position(0.0, 0.0, -1.0)
        with pytest.raises(ValueError):
            Position(math.nan, 0.0, 0.0)

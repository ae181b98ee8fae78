"""Utility functions and replicator vector fields.

Two game kinds share one state layout: a list of simplex blocks, one per
strategy owner (the single user group in the homogeneous game, each user
in the heterogeneous game), each a probability vector over that owner's
covered base stations.

The replicator field is, per block and choice,

    exp(-delta) * p * (U - Ubar),    Ubar = sum_w p_w U_w,

so the per-block components sum to zero exactly and boundary states are
fixed points.  Shared-rate expressions divide by the expected occupancy;
that division is guarded by max(., EPS_SHARE) with the multiplying
probability keeping the product bounded (the singularity at an empty
station is removable).  Utilities are always evaluated at the state
clipped to [0, 1] so that the field stays bounded and Lipschitz on the
solver's whole workspace; on the simplex the clip is the identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .netmodel import BsKind, FadingDraw, received_power
from .scenarios import GameKind, Scenario

__all__ = [
    "EPS_SHARE",
    "MAX_INTERFERERS",
    "SimplexBlock",
    "StrategyState",
    "GameEvaluator",
    "expected_sinr_capacity",
    "homogeneous_rates",
    "homogeneous_utilities",
    "replicator_field",
    "heterogeneous_uhf_rate",
    "heterogeneous_rates_and_utilities",
]

#: Floor for shared-bandwidth denominators (removable singularity guard).
EPS_SHARE = 1e-12

#: Subset enumeration over co-channel interferers is exponential; refuse
#: beyond this set size.
MAX_INTERFERERS = 16

_SIMPLEX_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SimplexBlock:
    """One owner's mixed strategy over its covered base stations."""

    owner: str
    choices: Tuple[str, ...]
    probs: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, SimplexBlock):
            return NotImplemented
        return (
            self.owner == other.owner
            and self.choices == other.choices
            and np.array_equal(self.probs, other.probs)
        )

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (len(self.choices),):
            raise ValueError(f"{self.owner}: probs must have one entry per choice")
        if np.any(probs < -_SIMPLEX_TOL) or np.any(probs > 1.0 + _SIMPLEX_TOL):
            raise ValueError(f"{self.owner}: probabilities outside [0, 1]")
        if abs(float(probs.sum()) - 1.0) > 1e-9 + _SIMPLEX_TOL:
            raise ValueError(f"{self.owner}: probabilities sum to {probs.sum()!r}")


@dataclass(frozen=True)
class StrategyState:
    """Ordered simplex blocks plus the simulation time they refer to.

    Flattening order: blocks in scenario user order, choices in coverage
    order within each block.
    """

    blocks: Tuple[SimplexBlock, ...]
    time: float = 0.0

    def __post_init__(self):
        owners = [b.owner for b in self.blocks]
        if len(set(owners)) != len(owners):
            raise ValueError("duplicate block owners")

    def flatten(self) -> np.ndarray:
        return np.concatenate([b.probs for b in self.blocks])

    def block(self, owner: str) -> SimplexBlock:
        for b in self.blocks:
            if b.owner == owner:
                return b
        raise KeyError(owner)

    @classmethod
    def uniform(cls, scenario: Scenario, time: float = 0.0) -> "StrategyState":
        blocks = []
        for u in scenario.users:
            choices = scenario.coverage[u.id]
            k = len(choices)
            blocks.append(SimplexBlock(u.id, choices, np.full(k, 1.0 / k)))
        return cls(tuple(blocks), time)

    @classmethod
    def initial(cls, scenario: Scenario, time: float = 0.0) -> "StrategyState":
        blocks = []
        for u in scenario.users:
            choices = scenario.coverage[u.id]
            probs = np.array(scenario.dynamics.initial_strategies[u.id])
            blocks.append(SimplexBlock(u.id, choices, probs))
        return cls(tuple(blocks), time)

    @classmethod
    def from_flat(
        cls, scenario: Scenario, flat: np.ndarray, time: float = 0.0
    ) -> "StrategyState":
        blocks = []
        pos = 0
        for u in scenario.users:
            choices = scenario.coverage[u.id]
            k = len(choices)
            blocks.append(SimplexBlock(u.id, choices, np.array(flat[pos : pos + k])))
            pos += k
        if pos != len(flat):
            raise ValueError(f"flat vector length {len(flat)} does not match layout")
        return cls(tuple(blocks), time)


def expected_sinr_capacity(
    signal: float,
    interferer_powers: Sequence[float],
    active_probs: Sequence[float],
    noise: float,
) -> float:
    """Expectation of log2(1 + SINR) over independent interferer activity.

    Interferer w transmits with probability ``active_probs[w]``; the
    expectation enumerates all activity subsets S with weight
    prod_{w in S} a_w * prod_{w not in S} (1 - a_w) and SINR
    signal / (sum_{w in S} P_w + noise).  With two interferers this is
    exactly the four-case expression of the heterogeneous rate model.
    """
    if len(interferer_powers) != len(active_probs):
        raise ValueError("one activity probability per interferer power required")
    if len(interferer_powers) > MAX_INTERFERERS:
        raise ValueError(
            f"subset enumeration over {len(interferer_powers)} interferers "
            f"exceeds the {MAX_INTERFERERS}-interferer limit"
        )
    total = 0.0
    idx = range(len(interferer_powers))
    for size in range(len(interferer_powers) + 1):
        for subset in itertools.combinations(idx, size):
            weight = 1.0
            interference = 0.0
            chosen = set(subset)
            for w in idx:
                if w in chosen:
                    weight *= active_probs[w]
                    interference += interferer_powers[w]
                else:
                    weight *= 1.0 - active_probs[w]
            if weight == 0.0:
                continue
            total += weight * math.log2(1.0 + signal / (interference + noise))
    return total


class GameEvaluator:
    """Precomputed per-scenario machinery for fast field evaluation.

    Unit received powers (fading = 1) are cached per link; a fading draw
    enters as a multiplicative gain vector aligned with ``scenario.links``.
    All methods are pure in their inputs; instances are safe to share
    across threads.
    """

    def __init__(self, scenario: Scenario, delta: Optional[float] = None):
        self.scenario = scenario
        self.delta = scenario.dynamics.delta if delta is None else float(delta)
        self.gain = math.exp(-self.delta)
        self.links = scenario.links
        self._link_index = {link: i for i, link in enumerate(self.links)}
        self._unit_power = np.array(
            [
                received_power(scenario.bs_by_id(b), scenario.user_by_id(u), 1.0)
                for (b, u) in self.links
            ]
        )
        self.layout: List[Tuple[str, Tuple[str, ...]]] = [
            (u.id, scenario.coverage[u.id]) for u in scenario.users
        ]
        self.block_slices: List[slice] = []
        pos = 0
        for _, choices in self.layout:
            self.block_slices.append(slice(pos, pos + len(choices)))
            pos += len(choices)
        self.dim = pos
        self._noise = {bs.id: bs.noise_power for bs in scenario.base_stations}
        self._bandwidth = {bs.id: bs.bandwidth for bs in scenario.base_stations}
        self._kind = {bs.id: bs.kind for bs in scenario.base_stations}
        self._interferers = {
            bs.id: scenario.interferers_of(bs.id) for bs in scenario.base_stations
        }
        # users covered by each BS, as (block index, choice offset) pairs
        self._covered: Dict[str, List[Tuple[int, int]]] = {
            bs.id: [] for bs in scenario.base_stations
        }
        for bi, (owner, choices) in enumerate(self.layout):
            for ci, bs_id in enumerate(choices):
                self._covered[bs_id].append((bi, ci))
        self._net_value = {
            (u.id, bs_id): u.net_values[bs_id]
            for u in scenario.users
            for bs_id in scenario.coverage[u.id]
        }
        for bs in scenario.base_stations:
            n_int = len(self._interferers[bs.id])
            if n_int > MAX_INTERFERERS:
                raise ValueError(
                    f"{bs.id}: co-channel set of {n_int} exceeds "
                    f"{MAX_INTERFERERS}-interferer enumeration limit"
                )

    # -- state access -------------------------------------------------

    def unit_power(self, bs_id: str, user_id: str) -> float:
        return float(self._unit_power[self._link_index[(bs_id, user_id)]])

    def link_power(self, bs_id: str, user_id: str, gains: Optional[np.ndarray]) -> float:
        i = self._link_index[(bs_id, user_id)]
        g = 1.0 if gains is None else float(gains[i])
        return float(self._unit_power[i]) * g

    def gains_from_draw(self, draw: Optional[FadingDraw]) -> Optional[np.ndarray]:
        if draw is None:
            return None
        return np.array([draw.get(b, u) for (b, u) in self.links])

    def _selection_mass(self, flat: np.ndarray, bs_id: str) -> float:
        """Expected number of selectors of a BS: sum of covered users' probs
        (scaled by the group size in the homogeneous game)."""
        total = 0.0
        for bi, ci in self._covered[bs_id]:
            total += flat[self.block_slices[bi]][ci]
        if self.scenario.kind is GameKind.HOMOGENEOUS:
            total *= self.scenario.group_size
        return total

    def silent_probability(self, flat: np.ndarray, bs_id: str) -> float:
        """Probability that nobody selects the BS: prod_j (1 - x_j)."""
        q = 1.0
        for bi, ci in self._covered[bs_id]:
            q *= 1.0 - flat[self.block_slices[bi]][ci]
        return q

    # -- rates and utilities -------------------------------------------

    def rates_and_utilities(
        self, flat: np.ndarray, gains: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Per-choice expected rates and utilities at a flattened state.

        The state is clipped into [0, 1] before any utility is computed;
        rates use the clipped probabilities throughout.
        """
        x = np.clip(np.asarray(flat, dtype=float), 0.0, 1.0)
        rates = np.empty(self.dim)
        utils = np.empty(self.dim)
        homogeneous = self.scenario.kind is GameKind.HOMOGENEOUS
        for bi, (owner, choices) in enumerate(self.layout):
            sl = self.block_slices[bi]
            probs = x[sl]
            for ci, bs_id in enumerate(choices):
                width = self._bandwidth[bs_id]
                noise = self._noise[bs_id]
                signal = self.link_power(bs_id, owner, gains)
                occupancy = max(self._selection_mass(x, bs_id), EPS_SHARE)
                if self._kind[bs_id] is BsKind.UHF and self._interferers[bs_id]:
                    powers = [
                        self.link_power(w, owner, gains)
                        for w in self._interferers[bs_id]
                    ]
                    actives = [
                        1.0 - self.silent_probability(x, w)
                        for w in self._interferers[bs_id]
                    ]
                    capacity = expected_sinr_capacity(signal, powers, actives, noise)
                else:
                    capacity = math.log2(1.0 + signal / noise)
                if homogeneous:
                    # conditional per-user rate at expected occupancy y * N
                    rate = width / occupancy * capacity
                else:
                    # unconditional expected rate, own probability included
                    rate = width * probs[ci] / occupancy * capacity
                rates[sl.start + ci] = rate
                utils[sl.start + ci] = self._net_value[(owner, bs_id)] * rate
        return rates, utils

    def average_utilities(self, flat: np.ndarray, utils: np.ndarray) -> np.ndarray:
        """Per-block probability-weighted average utility."""
        x = np.clip(np.asarray(flat, dtype=float), 0.0, 1.0)
        out = np.empty(len(self.layout))
        for bi in range(len(self.layout)):
            sl = self.block_slices[bi]
            out[bi] = float(x[sl] @ utils[sl])
        return out

    def field(self, flat: np.ndarray, gains: Optional[np.ndarray] = None) -> np.ndarray:
        """Replicator field exp(-delta) p (U - Ubar), flattened."""
        x = np.clip(np.asarray(flat, dtype=float), 0.0, 1.0)
        _, utils = self.rates_and_utilities(x, gains)
        out = np.empty(self.dim)
        for bi in range(len(self.layout)):
            sl = self.block_slices[bi]
            avg = float(x[sl] @ utils[sl])
            out[sl] = self.gain * x[sl] * (utils[sl] - avg)
        return out


# ----------------------------------------------------------------------
# Spec-surface wrappers
# ----------------------------------------------------------------------

def _require_homogeneous(scenario: Scenario):
    if scenario.kind is not GameKind.HOMOGENEOUS:
        raise ValueError("operation requires a homogeneous scenario")


def homogeneous_rates(
    state: StrategyState, scenario: Scenario, fading: Optional[FadingDraw] = None
) -> np.ndarray:
    """Expected per-user rates W / (y N) log2(1 + SNR) for the group block."""
    _require_homogeneous(scenario)
    ev = GameEvaluator(scenario)
    rates, _ = ev.rates_and_utilities(state.flatten(), ev.gains_from_draw(fading))
    return rates


def homogeneous_utilities(
    state: StrategyState, scenario: Scenario, fading: Optional[FadingDraw] = None
) -> np.ndarray:
    """Net-value-scaled rates for the group block."""
    _require_homogeneous(scenario)
    ev = GameEvaluator(scenario)
    _, utils = ev.rates_and_utilities(state.flatten(), ev.gains_from_draw(fading))
    return utils


def replicator_field(
    state: StrategyState,
    scenario: Scenario,
    delta: Optional[float] = None,
    fading: Optional[FadingDraw] = None,
) -> np.ndarray:
    """Replicator field at a state, flattened in the state's layout."""
    ev = GameEvaluator(scenario, delta)
    return ev.field(state.flatten(), ev.gains_from_draw(fading))


def heterogeneous_uhf_rate(
    user_id: str,
    bs_id: str,
    state: StrategyState,
    scenario: Scenario,
    fading: Optional[FadingDraw] = None,
) -> float:
    """Expected UHF rate for one user under co-channel interference.

    Subset enumeration over the interferer set: interferer w is active
    with probability 1 - prod_{j covered by w} (1 - x_{w,j}); each
    activity pattern contributes its SINR capacity at its probability.
    Reduces to the closed four-case expression for two interferers.
    """
    if scenario.bs_by_id(bs_id).kind is not BsKind.UHF:
        raise ValueError(f"{bs_id} is not a UHF station")
    if bs_id not in scenario.coverage[user_id]:
        raise ValueError(f"{bs_id} does not cover {user_id}")
    ev = GameEvaluator(scenario)
    rates, _ = ev.rates_and_utilities(state.flatten(), ev.gains_from_draw(fading))
    for bi, (owner, choices) in enumerate(ev.layout):
        if owner == user_id:
            return float(rates[ev.block_slices[bi]][choices.index(bs_id)])
    raise KeyError(user_id)


def heterogeneous_rates_and_utilities(
    state: StrategyState,
    scenario: Scenario,
    fading: Optional[FadingDraw] = None,
) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Per-user rate and utility vectors, keyed by owner, in choice order."""
    ev = GameEvaluator(scenario)
    rates, utils = ev.rates_and_utilities(state.flatten(), ev.gains_from_draw(fading))
    rate_map = {}
    util_map = {}
    for bi, (owner, _) in enumerate(ev.layout):
        sl = ev.block_slices[bi]
        rate_map[owner] = rates[sl].copy()
        util_map[owner] = utils[sl].copy()
    return rate_map, util_map

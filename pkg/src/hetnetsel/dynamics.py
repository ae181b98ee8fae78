"""Trajectory integration and experiment harnesses.

Wires the replicator field of a scenario into the fractional solver
(classical RK4 at order 1), with optional piecewise-constant fading:
the channel gains are redrawn every ``interval`` of simulated time and
the field sees the draw active at its evaluation time, so the memory
convolution keeps the field values that were actually in force at each
past node.

Recorded node states pass a simplex guard: drift beyond SIMPLEX_DRIFT_TOL
clamps the offending block back onto the simplex and logs one warning per
run; smaller drift is left untouched so that solver defects stay visible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fraccalc
from .fraccalc import FdeConfig, SampledFunction
from .game import GameEvaluator, StrategyState
from .scenarios import GameKind, Scenario

logger = logging.getLogger(__name__)

__all__ = [
    "SIMPLEX_DRIFT_TOL",
    "FadingSchedule",
    "Trajectory",
    "DirectionField",
    "MonteCarloReport",
    "run",
    "detect_convergence",
    "closed_form_equilibrium",
    "direction_field",
    "cumulative_utility",
    "adaptation_rate",
    "monte_carlo",
]

#: Coordinates may drift this far outside the simplex before the guard
#: clamps and renormalizes (and logs a warning).
SIMPLEX_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class FadingSchedule:
    """Piecewise-constant fading: redraw all link gains every ``interval``.

    ``seed`` makes the draw sequence reproducible; the matrix of gains is
    drawn once up front (unit-mean exponential per link per epoch), so a
    schedule is immutable and safe to share.
    """

    interval: float
    seed: int

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("fading interval must be positive")

    def draw_gains(self, scenario: Scenario, horizon: float) -> np.ndarray:
        n_epochs = int(math.ceil(horizon / self.interval + 1e-9)) + 1
        rng = np.random.default_rng(self.seed)
        return rng.exponential(1.0, size=(n_epochs, len(scenario.links)))

    def epoch_of(self, t: float, n_epochs: int) -> int:
        return min(int(t / self.interval + 1e-9), n_epochs - 1)


@dataclass(frozen=True)
class Trajectory:
    """Time grid with flattened strategy states and recorded utilities.

    ``layout`` fixes the flattening: one (owner, choices) entry per block,
    probabilities concatenated in that order.  ``utilities`` holds the
    per-choice utilities along the trajectory and ``avg_utilities`` the
    per-block probability-weighted averages, both evaluated under the
    fading actually in force at each node.
    """

    times: np.ndarray
    states: np.ndarray
    layout: Tuple[Tuple[str, Tuple[str, ...]], ...]
    utilities: np.ndarray
    avg_utilities: np.ndarray
    beta: float
    delta: float
    scenario_name: str = ""

    @property
    def owners(self) -> Tuple[str, ...]:
        return tuple(owner for owner, _ in self.layout)

    def block_slice(self, owner: str) -> slice:
        pos = 0
        for o, choices in self.layout:
            if o == owner:
                return slice(pos, pos + len(choices))
            pos += len(choices)
        raise KeyError(owner)

    def state_at(self, index: int, scenario: Scenario) -> StrategyState:
        return StrategyState.from_flat(
            scenario, self.states[index], float(self.times[index])
        )

    def column_names(self) -> List[str]:
        names = []
        for owner, choices in self.layout:
            for c in choices:
                names.append(f"x:{owner}:{c}")
        return names


@dataclass(frozen=True)
class DirectionField:
    """Replicator field sampled on a barycentric grid of a 3-choice game.

    ``grid`` rows are (y_first, y_second) with the third coordinate
    implied; ``vectors`` are the matching field components.  The
    equilibrium marker comes from a converged reference run polished to a
    fixed point.
    """

    grid: np.ndarray
    vectors: np.ndarray
    equilibrium: np.ndarray
    choices: Tuple[str, ...]
    beta: float

    def __post_init__(self):
        g = self.grid
        if np.any(g < 0.0) or np.any(g.sum(axis=1) > 1.0 + 1e-12):
            raise ValueError("grid points must satisfy y1, y2 >= 0, y1 + y2 <= 1")


@dataclass(frozen=True)
class MonteCarloReport:
    """Fading Monte-Carlo aggregate for one beta.

    Series are cumulative utilities averaged over owners; ``loss`` is the
    no-fading baseline minus the across-replicate mean, pointwise.
    """

    beta: float
    replicates: int
    seed: int
    delta_fade: float
    times: np.ndarray
    mean_cumulative_utility: np.ndarray
    std_cumulative_utility: np.ndarray
    baseline_cumulative_utility: np.ndarray

    @property
    def loss(self) -> np.ndarray:
        return self.baseline_cumulative_utility - self.mean_cumulative_utility


class _SimplexGuard:
    """Clamp recorded states onto the simplex when drift exceeds tolerance."""

    def __init__(self, block_slices: Sequence[slice]):
        self.block_slices = block_slices
        self.violations = 0
        self.first_violation_time: Optional[float] = None

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        needs_fix = False
        for sl in self.block_slices:
            block = y[sl]
            if (
                np.any(block < -SIMPLEX_DRIFT_TOL)
                or np.any(block > 1.0 + SIMPLEX_DRIFT_TOL)
                or abs(block.sum() - 1.0) > SIMPLEX_DRIFT_TOL
            ):
                needs_fix = True
                break
        if not needs_fix:
            return y
        if self.violations == 0:
            self.first_violation_time = t
            logger.warning(
                "simplex drift beyond %.1e at t=%.6g; clamping and renormalizing",
                SIMPLEX_DRIFT_TOL,
                t,
            )
        self.violations += 1
        out = y.copy()
        for sl in self.block_slices:
            block = np.clip(out[sl], 0.0, 1.0)
            total = block.sum()
            out[sl] = block / total if total > 0 else 1.0 / len(block)
        return out


def _make_field(evaluator: GameEvaluator, gains: Optional[np.ndarray], interval: float):
    """Field callback with piecewise-constant fading lookup by time."""
    if gains is None:
        def field(t: float, y: np.ndarray) -> np.ndarray:
            return evaluator.field(y, None)
        return field
    n_epochs = gains.shape[0]

    def field(t: float, y: np.ndarray) -> np.ndarray:
        k = min(int(t / interval + 1e-9), n_epochs - 1)
        return evaluator.field(y, gains[k])

    return field


def run(
    scenario: Scenario,
    beta: Optional[float] = None,
    delta: Optional[float] = None,
    step: Optional[float] = None,
    horizon: Optional[float] = None,
    fading_schedule: Optional[FadingSchedule] = None,
    initial_state: Optional[np.ndarray] = None,
    corrector_iterations: int = 2,
) -> Trajectory:
    """Integrate the scenario's replicator dynamics.

    Parameters default to the scenario's dynamics block.  ``beta`` = 1
    runs the classical game; fractional orders run the Caputo PECE solver
    starting at rest for beta > 1.  ``initial_state`` overrides the
    scenario's initial strategies (flattened layout).
    """
    beta = scenario.dynamics.beta if beta is None else float(beta)
    delta = scenario.dynamics.delta if delta is None else float(delta)
    step = scenario.dynamics.step if step is None else float(step)
    horizon = scenario.dynamics.horizon if horizon is None else float(horizon)

    evaluator = GameEvaluator(scenario, delta)
    if initial_state is None:
        y0 = StrategyState.initial(scenario).flatten()
    else:
        y0 = np.asarray(initial_state, dtype=float)
        if y0.shape != (evaluator.dim,):
            raise ValueError(
                f"initial_state must have {evaluator.dim} entries, got {y0.shape}"
            )

    gains = None
    if fading_schedule is not None:
        gains = fading_schedule.draw_gains(scenario, horizon)
    interval = fading_schedule.interval if fading_schedule is not None else 1.0
    field = _make_field(evaluator, gains, interval)
    guard = _SimplexGuard(evaluator.block_slices)

    config = FdeConfig(
        beta=beta,
        step=step,
        horizon=horizon,
        initial_state=y0,
        corrector_iterations=corrector_iterations,
    )
    solution = fraccalc.fde_solve(field, config, postprocess=guard)
    if guard.violations:
        logger.warning(
            "simplex guard engaged %d time(s), first at t=%.6g",
            guard.violations,
            guard.first_violation_time,
        )

    n_nodes = len(solution)
    utilities = np.empty((n_nodes, evaluator.dim))
    avg = np.empty((n_nodes, len(evaluator.layout)))
    for i in range(n_nodes):
        t = float(solution.times[i])
        row_gains = None
        if gains is not None:
            row_gains = gains[min(int(t / interval + 1e-9), gains.shape[0] - 1)]
        _, u = evaluator.rates_and_utilities(solution.values[i], row_gains)
        utilities[i] = u
        avg[i] = evaluator.average_utilities(solution.values[i], u)
    return Trajectory(
        times=solution.times,
        states=solution.values,
        layout=tuple(evaluator.layout),
        utilities=utilities,
        avg_utilities=avg,
        beta=beta,
        delta=delta,
        scenario_name=scenario.name,
    )


def detect_convergence(
    traj: Trajectory, epsilon: float, window: int
) -> Optional[Tuple[float, np.ndarray]]:
    """Earliest node after which the state stays within ``epsilon``.

    A node converges when every later trailing window of ``window`` nodes
    has per-coordinate range below ``epsilon``; returns (time, state) at
    the first such node with a full trailing window, or None.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if window < 2:
        raise ValueError("window must span at least 2 nodes")
    n = len(traj.times)
    if n < window:
        return None
    states = traj.states
    # rolling per-coordinate range over trailing windows
    from numpy.lib.stride_tricks import sliding_window_view

    windows = sliding_window_view(states, window, axis=0)
    ranges = windows.max(axis=2) - windows.min(axis=2)
    quiet = np.all(ranges < epsilon, axis=1)  # one flag per window start
    bad = np.nonzero(~quiet)[0]
    first_quiet_start = 0 if bad.size == 0 else int(bad[-1]) + 1
    if first_quiet_start >= windows.shape[0]:
        return None
    node = first_quiet_start + window - 1
    return float(traj.times[node]), states[node].copy()


def closed_form_equilibrium(scenario: Scenario) -> np.ndarray:
    """Interior fixed point of the homogeneous game.

    Utilities equalize where the share is proportional to the per-station
    score (net value) x (bandwidth) x log2(1 + SNR); normalizing the
    scores gives the equilibrium mix.
    """
    if scenario.kind is not GameKind.HOMOGENEOUS:
        raise ValueError("closed-form equilibrium applies to the homogeneous game")
    evaluator = GameEvaluator(scenario)
    owner = scenario.users[0].id
    scores = []
    for bs_id in scenario.coverage[owner]:
        bs = scenario.bs_by_id(bs_id)
        snr = evaluator.unit_power(bs_id, owner) / bs.noise_power
        lam = scenario.user_by_id(owner).net_values[bs_id]
        scores.append(lam * bs.bandwidth * math.log2(1.0 + snr))
    scores = np.array(scores)
    return scores / scores.sum()


def _polish_fixed_point(
    evaluator: GameEvaluator, start: np.ndarray, tol: float = 1e-12
) -> np.ndarray:
    """Newton-polish an interior 3-choice fixed point in two free coords."""
    y = start.copy()

    def reduced_field(free):
        state = np.array([free[0], free[1], 1.0 - free[0] - free[1]])
        return evaluator.field(state)[:2]

    free = y[:2].copy()
    for _ in range(60):
        f0 = reduced_field(free)
        if np.abs(f0).max() < tol:
            break
        eps = 1e-8
        jac = np.empty((2, 2))
        for j in range(2):
            bumped = free.copy()
            bumped[j] += eps
            jac[:, j] = (reduced_field(bumped) - f0) / eps
        try:
            delta_free = np.linalg.solve(jac, -f0)
        except np.linalg.LinAlgError:
            break
        # damped update, kept inside the simplex
        scale = 1.0
        for _ in range(30):
            cand = free + scale * delta_free
            if cand.min() > 0 and cand.sum() < 1.0:
                break
            scale /= 2.0
        free = free + scale * delta_free
    return np.array([free[0], free[1], 1.0 - free[0] - free[1]])


def direction_field(
    scenario: Scenario,
    beta: float,
    resolution: int,
    equilibrium_step: Optional[float] = None,
    equilibrium_horizon: Optional[float] = None,
) -> DirectionField:
    """Instantaneous replicator field on a triangular interior grid.

    Grid: lattice spacing 1/(resolution + 2), points (i, j) with
    i, j >= 1 and i + j <= resolution + 1, giving
    resolution (resolution + 1) / 2 interior nodes (120 at resolution 15).
    The field is evaluated instantaneously (it is time-invariant without
    fading); the equilibrium marker comes from a converged reference run
    at the requested beta, Newton-polished onto the fixed point.
    """
    if scenario.kind is not GameKind.HOMOGENEOUS:
        raise ValueError("direction fields require a 3-choice homogeneous scenario")
    if len(scenario.coverage[scenario.users[0].id]) != 3:
        raise ValueError("direction fields require exactly 3 choices")
    if resolution < 5:
        raise ValueError("resolution must be at least 5")
    evaluator = GameEvaluator(scenario)
    spacing = 1.0 / (resolution + 2)
    pts = []
    vecs = []
    for i in range(1, resolution + 1):
        for j in range(1, resolution + 2 - i):
            yu = i * spacing
            ym = j * spacing
            state = np.array([yu, ym, 1.0 - yu - ym])
            f = evaluator.field(state)
            pts.append((yu, ym))
            vecs.append((f[0], f[1]))
    reference = run(
        scenario,
        beta=beta,
        step=equilibrium_step if equilibrium_step is not None else scenario.dynamics.step,
        horizon=(
            equilibrium_horizon
            if equilibrium_horizon is not None
            else scenario.dynamics.horizon
        ),
    )
    equilibrium = _polish_fixed_point(evaluator, reference.states[-1])
    owner = scenario.users[0].id
    return DirectionField(
        grid=np.array(pts),
        vectors=np.array(vecs),
        equilibrium=equilibrium,
        choices=scenario.coverage[owner],
        beta=beta,
    )


def cumulative_utility(traj: Trajectory, owner: str) -> np.ndarray:
    """Trapezoidal running integral of the owner's average utility."""
    owners = list(traj.owners)
    if owner not in owners:
        raise KeyError(f"unknown owner {owner!r}")
    series = traj.avg_utilities[:, owners.index(owner)]
    dt = np.diff(traj.times)
    increments = (series[1:] + series[:-1]) / 2.0 * dt
    return np.concatenate([[0.0], np.cumsum(increments)])


def adaptation_rate(traj: Trajectory, smooth_width: int = 51) -> np.ndarray:
    """Smoothed L1 strategy speed ||dX||_1 / dt along the trajectory.

    Forward differences with the final value repeated, then a centered
    moving average of ``smooth_width`` nodes (edges use the available
    part of the window).  A relative metric: use it to compare runs, not
    as a calibrated physical rate.
    """
    if len(traj.times) < 2:
        raise ValueError("adaptation rate needs at least 2 nodes")
    if smooth_width < 1:
        raise ValueError("smooth_width must be positive")
    dt = np.diff(traj.times)
    speed = np.abs(np.diff(traj.states, axis=0)).sum(axis=1) / dt
    speed = np.append(speed, speed[-1])
    kernel = np.ones(smooth_width)
    num = np.convolve(speed, kernel, mode="same")
    den = np.convolve(np.ones_like(speed), kernel, mode="same")
    return num / den


def monte_carlo(
    scenario: Scenario,
    beta: float,
    replicates: int,
    delta_fade: float,
    base_seed: int,
    step: Optional[float] = None,
    horizon: Optional[float] = None,
    delta: Optional[float] = None,
) -> MonteCarloReport:
    """Fading Monte-Carlo: mean/std cumulative utility against a no-fading
    baseline.

    Replicate r uses seed ``base_seed XOR r``; all replicates run serially
    in replicate order, so the report is deterministic for a fixed seed.
    The per-replicate series is the across-owner mean cumulative utility.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if delta_fade <= 0:
        raise ValueError("delta_fade must be positive")
    baseline_traj = run(scenario, beta=beta, delta=delta, step=step, horizon=horizon)
    owners = baseline_traj.owners

    def owner_mean_cumulative(traj: Trajectory) -> np.ndarray:
        acc = np.zeros(len(traj.times))
        for o in owners:
            acc += cumulative_utility(traj, o)
        return acc / len(owners)

    baseline = owner_mean_cumulative(baseline_traj)
    series = np.empty((replicates, baseline.size))
    for r in range(replicates):
        schedule = FadingSchedule(interval=delta_fade, seed=base_seed ^ r)
        traj = run(
            scenario,
            beta=beta,
            delta=delta,
            step=step,
            horizon=horizon,
            fading_schedule=schedule,
        )
        series[r] = owner_mean_cumulative(traj)
    return MonteCarloReport(
        beta=beta,
        replicates=replicates,
        seed=base_seed,
        delta_fade=delta_fade,
        times=baseline_traj.times,
        mean_cumulative_utility=series.mean(axis=0),
        std_cumulative_utility=series.std(axis=0),
        baseline_cumulative_utility=baseline,
    )

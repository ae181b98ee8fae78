"""Command-line front end.

Subcommands: simulate | direction-field | montecarlo | scenario-validate.
Each writes CSVs plus a manifest.json sufficient to reproduce the outputs
bit-exactly (scenario hash, solver parameters, seed, tool version).
Numbers are serialized with 17 significant digits; reruns with identical
flags and seed produce byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib.metadata import version as pkg_version
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import (
    FadingSchedule,
    adaptation_rate,
    cumulative_utility,
    direction_field,
    monte_carlo,
    run,
)
from .fraccalc import FieldEvaluationError
from .scenarios import Scenario, ScenarioError, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_DIR_ENV = "HETNETSEL_OUT_DIR"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_csv(path: Path, header: List[str], rows) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, command: str, scenario: Scenario,
                    params: dict, outputs: List[str]) -> None:
    manifest = {
        "tool": "hetnetsel",
        "version": _tool_version(),
        "command": command,
        "scenario": {
            "name": scenario.name,
            "source": scenario.source_name,
            "sha256": scenario.source_sha256,
        },
        "parameters": params,
        "outputs": sorted(outputs),
    }
    path = out_dir / "manifest.json"
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _tool_version() -> str:
    try:
        return pkg_version("hetnetsel")
    except Exception:
        return "unknown"


def _out_dir(arg: Optional[str]) -> Path:
    base = arg or os.environ.get(OUT_DIR_ENV, ".")
    out = Path(base)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _beta_list(raw: str) -> List[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse beta list {raw!r}") from None


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    out = _out_dir(args.out_dir)
    schedule = None
    if args.fading:
        schedule = FadingSchedule(interval=args.delta_fade, seed=args.seed)
    traj = run(
        scenario,
        beta=args.beta,
        delta=args.delta,
        step=args.step,
        horizon=args.horizon,
        fading_schedule=schedule,
    )

    strat_cols = traj.column_names()
    owners = list(traj.owners)
    header = ["t"] + strat_cols + [f"avgu:{o}" for o in owners]
    rows = np.column_stack([traj.times, traj.states, traj.avg_utilities])
    _write_csv(out / "trajectory.csv", header, rows)

    rate = adaptation_rate(traj, smooth_width=args.smooth_width)
    _write_csv(out / "adaptation.csv", ["t", "rate"], np.column_stack([traj.times, rate]))

    cum = np.column_stack([cumulative_utility(traj, o) for o in owners])
    _write_csv(
        out / "cumulative.csv",
        ["t"] + [f"cum:{o}" for o in owners],
        np.column_stack([traj.times, cum]),
    )
    _write_manifest(
        out,
        "simulate",
        scenario,
        {
            "beta": traj.beta,
            "delta": traj.delta,
            "step": float(traj.times[1] - traj.times[0]),
            "horizon": float(traj.times[-1]),
            "seed": args.seed,
            "fading": bool(args.fading),
            "delta_fade": args.delta_fade if args.fading else None,
            "smooth_width": args.smooth_width,
        },
        ["trajectory.csv", "adaptation.csv", "cumulative.csv"],
    )
    return EXIT_OK


def cmd_direction_field(args) -> int:
    scenario = load_scenario(args.scenario)
    df = direction_field(
        scenario,
        beta=args.beta,
        resolution=args.resolution,
        equilibrium_horizon=args.equilibrium_horizon,
    )
    out_path = Path(args.out) if args.out else _out_dir(args.out_dir) / "field.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    header = ["y_u", "y_m", "dy_u", "dy_m", "equilibrium"]
    rows = [
        (g[0], g[1], v[0], v[1], 0.0)
        for g, v in zip(df.grid, df.vectors)
    ]
    from .game import GameEvaluator

    eq_field = GameEvaluator(scenario).field(df.equilibrium)
    rows.append((df.equilibrium[0], df.equilibrium[1], eq_field[0], eq_field[1], 1.0))
    _write_csv(out_path, header, rows)
    _write_manifest(
        out_path.parent,
        "direction-field",
        scenario,
        {
            "beta": args.beta,
            "resolution": args.resolution,
            "equilibrium_horizon": args.equilibrium_horizon,
        },
        [out_path.name],
    )
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    scenario = load_scenario(args.scenario)
    out = _out_dir(args.out_dir)
    betas = args.betas
    reports = [
        monte_carlo(
            scenario,
            beta=beta,
            replicates=args.replicates,
            delta_fade=args.delta_fade,
            base_seed=args.seed,
            step=args.step,
            horizon=args.horizon,
        )
        for beta in betas
    ]
    header = ["t"]
    columns = [reports[0].times]
    for rep in reports:
        tag = _fmt(rep.beta)
        header += [f"mean:{tag}", f"std:{tag}", f"baseline:{tag}", f"loss:{tag}"]
        columns += [
            rep.mean_cumulative_utility,
            rep.std_cumulative_utility,
            rep.baseline_cumulative_utility,
            rep.loss,
        ]
    _write_csv(out / "montecarlo.csv", header, np.column_stack(columns))
    _write_manifest(
        out,
        "montecarlo",
        scenario,
        {
            "betas": betas,
            "replicates": args.replicates,
            "delta_fade": args.delta_fade,
            "seed": args.seed,
            "step": args.step,
            "horizon": args.horizon,
        },
        ["montecarlo.csv"],
    )
    return EXIT_OK


def cmd_scenario_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(
        f"OK: {scenario.name} ({scenario.kind.value}), "
        f"{len(scenario.base_stations)} base stations, "
        f"{len(scenario.users)} strategy owner(s), sha256 {scenario.source_sha256[:12]}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetnetsel",
        description=(
            "Classical and fractional replicator dynamics for network "
            "selection in heterogeneous wireless networks"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate one trajectory and dump CSVs")
    sim.add_argument("--scenario", required=True, help="preset name or YAML path")
    sim.add_argument("--beta", type=float, default=None, help="memory order (default: scenario)")
    sim.add_argument("--delta", type=float, default=None, help="adaptation-gain exponent")
    sim.add_argument("--step", type=float, default=None, help="solver step, seconds")
    sim.add_argument("--horizon", type=float, default=None, help="simulated horizon, seconds")
    sim.add_argument("--seed", type=int, default=0, help="fading seed")
    sim.add_argument("--fading", action="store_true", help="redraw channel gains")
    sim.add_argument("--delta-fade", type=float, default=0.01, help="fading redraw interval")
    sim.add_argument("--smooth-width", type=int, default=51,
                     help="adaptation-rate smoothing window, nodes")
    sim.add_argument("--out-dir", default=None, help=f"output dir (or ${OUT_DIR_ENV})")
    sim.set_defaults(func=cmd_simulate)

    dfp = sub.add_parser("direction-field", help="sample the replicator field on a simplex grid")
    dfp.add_argument("--scenario", required=True)
    dfp.add_argument("--beta", type=float, default=1.0)
    dfp.add_argument("--resolution", type=int, default=15)
    dfp.add_argument("--equilibrium-horizon", type=float, default=None,
                     help="reference-run horizon for the equilibrium marker")
    dfp.add_argument("--out", default=None, help="output CSV path (default field.csv)")
    dfp.add_argument("--out-dir", default=None)
    dfp.set_defaults(func=cmd_direction_field)

    mc = sub.add_parser("montecarlo", help="fading Monte-Carlo over a list of orders")
    mc.add_argument("--scenario", required=True)
    mc.add_argument("--betas", type=_beta_list, default=[0.7, 1.0, 1.3],
                    help="comma-separated beta list")
    mc.add_argument("--replicates", type=int, default=100)
    mc.add_argument("--delta-fade", type=float, default=0.01)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--step", type=float, default=None)
    mc.add_argument("--horizon", type=float, default=None)
    mc.add_argument("--out-dir", default=None)
    mc.set_defaults(func=cmd_montecarlo)

    val = sub.add_parser("scenario-validate", help="load and validate a scenario")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_scenario_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as err:
        print(f"scenario error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FieldEvaluationError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

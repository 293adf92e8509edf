"""Command-line entry point: single runs and full sweeps.

Exit status: 0 on success, 2 on usage/configuration errors, 1 on runtime
errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .metrics import CSV_COLUMNS
from .scenario import Scenario, ScenarioConfig, run_simulation
from .sweep import DEFAULT_X_VALUES, SweepSpec, emit_csv, run_sweep, write_outputs
from .world import ConfigurationError, SensorModel, WorldConfig

_CONFIG_KEYS = {
    "scenario",
    "ics",
    "ticks",
    "seed",
    "replications",
    "p_fall",
    "p_fn",
    "p_fp",
    "n_ea",
    "n_pc",
    "n_ma",
    "grid",
    "count_return_travel",
    "dispatch_delay",
    "jobs",
    "trace",
    "out",
}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _parse_probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"probability out of [0, 1]: {text}")
    return value


def _parse_ics(text: str) -> tuple[int, ...]:
    """Either a single count ("12") or a range ("0..40:5")."""
    try:
        if ".." in text:
            bounds, _, step_text = text.partition(":")
            lo_text, _, hi_text = bounds.partition("..")
            lo, hi = int(lo_text), int(hi_text)
            step = int(step_text) if step_text else 1
            if lo < 0 or hi < lo or step < 1:
                raise ValueError
            return tuple(range(lo, hi + 1, step))
        value = int(text)
        if value < 0:
            raise ValueError
        return (value,)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad carer count or range: {text!r}")


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        w_text, _, h_text = text.lower().partition("x")
        width, height = int(w_text), int(h_text)
        if width < 1 or height < 1 or width % 2 == 0 or height % 2 == 0:
            raise ValueError
        return width, height
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"grid must look like 33x33 with odd extents, got {text!r}"
        )


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", choices=["s1", "s2"], default="s1")
    parser.add_argument("--ics", type=_parse_ics, default=None,
                        help="informal carer count N, or a range A..B:STEP")
    parser.add_argument("--ticks", type=int, default=10_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--replications", type=int, default=None)
    parser.add_argument("--p-fall", type=_parse_probability, default=1 / 600)
    parser.add_argument("--p-fn", type=_parse_probability, default=1 / 5)
    parser.add_argument("--p-fp", type=_parse_probability, default=1 / 500)
    parser.add_argument("--n-ea", type=int, default=30)
    parser.add_argument("--n-pc", type=int, default=6)
    parser.add_argument("--n-ma", type=int, default=5)
    parser.add_argument("--grid", type=_parse_grid, default=(33, 33))
    parser.add_argument("--count-return-travel", type=_parse_bool, default=True)
    parser.add_argument("--dispatch-delay", type=int, default=5)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--trace", type=Path, default=None)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with defaults for the flags above")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fallsim",
        description="Seedable multi-agent telecare fall-response simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_parser = sub.add_parser("run", help="run a single experiment cell")
    _add_common_flags(run_parser)
    sweep_parser = sub.add_parser("sweep", help="run a carer-count sweep with replications")
    _add_common_flags(sweep_parser)
    return parser


def _apply_config_file(
    parser: argparse.ArgumentParser, args: argparse.Namespace, argv: list[str]
) -> None:
    if args.config is None:
        return
    try:
        data = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config file: {exc}")
    if not isinstance(data, dict):
        parser.error("config file must hold a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
    # Explicit command-line flags win over file values.
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for key, value in data.items():
        flag = "--" + key.replace("_", "-")
        if flag in given:
            continue
        if key == "ics":
            value = _parse_ics(str(value))
        elif key == "grid":
            value = _parse_grid(str(value))
        elif key in ("p_fall", "p_fn", "p_fp"):
            value = _parse_probability(str(value))
        elif key in ("trace", "out"):
            value = Path(value)
        setattr(args, key, value)


def _scenario_config(args: argparse.Namespace, n_informal: int, seed: int) -> ScenarioConfig:
    width, height = args.grid
    return ScenarioConfig(
        scenario=Scenario(args.scenario),
        n_informal=n_informal,
        ticks=args.ticks,
        p_fall=args.p_fall,
        sensor=SensorModel(p_false_negative=args.p_fn, p_false_positive=args.p_fp),
        world=WorldConfig(
            half_width=width // 2,
            half_height=height // 2,
            n_elderly=args.n_ea,
            n_professional=args.n_pc,
            n_ambulances=args.n_ma,
        ),
        seed=seed,
        dispatch_delay=args.dispatch_delay,
        count_return_travel=args.count_return_travel,
    )


def _trace_sink(path: Optional[Path]):
    if path is None:
        return None, None
    fh = path.open("w", encoding="utf-8")

    def sink(record: dict) -> None:
        fh.write(json.dumps(record) + "\n")

    return sink, fh


def _cmd_run(args: argparse.Namespace) -> int:
    ics = args.ics[0] if args.ics else 0
    config = _scenario_config(args, n_informal=ics, seed=args.seed)
    sink, fh = _trace_sink(args.trace)
    try:
        report = run_simulation(config, trace_sink=sink)
    finally:
        if fh is not None:
            fh.close()
    if args.out is not None:
        emit_csv([report.csv_row()], args.out)
    for name, value in zip(CSV_COLUMNS, report.csv_row()):
        print(f"{name}: {value}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    x_values = args.ics if args.ics else DEFAULT_X_VALUES
    spec = SweepSpec(
        scenario=Scenario(args.scenario),
        x_values=tuple(x_values),
        replications=args.replications if args.replications is not None else 10,
        base_seed=args.seed,
        base_config=_scenario_config(args, n_informal=0, seed=args.seed),
        jobs=max(1, args.jobs),
    )
    result = run_sweep(spec)
    out_prefix = args.out if args.out is not None else Path(f"sweep_{args.scenario}")
    paths = write_outputs(result, out_prefix)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    _apply_config_file(parser, args, argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_sweep(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

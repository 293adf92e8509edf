#!/usr/bin/env python3
"""Reproduce the two published result tables.

Runs one 10000-tick replication per carer count (X = 0, 5, ..., 40) for each
deployment and writes a transposed CSV per scenario: one row per table
metric, one column per X value — the same shape as the printed tables.
Absolute counts differ from the published ones (the original world geometry
and random streams are not recoverable), but the rates, ratios, and trends
match; see tests/test_acceptance.py for the quantitative gate.
"""
import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fallsim.metrics import CSV_COLUMNS
from fallsim.scenario import Scenario
from fallsim.sweep import DEFAULT_X_VALUES, SweepSpec, run_sweep


def reproduce(scenario: Scenario, seed: int, out_dir: Path) -> Path:
    spec = SweepSpec(
        scenario=scenario,
        x_values=DEFAULT_X_VALUES,
        replications=1,
        base_seed=seed,
    )
    result = run_sweep(spec)
    columns = [level[0].csv_row() for level in result.reports]
    out_path = out_dir / f"table_{scenario.value}.csv"
    with out_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["metric"] + [f"{scenario.value.upper()}({x})" for x in spec.x_values]
        )
        for row_index, name in enumerate(CSV_COLUMNS):
            writer.writerow([name] + [col[row_index] for col in columns])
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenario", choices=["s1", "s2", "both"], default="both")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", type=Path, default=Path("."))
    args = parser.parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = (
        list(Scenario)
        if args.scenario == "both"
        else [Scenario(args.scenario)]
    )
    for scenario in scenarios:
        path = reproduce(scenario, args.seed, args.out_dir)
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

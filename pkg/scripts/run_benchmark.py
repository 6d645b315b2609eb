#!/usr/bin/env python3
"""Run a benchmark grid from a JSON spec and emit every report format.

Usage:
    python3 scripts/run_benchmark.py scripts/specs/noise_grid.json --out-dir runs/grid
    python3 scripts/run_benchmark.py scripts/specs/tapt_delta.json --out-dir runs/tapt
"""

import argparse
import json
import sys
from pathlib import Path

from noisytext.bench import (
    delta_table, emit_report, parse_spec, report_markdown, run_experiment,
)
from noisytext.errors import ConfigError


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("spec", type=Path, help="experiment spec (JSON)")
    parser.add_argument("--out-dir", type=Path, default=Path("runs/benchmark"))
    args = parser.parse_args()

    spec = parse_spec(json.loads(args.spec.read_text(encoding="utf-8")))
    report = run_experiment(spec)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "report.json").write_text(report.to_json(),
                                              encoding="utf-8")
    for fmt, suffix in (("csv", ".csv"), ("markdown", ".md")):
        emit_report(report, fmt, args.out_dir / f"report{suffix}")
    print(report_markdown(report))

    try:
        rows = delta_table(report)
    except ConfigError:
        rows = []  # no paired pretraining cells in this grid
    if rows:
        print("Pretraining deltas (base | delta):")
        for row in rows:
            print(f"  {row['method']} @ {row['noise']}: {row['rendered']}")
    print(f"reports written to {args.out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hall-lab <kind> --config FILE --trials N --seed S --out DIR``."""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .errors import ConfigError, HallLabError
from .runner import KINDS, emit_plot_data, load_config, make_spec, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
PLOT_SOURCES = {"staircase": "staircase", "decay": "localization", "dos": "spectrum"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hall-lab", description="Seeded quantum Hall experiments with CSV + JSON manifest output.")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True, help="YAML or JSON file with model and params sections")
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--plot", action="append", default=[], choices=["staircase", "decay", "dos"], help="also emit plot data and a gnuplot script")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    for pk in args.plot:
        if PLOT_SOURCES[pk] != args.kind:
            print(f"config error: --plot {pk} needs a {PLOT_SOURCES[pk]} run", file=sys.stderr)
            return EXIT_CONFIG
    try:
        spec = make_spec(args.kind, load_config(args.config), args.trials, args.seed, args.out, args.threads)
        man = run(spec)
        for pk in args.plot:
            emit_plot_data(os.path.join(args.out, "manifest.json"), pk)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HallLabError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{man.kind}: {len(man.outputs)} tables in {args.out} ({man.wall_time:.2f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

    tdsce simulate <experiment> --config FILE [--seed U64] [--trials N]
                   [--out results.csv] [--workers W]
    tdsce profiles list
    tdsce selftest
"""
import argparse
import sys

from ..channel import list_profiles, load_profile
from .config import EXPERIMENTS, load_config
from .experiments import run_experiment
from .output import to_csv, write_results
from .selftest import run_selftest


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="tdsce", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    sim.add_argument("experiment", choices=EXPERIMENTS)
    sim.add_argument("--config", required=True, help="JSON experiment config")
    sim.add_argument("--seed", type=_u64, help="overrides SIM_SEED and the config seed")
    sim.add_argument("--trials", type=_positive, help="overrides the config trial count")
    sim.add_argument("--out", help="CSV path (default: stdout, no sidecar)")
    sim.add_argument("--workers", type=_positive, default=1, help="worker processes")

    prof = sub.add_parser("profiles", help="channel profiles")
    prof.add_argument("action", choices=["list"])

    st = sub.add_parser("selftest", help="run the invariant checks")
    st.add_argument("--seed", type=_u64, default=0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "profiles":
        for name in list_profiles():
            p = load_profile(name)
            kind = "static" if p.is_static else f"{p.speed_mps * 3.6:.0f} km/h"
            print(f"{name}\t{len(p.delays_us)} taps\t{kind}")
        return 0
    if args.command == "selftest":
        return 1 if run_selftest(args.seed) else 0

    cfg = load_config(args.config, seed=args.seed, trials=args.trials)
    if cfg.experiment != args.experiment:
        print(f"error: config describes {cfg.experiment!r}, not {args.experiment!r}",
              file=sys.stderr)
        return 2
    rows = run_experiment(cfg, workers=args.workers)
    if args.out:
        csv_path, meta = write_results(cfg, rows, args.out)
        print(f"wrote {csv_path} and {meta}", file=sys.stderr)
    else:
        sys.stdout.write(to_csv(cfg, rows))
    return 0


if __name__ == "__main__":
    sys.exit(main())

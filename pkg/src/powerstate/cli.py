"""Command-line entry point: ``powerstate <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import PipelineConfig
from .errors import ConfigError, PowerStateError

log = logging.getLogger("powerstate")


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--location")
    p.add_argument("--data-dir")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--timestamp-format", help='token format such as "DD-MM-YYYY HH:MM:SS", or epoch_ms')
    p.add_argument("--grid-period", dest="grid_period_ms", type=int, help="imputation grid in ms")
    p.add_argument("--no-impute", action="store_true")
    p.add_argument("--fallback", choices=("linear-interpolate", "carry-nearest", "leave-missing"))
    p.add_argument("--phase-mode", choices=("mean", "concat"))
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--k", type=int)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--silhouette-sample", type=int)
    p.add_argument("--discover-start")
    p.add_argument("--discover-end")
    p.add_argument("--train-start")
    p.add_argument("--train-end")
    p.add_argument("--dates", help="comma-separated ISO dates")
    p.add_argument("--assign-with", choices=("forest", "centroid"))
    p.add_argument("--averaging", choices=("macro", "weighted", "micro"))
    p.add_argument("--n-trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--max-features")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", dest="n_jobs", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


_HELP = {
    "ingest": "validate input files and report gaps",
    "clean": "impute gaps and write 1-minute feature rows",
    "discover": "sweep k and fit the state model",
    "assign": "label each minute of the requested dates",
    "eval": "score the classifier per date into a leaderboard",
    "report": "summarise existing artifacts as text",
    "run": "clean, discover, eval and assign in one go",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="powerstate", description="Find operating states in power-quality harmonics data.")
    parser.add_argument("--version", action="version", version=f"powerstate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in _HELP.items():
        _common(sub.add_parser(name, help=text, description=text))
    s = sub.add_parser("synth", help="write a synthetic location in the ingest formats")
    s.add_argument("profile", help="preset name (india-1..6, usa-1/2) or profile JSON file")
    s.add_argument("--days", type=int, default=7)
    s.add_argument("--out", default="data")
    s.add_argument("--location", help="directory name under --out (default: profile name)")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-states", type=int)
    s.add_argument("--separation", type=float, help="centroid separation / noise ratio")
    s.add_argument("--gap-fraction", type=float)
    s.add_argument("--harmonics-period", type=int, help="ms between harmonics rows")
    s.add_argument("--ecd-period", type=int, help="ms between ECD rows")
    s.add_argument("--start", help="first day, ISO date")
    s.add_argument("--timestamp-format")
    s.add_argument("-v", "--verbose", action="store_true")
    return parser


_SIMPLE = ("location", "data_dir", "output_dir", "timestamp_format", "grid_period_ms",
           "phase_mode", "standardize", "k", "k_min", "k_max", "restarts", "silhouette_sample",
           "discover_start", "discover_end", "train_start", "train_end", "assign_with",
           "averaging", "seed", "n_jobs")


def config_from_args(args):
    """Defaults, then the config file, then explicit flags."""
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    for name in _SIMPLE:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.dates is not None:
        cfg.eval_dates = [d.strip() for d in args.dates.split(",") if d.strip()]
    if args.no_impute:
        cfg.imputation.enabled = False
    if args.fallback:
        cfg.imputation.fallback = args.fallback
    for flag in ("n_trees", "max_depth", "min_samples_leaf"):
        v = getattr(args, flag)
        if v is not None:
            setattr(cfg.forest, flag, v)
    if args.max_features is not None:
        mf = args.max_features
        cfg.forest.max_features = int(mf) if mf.isdigit() else mf
    return cfg.validate()


def _synth(args):
    from .pipeline import cmd_synth
    from .synth import LOCATION_PRESETS, SyntheticProfile, preset_profile

    over = {}
    for flag, key in (("n_states", "n_states"), ("separation", "separation_ratio"),
                      ("gap_fraction", "gap_fraction"), ("harmonics_period", "harmonics_period_ms"),
                      ("ecd_period", "ecd_period_ms"), ("start", "start"), ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    if args.profile in LOCATION_PRESETS:
        profile = preset_profile(args.profile, **over)
    elif os.path.exists(args.profile):
        try:
            with open(args.profile, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read profile {args.profile}: {e}") from None
        d.update(over)
        profile = SyntheticProfile.from_dict(d)
    else:
        raise ConfigError(f"unknown profile {args.profile!r}; presets: {sorted(LOCATION_PRESETS)}")
    cmd_synth(profile, args.days, args.out, args.location, args.timestamp_format)
    print(f"wrote {args.days} day(s) of {profile.name} to "
          f"{os.path.join(args.out, args.location or profile.name)}")


def _run(args):
    from . import pipeline as P

    if args.command == "synth":
        return _synth(args)
    cfg = config_from_args(args)
    P.echo_config(cfg)
    if args.command == "ingest":
        reports = P.cmd_ingest(cfg)
        for f, r in reports.items():
            frac = "n/a" if r is None else f"{r.missing_fraction:.4f}"
            print(f"{os.path.basename(f)}: missing {frac}")
    elif args.command == "clean":
        fm = P.cmd_clean(cfg)
        print(f"{len(fm)} feature rows x {len(fm.feature_names)} features")
    elif args.command == "discover":
        sweep, sm = P.cmd_discover(cfg)
        how = "explicit" if sweep is None else sweep.selection_rule
        print(f"k = {sm.k} ({how})")
    elif args.command == "assign":
        for date, asg in P.cmd_assign(cfg).items():
            print(f"{date}: {asg.distinct()} distinct states")
    elif args.command == "eval":
        for r in P.cmd_eval(cfg):
            print(f"{r.date}: F1 {r.averaging} {r.f1:.4f}")
    elif args.command == "report":
        sys.stdout.write(P.cmd_report(cfg))
    elif args.command == "run":
        sys.stdout.write(P.run_all(cfg))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except PowerStateError as e:
        print(f"powerstate: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

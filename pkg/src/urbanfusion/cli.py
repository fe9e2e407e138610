"""Command-line entry point: one subcommand per stage plus ``synth`` and ``all``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigInvalid, SpecInvalid, StageFailure
from .pipeline import STAGES, run_pipeline, run_stage

log = logging.getLogger("urbanfusion")

# Stage-specific flags, mapped onto config keys.
STAGE_FLAGS = {
    "smooth": [("--theta", float, "eda_prep.theta"), ("--threshold-mode", str, "eda_prep.threshold_mode")],
    "arousal": [("--amp-threshold", float, "arousal.amp_threshold"), ("--ha-boundary", str, "arousal.ha_boundary")],
    "isovist": [("--fov", float, "isovist.fov_deg"), ("--radius", float, "isovist.radius"),
                ("--angular-step", float, "isovist.angular_step_deg")],
    "train": [("--target", str, "train.target"), ("--folds", int, "train.folds")],
    "fuzzy": [("--target", str, "fuzzy.target"), ("--folds", int, "fuzzy.folds")],
    "featsel": [("--target", str, "featsel.target"), ("--max-rows", int, "featsel.max_rows")],
    "som": [("--width", int, "som.width"), ("--height", int, "som.height")],
    "geomap": [("--grid-meters", float, "geomap.grid_meters")],
}
STAGE_SWITCHES = {
    "featsel": [("--resplit-per-level", "featsel.resplit_per_level")],
    "geomap": [("--divide-by-total", "geomap.divide_by_total")],
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="run config (YAML)")
    p.add_argument("--seed", type=int)
    p.add_argument("--window-seconds", type=float)
    p.add_argument("--out", help="run directory (overrides the config)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="urbanfusion", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "all" else "run every stage")
        _common(p)
        flags = STAGE_FLAGS.get(name, [])
        switches = STAGE_SWITCHES.get(name, [])
        if name == "all":
            # Per-analysis targets and folds stay ambiguous here; use --set.
            flags = [f for fl in STAGE_FLAGS.values() for f in fl if f[0] not in ("--target", "--folds")]
            switches = [s for sw in STAGE_SWITCHES.values() for s in sw]
        for flag, typ, key in flags:
            p.add_argument(flag, type=typ, dest=f"cfg:{key}")
        for flag, key in switches:
            p.add_argument(flag, action="store_const", const=True, dest=f"cfg:{key}")
    s = sub.add_parser("synth", help="generate synthetic walks and a run config")
    s.add_argument("--out", required=True)
    s.add_argument("--participants", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=1740.0, help="walk length in seconds")
    s.add_argument("--rule", default="sound_db > 66 or illuminance_lux < 580")
    s.add_argument("--label-noise", type=float, default=0.0)
    s.add_argument("--sensor-noise", type=float, default=0.0)
    s.add_argument("--eda-noise", type=float, default=0.0)
    s.add_argument("--corruption", choices=["type1", "type2"])
    return ap


def _overrides(args) -> list:
    sets = list(args.set)
    if args.seed is not None:
        sets.append(f"seed={args.seed}")
    if args.window_seconds is not None:
        sets.append(f"window_seconds={args.window_seconds}")
    for dest, val in vars(args).items():
        if dest.startswith("cfg:") and val is not None:
            sets.append(f"{dest[4:]}={val}")
    return sets


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    if args.command == "synth":
        from .synth import generate_suite

        try:
            path = generate_suite(args.out, args.participants, args.seed, duration=args.duration,
                                  rule=args.rule, label_noise=args.label_noise, sensor_noise=args.sensor_noise,
                                  eda_noise=args.eda_noise, corruption=args.corruption)
        except SpecInvalid as exc:
            log.error("synth: %s", exc)
            return 2
        print(path)
        return 0
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.out:
            from pathlib import Path

            cfg.out = Path(args.out)
        if args.command == "all":
            run_pipeline(cfg)
        else:
            run_stage(cfg, args.command)
    except ConfigInvalid as exc:
        log.error("config: %s", exc)
        return 2
    except StageFailure as exc:
        log.error("%s", exc)
        return 1
    log.info("%s done; report at %s", args.command, cfg.out / "run_report.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())

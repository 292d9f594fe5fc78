"""Command-line entry point.

    fadesnr run --config cfg.yaml --seed 1 --out results/
    fadesnr sweep --config cfg.yaml --seeds 0..9 --out results/
    fadesnr preset fig2a --out results/

Exit codes: 0 success, 1 config error, 2 pipeline error (stage name goes
to stderr).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .scenario import (
    ConfigError,
    PipelineError,
    ScenarioConfig,
    load_config,
    preset_config,
    run_scenario,
    summary_yaml,
    trace_csv,
)


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--block-len", type=int, default=None, help="estimation block length in symbols")
    p.add_argument("--ceiling-db", type=float, default=None, help="override fading SNR ceiling")
    p.add_argument("--floor-db", type=float, default=None, help="override fading SNR floor")


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if args.block_len is not None:
        cfg = replace(cfg, block_len=args.block_len)
    fading = cfg.fading
    if args.ceiling_db is not None:
        fading = replace(fading, snr_ceiling_db=args.ceiling_db)
    if args.floor_db is not None:
        fading = replace(fading, snr_floor_db=args.floor_db)
    return replace(cfg, fading=fading)


def _parse_seed_range(text: str) -> range:
    try:
        lo, hi = text.split("..")
        return range(int(lo), int(hi) + 1)
    except ValueError as exc:
        raise ConfigError(f"bad seed range {text!r}, expected a..b") from exc


def _write_outputs(result, out_dir: str, seed: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"trace_seed{seed}.csv"), "w", encoding="utf-8") as fh:
        fh.write(trace_csv(result))
    with open(os.path.join(out_dir, f"summary_seed{seed}.yaml"), "w", encoding="utf-8") as fh:
        fh.write(summary_yaml(result))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fadesnr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", required=True)
    _add_override_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="run one config over a seed range")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", required=True, help="inclusive range a..b")
    p_sweep.add_argument("--out", required=True)
    _add_override_flags(p_sweep)

    p_preset = sub.add_parser("preset", help="run a built-in scenario")
    p_preset.add_argument("name", choices=["fig2a", "fig2b"])
    p_preset.add_argument("--seed", type=int, default=0)
    p_preset.add_argument("--out", required=True)
    _add_override_flags(p_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg = replace(cfg, seed=args.seed)
            cfgs = [cfg]
        elif args.command == "sweep":
            base = load_config(args.config)
            cfgs = [replace(base, seed=s) for s in _parse_seed_range(args.seeds)]
        else:
            cfgs = [preset_config(args.name, seed=args.seed)]
        cfgs = [_apply_overrides(c, args) for c in cfgs]
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        for cfg in cfgs:
            result = run_scenario(cfg)
            _write_outputs(result, args.out, cfg.seed)
    except PipelineError as exc:
        print(f"pipeline error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

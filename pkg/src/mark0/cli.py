"""Command-line entry point: ``mark0 {run,sweep,shock,validate}``.

Flags
  --config PATH   flat key=value config (see ``mark0.io``)
  --out PATH      output file (CSV for run/shock, JSON for sweep)
  --seed N        base seed (overrides ``seed`` in the config)
  --jobs N        worker processes for ensembles and sweeps
  key=value       any config key, applied after the file

Exit status is 0 on success, 1 on a failed run or check, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .experiments import RunFailure, monetary_shock, run_simulation, sweep
from .io import (
    Config,
    ConfigError,
    load_config,
    parse_assignments,
    write_grid,
    write_shock,
    write_timeseries,
)
from .params import ParameterError
from .validate import run_checks


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"\n{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mark0", description=__doc__.split("\n\n")[0],
                     epilog=__doc__.split("\n\n", 1)[1],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("run", "one simulation, written as a time-series CSV"),
        ("sweep", "2-D parameter grid of ensembles, written as JSON"),
        ("shock", "natural-rate shock impulse response, written as CSV"),
        ("validate", "accounting, oracle and spectral-fit checks"),
    ):
        p = sub.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        p.add_argument("--seed", type=int, metavar="N", help="base seed")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
        if name == "validate":
            p.add_argument("--quick", action="store_true", help="skip the long oracle run")
            p.add_argument("--out", metavar="PATH", help="unused; accepted for symmetry")
        else:
            p.add_argument("--out", metavar="PATH", required=True, help="output file")
    return parser


def _config(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.overrides:
        cfg = parse_assignments(args.overrides, base=cfg, origin="override")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = replace(cfg, model=replace(cfg.model, seed=args.seed))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"mark0: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            rec = run_simulation(cfg.model, cfg.policy, cfg.harness.T)
            write_timeseries(rec, args.out, cfg, seeds=[cfg.model.seed])
        elif args.command == "sweep":
            spec = cfg.sweep_spec()
            progress = lambda done, total: print(f"\r{done}/{total} cells", end="",
                                                 file=sys.stderr, flush=True)
            grid = sweep(spec, cfg.model, cfg.policy, jobs=args.jobs, progress=progress)
            print(file=sys.stderr)
            write_grid(grid, args.out, cfg)
        elif args.command == "shock":
            spec = cfg.shock_spec()
            seeds = list(range(cfg.model.seed, cfg.model.seed + cfg.harness.ensemble_size))
            resp = monetary_shock(spec, cfg.model, seeds, cfg.policy, jobs=args.jobs)
            write_shock(resp, args.out, cfg)
        else:
            checks = run_checks(quick=args.quick)
            for check in checks:
                print(check.line())
            return 0 if all(c.ok for c in checks) else 1
    except (RunFailure, ParameterError, ValueError, OSError) as exc:
        print(f"mark0: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``ncgeo <experiment> [key=value ...] [--out DIR] [--format json|csv|text]``.

Exit status: 0 when every target is met, 1 when a numeric target is missed,
2 on a usage or config error.  ``NCGEO_OUT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .experiments import REGISTRY, ConfigError, ExperimentConfig, emit_report, parse_pairs, run_experiment

EXT = {"json": "json", "csv": "csv", "text": "txt"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncgeo", description="Run a registered experiment and write its report.")
    p.add_argument("experiment", help="experiment name, or 'list'")
    p.add_argument("params", nargs="*", help="key=value overrides")
    p.add_argument("--config", help="config file to start from")
    p.add_argument("--out", help="output directory (default $NCGEO_OUT, else stdout only)")
    p.add_argument("--format", default="text", choices=sorted(EXT))
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if args.experiment == "list":
        for name in sorted(REGISTRY):
            print(name)
        return 0
    try:
        if args.config:
            cfg = ExperimentConfig.from_text(Path(args.config).read_text(), args.experiment)
            cfg = ExperimentConfig.build(cfg.experiment, {**cfg.as_dict(), **parse_pairs(args.params)})
        else:
            cfg = ExperimentConfig.build(args.experiment, parse_pairs(args.params))
        report = run_experiment(cfg)
    except (ConfigError, OSError) as exc:
        print(f"ncgeo: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"ncgeo: invalid parameters: {exc}", file=sys.stderr)
        return 2
    data = emit_report(report, args.format)
    out = args.out or os.environ.get("NCGEO_OUT")
    if out:
        d = Path(out) / cfg.experiment
        d.mkdir(parents=True, exist_ok=True)
        (d / f"report.{EXT[args.format]}").write_bytes(data)
        (d / "config.cfg").write_text(cfg.to_text())
    sys.stdout.write(data.decode() if args.format == "text" or not out else emit_report(report, "text").decode())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

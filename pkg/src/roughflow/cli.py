"""``roughflow <scenario> --config FILE [--out DIR] [--seed N] [--levels L] [--figures]``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import SCENARIOS, load
from .errors import ConfigError, NumericalAbort
from .harness import run, write_atomic_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3
EXIT_IO = 4
OUT_ENV = "ROUGHFLOW_OUT"

log = logging.getLogger("roughflow")


def build_parser():
    p = argparse.ArgumentParser(prog="roughflow", description="Rough path flows and rough fluid experiments.")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs/<scenario>)")
    p.add_argument("--seed", type=int, help="override the driver seed")
    p.add_argument("--levels", type=int, help="refinement / mollification levels")
    p.add_argument("--figures", action="store_true", help="also render PNG figures from the CSV outputs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = args.out or os.environ.get(OUT_ENV) or os.path.join("runs", args.scenario)
    try:
        cfg = load(args.config)
        manifest = run(cfg, out, args.scenario, args.seed, args.levels, args.figures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc} (last valid time {exc.last_time})", file=sys.stderr)
        hint = getattr(exc, "suggested_steps", None)
        if hint:
            print(f"suggested grid.steps >= {hint}", file=sys.stderr)
        try:
            os.makedirs(out, exist_ok=True)
            write_atomic_json(
                {"scenario": args.scenario, "status": "aborted", "message": str(exc), "last_time": exc.last_time},
                os.path.join(out, "manifest.json"),
            )
        except OSError:
            pass
        return EXIT_ABORT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(os.path.join(out, "manifest.json"))
    log.info("wrote %d files", len(manifest["files"]))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``llhmm <experiment> [--config FILE] [--out CSV]``.

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .errors import ConfigError, LLHMMError, NumericalError
from .experiments import COMMANDS, cmd_homogenize

log = logging.getLogger("llhmm")


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    name = cfg.pop("experiment", None)
    return {"experiment": name, **cfg}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="llhmm", description="HMM experiments for multiscale Landau-Lifshitz")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="TOML file overriding the built-in defaults")
        s.add_argument("--out", help="CSV output path (default results/<experiment>.csv)")
        s.add_argument("--workers", type=int, default=1, help="worker processes")
        if name == "showcase":
            s.add_argument("--long", action="store_true", help="also run the 2D cases with DNS")
    h = sub.add_parser("homogenize", help="print the homogenized matrix of a periodic coefficient")
    h.add_argument("coefficient", help="preset name (EX1, EX2, EX3) or expression in x1.., eps")
    h.add_argument("--eps", type=float, default=0.01)
    h.add_argument("--dim", type=int, default=None)
    h.add_argument("--resolution", type=int, default=256)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    if args.command == "homogenize":
        AH = cmd_homogenize(args.coefficient, args.eps, args.resolution, args.dim)
        for row in np.atleast_2d(AH.matrix):
            print(" ".join(f"{v:.8f}" for v in row))
        return 0
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    cfg = load_config(args.config)
    declared = cfg.pop("experiment", None)
    if declared is not None and declared != args.command:
        raise ConfigError(f"config is for {declared!r}, not {args.command!r}")
    func = COMMANDS[args.command]
    out = Path(args.out or f"results/{args.command}.csv")
    start = time.perf_counter()
    kwargs = {"workers": args.workers}
    if args.command == "showcase":
        kwargs["long"] = args.long
    if args.command == "hmm-convergence":
        kwargs["out"] = out
    result = func(cfg, **kwargs)
    result.metadata.update(wall_seconds=f"{time.perf_counter() - start:.1f}", workers=args.workers,
                           version=__version__)
    result.to_csv(out)
    print(f"wrote {len(result.rows)} rows to {out}")
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except LLHMMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

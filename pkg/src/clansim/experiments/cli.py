"""Command-line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from .config import COMMANDS, ConfigError, load_config, resolve_config
from .runner import OUT_ENV, run


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clansim", description="Perfect simulation and clan statistics.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON experiment file")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicas", type=int)
        s.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./clansim-out)")
        s.add_argument("--workers", type=int)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {}
        cfg = resolve_config(raw, args.command, {"seed": args.seed, "replicas": args.replicas,
                                                 "out": args.out, "workers": args.workers})
    except ConfigError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    try:
        paths = run(cfg)
    except (ValueError, RuntimeError, OverflowError, ArithmeticError) as exc:
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 3
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


if __name__ == "__main__":
    sys.exit(main())

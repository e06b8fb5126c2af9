"""Command line interface: satconv-import <in.tflite> <out.sacnn>."""

from __future__ import annotations

import argparse
import json
import sys

from .convert import convert
from .errors import ImporterError, VerifyError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="satconv-import",
                description="Convert a full-integer .tflite model to a .sacnn manifest.")
    p.add_argument("source", metavar="IN.tflite")
    p.add_argument("output", metavar="OUT.sacnn")
    p.add_argument("--verify", metavar="N", type=int, default=0,
                   help="cross-check N random inputs against the tflite interpreter")
    p.add_argument("--seed", type=int, default=0, help="seed for verification inputs")
    p.add_argument("--engine", default="satconv",
                   help="engine executable used for verification (default: satconv)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _, report = convert(args.source, args.output)
        if args.verify:
            from .verify import verify_model

            report["verify"] = verify_model(args.output, args.source,
                                            args.verify, args.seed, engine=args.engine)
    except ImporterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3 if isinstance(e, VerifyError) else 2
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.verify and not report["verify"]["pass"]:
        print("error: verification failed, outputs diverge beyond tolerance", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point: ``taxelsim <subcommand> [--config ...] [--seed ...] [--out ...]``.

Exit status is 0 on success, 1 for usage, configuration or missing-input
errors and 2 for failures while running. Errors are reported as a single
``error: <Type>: <message>`` line on stderr.
"""

import argparse
import logging
import sys

import numpy as np

from . import classify, pipeline
from .config import load_config
from .errors import ConfigurationError, InvalidArgument, MissingArtifactError, TaxelSimError

USAGE_ERRORS = (ConfigurationError, InvalidArgument, MissingArtifactError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", default="demo.json",
                        help="config JSON path, or the name of a shipped config (demo.json, paperish.json)")
    common.add_argument("--seed", type=int, default=None, help="root seed; overrides the config's seed")
    common.add_argument("--out", default="out", help="workspace directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for simulate")
    common.add_argument("--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="taxelsim", description="Simulated tactile sensor pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in pipeline.STAGES + ("classify-train", "classify-eval", "pipeline"):
        sub.add_parser(name, parents=[common])
    return parser


def _print_report(command, result, out):
    if command == "eval":
        print(f"fidelity_pct={result['fidelity_pct']:.6g}", file=out)
        print(f"mae_kpa={result['mae_kpa']:.6g} max_pressure_kpa={result['max_pressure_kpa']:.6g}", file=out)
    elif command == "classify-eval":
        for arm in classify.ARMS:
            print(f"{arm}_accuracy={result[arm]['accuracy']:.4f}", file=out)
            print(f"{arm}_confusion=", file=out)
            for label, row in zip(result["labels"], result[arm]["confusion_matrix"]):
                print(f"  {label:>12s} " + " ".join(f"{v:3d}" for v in row), file=out)
        print(f"gap_pp={result['gap_pp']:.2f}", file=out)
    elif command == "pipeline":
        ev = result["eval"]
        print(f"recordings={result['simulate']['n_ok']} pairs={result['features']['n_pairs']}", file=out)
        print(f"fidelity_pct={ev['fidelity_pct']:.6g}", file=out)
        print(f"mae_kpa={ev['mae_kpa']:.6g} max_pressure_kpa={ev['max_pressure_kpa']:.6g}", file=out)
    elif isinstance(result, dict):
        scalars = {k: v for k, v in result.items() if isinstance(v, (int, float, str, np.floating, np.integer))}
        if scalars:
            print(" ".join(f"{k}={v}" for k, v in scalars.items()), file=out)


def run(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    cfg = load_config(args.config, args.seed)
    ws = pipeline.Workspace(cfg, args.out)
    if args.command == "pipeline":
        result = pipeline.run_pipeline(ws, args.threads)
    elif args.command == "classify-train":
        try:
            result = classify.stage_classify_train(ws)
        finally:
            ws.save()
    elif args.command == "classify-eval":
        try:
            result = classify.stage_classify_eval(ws)
        finally:
            ws.save()
    else:
        result = pipeline.run_stage(ws, args.command, args.threads)
    _print_report(args.command, result, out)
    return 0


def main(argv=None):
    try:
        return run(argv)
    except UsageError as exc:
        code, exc_type = 1, "UsageError"
        message = str(exc)
    except USAGE_ERRORS as exc:
        code, exc_type, message = 1, type(exc).__name__, str(exc)
    except (TaxelSimError, OSError, ValueError, ArithmeticError) as exc:
        code, exc_type, message = 2, type(exc).__name__, str(exc)
    message = " ".join(message.split())
    print(f"error: {exc_type}: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``polalign {simulate,align,metrics,monitor}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, Mode, load_config
from .io import DataError
from .runs import run_align, run_metrics, run_monitor, run_simulate, summarize

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polalign",
        description="Coincidence-entropy polarization basis alignment for an all-fiber BBM92 receiver pair.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "sample coincidence windows and write a counts CSV",
        "align": "run the entropy-ascent alignment and write a trace CSV",
        "metrics": "compute entropies and QBERs for every window of a counts CSV",
        "monitor": "raise alarms when entropy or QBER degrade in a counts stream",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--in", dest="input", help="input counts CSV ('-' for stdin)")
        p.add_argument("--analytic", action="store_true", help="use expected rates instead of sampled counts")
        p.add_argument("--windows", type=int, help="number of windows to simulate")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {"mode": args.command}
    if args.seed is not None:
        o["seed"] = args.seed
    if args.out is not None:
        o["output_path"] = args.out
    if args.input is not None:
        o["input_path"] = args.input
    if args.analytic:
        o["optimizer"] = {"analytic": True}
    if args.windows is not None:
        o["simulate"] = {"windows": args.windows}
    return o


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        mode = Mode(args.command)
        if mode is Mode.SIMULATE:
            run_simulate(cfg)
        elif mode is Mode.ALIGN:
            trace = run_align(cfg)
            s = summarize(trace, cfg.optimizer.window_duration)
            if cfg.output_path != "-":
                final = s["final"]
                print(f"iterations={s['iterations']} h_total={final['h_total']:.6g} "
                      f"h_a={final['h_a']:.6g} h_b={final['h_b']:.6g}")
                if final["qber"]:
                    print(" ".join(f"qber_{k}={v:.4g}" for k, v in final["qber"].items()))
        elif mode is Mode.METRICS:
            run_metrics(cfg)
        else:
            alarms = run_monitor(cfg)
            if cfg.output_path != "-":
                print(f"{len(alarms)} alarm(s)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

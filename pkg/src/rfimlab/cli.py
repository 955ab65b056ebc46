"""Command-line entry point ``rfim-lab``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import ConfigError, execute, load_config_file, merge_config
from .sampler import CoalescenceError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--config", metavar="PATH", help="JSON settings (a manifest.json also works)")
    g.add_argument("--seed", type=int, help="master seed, unsigned 64-bit")
    g.add_argument("--replicas", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--out", metavar="DIR")
    g.add_argument("--mode", choices=("glauber", "cftp"))
    g.add_argument("--sweeps", type=int, help="Glauber sweeps (default 100 |V|)")
    g.add_argument("--beta", type=float)
    g.add_argument("--J", type=float, dest="J")
    g.add_argument("--h", type=float, dest="h")
    g.add_argument("--eps", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfim-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="exact identity checks on random small instances")
    _common(p)
    p.add_argument("--max-vertices", type=int, dest="max_vertices")
    p.add_argument("--tolerance", type=float)
    p.add_argument("--instances", type=int, help="instance count (0: vacuous pass)")
    p.add_argument("--exploration-pairs", type=int, dest="exploration_pairs")

    p = sub.add_parser("mL", help="disagreement order parameter against box size")
    _common(p)
    p.add_argument("--L", type=_int_list, dest="L_list", metavar="L1,L2,...")

    p = sub.add_parser("tortuosity", help="annulus crossings and lassos per scale")
    _common(p)
    p.add_argument("--l", type=_int_list, dest="l_list", metavar="l1,l2,...")
    p.add_argument("--quantile", type=float)
    p.add_argument("--calibration-scales", type=_int_list, dest="calibration_scales")

    p = sub.add_parser("surface-tension", help="exact against integral surface tension per replica")
    _common(p)
    p.add_argument("--inner", type=json.loads, help="region JSON, e.g. '{\"kind\":\"box\",\"L\":0}'")
    p.add_argument("--outer", type=json.loads)
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--rule", choices=("simpson", "trapezoid"))
    p.add_argument("--no-anti-concentration", action="store_const", const=False, dest="anti_concentration")
    p.add_argument("--geometric-crosscheck", type=int, dest="geometric_crosscheck")

    p = sub.add_parser("fit", help="exponential fit of an mL results table")
    _common(p)
    p.add_argument("input", nargs="?", help="CSV with columns L, m_hat[, stderr]")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        file_cfg = load_config_file(args.config) if args.config else {}
        cfg = merge_config(args.command, file_cfg, flags)
        res = execute(cfg)
    except ConfigError as exc:
        print(f"rfim-lab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CoalescenceError as exc:
        print(f"rfim-lab: {exc}; try --mode glauber or a smaller beta", file=sys.stderr)
        return EXIT_FAIL
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{args.command}: {'pass' if res.passed else 'FAIL'} ({cfg['out']})")
    return EXIT_PASS if res.passed else EXIT_FAIL



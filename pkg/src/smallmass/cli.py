"""Command-line interface.

Subcommands::

    smallmass converge <config> [--out DIR]       eps-sweep convergence study
    smallmass simulate-eps <config> [--out DIR]   pooled eps-system samples
    smallmass simulate-limit <config> [--out DIR] pooled limit-SDE samples
    smallmass estimate-gk <config> [--out DIR]    effective-diffusion estimate
    smallmass diagnose <config> [--out DIR]       moment / decay / increment tables
    smallmass w2 <file-a> <file-b>                distance between two sample files

Exit codes: 0 success, 1 usage or configuration error, 2 numeric failure.
"""

import argparse
import os
import sys

from ._version import __version__
from .errors import NumericError, UsageError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallmass", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"smallmass {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("converge", "simulate-eps", "simulate-limit", "estimate-gk", "diagnose"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the flat JSON configuration")
        p.add_argument("--out", default=None, help="output directory (default: output.dir)")
    w2p = sub.add_parser("w2")
    w2p.add_argument("file_a")
    w2p.add_argument("file_b")
    w2p.add_argument("--seed", type=int, default=0, help="seed for sliced projections")
    return parser


def _out_dir(cfg, override):
    out = override or cfg.values["output.dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_converge(cfg, out):
    from .harness import run_convergence

    report = run_convergence(cfg)
    path = os.path.join(out, "converge.csv")
    report.write_csv(path)
    print(path)
    return 0


def _cmd_simulate_eps(cfg, out):
    from .harness import run_simulate_eps

    print(run_simulate_eps(cfg, out))
    return 0


def _cmd_simulate_limit(cfg, out):
    from .harness import run_simulate_limit

    print(run_simulate_limit(cfg, out))
    return 0


def _cmd_estimate_gk(cfg, out):
    from .harness import _base_metadata, run_estimate_gk, write_table

    gk = run_estimate_gk(cfg)
    meta = _base_metadata(cfg)
    meta["gk.truncation_lag"] = f"{gk.truncation_lag:.17g}"
    meta["gk.ci_fro"] = f"{gk.ci_fro:.17g}"
    rows = [[i, j, gk.G[i, j]] for i in range(gk.G.shape[0]) for j in range(gk.G.shape[1])]
    path = os.path.join(out, "gk.csv")
    write_table(path, meta, ["i", "j", "G"], rows)
    print(path)
    return 0


def _cmd_diagnose(cfg, out):
    from .harness import run_diagnose, write_table

    rows, meta = run_diagnose(cfg)
    path = os.path.join(out, "diagnose.csv")
    write_table(path, meta, ["module", "eps", "stat", "value", "ci"], rows)
    print(path)
    return 0


def _cmd_w2(args):
    from .harness import load_sample_file
    from .transport import w2_auto

    a = load_sample_file(args.file_a)
    b = load_sample_file(args.file_b)
    res = w2_auto(a, b, seed=args.seed)
    print(repr(res.value))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 1
    try:
        if args.command == "w2":
            return _cmd_w2(args)
        from .config import load_config

        cfg = load_config(args.config)
        out = _out_dir(cfg, args.out)
        dispatch = {
            "converge": _cmd_converge,
            "simulate-eps": _cmd_simulate_eps,
            "simulate-limit": _cmd_simulate_limit,
            "estimate-gk": _cmd_estimate_gk,
            "diagnose": _cmd_diagnose,
        }
        return dispatch[args.command](cfg, out)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

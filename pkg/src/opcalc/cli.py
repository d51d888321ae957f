"""Command line entry point ``opcalc``.

Every subcommand runs one battery from a JSON config::

    opcalc hs-apply --config configs/c08_hs_apply_nu1.json --out reports

Exit status is 0 when every declared threshold holds, 1 when one fails and
2 for unusable configs.  OPCALC_THREADS caps the BLAS thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

# thread caps must be set before numpy loads its BLAS
if os.environ.get("OPCALC_THREADS"):
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["OPCALC_THREADS"])

from .harness import BATTERIES, ConfigError, list_families, load_config, run_suite  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opcalc", description="Commutator expansion experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in BATTERIES:
        s = sub.add_parser(name, help=f"run a {name} config")
        s.add_argument("--config", required=True, help="path to a JSON config")
        s.add_argument("--seed", type=int, default=None,
                       help="replace the config seeds by the same number of seeds starting here")
        s.add_argument("--out", default=None, help="report directory (default: the config's out)")
    f = sub.add_parser("list-families", help="print the built-in function families")
    f.add_argument("--nu", type=int, default=1)
    f.add_argument("--no-check", action="store_true", help="skip the decay self-check")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-families":
        print(json.dumps(list_families(nu=args.nu, check=not args.no_check), indent=2))
        return 0
    try:
        cfg = load_config(args.config, seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"opcalc: {exc}", file=sys.stderr)
        return 2
    if cfg.battery != args.command:
        print(f"opcalc: {args.config}: battery is {cfg.battery!r}, not {args.command!r}", file=sys.stderr)
        return 2
    result = run_suite(cfg, args.out)
    for path in result.files:
        print(path)
    print(f"{cfg.name}: {'PASS' if result.passed else 'FAIL'}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())

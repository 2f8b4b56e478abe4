"""``simulate`` command line entry point."""
from __future__ import annotations

import argparse
import sys

from .config import PRESETS, ConfigError, build_matrix
from .harness import sweep, write_outputs
from .topology import build_topology


def make_parser():
    ap = argparse.ArgumentParser(
        prog="simulate",
        description="Flit-level Dragonfly simulator with Q-learning and classic adaptive routing.")
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override one key (repeatable); lists and ranges define sweeps")
    ap.add_argument("--preset", choices=sorted(PRESETS))
    ap.add_argument("--out", help="output directory (overrides the 'out' key)")
    ap.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--dump-config", action="store_true",
                    help="print the resolved configuration and exit")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        text = None
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"out={args.out}")
        matrix = build_matrix(args.preset, text, overrides)
        if args.dump_config:
            sys.stdout.write(matrix.to_text())
            return 0
        cells = matrix.cells()
        for c in cells:
            c.validate()
    except (ConfigError, OSError) as e:
        print(f"simulate: configuration error: {e}", file=sys.stderr)
        return 2
    results = sweep(cells, args.parallel)
    base = matrix.base
    topo = build_topology(base.params()) if base.dump_topology else None
    write_outputs(results, base.out, topo)
    failed = [r for r in results if not r.ok]
    for r in failed:
        s = r.summary
        print(f"simulate: {s['routing']} {s['pattern']} load={s['load']} seed={s['seed']}: "
              f"{s['status']}", file=sys.stderr)
    print(f"{len(results) - len(failed)}/{len(results)} runs ok; results in {base.out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

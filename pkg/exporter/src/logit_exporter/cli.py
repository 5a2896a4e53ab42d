"""Command-line front end.

    logit-export lattices --manifest src.jsonl --arrays dir/ --out data/
    logit-export joiner   --manifest src.jsonl --arrays dir/ --out data/ \
                          --durations 1,3 --context-order 0
"""

from __future__ import annotations

import argparse
import logging
import sys

from .export import ExportJob, export_joiner, export_lattices

log = logging.getLogger("logit_exporter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logit-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lattices", help="export frame x vocab arrays as lattices")
    p.add_argument("--manifest", required=True, help="source JSON-lines manifest")
    p.add_argument("--arrays", required=True, help="directory of <id>.npy files")
    p.add_argument("--out", required=True)
    p.add_argument("--frame-duration", type=float, default=0.04)

    p = sub.add_parser("joiner", help="export joint-network arrays as joiner tables")
    p.add_argument("--manifest", required=True)
    p.add_argument("--arrays", required=True,
                   help="directory of <id>.tokens.npy / <id>.durations.npy files")
    p.add_argument("--out", required=True)
    p.add_argument("--durations", required=True, help="comma list, e.g. 1,2,4")
    p.add_argument("--context-order", type=int, default=0, choices=(0, 1))
    p.add_argument("--frame-duration", type=float, default=0.04)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    args = build_parser().parse_args(argv)
    job = ExportJob(args.manifest, args.arrays, args.out)
    try:
        if args.command == "lattices":
            result = export_lattices(job, args.frame_duration)
        else:
            durations = tuple(int(d) for d in args.durations.split(","))
            result = export_joiner(job, durations, args.context_order, args.frame_duration)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    log.info("exported %d utterances, %d errors", len(result.exported), len(result.errors))
    return 0 if not result.errors else 2


if __name__ == "__main__":
    sys.exit(main())

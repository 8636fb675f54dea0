"""Minimal external scorer: answers every request with a constant score.

Run as ``python3 -m chemrl.scoring.echo_scorer --score 0.5``. ``--reverse``
answers each batch in reverse id order.
"""

import argparse
import json
import sys


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--score", type=float, default=0.5)
    ap.add_argument("--reverse", action="store_true")
    ap.add_argument("--drop-last", action="store_true", help="omit the last response of each batch")
    args = ap.parse_args(argv)
    pending = []
    for line in sys.stdin:
        line = line.strip()
        if line:
            pending.append(json.loads(line)["id"])
            continue
        ids = pending[::-1] if args.reverse else pending
        if args.drop_last and ids:
            ids = ids[:-1]
        for i in ids:
            sys.stdout.write(json.dumps({"id": i, "score": args.score}) + "\n")
        sys.stdout.write("\n")
        sys.stdout.flush()
        pending = []
    return 0


if __name__ == "__main__":
    sys.exit(main())

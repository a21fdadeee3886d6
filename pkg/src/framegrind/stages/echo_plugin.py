"""Loopback plugin for testing the line protocol.

    python -m framegrind.stages.echo_plugin --reply "FACES 1" --reply "10 10 50 50"

Answers the handshake, then replies to every FRAME request with the given
lines. ``--delay`` sleeps before each reply; ``--exit-after`` quits after that
many requests.
"""

import argparse
import sys
import time


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reply", action="append", default=[], help="reply line (repeatable)")
    ap.add_argument("--delay", type=float, default=0.0, help="seconds to wait before replying")
    ap.add_argument("--exit-after", type=int, default=None)
    ap.add_argument("--bad-hello", action="store_true")
    args = ap.parse_args(argv)

    stdin, stdout = sys.stdin.buffer, sys.stdout.buffer
    hello = stdin.readline()
    if not hello:
        return 0
    stdout.write(b"HELLO nonsense/0\n" if args.bad_hello else hello)
    stdout.flush()
    served = 0
    while True:
        header = stdin.readline()
        if not header:
            return 0
        fields = header.split()
        if len(fields) != 5 or fields[0] != b"FRAME":
            stdout.write(b"ERR bad request\n")
            stdout.flush()
            continue
        w, h, c = (int(v) for v in fields[2:])
        stdin.read(w * h * c)
        if args.delay:
            time.sleep(args.delay)
        for line in args.reply or ["FACES 0"]:
            stdout.write(line.encode("utf-8") + b"\n")
        stdout.flush()
        served += 1
        if args.exit_after is not None and served >= args.exit_after:
            return 0


if __name__ == "__main__":
    sys.exit(main())

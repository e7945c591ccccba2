"""Reference external predictor speaking the RAAR/1 line protocol.

Predicts ``sum((i + 1) * x_i)`` and can log each reply it sends::

    python -m raar.echo_predictor --log replies.txt
"""

import argparse
import sys


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--log", help="append every reply line to this file")
    args = parser.parse_args(argv)

    hello = sys.stdin.readline()
    parts = hello.split()
    if len(parts) != 2 or parts[0] != "RAAR/1":
        return 3
    dim = int(parts[1])
    sys.stdout.write("READY\n")
    sys.stdout.flush()

    log = open(args.log, "w") if args.log else None
    try:
        for line in sys.stdin:
            x = [float(v) for v in line.rstrip("\n").split(",")]
            if len(x) != dim:
                return 4
            reply = format(sum((i + 1) * v for i, v in enumerate(x)), ".17g")
            if log:
                log.write(reply + "\n")
            sys.stdout.write(reply + "\n")
            sys.stdout.flush()
    finally:
        if log:
            log.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())

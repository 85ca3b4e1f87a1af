"""Echo simulator speaking the bridge protocol: the state is the last input.

Fault-injection flags for tests count ``step`` requests:
``--garble-at K`` replies with a non-JSON line, ``--die-at K`` exits
without replying and ``--hang-at K`` never replies.
"""

import argparse
import json
import sys
import time


def main(argv=None):
    ap = argparse.ArgumentParser(prog="rlfalsify.echo_child")
    ap.add_argument("--garble-at", type=int)
    ap.add_argument("--die-at", type=int)
    ap.add_argument("--hang-at", type=int)
    args = ap.parse_args(argv)
    width, steps = 0, 0

    def reply(state):
        sys.stdout.write(json.dumps({"ok": True, "state": state}) + "\n")
        sys.stdout.flush()

    for line in sys.stdin:
        msg = json.loads(line)
        cmd = msg.get("cmd")
        if cmd == "init":
            width = len(msg["schema_out"])
            reply([0.0] * width)
        elif cmd == "reset":
            reply([0.0] * width)
        elif cmd == "step":
            steps += 1
            if steps == args.garble_at:
                sys.stdout.write("this is not json\n")
                sys.stdout.flush()
            elif steps == args.die_at:
                sys.stderr.write("echo child: injected crash\n")
                sys.exit(3)
            elif steps == args.hang_at:
                time.sleep(3600)
            else:
                reply([float(x) for x in msg["u"]])
        elif cmd == "end":
            return 0
        else:
            sys.stdout.write(json.dumps({"ok": False, "error": f"unknown cmd {cmd!r}"}) + "\n")
            sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())

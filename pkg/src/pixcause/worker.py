"""Reference classification worker speaking the NDJSON wire protocol.

    python -m pixcause.worker --builtin <name> [--shuffle]

Reads one JSON request per stdin line ({"id", "shape", "data_b64"}), replies
with {"id", "label", "confidences"} per line. --shuffle answers each group of
requests that arrived together in reverse order, to exercise out-of-order
matching in clients. Exits 0 on EOF.
"""

import argparse
import base64
import json
import os
import sys

import numpy as np

from . import builtins as builtin_models


def _respond(model, msg):
    shape = tuple(int(d) for d in msg["shape"])
    raw = base64.b64decode(msg["data_b64"])
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
    conf = model.batch_confidences(arr[None, ...])[0]
    return {
        "id": msg["id"],
        "label": int(np.argmax(conf)),
        "confidences": [float(v) for v in conf],
    }


def _line_groups(fd=0, chunk=1 << 16):
    """Yield lists of complete lines, grouped by read() arrival."""
    buf = b""
    while True:
        data = os.read(fd, chunk)
        if not data:
            if buf.strip():
                yield [buf]
            return
        buf += data
        if b"\n" not in buf:
            continue
        body, _, buf = buf.rpartition(b"\n")
        lines = [ln for ln in body.split(b"\n") if ln.strip()]
        if lines:
            yield lines


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--builtin", required=True, help="builtin classifier name")
    ap.add_argument("--shuffle", action="store_true",
                    help="answer co-arriving request groups newest-first")
    args = ap.parse_args(argv)
    model = builtin_models.parse_builtin(args.builtin)

    for lines in _line_groups():
        replies = []
        for line in lines:
            try:
                replies.append(_respond(model, json.loads(line)))
            except (ValueError, KeyError) as e:
                print(f"worker: bad request: {e}", file=sys.stderr)
                return 1
        if args.shuffle:
            replies.reverse()
        for reply in replies:
            sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Line-delimited JSON serving loop.

Exchange: the harness opens with {"hello": {"protocol_version": N}}; the
adapter answers with its descriptor {"hello": {name, supports_video,
higher_is_better, input_space, ...}} and then answers each request line
{"request_id", "test_path", "ref_path", "ppd", "fps", "color_encoding"}
with either {"request_id", "score"} or {"request_id", "error"}. One
response per request, in whatever order; each line is one JSON object,
flushed immediately. Unknown request fields are ignored.
"""
from __future__ import annotations

import json
import sys

from .images import read_stimulus
from .metrics import WrappedMetric

PROTOCOL_VERSION = 1


def _write(fout, obj) -> None:
    fout.write(json.dumps(obj) + "\n")
    fout.flush()


def _handle_request(metric: WrappedMetric, req: dict) -> dict:
    rid = req.get("request_id")
    try:
        test = read_stimulus(req["test_path"])
        ref = read_stimulus(req["ref_path"])
        return {"request_id": rid, "score": metric.score_frames(test, ref)}
    except Exception as exc:
        return {"request_id": rid, "error": f"{type(exc).__name__}: {exc}"}


def serve(metric: WrappedMetric, stdin=None, stdout=None) -> int:
    fin = stdin if stdin is not None else sys.stdin
    fout = stdout if stdout is not None else sys.stdout

    first = fin.readline()
    if not first:
        return 1
    try:
        client = json.loads(first).get("hello", {})
    except json.JSONDecodeError:
        print("adapter: malformed opening handshake", file=sys.stderr)
        return 1
    if client.get("protocol_version", PROTOCOL_VERSION) > PROTOCOL_VERSION:
        # one protocol version exists; answer anyway and let the harness decide
        print("adapter: newer protocol requested, answering v1", file=sys.stderr)

    hello = {
        "name": metric.name,
        "supports_video": metric.supports_video,
        "higher_is_better": metric.higher_is_better,
        "input_space": metric.input_space,
    }
    if metric.versions:
        hello["wrapped_versions"] = metric.versions
    _write(fout, {"hello": hello})

    for line in fin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            print("adapter: skipping malformed request line", file=sys.stderr)
            continue
        _write(fout, _handle_request(metric, req))
    return 0

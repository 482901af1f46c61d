"""Subprocess metric protocol: newline-delimited JSON over stdin/stdout.

Exchange, one JSON object per line:

  harness -> adapter   {"hello": {"protocol_version": 1}}
  adapter -> harness   {"hello": {"name": ..., "supports_video": bool,
                                  "higher_is_better": bool, "input_space": ...}}
  harness -> adapter   {"request_id": "r000001", "test_path": ..., "ref_path": ...,
                        "ppd": 60.0, "fps": 0.0, "color_encoding": "encoded_srgb_16"}
  adapter -> harness   {"request_id": "r000001", "score": 43.7}
                    or {"request_id": "r000001", "error": "..."}

Stimuli travel by path (single PNG or a directory of frame_######.png), never
inline. Responses may arrive in any order; the harness pipelines a bounded
number of outstanding requests. A request timeout or an adapter crash turns
into error responses for the affected requests; scoring always yields a
(possibly partial) result set rather than an abort.

Run `python -m percepbench.metric_adapter --serve-native <metric>` to expose
a built-in metric through this protocol (used by the conformance tests and
as a reference adapter implementation).
"""
from __future__ import annotations

import json
import os
import selectors
import shlex
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import HandshakeFailed, NonNumericScore
from .metrics_native import NATIVE_METRICS, MetricDescriptor
from .pngio import read_manifest, read_stimulus_codes

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 300.0
DEFAULT_WINDOW = 4
HANDSHAKE_FIELDS = ("name", "supports_video", "higher_is_better", "input_space")


@dataclass(frozen=True)
class AdapterRequest:
    request_id: str
    test_path: str
    ref_path: str
    ppd: float
    fps: float
    color_encoding: str

    def to_json(self) -> dict:
        return {
            "request_id": self.request_id,
            "test_path": self.test_path,
            "ref_path": self.ref_path,
            "ppd": self.ppd,
            "fps": self.fps,
            "color_encoding": self.color_encoding,
        }

    @classmethod
    def from_json(cls, d: dict) -> "AdapterRequest":
        return cls(
            request_id=str(d["request_id"]),
            test_path=str(d["test_path"]),
            ref_path=str(d["ref_path"]),
            ppd=float(d["ppd"]),
            fps=float(d["fps"]),
            color_encoding=str(d["color_encoding"]),
        )


@dataclass(frozen=True)
class AdapterResponse:
    request_id: str
    score: Optional[float] = None
    error: Optional[str] = None

    def __post_init__(self):
        if (self.score is None) == (self.error is None):
            raise ValueError("exactly one of score/error must be set")

    def to_json(self) -> dict:
        if self.error is not None:
            return {"request_id": self.request_id, "error": self.error}
        return {"request_id": self.request_id, "score": self.score}

    @classmethod
    def from_json(cls, d: dict) -> "AdapterResponse":
        rid = str(d["request_id"])
        if "error" in d and d["error"] is not None:
            return cls(request_id=rid, error=str(d["error"]))
        if "score" not in d:
            raise NonNumericScore(f"response for {rid} has neither score nor error")
        score = d["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not np.isfinite(score):
            raise NonNumericScore(f"response for {rid} has non-numeric score {score!r}")
        return cls(request_id=rid, score=float(score))


class AdapterClient:
    """Owns one adapter subprocess; thread-safe; pipelined scoring."""

    def __init__(
        self,
        cmd: str,
        timeout: float = DEFAULT_TIMEOUT,
        window: int = DEFAULT_WINDOW,
    ):
        self.cmd = cmd
        self.timeout = timeout
        self.window = max(1, int(window))
        self._lock = threading.Lock()
        self._buf = b""
        self._eof = False
        self._counter = 0
        self.protocol_errors: List[str] = []
        self.proc = subprocess.Popen(
            shlex.split(cmd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            bufsize=0,
        )
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)
        self.descriptor = self._handshake()

    # -- low-level line I/O ------------------------------------------------

    def _send(self, obj: dict) -> bool:
        try:
            self.proc.stdin.write((json.dumps(obj) + "\n").encode("utf-8"))
            self.proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError, ValueError):
            return False

    def _read_line(self, deadline: float) -> Optional[bytes]:
        """One line from the adapter; None on timeout or EOF (check _eof)."""
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                return line
            if self._eof:
                return None
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            if not self._sel.select(timeout=min(remaining, 0.5)):
                continue
            chunk = os.read(self.proc.stdout.fileno(), 65536)
            if not chunk:
                self._eof = True
                return None
            self._buf += chunk

    # -- protocol ------------------------------------------------------------

    def _handshake(self) -> MetricDescriptor:
        if not self._send({"hello": {"protocol_version": PROTOCOL_VERSION}}):
            raise HandshakeFailed("could not write handshake to adapter")
        line = self._read_line(time.monotonic() + self.timeout)
        if line is None:
            self.close()
            raise HandshakeFailed("no handshake reply (timeout or adapter exited)")
        try:
            msg = json.loads(line.decode("utf-8"))
            hello = msg["hello"]
            for f in HANDSHAKE_FIELDS:
                if f not in hello:
                    raise KeyError(f)
        except (ValueError, KeyError, TypeError) as exc:
            self.close()
            raise HandshakeFailed(f"bad handshake reply: {exc}")
        return MetricDescriptor(
            name=str(hello["name"]),
            input_space=str(hello["input_space"]),
            supports_video=bool(hello["supports_video"]),
            higher_is_better=bool(hello["higher_is_better"]),
            is_color=True,  # external metrics are assumed full-color
        )

    def next_request_id(self) -> str:
        self._counter += 1
        return f"r{self._counter:06d}"

    def score_requests(
        self, requests: List[AdapterRequest]
    ) -> Dict[str, AdapterResponse]:
        """Pipelined scoring; one response per request id, errors included."""
        with self._lock:
            return self._score_locked(requests)

    def _score_locked(self, requests) -> Dict[str, AdapterResponse]:
        results: Dict[str, AdapterResponse] = {}
        pending = list(requests)
        in_flight: Dict[str, Tuple[AdapterRequest, float]] = {}
        alive = self.proc.poll() is None

        def fail_all(reason: str):
            for rid, (req, _) in list(in_flight.items()):
                results[rid] = AdapterResponse(request_id=rid, error=reason)
            in_flight.clear()
            for req in pending:
                results[req.request_id] = AdapterResponse(
                    request_id=req.request_id, error=reason
                )
            pending.clear()

        while pending or in_flight:
            while alive and pending and len(in_flight) < self.window:
                req = pending.pop(0)
                if self._send(req.to_json()):
                    in_flight[req.request_id] = (req, time.monotonic() + self.timeout)
                else:
                    alive = False
                    results[req.request_id] = AdapterResponse(
                        request_id=req.request_id, error="adapter pipe closed"
                    )
            if not in_flight:
                if pending and not alive:
                    fail_all("adapter exited")
                continue
            deadline = min(d for _, d in in_flight.values())
            line = self._read_line(deadline)
            if line is None:
                if self._eof:
                    fail_all("adapter exited mid-run")
                    break
                now = time.monotonic()
                expired = [rid for rid, (_, d) in in_flight.items() if d <= now]
                for rid in expired:
                    results[rid] = AdapterResponse(
                        request_id=rid, error=f"timeout after {self.timeout:g} s"
                    )
                    del in_flight[rid]
                continue
            try:
                msg = json.loads(line.decode("utf-8"))
            except ValueError:
                self.protocol_errors.append(f"unparseable line: {line[:200]!r}")
                continue
            rid = str(msg.get("request_id", ""))
            if rid not in in_flight:
                self.protocol_errors.append(f"response for unknown id {rid!r}")
                continue
            del in_flight[rid]
            try:
                results[rid] = AdapterResponse.from_json(msg)
            except NonNumericScore as exc:
                results[rid] = AdapterResponse(request_id=rid, error=str(exc))
        return results

    def close(self):
        try:
            if self.proc.stdin and not self.proc.stdin.closed:
                self.proc.stdin.close()
        except OSError:
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class AdapterScorer:
    """Runner-protocol scorer backed by an AdapterClient."""

    kind = "adapter"

    def __init__(self, client: AdapterClient):
        self.client = client
        self.descriptor = client.descriptor

    def score_items(self, items) -> Tuple[np.ndarray, List[str]]:
        requests = []
        meta = []
        scores = np.full(len(items), np.nan)
        errors: List[str] = []
        for i, item in enumerate(items):
            try:
                man = read_manifest(item.test_base + ".json")
                test_path = os.path.join(os.path.dirname(item.test_base), man["path"])
                ref_man = read_manifest(item.ref_base + ".json")
                ref_path = os.path.join(os.path.dirname(item.ref_base), ref_man["path"])
            except Exception as exc:
                errors.append(f"item {i}: {exc}")
                continue
            req = AdapterRequest(
                request_id=self.client.next_request_id(),
                test_path=os.path.abspath(test_path),
                ref_path=os.path.abspath(ref_path),
                ppd=float(man["ppd"]),
                fps=float(man["fps"]),
                color_encoding=f"encoded_srgb_{int(item.bit_depth)}",
            )
            requests.append(req)
            meta.append(i)
        responses = self.client.score_requests(requests)
        for req, i in zip(requests, meta):
            resp = responses.get(req.request_id)
            if resp is None:
                errors.append(f"item {i}: no response")
            elif resp.error is not None:
                errors.append(f"item {i}: {resp.error}")
            else:
                scores[i] = resp.score
        return scores, errors


# ---------------------------------------------------------------------------
# adapter-side reference implementation (serves a native metric)


def serve_native(metric_name: str, stdin=None, stdout=None) -> int:
    """Speak the adapter protocol on stdio, scoring with a built-in metric."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    desc, fn = NATIVE_METRICS[metric_name]

    def reply(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for raw in stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            msg = json.loads(raw)
        except ValueError:
            continue
        if "hello" in msg:
            reply(
                {
                    "hello": {
                        "name": desc.name,
                        "supports_video": desc.supports_video,
                        "higher_is_better": desc.higher_is_better,
                        "input_space": desc.input_space,
                    }
                }
            )
            continue
        rid = str(msg.get("request_id", ""))
        try:
            req = AdapterRequest.from_json(msg)
            bits = 16 if req.color_encoding.endswith("16") else 8
            test = read_stimulus_codes(req.test_path).astype(np.float64) / ((1 << bits) - 1)
            ref = read_stimulus_codes(req.ref_path).astype(np.float64) / ((1 << bits) - 1)
            vals = [fn(test[k], ref[k], peak_luminance=100.0) for k in range(test.shape[0])]
            reply({"request_id": rid, "score": float(np.mean(vals))})
        except Exception as exc:
            reply({"request_id": rid, "error": f"{type(exc).__name__}: {exc}"})
    return 0


# ---------------------------------------------------------------------------
# conformance fixtures


def run_conformance(cmd: str, workdir: str, timeout: float = 60.0) -> List[str]:
    """Protocol conformance checks against an adapter command.

    Returns a list of failure descriptions; empty means conformant.
    Exercised checks: handshake schema, finite scores, self-distance
    consistency, error responses for unreadable paths, tolerance of unknown
    request fields, and response/request id matching.
    """
    import cv2

    failures: List[str] = []
    os.makedirs(workdir, exist_ok=True)
    a_path = os.path.join(workdir, "conf_a.png")
    b_path = os.path.join(workdir, "conf_b.png")
    rng = np.random.default_rng(20240601)
    img_a = (rng.uniform(0.2, 0.8, size=(48, 48, 3)) * 65535).astype(np.uint16)
    img_b = img_a.copy()
    img_b[8:40, 8:40] = np.clip(img_b[8:40, 8:40].astype(np.int64) + 4000, 0, 65535).astype(
        np.uint16
    )
    cv2.imwrite(a_path, cv2.cvtColor(img_a, cv2.COLOR_RGB2BGR))
    cv2.imwrite(b_path, cv2.cvtColor(img_b, cv2.COLOR_RGB2BGR))

    try:
        client = AdapterClient(cmd, timeout=timeout)
    except HandshakeFailed as exc:
        return [f"handshake: {exc}"]
    try:
        d = client.descriptor
        if not d.name:
            failures.append("handshake: empty metric name")
        if d.input_space not in ("encoded_srgb", "linear_luminance", "lab"):
            failures.append(f"handshake: unknown input_space {d.input_space!r}")

        def make(rid, test=b_path, ref=a_path, extra=None):
            base = {
                "request_id": rid,
                "test_path": test,
                "ref_path": ref,
                "ppd": 60.0,
                "fps": 0.0,
                "color_encoding": "encoded_srgb_16",
            }
            if extra:
                base.update(extra)
            return base

        reqs = [
            AdapterRequest.from_json(make("c1")),
            AdapterRequest.from_json(make("c2", test=a_path, ref=a_path)),
            AdapterRequest.from_json(make("c3", test=os.path.join(workdir, "missing.png"))),
        ]
        out = client.score_requests(reqs)
        r1, r2, r3 = out.get("c1"), out.get("c2"), out.get("c3")
        if r1 is None or r1.error is not None:
            failures.append(f"distinct pair: expected a score, got {r1}")
        if r2 is None or r2.error is not None:
            failures.append(f"self pair: expected a score, got {r2}")
        if r3 is None or r3.error is None:
            failures.append(f"missing file: expected an error response, got {r3}")

        # a second batch must still work, unknown fields must be tolerated
        extra_req = AdapterRequest.from_json(make("c4", extra={"unknown_field": 7}))
        out2 = client.score_requests([extra_req])
        r4 = out2.get("c4")
        if r4 is None or r4.error is not None:
            failures.append(f"unknown field: expected a score, got {r4}")
        elif r1 is not None and r1.error is None and abs(r4.score - r1.score) > 1e-9:
            failures.append("unknown field: score differs from identical request")
        if client.protocol_errors:
            failures.append(f"protocol errors: {client.protocol_errors}")
    finally:
        client.close()
    return failures


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(description="metric adapter utilities")
    ap.add_argument("--serve-native", metavar="METRIC", help="serve a built-in metric")
    args = ap.parse_args(argv)
    if args.serve_native:
        if args.serve_native not in NATIVE_METRICS:
            print(f"unknown metric {args.serve_native!r}", file=sys.stderr)
            return 2
        return serve_native(args.serve_native)
    ap.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())

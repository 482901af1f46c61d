"""Adapter that serves external image quality metrics over the benchmark's
line-delimited JSON protocol (stdin/stdout).

The harness writes one JSON object per line and expects one back per
request; see protocol.serve. Metrics are wrapped behind WrappedMetric so a
dependency-free stub can stand in for the learned ones in CI.
"""
from .metrics import WrappedMetric, available_metrics, load_metric
from .protocol import serve

__all__ = ["WrappedMetric", "available_metrics", "load_metric", "serve"]

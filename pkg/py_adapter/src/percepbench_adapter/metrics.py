"""Wrapped metrics the adapter can serve.

``stub`` is dependency-free (mean absolute difference in display-encoded
[0, 1] space) and exists so protocol plumbing can be exercised without GPUs
or model downloads. The LPIPS variants load lazily and record the wrapped
package versions for provenance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

FrameMetric = Callable[[np.ndarray, np.ndarray], float]


@dataclass
class WrappedMetric:
    name: str
    fn: FrameMetric  # (test, ref) frames in [0, 1] -> scalar
    higher_is_better: bool = False
    supports_video: bool = False
    input_space: str = "encoded_srgb"
    versions: Dict[str, str] = field(default_factory=dict)

    def score_frames(self, test_frames, ref_frames) -> float:
        if len(test_frames) != len(ref_frames):
            raise ValueError(
                f"frame count mismatch: {len(test_frames)} vs {len(ref_frames)}"
            )
        vals = []
        for t, r in zip(test_frames, ref_frames):
            if t.shape != r.shape:
                raise ValueError(f"shape mismatch: {t.shape} vs {r.shape}")
            vals.append(float(self.fn(t, r)))
        return float(np.mean(vals))


def _stub_fn(test: np.ndarray, ref: np.ndarray) -> float:
    return float(np.mean(np.abs(test - ref)))


def _make_stub() -> WrappedMetric:
    return WrappedMetric(name="stub", fn=_stub_fn)


def _make_lpips(net: str) -> WrappedMetric:
    try:
        import lpips
        import torch
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise RuntimeError(
            f"lpips-{net} needs the [lpips] extra: pip install percepbench-adapter[lpips]"
        ) from exc

    model = lpips.LPIPS(net=net, verbose=False)
    model.eval()

    def fn(test: np.ndarray, ref: np.ndarray) -> float:
        # LPIPS expects NCHW tensors in [-1, 1]
        def to_tensor(img):
            arr = np.transpose(img.astype(np.float32) * 2.0 - 1.0, (2, 0, 1))
            return torch.from_numpy(arr[None])

        with torch.no_grad():
            return float(model(to_tensor(test), to_tensor(ref)).item())

    return WrappedMetric(
        name=f"lpips-{net}",
        fn=fn,
        versions={"lpips": getattr(lpips, "__version__", "?"),
                  "torch": torch.__version__},
    )


_FACTORIES = {
    "stub": _make_stub,
    "lpips-alex": lambda: _make_lpips("alex"),
    "lpips-vgg": lambda: _make_lpips("vgg"),
}


def available_metrics():
    return tuple(sorted(_FACTORIES))


def load_metric(name: str) -> WrappedMetric:
    if name not in _FACTORIES:
        raise KeyError(f"unknown metric {name!r}; have {', '.join(available_metrics())}")
    return _FACTORIES[name]()

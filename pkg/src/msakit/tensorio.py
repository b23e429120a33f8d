"""Raw little-endian float32 curve files with JSON sidecars.

A bundle <stem>.json / <stem>.f32 / <stem>.mask holds a channels-by-frames
matrix (row-major float32), optional per-frame masks (one byte per frame,
values 0/1), and a sidecar naming the channels and the frame rate. Round-trips
are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ToolkitError
from .targets import CLASS_CHANNELS, FrameGrid, PredictionCurves, TargetTensor


class TensorFileError(ToolkitError, ValueError):
    """Inconsistent or corrupt tensor bundle."""


def _part(stem: Path, suffix: str) -> Path:
    # Literal concatenation: song ids may contain dots, so with_suffix is unsafe.
    return stem.parent / (stem.name + suffix)


@dataclass(frozen=True)
class CurveBundle:
    matrix: np.ndarray            # (channels, frames) float32
    channels: tuple[str, ...]
    rate: float
    masks: np.ndarray | None      # (n_masks, frames) uint8, or None
    mask_names: tuple[str, ...]


def save_curves(
    stem: str | Path,
    matrix: np.ndarray,
    channels: Sequence[str],
    rate: float,
    masks: np.ndarray | None = None,
    mask_names: Sequence[str] = (),
) -> None:
    stem = Path(stem)
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
    if matrix.ndim != 2 or matrix.shape[0] != len(channels):
        raise TensorFileError(f"matrix shape {matrix.shape} does not match {len(channels)} channels")
    count = matrix.shape[1]
    header = {
        "rate": float(rate),
        "count": count,
        "channels": list(channels),
        "masks": list(mask_names),
        "dtype": "float32",
        "byteorder": "little",
    }
    if masks is not None:
        masks = np.ascontiguousarray(np.asarray(masks, dtype=np.uint8))
        if masks.shape != (len(mask_names), count):
            raise TensorFileError(f"mask shape {masks.shape} does not match header")
        if masks.size and masks.max() > 1:
            raise TensorFileError("mask bytes must be 0 or 1")
    elif mask_names:
        raise TensorFileError("mask_names given without masks")
    stem.parent.mkdir(parents=True, exist_ok=True)
    _part(stem, ".json").write_text(
        json.dumps(header, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _part(stem, ".f32").write_bytes(matrix.tobytes(order="C"))
    if masks is not None:
        _part(stem, ".mask").write_bytes(masks.tobytes(order="C"))


def load_curves(stem: str | Path) -> CurveBundle:
    stem = Path(stem)
    header = json.loads(_part(stem, ".json").read_text(encoding="utf-8"))
    channels = tuple(header["channels"])
    mask_names = tuple(header["masks"])
    count = int(header["count"])
    raw = _part(stem, ".f32").read_bytes()
    expect = len(channels) * count * 4
    if len(raw) != expect:
        raise TensorFileError(f"{stem}.f32 has {len(raw)} bytes, expected {expect}")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(len(channels), count)
    masks = None
    if mask_names:
        mraw = _part(stem, ".mask").read_bytes()
        if len(mraw) != len(mask_names) * count:
            raise TensorFileError(f"{stem}.mask has {len(mraw)} bytes")
        masks = np.frombuffer(mraw, dtype=np.uint8).reshape(len(mask_names), count)
        if masks.size and masks.max() > 1:
            raise TensorFileError("mask bytes must be 0 or 1")
    return CurveBundle(matrix, channels, float(header["rate"]), masks, mask_names)


_TARGET_MASKS = ("boundary_mask", "function_mask")


def save_target_tensor(stem: str | Path, tgt: TargetTensor, grid: FrameGrid) -> None:
    matrix = np.vstack([tgt.boundary[None, :], tgt.function])
    masks = np.vstack([tgt.boundary_mask[None, :], tgt.function_mask[None, :]])
    save_curves(stem, matrix, CLASS_CHANNELS, grid.rate, masks, _TARGET_MASKS)


def load_target_tensor(stem: str | Path) -> tuple[TargetTensor, FrameGrid]:
    bundle = load_curves(stem)
    if bundle.channels != CLASS_CHANNELS or bundle.mask_names != _TARGET_MASKS:
        raise TensorFileError(f"{stem} is not a target-tensor bundle")
    assert bundle.masks is not None
    tgt = TargetTensor(
        bundle.matrix[0].astype(float),
        bundle.masks[0].copy(),
        bundle.matrix[1:].astype(float),
        bundle.masks[1].copy(),
    )
    grid = FrameGrid(rate=bundle.rate, count=bundle.matrix.shape[1])
    return tgt, grid


def save_prediction_curves(stem: str | Path, pred: PredictionCurves, grid: FrameGrid) -> None:
    matrix = np.vstack([pred.boundary_hat[None, :], pred.function_hat])
    save_curves(stem, matrix, CLASS_CHANNELS, grid.rate)


def load_prediction_curves(stem: str | Path) -> tuple[PredictionCurves, FrameGrid]:
    bundle = load_curves(stem)
    if bundle.channels != CLASS_CHANNELS:
        raise TensorFileError(f"{stem} is not a prediction-curve bundle")
    pred = PredictionCurves(
        bundle.matrix[0].astype(float), bundle.matrix[1:].astype(float)
    )
    grid = FrameGrid(rate=bundle.rate, count=bundle.matrix.shape[1])
    return pred, grid


def save_features(stem: str | Path, features: np.ndarray, rate: float) -> None:
    """Store a frames-by-dims feature matrix (transposed to channels-by-frames)."""
    features = np.asarray(features)
    if features.ndim != 2:
        raise TensorFileError(f"features must be 2-D, got shape {features.shape}")
    names = [f"f{i}" for i in range(features.shape[1])]
    save_curves(stem, features.T, names, rate)


def load_features(stem: str | Path) -> tuple[np.ndarray, float]:
    bundle = load_curves(stem)
    return bundle.matrix.T.astype(float), bundle.rate

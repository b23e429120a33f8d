"""Frame-level activation targets with supervision masks, and the masked losses.

Rasterization places a raised-cosine pulse at every labeled segment edge for
the boundary channel and one-hot class rows for the function channels. Masks
restrict supervision to labeled spans so that unlabeled padding never
contributes to a loss: function frames are supervised exactly where their
centers fall inside a labeled segment, boundary frames within a labeled span
plus one ramp half-width beyond each edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import Annotation, PartialAnnotation
from .errors import ToolkitError
from .taxonomy import CLASS_NAMES, NUM_CLASSES

EPSILON = 1e-7
DEFAULT_FRAME_RATE = 10.0
DEFAULT_RAMP_HALFWIDTH = 0.5
# Conventional training chunk lengths, in seconds.
CHUNK_WINDOWS = (24.0, 36.0)
# Channel order for curve bundles on disk: boundary first, then the classes.
CLASS_CHANNELS = ("boundary",) + CLASS_NAMES


class GridMismatch(ToolkitError, ValueError):
    """Annotation duration is inconsistent with the frame grid."""


class ShapeMismatch(ToolkitError, ValueError):
    """Prediction and target shapes differ."""


@dataclass(frozen=True)
class FrameGrid:
    """Fixed-rate frame grid; frame i covers [i/rate, (i+1)/rate) from origin."""

    rate: float = DEFAULT_FRAME_RATE
    count: int = 0
    origin: float = 0.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"frame rate must be positive, got {self.rate}")
        if self.count < 0:
            raise ValueError(f"frame count must be non-negative, got {self.count}")

    @classmethod
    def for_duration(cls, duration: float, rate: float = DEFAULT_FRAME_RATE,
                     origin: float = 0.0) -> "FrameGrid":
        if rate <= 0:
            raise ValueError(f"frame rate must be positive, got {rate}")
        if duration <= 0:
            raise ValueError(f"duration must be positive, got {duration}")
        count = int(math.ceil(duration * rate - 1e-9))
        return cls(rate=rate, count=count, origin=origin)

    @property
    def duration(self) -> float:
        """Nominal duration covered by the grid."""
        return self.count / self.rate

    def centers(self) -> np.ndarray:
        return self.origin + (np.arange(self.count) + 0.5) / self.rate


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TargetTensor:
    """Per-frame supervision targets: boundary curve, one-hot function rows, masks."""

    boundary: np.ndarray       # (count,) float64 in [0, 1]
    boundary_mask: np.ndarray  # (count,) uint8
    function: np.ndarray       # (NUM_CLASSES, count) float64 in {0, 1}
    function_mask: np.ndarray  # (count,) uint8

    def __post_init__(self):
        count = self.boundary.shape[0]
        if self.boundary_mask.shape != (count,) or self.function_mask.shape != (count,):
            raise ShapeMismatch("mask shapes differ from boundary shape")
        if self.function.shape != (NUM_CLASSES, count):
            raise ShapeMismatch(
                f"function must be ({NUM_CLASSES}, {count}), got {self.function.shape}"
            )
        colsum = self.function.sum(axis=0)
        fmask = self.function_mask.astype(bool)
        if not np.all(colsum[fmask] == 1.0) or not np.all(colsum[~fmask] == 0.0):
            raise ValueError("function columns must be one-hot where masked, zero elsewhere")
        if self.boundary.min(initial=0.0) < 0.0 or self.boundary.max(initial=0.0) > 1.0:
            raise ValueError("boundary values must lie in [0, 1]")
        for name in ("boundary", "boundary_mask", "function", "function_mask"):
            _frozen(getattr(self, name))

    @property
    def count(self) -> int:
        return self.boundary.shape[0]


@dataclass(frozen=True)
class PredictionCurves:
    """Per-frame model outputs: boundary likelihood plus one likelihood per class."""

    boundary_hat: np.ndarray  # (count,) in [0, 1]
    function_hat: np.ndarray  # (NUM_CLASSES, count) in [0, 1]

    def __post_init__(self):
        count = self.boundary_hat.shape[0]
        if self.function_hat.shape != (NUM_CLASSES, count):
            raise ShapeMismatch(
                f"function_hat must be ({NUM_CLASSES}, {count}), got {self.function_hat.shape}"
            )
        for arr in (self.boundary_hat, self.function_hat):
            if arr.size and (arr.min() < -1e-9 or arr.max() > 1 + 1e-9):
                raise ValueError("curve values must lie in [0, 1]")

    @property
    def count(self) -> int:
        return self.boundary_hat.shape[0]


def rasterize(
    ann: Annotation | PartialAnnotation,
    grid: FrameGrid,
    ramp_halfwidth: float = DEFAULT_RAMP_HALFWIDTH,
) -> TargetTensor:
    """Rasterize an annotation onto the grid.

    Function rows get the one-hot class of the segment containing each frame
    center (half-open [start, end)); the function mask is 1 exactly on those
    frames. The boundary channel sums raised-cosine pulses
    0.5 * (1 + cos(pi * (t - b) / w)) over every distinct labeled segment edge
    b, clipped to [0, 1]; its mask covers labeled spans widened by w.
    """
    if ramp_halfwidth <= 0:
        raise ValueError(f"ramp_halfwidth must be positive, got {ramp_halfwidth}")
    expected = FrameGrid.for_duration(ann.duration, grid.rate).count
    if expected != grid.count:
        raise GridMismatch(
            f"grid has {grid.count} frames but duration {ann.duration}s "
            f"at {grid.rate} fps needs {expected}"
        )
    centers = grid.centers() - grid.origin
    count = grid.count
    w = ramp_halfwidth

    function = np.zeros((NUM_CLASSES, count))
    function_mask = np.zeros(count, dtype=np.uint8)
    boundary_mask = np.zeros(count, dtype=np.uint8)
    for seg in ann.labeled:
        inside = (centers >= seg.start) & (centers < seg.end)
        function[int(seg.label), inside] = 1.0
        function_mask[inside] = 1
        boundary_mask[(centers >= seg.start - w) & (centers <= seg.end + w)] = 1

    boundary = np.zeros(count)
    edges = sorted({t for seg in ann.labeled for t in (seg.start, seg.end)})
    for b in edges:
        offsets = centers - b
        hit = np.abs(offsets) <= w
        boundary[hit] += 0.5 * (1.0 + np.cos(np.pi * offsets[hit] / w))
    np.clip(boundary, 0.0, 1.0, out=boundary)

    return TargetTensor(boundary, boundary_mask, function, function_mask)


def _bce(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = np.clip(p, EPSILON, 1.0 - EPSILON)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def _check_pair(pred: PredictionCurves, tgt: TargetTensor) -> None:
    if pred.count != tgt.count:
        raise ShapeMismatch(f"prediction has {pred.count} frames, target {tgt.count}")


def masked_function_loss(pred: PredictionCurves, tgt: TargetTensor) -> tuple[float, int]:
    """Mean binary cross-entropy over masked-in frames and all classes.

    Returns (loss, frames_counted); (0.0, 0) when the mask is empty. Frames
    with mask 0 never enter the computation, so perturbing them leaves the
    loss bit-identical.
    """
    _check_pair(pred, tgt)
    mask = tgt.function_mask.astype(bool)
    n = int(mask.sum())
    if n == 0:
        return 0.0, 0
    loss = _bce(pred.function_hat[:, mask], tgt.function[:, mask]).mean()
    return float(loss), n


def masked_boundary_loss(pred: PredictionCurves, tgt: TargetTensor) -> tuple[float, int]:
    """Masked binary cross-entropy on the boundary channel; see masked_function_loss."""
    _check_pair(pred, tgt)
    mask = tgt.boundary_mask.astype(bool)
    n = int(mask.sum())
    if n == 0:
        return 0.0, 0
    loss = _bce(pred.boundary_hat[mask], tgt.boundary[mask]).mean()
    return float(loss), n


def function_loss_gradient(pred: PredictionCurves, tgt: TargetTensor) -> np.ndarray:
    """Analytic d(loss)/d(function_hat): (p - y) / (p (1 - p)) / N, zero off-mask."""
    _check_pair(pred, tgt)
    grad = np.zeros_like(pred.function_hat)
    mask = tgt.function_mask.astype(bool)
    n = int(mask.sum())
    if n == 0:
        return grad
    p = np.clip(pred.function_hat[:, mask], EPSILON, 1.0 - EPSILON)
    y = tgt.function[:, mask]
    grad[:, mask] = (p - y) / (p * (1.0 - p)) / (NUM_CLASSES * n)
    return grad


def boundary_loss_gradient(pred: PredictionCurves, tgt: TargetTensor) -> np.ndarray:
    """Analytic d(loss)/d(boundary_hat), zero off-mask."""
    _check_pair(pred, tgt)
    grad = np.zeros_like(pred.boundary_hat)
    mask = tgt.boundary_mask.astype(bool)
    n = int(mask.sum())
    if n == 0:
        return grad
    p = np.clip(pred.boundary_hat[mask], EPSILON, 1.0 - EPSILON)
    y = tgt.boundary[mask]
    grad[mask] = (p - y) / (p * (1.0 - p)) / n
    return grad


@dataclass(frozen=True)
class Chunk:
    """Fixed-length window of a target tensor, with its frame offset."""

    offset: int
    targets: TargetTensor


def chunk_targets(
    tgt: TargetTensor, grid: FrameGrid, window: float, hop: float
) -> list[Chunk]:
    """Slice into fixed-length windows starting at 0, hop, 2*hop, ...

    The final window is right-aligned to the end (it may overlap its
    predecessor). A window longer than the input yields a single window
    zero-padded on the right with both masks zeroed over the padding.
    """
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")
    wf = max(1, int(round(window * grid.rate)))
    hf = max(1, int(round(hop * grid.rate)))
    total = tgt.count

    if wf >= total:
        if wf == total:
            return [Chunk(0, tgt)]
        boundary = np.zeros(wf)
        boundary[:total] = tgt.boundary
        bmask = np.zeros(wf, dtype=np.uint8)
        bmask[:total] = tgt.boundary_mask
        function = np.zeros((NUM_CLASSES, wf))
        function[:, :total] = tgt.function
        fmask = np.zeros(wf, dtype=np.uint8)
        fmask[:total] = tgt.function_mask
        return [Chunk(0, TargetTensor(boundary, bmask, function, fmask))]

    starts = list(range(0, total - wf + 1, hf))
    if starts[-1] != total - wf:
        starts.append(total - wf)
    chunks = []
    for s in starts:
        view = TargetTensor(
            tgt.boundary[s:s + wf].copy(),
            tgt.boundary_mask[s:s + wf].copy(),
            tgt.function[:, s:s + wf].copy(),
            tgt.function_mask[s:s + wf].copy(),
        )
        chunks.append(Chunk(s, view))
    return chunks

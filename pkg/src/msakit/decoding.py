"""Convert prediction curves into a labeled segmentation.

Boundary picking: median-filter the boundary curve for detection, refine each
detected peak to the raw-curve argmax nearby, then greedily keep the highest
peaks while suppressing neighbors closer than the minimum gap. Peak times are
reported at frame centers. Labeling: each inter-boundary span takes the argmax
of its mean per-class activation, ties broken by the lowest class code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter
from scipy.signal import find_peaks

from .annotations import Annotation, Segment
from .targets import FrameGrid, PredictionCurves
from .taxonomy import StructuralFunction

_EPS = 1e-12


@dataclass(frozen=True)
class DecodeConfig:
    """Post-processing parameters.

    median_window 0 disables smoothing; a peak_threshold above 1 disables
    peak picking entirely (curves never exceed 1), leaving the trivial
    [0, duration] segmentation.
    """

    peak_threshold: float = 0.3
    min_gap: float = 4.0
    median_window: float = 0.5

    def __post_init__(self):
        if self.peak_threshold < 0.0:
            raise ValueError(f"peak_threshold must be >= 0, got {self.peak_threshold}")
        if self.min_gap <= 0:
            raise ValueError(f"min_gap must be positive, got {self.min_gap}")
        if self.median_window < 0:
            raise ValueError(f"median_window must be >= 0, got {self.median_window}")


def pick_boundaries(
    boundary_hat: np.ndarray,
    grid: FrameGrid,
    cfg: DecodeConfig = DecodeConfig(),
    duration: float | None = None,
) -> list[float]:
    """Boundary times from a boundary activation curve.

    Always includes 0 and the total duration. Candidates are local maxima of
    the (optionally median-filtered) curve, refined to the raw argmax within
    half a kernel, kept strictly above the threshold, then greedily selected
    highest-first with suppression inside min_gap seconds.
    """
    x = np.asarray(boundary_hat, dtype=float)
    if x.ndim != 1 or x.shape[0] != grid.count:
        raise ValueError(f"curve shape {x.shape} does not match grid count {grid.count}")
    if duration is None:
        duration = grid.duration
    if x.size == 0:
        return [0.0, duration]

    if cfg.median_window > 0:
        k = max(1, int(round(cfg.median_window * grid.rate)))
        if k % 2 == 0:
            k += 1
        smooth = median_filter(x, size=k, mode="nearest")
        half = k // 2
    else:
        smooth = x
        half = 0

    peaks, _ = find_peaks(smooth)
    if half > 0 and peaks.size:
        refined = []
        for p in peaks:
            lo = max(p - half, 0)
            hi = min(p + half + 1, x.size)
            refined.append(lo + int(np.argmax(x[lo:hi])))
        peaks = np.unique(refined)
    peaks = peaks[x[peaks] > cfg.peak_threshold]

    centers = grid.centers() - grid.origin
    in_range = (centers[peaks] > 0.0) & (centers[peaks] < duration)
    peaks = peaks[in_range]

    order = sorted(range(peaks.size), key=lambda i: (-x[peaks[i]], peaks[i]))
    kept_times: list[float] = []
    for i in order:
        t = centers[peaks[i]]
        if all(abs(t - u) >= cfg.min_gap for u in kept_times):
            kept_times.append(float(t))

    return [0.0] + sorted(kept_times) + [float(duration)]


def label_segments(
    function_hat: np.ndarray,
    boundaries: list[float],
    grid: FrameGrid,
    song_id: str = "song",
) -> Annotation:
    """Label each inter-boundary span by its mean per-class activation.

    Spans shorter than one frame are merged into the left neighbor (into the
    right one at the very start). Boundaries must be sorted and include 0 and
    the duration.
    """
    if len(boundaries) < 2:
        raise ValueError("need at least [0, duration] boundaries")
    frame_len = 1.0 / grid.rate
    duration = boundaries[-1]

    kept = [boundaries[0]]
    for b in boundaries[1:-1]:
        if b - kept[-1] >= frame_len - _EPS:
            kept.append(b)
    if duration - kept[-1] < frame_len - _EPS and len(kept) > 1:
        kept.pop()
    kept.append(duration)

    centers = grid.centers() - grid.origin
    segments: list[Segment] = []
    span_start = kept[0]
    for span_end in kept[1:]:
        i0 = int(np.searchsorted(centers, span_start, side="left"))
        i1 = int(np.searchsorted(centers, span_end, side="left"))
        if i1 <= i0:
            # No frame center inside; fold into the previous span.
            if segments:
                prev = segments.pop()
                segments.append(Segment(prev.start, span_end, prev.label))
                span_start = span_end
            continue
        means = function_hat[:, i0:i1].mean(axis=1)
        label = StructuralFunction(int(np.argmax(means)))
        segments.append(Segment(span_start, span_end, label))
        span_start = span_end
    return Annotation(song_id, duration, tuple(segments))


def decode(
    pred: PredictionCurves,
    grid: FrameGrid,
    cfg: DecodeConfig = DecodeConfig(),
    song_id: str = "song",
    duration: float | None = None,
) -> Annotation:
    """Full decode: pick boundaries, then label the spans between them."""
    boundaries = pick_boundaries(pred.boundary_hat, grid, cfg, duration)
    return label_segments(pred.function_hat, boundaries, grid, song_id)

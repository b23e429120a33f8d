"""Segmentation evaluation metrics.

Four metrics per song:

* boundary hit-rate F-measure within a tolerance window, computed with an
  optimal (maximum-cardinality) bipartite matching between reference and
  estimated boundary times;
* frame-wise label accuracy, excluding frames the reference leaves unlabeled;
* the same hit rate restricted to boundaries of merged chorus runs;
* pairwise-frame F-measure after binarizing frames to chorus vs non-chorus,
  computed in closed form from the 2x2 frame contingency table.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .annotations import Annotation, PartialAnnotation, boundaries_of
from .errors import ToolkitError
from .taxonomy import StructuralFunction

logger = logging.getLogger(__name__)

DEFAULT_HIT_WINDOW = 0.5
DEFAULT_FRAME = 0.1


class EmptyReference(ToolkitError, ValueError):
    """Reference annotation has no labeled frames."""


@dataclass(frozen=True)
class PRF:
    """Precision / recall / F1 triple."""

    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, matched: int, n_est: int, n_ref: int) -> "PRF":
        if n_est == 0 and n_ref == 0:
            return cls(1.0, 1.0, 1.0)
        if n_est == 0 or n_ref == 0:
            return cls(0.0, 0.0, 0.0)
        p = matched / n_est
        r = matched / n_ref
        f = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def matching_count(
    ref_times: Sequence[float], est_times: Sequence[float], window: float = DEFAULT_HIT_WINDOW
) -> int:
    """Size of a maximum matching with edges |ref - est| <= window (Hopcroft-Karp)."""
    ref = np.asarray(ref_times, dtype=float)
    est = np.asarray(est_times, dtype=float)
    if ref.size == 0 or est.size == 0:
        return 0
    hits = np.abs(ref[:, None] - est[None, :]) <= window
    if not hits.any():
        return 0
    match = maximum_bipartite_matching(csr_matrix(hits), perm_type="column")
    return int((match != -1).sum())


def boundary_hit_rate(
    ref_times: Sequence[float], est_times: Sequence[float], window: float = DEFAULT_HIT_WINDOW
) -> PRF:
    """Boundary detection P/R/F under optimal matching at the given window.

    Both time lists are treated as sets (sorted, deduplicated). Two empty
    lists score 1.0; exactly one empty list scores 0.0.
    """
    ref = np.unique(np.asarray(ref_times, dtype=float))
    est = np.unique(np.asarray(est_times, dtype=float))
    matched = matching_count(ref, est, window)
    return PRF.from_counts(matched, est.size, ref.size)


def _frame_count(duration: float, frame: float) -> int:
    return int(np.floor(duration / frame + 1e-9))


def _frame_codes(ann: Annotation | PartialAnnotation, centers: np.ndarray) -> np.ndarray:
    """Class code per frame center, -1 where no segment covers the center."""
    codes = np.full(centers.shape, -1, dtype=np.int16)
    for seg in ann.labeled:
        codes[(centers >= seg.start) & (centers < seg.end)] = int(seg.label)
    return codes


def _paired_centers(
    ref: Annotation, est: Annotation, frame: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if abs(ref.duration - est.duration) > frame + 1e-9:
        raise ValueError(
            f"durations differ by more than one frame: {ref.duration} vs {est.duration}"
        )
    count = _frame_count(min(ref.duration, est.duration), frame)
    centers = (np.arange(count) + 0.5) * frame
    return centers, _frame_codes(ref, centers), _frame_codes(est, centers)


def frame_accuracy(ref: Annotation, est: Annotation, frame: float = DEFAULT_FRAME) -> float:
    """Fraction of frame centers whose labels agree.

    Frames the reference leaves unlabeled are excluded from the denominator;
    estimated-unlabeled frames inside the reference count as mismatches.
    """
    _, ref_codes, est_codes = _paired_centers(ref, est, frame)
    valid = ref_codes >= 0
    if not valid.any():
        raise EmptyReference(f"no labeled reference frames for {ref.song_id}")
    return float(np.mean(ref_codes[valid] == est_codes[valid]))


def chorus_runs(ann: Annotation, tol: float = 1e-6) -> list[tuple[float, float]]:
    """Maximal chorus spans, with adjacent chorus segments merged."""
    runs: list[tuple[float, float]] = []
    for seg in ann.segments:
        if seg.label is not StructuralFunction.CHORUS:
            continue
        if runs and seg.start - runs[-1][1] <= tol:
            runs[-1] = (runs[-1][0], seg.end)
        else:
            runs.append((seg.start, seg.end))
    return runs


def chorus_boundary_hit_rate(
    ref: Annotation, est: Annotation, window: float = DEFAULT_HIT_WINDOW
) -> PRF:
    """Hit rate over start/end times of merged chorus runs only."""
    ref_times = [t for run in chorus_runs(ref) for t in run]
    est_times = [t for run in chorus_runs(est) for t in run]
    return boundary_hit_rate(ref_times, est_times, window)


def _comb2(n: int) -> int:
    return n * (n - 1) // 2


def pairwise_counts(ref_bin: np.ndarray, est_bin: np.ndarray) -> tuple[int, int, int]:
    """(agreeing, est-same, ref-same) pair counts over unordered frame pairs.

    Closed form from the 2x2 contingency table of binary frame labels; exact
    integer arithmetic.
    """
    ref_bin = np.asarray(ref_bin, dtype=bool)
    est_bin = np.asarray(est_bin, dtype=bool)
    # Cells: a = both chorus, b = ref chorus only, c = est chorus only, d = neither.
    a = int(np.sum(ref_bin & est_bin))
    b = int(np.sum(ref_bin & ~est_bin))
    c = int(np.sum(~ref_bin & est_bin))
    d = int(np.sum(~ref_bin & ~est_bin))
    ref_pairs = _comb2(a + b) + _comb2(c + d)
    est_pairs = _comb2(a + c) + _comb2(b + d)
    both = _comb2(a) + _comb2(b) + _comb2(c) + _comb2(d)
    return both, est_pairs, ref_pairs


def chorus_pairwise_f1(ref: Annotation, est: Annotation, frame: float = DEFAULT_FRAME) -> PRF:
    """Pairwise-frame P/R/F over the chorus / non-chorus binarization.

    A frame pair agrees on a side when both frames have the same binary label
    there. Reference-unlabeled frames binarize to non-chorus.
    """
    _, ref_codes, est_codes = _paired_centers(ref, est, frame)
    if not (ref_codes >= 0).any():
        raise EmptyReference(f"no labeled reference frames for {ref.song_id}")
    chorus = int(StructuralFunction.CHORUS)
    both, est_pairs, ref_pairs = pairwise_counts(ref_codes == chorus, est_codes == chorus)
    return PRF.from_counts(both, est_pairs, ref_pairs)


@dataclass(frozen=True)
class EvalConfig:
    window: float = DEFAULT_HIT_WINDOW
    frame: float = DEFAULT_FRAME
    trim: bool = False
    duration_weighted: bool = False


@dataclass(frozen=True)
class SongScores:
    song_id: str
    hr5f: float
    acc: float
    chr5f: float
    cf1: float
    duration: float

    def as_row(self) -> dict:
        return {
            "song_id": self.song_id,
            "hr5f": self.hr5f,
            "acc": self.acc,
            "chr5f": self.chr5f,
            "cf1": self.cf1,
        }


METRIC_NAMES = ("hr5f", "acc", "chr5f", "cf1")


def evaluate_song(ref: Annotation, est: Annotation, cfg: EvalConfig = EvalConfig()) -> SongScores:
    """All four metrics for one (reference, estimate) pair."""
    hr = boundary_hit_rate(
        boundaries_of(ref, trim=cfg.trim), boundaries_of(est, trim=cfg.trim), cfg.window
    )
    acc = frame_accuracy(ref, est, cfg.frame)
    chr_ = chorus_boundary_hit_rate(ref, est, cfg.window)
    cf1 = chorus_pairwise_f1(ref, est, cfg.frame)
    return SongScores(ref.song_id, hr.f1, acc, chr_.f1, cf1.f1, ref.duration)


@dataclass
class EvalReport:
    """Per-song metric rows plus aggregate means and the evaluation config."""

    rows: list[SongScores]
    missing: list[str]
    config: EvalConfig = field(default_factory=EvalConfig)

    def means(self) -> dict[str, float]:
        if not self.rows:
            return {name: float("nan") for name in METRIC_NAMES}
        if self.config.duration_weighted:
            weights = np.array([row.duration for row in self.rows])
            weights = weights / weights.sum()
        else:
            weights = np.full(len(self.rows), 1.0 / len(self.rows))
        out = {}
        for name in METRIC_NAMES:
            values = np.array([getattr(row, name) for row in self.rows])
            out[name] = float(np.sum(weights * values))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("song_id",) + METRIC_NAMES)
        for row in self.rows:
            writer.writerow(
                [row.song_id] + [f"{getattr(row, name):.6f}" for name in METRIC_NAMES]
            )
        return buf.getvalue()

    def summary(self, version: str = "0", extra: dict | None = None) -> dict:
        payload = {
            "toolkit_version": version,
            "num_songs": len(self.rows),
            "num_missing": len(self.missing),
            "missing": sorted(self.missing),
            "means": self.means(),
            "config": {
                "window": self.config.window,
                "frame": self.config.frame,
                "trim": self.config.trim,
                "duration_weighted": self.config.duration_weighted,
            },
        }
        if extra:
            payload.update(extra)
        return payload

    def summary_json(self, version: str = "0", extra: dict | None = None) -> str:
        return json.dumps(self.summary(version, extra), sort_keys=True, indent=2) + "\n"


def evaluate_corpus(
    pairs: Iterable[tuple[Annotation, Optional[Annotation]]],
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Evaluate many songs; estimates given as None are listed as missing.

    Rows are ordered by song_id; means are over scored songs only.
    """
    rows = []
    missing = []
    for ref, est in sorted(pairs, key=lambda pair: pair[0].song_id):
        if est is None:
            missing.append(ref.song_id)
            logger.warning("missing estimate for %s", ref.song_id)
            continue
        rows.append(evaluate_song(ref, est, cfg))
    return EvalReport(rows, missing, cfg)

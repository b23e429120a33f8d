"""Turn labeled section records into training excerpts with random context padding.

Each section gets independent front/rear padding drawn uniformly from
[pad_min, pad_max], clipped at the song edges and then extended in alternating
1-second steps (front first) until the excerpt reaches the minimum duration or
the whole song is used. Every excerpt is an independent partially-labeled song.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Union

import numpy as np

from .annotations import PartialAnnotation, SectionRecord, Segment
from .taxonomy import StructuralFunction, UnknownLabel, map_label

_EPS = 1e-9


@dataclass(frozen=True)
class ExcerptConfig:
    """Padding and minimum-duration parameters for excerpt sampling."""

    pad_min: float = 8.0
    pad_max: float = 12.0
    min_duration: float = 30.0
    seed: int = 0
    integer_pads: bool = False

    def __post_init__(self):
        if not (0 <= self.pad_min <= self.pad_max):
            raise ValueError(f"need 0 <= pad_min <= pad_max, got {self.pad_min}, {self.pad_max}")
        if self.min_duration <= 0:
            raise ValueError(f"min_duration must be positive, got {self.min_duration}")


@dataclass(frozen=True)
class Excerpt:
    """A clipped span of a song with one labeled inner span in local coordinates."""

    song_id: str
    span: tuple[float, float]  # (start, end) in song coordinates
    labeled_local: Segment     # measured from span start
    source: SectionRecord
    index: int                 # section index within the song, drives the RNG

    def __post_init__(self):
        start, end = self.span
        if not (0.0 <= start < end <= self.source.song_duration + _EPS):
            raise ValueError(f"span {self.span} outside song of {self.source.song_duration}s")
        if self.labeled_local.end > self.length + _EPS:
            raise ValueError("labeled span exceeds excerpt length")
        if abs(self.labeled_local.length - (self.source.end - self.source.start)) > 1e-6:
            raise ValueError("labeled span length differs from source section length")

    @property
    def length(self) -> float:
        return self.span[1] - self.span[0]

    @property
    def excerpt_id(self) -> str:
        return f"{self.song_id}#{self.index}"


def record_rng(seed: int, song_id: str, index: int) -> np.random.Generator:
    """Deterministic per-record generator derived from (seed, song_id, index).

    Stable across platforms and independent of record order in the input.
    """
    digest = hashlib.sha256(song_id.encode("utf-8")).digest()
    words = struct.unpack("<4I", digest[:16])
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, index, *words]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def build_excerpt(
    rec: SectionRecord, front: float, rear: float, min_duration: float = 30.0, index: int = 0
) -> Excerpt:
    """Deterministic excerpt geometry for fixed paddings.

    This is the test hook behind sample_excerpt: apply the paddings, clip to
    the song, then extend alternately 1 s at a time (front first, skipping a
    side with no room) until the length reaches min_duration or the whole song
    is used.
    """
    start = max(0.0, rec.start - front)
    end = min(rec.song_duration, rec.end + rear)
    front_side = True
    while end - start < min_duration - _EPS and (start > 0.0 or end < rec.song_duration):
        if front_side:
            if start > 0.0:
                start = max(0.0, start - 1.0)
        else:
            if end < rec.song_duration:
                end = min(rec.song_duration, end + 1.0)
        front_side = not front_side
    label = map_label(rec.raw_label)
    local = Segment(rec.start - start, rec.end - start, label)
    return Excerpt(rec.song_id, (start, end), local, rec, index)


def sample_excerpt(
    rec: SectionRecord,
    cfg: ExcerptConfig,
    index: int = 0,
    rng: np.random.Generator | None = None,
) -> Excerpt:
    """Draw front/rear paddings and build the excerpt.

    Draw order is fixed (front then rear) so results are reproducible from
    (cfg.seed, song_id, index).
    """
    if rng is None:
        rng = record_rng(cfg.seed, rec.song_id, index)
    if cfg.integer_pads:
        front = float(rng.integers(int(cfg.pad_min), int(cfg.pad_max), endpoint=True))
        rear = float(rng.integers(int(cfg.pad_min), int(cfg.pad_max), endpoint=True))
    else:
        front = float(rng.uniform(cfg.pad_min, cfg.pad_max))
        rear = float(rng.uniform(cfg.pad_min, cfg.pad_max))
    return build_excerpt(rec, front, rear, cfg.min_duration, index)


@dataclass
class CorpusResult:
    excerpts: list[Excerpt]
    annotations: list[PartialAnnotation]
    rejected: Counter  # raw label -> count of skipped records


def generate_corpus(records: Iterable[SectionRecord], cfg: ExcerptConfig) -> CorpusResult:
    """One excerpt + partial annotation per record; unknown labels are skipped and counted.

    The section index feeding the RNG is the record's position among its song's
    records in input order, counting rejected ones.
    """
    excerpts: list[Excerpt] = []
    annotations: list[PartialAnnotation] = []
    rejected: Counter = Counter()
    next_index: defaultdict[str, int] = defaultdict(int)
    for rec in records:
        index = next_index[rec.song_id]
        next_index[rec.song_id] += 1
        try:
            exc = sample_excerpt(rec, cfg, index)
        except UnknownLabel:
            rejected[rec.raw_label] += 1
            continue
        excerpts.append(exc)
        annotations.append(
            PartialAnnotation(
                song_id=exc.excerpt_id,
                duration=exc.length,
                labeled=(exc.labeled_local,),
                note=f"{rec.song_id} span [{exc.span[0]:.3f}, {exc.span[1]:.3f}]",
            )
        )
    return CorpusResult(excerpts, annotations, rejected)


def write_excerpts(excerpts: Iterable[Excerpt], seed: int) -> str:
    """Render excerpts as JSON lines (local labeled span + song-coordinate span)."""
    lines = []
    for exc in excerpts:
        lines.append(
            json.dumps(
                {
                    "song_id": exc.song_id,
                    "span_start_sec": exc.span[0],
                    "span_end_sec": exc.span[1],
                    "labeled_start_sec": exc.labeled_local.start,
                    "labeled_end_sec": exc.labeled_local.end,
                    "class_name": exc.labeled_local.label.class_name,
                    "source_index": exc.index,
                    "seed": seed,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines) + "\n" if lines else ""


def read_excerpt_annotations(source: Union[str, Path, IO[str]]) -> list[PartialAnnotation]:
    """Load excerpts.jsonl back as independent partially-labeled songs."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    annotations = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        duration = obj["span_end_sec"] - obj["span_start_sec"]
        label = StructuralFunction.from_name(obj["class_name"])
        seg = Segment(obj["labeled_start_sec"], obj["labeled_end_sec"], label)
        annotations.append(
            PartialAnnotation(
                song_id=f"{obj['song_id']}#{obj['source_index']}",
                duration=duration,
                labeled=(seg,),
            )
        )
    return annotations

"""Time-span data model for song structure annotations plus the flat-text formats.

All values are validated at construction: invalid data can never produce a live
Annotation/PartialAnnotation/SectionRecord. Times are seconds; file I/O is
quantized to 1 ms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .errors import ToolkitError
from .taxonomy import EmptyLabel, StructuralFunction, normalize_label

TIME_DECIMALS = 3
_EPS = 1e-9

Source = Union[str, Path, IO[str]]


class AnnotationError(ToolkitError, ValueError):
    """Base for invalid annotation data."""


class MalformedLine(AnnotationError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NonMonotonicTimes(AnnotationError):
    """Segment times go backwards or overlap."""


class SchemaError(AnnotationError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class RangeError(AnnotationError):
    """Times violate 0 <= start < end <= duration."""


def _check_time(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise RangeError(f"{what} must be finite, got {value!r}")
    if value < 0:
        raise RangeError(f"{what} must be non-negative, got {value!r}")


@dataclass(frozen=True)
class Segment:
    """A labeled [start, end) time span, in seconds."""

    start: float
    end: float
    label: StructuralFunction

    def __post_init__(self):
        _check_time(self.start, "segment start")
        _check_time(self.end, "segment end")
        if self.end <= self.start:
            raise RangeError(f"segment end {self.end} must exceed start {self.start}")

    @property
    def length(self) -> float:
        return self.end - self.start


def _validated_spans(
    segments: Iterable[Segment], duration: float, what: str
) -> tuple[Segment, ...]:
    _check_time(duration, f"{what} duration")
    segs = tuple(sorted(segments, key=lambda s: (s.start, s.end)))
    prev = None
    for seg in segs:
        if seg.end > duration + _EPS:
            raise RangeError(
                f"segment ({seg.start}, {seg.end}) exceeds {what} duration {duration}"
            )
        if prev is not None and seg.start < prev.end - _EPS:
            raise NonMonotonicTimes(
                f"segment starting at {seg.start} overlaps previous ending at {prev.end}"
            )
        prev = seg
    return segs


@dataclass(frozen=True)
class Annotation:
    """Full-song annotation: sorted non-overlapping segments within [0, duration].

    Gaps between segments are allowed and mean "unknown", not silence.
    """

    song_id: str
    duration: float
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "segments", _validated_spans(self.segments, self.duration, "song")
        )

    @property
    def labeled(self) -> tuple[Segment, ...]:
        """Uniform accessor shared with PartialAnnotation."""
        return self.segments


@dataclass(frozen=True)
class PartialAnnotation:
    """Partially labeled song: spans outside `labeled` are unknown, not silence."""

    song_id: str
    duration: float
    labeled: tuple[Segment, ...]
    note: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "labeled", _validated_spans(self.labeled, self.duration, "excerpt")
        )


@dataclass(frozen=True)
class SectionRecord:
    """One labeled section of a song, with times in full-song coordinates."""

    song_id: str
    raw_label: str
    start: float
    end: float
    song_duration: float

    def __post_init__(self):
        _check_time(self.start, "section start")
        _check_time(self.end, "section end")
        _check_time(self.song_duration, "song duration")
        if not (self.start < self.end <= self.song_duration + _EPS):
            raise RangeError(
                f"section ({self.start}, {self.end}) outside "
                f"[0, {self.song_duration}] or empty"
            )


def _open_lines(source: Source) -> tuple[str, Iterator[tuple[int, str]]]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        text = path.read_text(encoding="utf-8")
        return path.stem, iter(list(enumerate(text.splitlines(), start=1)))
    return "stream", iter(list(enumerate(source.read().splitlines(), start=1)))


def parse_reference(
    source: Source,
    fmt: str = "start-end-label",
    song_id: str | None = None,
    duration: float | None = None,
) -> Annotation:
    """Parse a flat-text reference annotation.

    ``start-end-label``: three whitespace-separated columns per line.
    ``start-label``: two columns; each segment ends where the next begins and
    the last ends at the declared ``duration`` (required for this format).
    '#' comments and blank lines are skipped. Labels are matched
    case-insensitively against the 7 class names.
    """
    if fmt not in ("start-end-label", "start-label"):
        raise ValueError(f"unknown format {fmt!r}")
    default_id, lines = _open_lines(source)
    song_id = song_id if song_id is not None else default_id

    if fmt == "start-end-label":
        segments = []
        last_end = None
        for line_no, line in lines:
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise MalformedLine(line_no, f"expected 3 columns, got {len(parts)}")
            try:
                start, end = float(parts[0]), float(parts[1])
            except ValueError:
                raise MalformedLine(line_no, f"bad times {parts[0]!r} {parts[1]!r}") from None
            if end <= start:
                raise NonMonotonicTimes(f"line {line_no}: end {end} <= start {start}")
            if last_end is not None and start < last_end - _EPS:
                raise NonMonotonicTimes(
                    f"line {line_no}: start {start} before previous end {last_end}"
                )
            label = StructuralFunction.from_name(parts[2], line_no)
            segments.append(Segment(start, end, label))
            last_end = end
        if duration is None:
            duration = segments[-1].end if segments else 0.0
        return Annotation(song_id, duration, tuple(segments))

    if duration is None:
        raise ValueError("start-label format requires an explicit duration")
    rows: list[tuple[float, StructuralFunction]] = []
    for line_no, line in lines:
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 2:
            raise MalformedLine(line_no, f"expected 2 columns, got {len(parts)}")
        try:
            start = float(parts[0])
        except ValueError:
            raise MalformedLine(line_no, f"bad time {parts[0]!r}") from None
        if rows and start <= rows[-1][0]:
            raise NonMonotonicTimes(f"line {line_no}: start {start} not increasing")
        rows.append((start, StructuralFunction.from_name(parts[1], line_no)))
    segments = []
    for i, (start, label) in enumerate(rows):
        end = rows[i + 1][0] if i + 1 < len(rows) else duration
        if end <= start:
            raise NonMonotonicTimes(f"segment at {start} would end at {end}")
        segments.append(Segment(start, end, label))
    return Annotation(song_id, duration, tuple(segments))


def write_annotation(ann: Annotation) -> str:
    """Render as three-column text, times quantized to 1 ms.

    Inverse of parse_reference for the start-end-label format.
    """
    lines = [
        f"{seg.start:.{TIME_DECIMALS}f}\t{seg.end:.{TIME_DECIMALS}f}\t{seg.label.class_name}"
        for seg in ann.segments
    ]
    return "\n".join(lines) + "\n" if lines else ""


_RECORD_KEYS = ("song_id", "label", "start_sec", "end_sec", "song_duration_sec")


def parse_section_records(source: Source) -> list[SectionRecord]:
    """Parse a JSON-lines section manifest into validated records.

    Raw labels are normalized; times are validated against the song duration.
    """
    _, lines = _open_lines(source)
    records = []
    for line_no, line in lines:
        text = line.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(line_no, f"invalid JSON: {exc}") from None
        if not isinstance(obj, dict):
            raise SchemaError(line_no, "record must be a JSON object")
        missing = [k for k in _RECORD_KEYS if k not in obj]
        if missing:
            raise SchemaError(line_no, f"missing keys {missing}")
        if not isinstance(obj["song_id"], str) or not isinstance(obj["label"], str):
            raise SchemaError(line_no, "song_id and label must be strings")
        times = []
        for key in ("start_sec", "end_sec", "song_duration_sec"):
            value = obj[key]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(line_no, f"{key} must be a number")
            times.append(float(value))
        try:
            raw = normalize_label(obj["label"])
        except EmptyLabel as exc:
            raise SchemaError(line_no, str(exc)) from None
        try:
            records.append(SectionRecord(obj["song_id"], raw, *times))
        except RangeError as exc:
            raise RangeError(f"line {line_no}: {exc}") from None
    return records


def write_section_records(records: Iterable[SectionRecord]) -> str:
    lines = [
        json.dumps(
            {
                "song_id": rec.song_id,
                "label": rec.raw_label,
                "start_sec": rec.start,
                "end_sec": rec.end,
                "song_duration_sec": rec.song_duration,
            },
            sort_keys=True,
        )
        for rec in records
    ]
    return "\n".join(lines) + "\n" if lines else ""


def boundaries_of(ann: Annotation | PartialAnnotation, trim: bool = False) -> list[float]:
    """Sorted unique boundary times: every segment start and end, deduplicated.

    With ``trim`` the first and last times are dropped.
    """
    times = sorted({t for seg in ann.labeled for t in (seg.start, seg.end)})
    return times[1:-1] if trim else times

"""Section-label normalization and the seven-class structural-function vocabulary.

Maps the 22 curated HookTheory-style section labels onto six of the seven
structural-function classes. Mapping is exact-match only: anything outside the
curated set raises UnknownLabel and the caller decides whether to skip or fail.
"""

from __future__ import annotations

import re
from enum import IntEnum
from importlib import resources

from .errors import ToolkitError


class LabelError(ToolkitError, ValueError):
    """Base for malformed or unmappable section labels."""


class EmptyLabel(LabelError):
    """Raw label is empty (or whitespace-only) after trimming."""


class UnknownLabel(LabelError):
    """Label is outside the curated mapping (or not one of the 7 class names)."""

    def __init__(self, label: str, line_no: int | None = None):
        self.label = label
        self.line_no = line_no
        where = f" (line {line_no})" if line_no is not None else ""
        super().__init__(f"unknown label {label!r}{where}")


class StructuralFunction(IntEnum):
    """The seven structural-function classes.

    Integer codes are stable and part of the on-disk tensor/report contracts;
    do not reorder. ``SILENCE`` is reserved for non-musical spans in reference
    annotations and is never produced by the section-label mapping.
    """

    INTRO = 0
    VERSE = 1
    CHORUS = 2
    BRIDGE = 3
    INST = 4
    OUTRO = 5
    SILENCE = 6

    @property
    def class_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str, line_no: int | None = None) -> "StructuralFunction":
        """Case-insensitive lookup by class name; UnknownLabel if no match."""
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise UnknownLabel(name, line_no) from None


NUM_CLASSES = len(StructuralFunction)
CLASS_NAMES: tuple[str, ...] = tuple(c.class_name for c in StructuralFunction)

# Row order (and left-to-right order within rows) is part of the
# mapping_table() contract: chorus, verse, inst, bridge, intro, outro.
_TABLE: tuple[tuple[str, StructuralFunction], ...] = (
    ("chorus", StructuralFunction.CHORUS),
    ("chorus-lead-out", StructuralFunction.CHORUS),
    ("theme", StructuralFunction.CHORUS),
    ("verse-and-chorus", StructuralFunction.CHORUS),
    ("theme-recap", StructuralFunction.CHORUS),
    ("pre-chorus-and-chorus", StructuralFunction.CHORUS),
    ("verse", StructuralFunction.VERSE),
    ("development", StructuralFunction.VERSE),
    ("verse-and-pre-chorus", StructuralFunction.VERSE),
    ("pre-chorus", StructuralFunction.VERSE),
    ("instrumental", StructuralFunction.INST),
    ("lead-in-alt", StructuralFunction.INST),
    ("lead-in", StructuralFunction.INST),
    ("loop", StructuralFunction.INST),
    ("solo", StructuralFunction.INST),
    ("bridge", StructuralFunction.BRIDGE),
    ("variation", StructuralFunction.BRIDGE),
    ("intro", StructuralFunction.INTRO),
    ("intro-and-chorus", StructuralFunction.INTRO),
    ("intro-and-verse", StructuralFunction.INTRO),
    ("outro", StructuralFunction.OUTRO),
    ("pre-outro", StructuralFunction.OUTRO),
)

_RAW_TO_CLASS = dict(_TABLE)

_SEPARATORS = re.compile(r"[\s_\-]+")


def normalize_label(raw: str) -> str:
    """Canonical form: trimmed, lowercased, separator runs collapsed to '-'.

    Idempotent. Raises EmptyLabel when nothing is left after trimming.
    """
    text = raw.strip().lower()
    text = _SEPARATORS.sub("-", text).strip("-")
    if not text:
        raise EmptyLabel(f"empty label from input {raw!r}")
    return text


def map_label(raw: str) -> StructuralFunction:
    """Map a normalized raw label to its structural-function class.

    Total over exactly the 22 curated labels; raises UnknownLabel otherwise.
    """
    try:
        return _RAW_TO_CLASS[raw]
    except KeyError:
        raise UnknownLabel(raw) from None


def mapping_table() -> list[tuple[str, StructuralFunction]]:
    """All 22 (raw label, class) pairs in their fixed row order."""
    return list(_TABLE)


def mapping_tsv() -> str:
    """The mapping rendered as two TAB-separated columns, one pair per line."""
    return "".join(f"{raw}\t{cls.class_name}\n" for raw, cls in _TABLE)


def shipped_mapping_tsv() -> str:
    """Contents of the taxonomy.tsv data file shipped with the package."""
    return resources.files("msakit").joinpath("data/taxonomy.tsv").read_text(encoding="utf-8")

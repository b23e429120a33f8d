"""msakit: corpus preparation and evaluation toolkit for music structure analysis."""

__version__ = "0.1.0"

from .annotations import (
    Annotation,
    PartialAnnotation,
    SectionRecord,
    Segment,
    boundaries_of,
    parse_reference,
    parse_section_records,
    write_annotation,
)
from .decoding import DecodeConfig, decode
from .errors import ToolkitError
from .excerpting import Excerpt, ExcerptConfig, generate_corpus, sample_excerpt
from .metrics import (
    EvalConfig,
    EvalReport,
    boundary_hit_rate,
    chorus_boundary_hit_rate,
    chorus_pairwise_f1,
    evaluate_corpus,
    evaluate_song,
    frame_accuracy,
)
from .targets import (
    FrameGrid,
    PredictionCurves,
    TargetTensor,
    masked_boundary_loss,
    masked_function_loss,
    rasterize,
)
from .taxonomy import StructuralFunction, map_label, mapping_table, normalize_label

__all__ = [
    "Annotation",
    "DecodeConfig",
    "EvalConfig",
    "EvalReport",
    "Excerpt",
    "ExcerptConfig",
    "FrameGrid",
    "PartialAnnotation",
    "PredictionCurves",
    "SectionRecord",
    "Segment",
    "StructuralFunction",
    "TargetTensor",
    "ToolkitError",
    "boundaries_of",
    "boundary_hit_rate",
    "chorus_boundary_hit_rate",
    "chorus_pairwise_f1",
    "decode",
    "evaluate_corpus",
    "evaluate_song",
    "frame_accuracy",
    "generate_corpus",
    "map_label",
    "mapping_table",
    "masked_boundary_loss",
    "masked_function_loss",
    "normalize_label",
    "parse_reference",
    "parse_section_records",
    "rasterize",
    "sample_excerpt",
    "write_annotation",
]

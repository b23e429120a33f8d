"""Shared generators for synthetic songs, corpora, and manifest fixtures."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from msakit.annotations import Annotation, Segment, write_annotation
from msakit.pipeline import DatasetManifest, ManifestEntry, write_manifest
from msakit.targets import FrameGrid
from msakit.taxonomy import StructuralFunction
from msakit import tensorio

MUSICAL_CLASSES = (
    StructuralFunction.INTRO,
    StructuralFunction.VERSE,
    StructuralFunction.CHORUS,
    StructuralFunction.BRIDGE,
    StructuralFunction.INST,
    StructuralFunction.OUTRO,
)


def quantize_ms(t: float) -> float:
    """Round-trip through the 1 ms text representation."""
    return float(f"{t:.3f}")


def snap_to_center(t: float, rate: float = 10.0) -> float:
    """Nearest frame-center time (i + 0.5) / rate."""
    i = round(t * rate - 0.5)
    return (i + 0.5) / rate


def random_annotation(
    song_id: str,
    rng: np.random.Generator,
    n_segments: tuple[int, int] = (3, 7),
    seg_len: tuple[float, float] = (4.4, 14.0),
    rate: float = 10.0,
    ensure_chorus: bool = True,
    align_centers: bool = True,
) -> Annotation:
    """Random full-song annotation.

    With align_centers the interior boundaries sit exactly on frame centers, so
    an oracle decode recovers them exactly; segment lengths stay above the
    default decoder min_gap either way.
    """
    n = int(rng.integers(n_segments[0], n_segments[1] + 1))
    lengths = rng.uniform(seg_len[0], seg_len[1], size=n)
    bounds = np.concatenate([[0.0], np.cumsum(lengths)])
    if align_centers:
        interior = [snap_to_center(b, rate) for b in bounds[1:-1]]
    else:
        interior = [quantize_ms(b) for b in bounds[1:-1]]
    duration = quantize_ms(float(bounds[-1]))
    times = [0.0, *interior, duration]
    labels = [MUSICAL_CLASSES[int(rng.integers(0, len(MUSICAL_CLASSES)))] for _ in range(n)]
    if ensure_chorus and StructuralFunction.CHORUS not in labels:
        labels[int(rng.integers(0, n))] = StructuralFunction.CHORUS
    segments = tuple(Segment(times[i], times[i + 1], labels[i]) for i in range(n))
    return Annotation(song_id, duration, segments)


def block_features(ann: Annotation, grid: FrameGrid, rng: np.random.Generator,
                   noise: float = 0.01) -> np.ndarray:
    """Frame features that are constant within a segment: one-hot label plus noise."""
    centers = grid.centers()
    codes = np.zeros(grid.count, dtype=int)
    for seg in ann.segments:
        codes[(centers >= seg.start) & (centers < seg.end)] = int(seg.label)
    base = np.eye(len(StructuralFunction))[codes] * 2.0
    return base + rng.normal(0.0, noise, base.shape)


def build_fixture_corpus(
    root: Path,
    datasets: dict[str, int],
    seed: int = 123,
    rate: float = 10.0,
    with_features: bool = True,
) -> dict[str, Path]:
    """Write refs, features, and one manifest per dataset; returns manifest paths."""
    rng = np.random.default_rng(seed)
    manifest_paths: dict[str, Path] = {}
    for name, n_songs in datasets.items():
        refs_dir = root / name / "refs"
        feats_dir = root / name / "features"
        refs_dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for i in range(n_songs):
            song_id = f"{name}-{i:02d}"
            ann = random_annotation(song_id, rng, rate=rate)
            ref_path = refs_dir / f"{song_id}.lab"
            ref_path.write_text(write_annotation(ann), encoding="utf-8")
            features_path = None
            if with_features:
                grid = FrameGrid.for_duration(ann.duration, rate)
                feats = block_features(ann, grid, rng)
                stem = feats_dir / song_id
                tensorio.save_features(stem, feats, rate)
                features_path = str(stem.with_suffix(".json"))[:-5]
            entries.append(
                ManifestEntry(song_id, str(ref_path), ann.duration, features_path)
            )
        manifest = DatasetManifest(name, "fullsong", tuple(entries))
        path = root / f"{name}.jsonl"
        write_manifest(manifest, path)
        manifest_paths[name] = path
    return manifest_paths


def build_excerpt_manifest(root: Path, name: str = "hooks", n: int = 3,
                           seed: int = 9) -> Path:
    """A small excerpt-kind manifest whose ref files exist (train-only data)."""
    rng = np.random.default_rng(seed)
    refs_dir = root / name / "refs"
    refs_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        song_id = f"{name}-{i:02d}#0"
        duration = quantize_ms(float(rng.uniform(30.0, 45.0)))
        start = quantize_ms(float(rng.uniform(8.0, 12.0)))
        end = quantize_ms(start + float(rng.uniform(10.0, duration - start - 8.0)))
        ann = Annotation(
            song_id, duration, (Segment(start, end, StructuralFunction.CHORUS),)
        )
        ref_path = refs_dir / f"{song_id}.lab"
        ref_path.write_text(write_annotation(ann), encoding="utf-8")
        entries.append(ManifestEntry(song_id, str(ref_path), duration))
    manifest = DatasetManifest(name, "excerpt", tuple(entries))
    path = root / f"{name}.jsonl"
    write_manifest(manifest, path)
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)

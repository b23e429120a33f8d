"""Dataset manifests, split plans, predictors, and experiment orchestration.

The toolkit does not train a network: an experiment run emits, per fold, the
training manifest an external trainer would consume, then predicts on the test
songs with a pluggable predictor (ground-truth oracle or a classical novelty
baseline), decodes, and evaluates.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from . import __version__
from .annotations import Annotation, parse_reference
from .decoding import DecodeConfig, decode
from .errors import ToolkitError
from .metrics import EvalConfig, EvalReport, evaluate_corpus
from .targets import (
    DEFAULT_FRAME_RATE,
    DEFAULT_RAMP_HALFWIDTH,
    FrameGrid,
    NUM_CLASSES,
    PredictionCurves,
    rasterize,
)
from . import tensorio

logger = logging.getLogger(__name__)

DEFAULT_NOVELTY_KERNEL_HALFWIDTH = 16  # frames

Predictor = Callable[[str, FrameGrid], PredictionCurves]


class PipelineError(ToolkitError, ValueError):
    """Invalid manifests, plans, or predictor inputs."""


class TooFewSongs(PipelineError):
    pass


class UnknownDataset(PipelineError):
    pass


class ShapeError(PipelineError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    song_id: str
    ref: str
    duration: float
    features: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """A named collection of songs with reference paths and durations."""

    name: str
    kind: str  # "fullsong" | "excerpt"
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        if self.kind not in ("fullsong", "excerpt"):
            raise PipelineError(f"unknown manifest kind {self.kind!r}")
        ids = [e.song_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise PipelineError(f"duplicate song ids in dataset {self.name!r}")

    def song_ids(self) -> list[str]:
        return [e.song_id for e in self.entries]

    def entry(self, song_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.song_id == song_id:
                return e
        raise KeyError(song_id)


def manifest_lines(manifest: DatasetManifest) -> list[str]:
    lines = []
    for e in manifest.entries:
        obj = {
            "dataset": manifest.name,
            "kind": manifest.kind,
            "song_id": e.song_id,
            "ref": e.ref,
            "duration": e.duration,
        }
        if e.features is not None:
            obj["features"] = e.features
        lines.append(json.dumps(obj, sort_keys=True))
    return lines


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_text("\n".join(manifest_lines(manifest)) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, check_files: bool = True) -> DatasetManifest:
    """Load one dataset manifest from JSON lines; all lines must agree on name/kind."""
    path = Path(path)
    names, kinds, entries = set(), set(), []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}:{line_no}: invalid JSON: {exc}") from None
        try:
            names.add(obj["dataset"])
            kinds.add(obj.get("kind", "fullsong"))
            entries.append(
                ManifestEntry(
                    obj["song_id"], obj["ref"], float(obj["duration"]), obj.get("features")
                )
            )
        except KeyError as exc:
            raise PipelineError(f"{path}:{line_no}: missing key {exc}") from None
    if len(names) != 1 or len(kinds) != 1:
        raise PipelineError(f"{path}: expected one dataset per manifest, got {sorted(names)}")
    manifest = DatasetManifest(names.pop(), kinds.pop(), tuple(entries))
    if check_files:
        missing = [e.ref for e in manifest.entries if not Path(e.ref).exists()]
        if missing:
            raise PipelineError(f"{path}: missing reference files: {missing[:5]}")
    return manifest


def load_manifests(paths: Iterable[str | Path], check_files: bool = True) -> dict[str, DatasetManifest]:
    out: dict[str, DatasetManifest] = {}
    for p in paths:
        m = load_manifest(p, check_files)
        if m.name in out:
            raise PipelineError(f"duplicate dataset name {m.name!r}")
        out[m.name] = m
    return out


@dataclass(frozen=True)
class SplitPlan:
    """Either k folds over a primary dataset or a cross-dataset train/test split."""

    mode: str  # "kfold" | "cross-dataset"
    primary: str | None = None
    k: int | None = None
    assignments: Mapping[str, int] | None = None
    test_dataset: str | None = None
    train_datasets: tuple[str, ...] = ()
    extra_train: tuple[str, ...] = ()

    def fold_ids(self) -> list[int]:
        if self.mode == "kfold":
            assert self.k is not None
            return list(range(self.k))
        return [0]

    def test_songs(self, fold: int) -> list[str] | None:
        """Song ids for a kfold test fold; None means "the whole test dataset"."""
        if self.mode == "kfold":
            assert self.assignments is not None
            return sorted(s for s, f in self.assignments.items() if f == fold)
        return None

    def to_json(self) -> str:
        payload = {
            "mode": self.mode,
            "primary": self.primary,
            "k": self.k,
            "assignments": dict(sorted(self.assignments.items())) if self.assignments else None,
            "test_dataset": self.test_dataset,
            "train_datasets": list(self.train_datasets),
            "extra_train": list(self.extra_train),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitPlan":
        obj = json.loads(text)
        return cls(
            mode=obj["mode"],
            primary=obj.get("primary"),
            k=obj.get("k"),
            assignments=obj.get("assignments"),
            test_dataset=obj.get("test_dataset"),
            train_datasets=tuple(obj.get("train_datasets") or ()),
            extra_train=tuple(obj.get("extra_train") or ()),
        )


def _song_key(seed: int, song_id: str) -> str:
    return hashlib.sha256(f"{seed}:{song_id}".encode("utf-8")).hexdigest()


def make_folds(
    manifest: DatasetManifest,
    k: int = 4,
    seed: int = 0,
    extra_train: Iterable[str] = (),
) -> SplitPlan:
    """Assign the primary dataset's songs to k folds of near-equal size.

    Songs are ordered by a seeded hash of their id and dealt round-robin, so
    the plan is deterministic and fold sizes differ by at most one.
    """
    if k < 2:
        raise PipelineError(f"k must be >= 2, got {k}")
    ids = manifest.song_ids()
    if len(ids) < k:
        raise TooFewSongs(f"{len(ids)} songs cannot fill {k} folds")
    ordered = sorted(ids, key=lambda s: _song_key(seed, s))
    assignments = {song_id: i % k for i, song_id in enumerate(ordered)}
    return SplitPlan(
        mode="kfold",
        primary=manifest.name,
        k=k,
        assignments=assignments,
        extra_train=tuple(extra_train),
    )


def make_cross_dataset(test_name: str, manifests: Mapping[str, DatasetManifest]) -> SplitPlan:
    """Hold out one full dataset for testing; all other fullsong datasets train."""
    if test_name not in manifests:
        raise UnknownDataset(f"no dataset named {test_name!r}")
    if manifests[test_name].kind != "fullsong":
        raise UnknownDataset(f"dataset {test_name!r} is not a fullsong dataset")
    train = tuple(
        sorted(n for n, m in manifests.items() if n != test_name and m.kind == "fullsong")
    )
    return SplitPlan(mode="cross-dataset", test_dataset=test_name, train_datasets=train)


def oracle_predictor(ref: Annotation, ramp_halfwidth: float = DEFAULT_RAMP_HALFWIDTH) -> Predictor:
    """Predictor that replays the rasterized ground truth of one song."""

    def predict(song_id: str, grid: FrameGrid) -> PredictionCurves:
        tgt = rasterize(ref, grid, ramp_halfwidth)
        return PredictionCurves(tgt.boundary.copy(), tgt.function.copy())

    return predict


def oracle_corpus_predictor(
    refs: Mapping[str, Annotation], ramp_halfwidth: float = DEFAULT_RAMP_HALFWIDTH
) -> Predictor:
    def predict(song_id: str, grid: FrameGrid) -> PredictionCurves:
        return oracle_predictor(refs[song_id], ramp_halfwidth)(song_id, grid)

    return predict


def novelty_curve(features: np.ndarray, kernel_halfwidth: int) -> np.ndarray:
    """Checkerboard-kernel novelty along the diagonal of the cosine self-similarity matrix.

    Features are row-normalized internally, so the curve is invariant to global
    feature scaling. Returns a min-max normalized curve in [0, 1], zero at the
    edges where the kernel does not fit.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim != 2 or F.shape[1] < 1:
        raise ShapeError(f"features must be (frames, dims), got shape {F.shape}")
    if kernel_halfwidth < 1:
        raise ShapeError(f"kernel_halfwidth must be >= 1, got {kernel_halfwidth}")
    T = F.shape[0]
    norms = np.linalg.norm(F, axis=1, keepdims=True)
    Fn = F / np.maximum(norms, 1e-12)
    ssm = Fn @ Fn.T

    L = kernel_halfwidth
    offsets = np.arange(-L, L + 1)
    sigma = L / 2.0
    taper = np.exp(-(offsets**2) / (2.0 * sigma**2))
    profile = np.sign(offsets) * taper
    kernel = np.outer(profile, profile)

    novelty = np.zeros(T)
    for t in range(L, T - L):
        novelty[t] = np.sum(kernel * ssm[t - L:t + L + 1, t - L:t + L + 1])

    lo, hi = novelty.min(), novelty.max()
    if hi - lo < 1e-12:
        return np.zeros(T)
    return (novelty - lo) / (hi - lo)


def novelty_predictor(features: np.ndarray, kernel_halfwidth: int) -> Predictor:
    """Classical boundary baseline; labels nothing (uniform class likelihoods)."""
    curve = novelty_curve(features, kernel_halfwidth)

    def predict(song_id: str, grid: FrameGrid) -> PredictionCurves:
        if grid.count != curve.shape[0]:
            raise ShapeError(
                f"{song_id}: features have {curve.shape[0]} frames, grid needs {grid.count}"
            )
        function = np.full((NUM_CLASSES, grid.count), 1.0 / NUM_CLASSES)
        return PredictionCurves(curve.copy(), function)

    return predict


@dataclass(frozen=True)
class RunConfig:
    """Everything an experiment run needs besides the plan and manifests."""

    out_dir: Path
    frame_rate: float = DEFAULT_FRAME_RATE
    ramp_halfwidth: float = DEFAULT_RAMP_HALFWIDTH
    kernel_halfwidth: int = DEFAULT_NOVELTY_KERNEL_HALFWIDTH
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    with_excerpts: bool = False
    seed: int = 0

    def echo(self) -> dict:
        return {
            "frame_rate": self.frame_rate,
            "ramp_halfwidth": self.ramp_halfwidth,
            "kernel_halfwidth": self.kernel_halfwidth,
            "decode": {
                "peak_threshold": self.decode.peak_threshold,
                "min_gap": self.decode.min_gap,
                "median_window": self.decode.median_window,
            },
            "eval": {
                "window": self.eval.window,
                "frame": self.eval.frame,
                "trim": self.eval.trim,
                "duration_weighted": self.eval.duration_weighted,
            },
            "with_excerpts": self.with_excerpts,
            "seed": self.seed,
        }


@dataclass
class RunResult:
    fold_reports: dict[int, EvalReport]
    pooled: EvalReport
    errors: list[str]


def training_manifest_lines(
    plan: SplitPlan,
    manifests: Mapping[str, DatasetManifest],
    fold: int,
    with_excerpts: bool,
) -> list[str]:
    """Lines of the training manifest an external trainer would consume.

    With ``with_excerpts`` the excerpt-kind manifests are appended; nothing
    else changes.
    """
    lines: list[str] = []
    if plan.mode == "kfold":
        assert plan.primary is not None
        primary = manifests[plan.primary]
        test_ids = set(plan.test_songs(fold) or ())
        train_entries = tuple(e for e in primary.entries if e.song_id not in test_ids)
        lines.extend(manifest_lines(replace(primary, entries=train_entries)))
        for name in plan.extra_train:
            lines.extend(manifest_lines(manifests[name]))
    else:
        for name in plan.train_datasets:
            lines.extend(manifest_lines(manifests[name]))
    if with_excerpts:
        for name in sorted(manifests):
            if manifests[name].kind == "excerpt":
                lines.extend(manifest_lines(manifests[name]))
    return lines


def _load_refs(manifest: DatasetManifest, song_ids: Iterable[str]) -> dict[str, Annotation]:
    refs = {}
    for song_id in song_ids:
        entry = manifest.entry(song_id)
        refs[song_id] = parse_reference(entry.ref, song_id=song_id, duration=entry.duration)
    return refs


def _build_predictor(
    name: str,
    entry: ManifestEntry,
    ref: Annotation,
    cfg: RunConfig,
) -> Predictor:
    if name == "oracle":
        return oracle_predictor(ref, cfg.ramp_halfwidth)
    if name == "novelty":
        if entry.features is None:
            raise PipelineError(f"{entry.song_id}: no features path in manifest")
        features, rate = tensorio.load_features(entry.features)
        if abs(rate - cfg.frame_rate) > 1e-9:
            raise PipelineError(
                f"{entry.song_id}: features at {rate} fps, run wants {cfg.frame_rate}"
            )
        return novelty_predictor(features, cfg.kernel_halfwidth)
    raise PipelineError(f"unknown predictor {name!r}")


def run_experiment(
    plan: SplitPlan,
    manifests: Mapping[str, DatasetManifest],
    predictor: str,
    cfg: RunConfig,
) -> RunResult:
    """Predict, decode, and evaluate every test song of every fold.

    Writes plan.json, per-fold train_manifest.jsonl / report.csv /
    summary.json, pooled reports, and a config echo under cfg.out_dir.
    Per-song failures are isolated: the song is reported missing and the run
    continues.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.to_json(), encoding="utf-8")
    (out / "config.json").write_text(
        json.dumps(cfg.echo(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    fold_reports: dict[int, EvalReport] = {}
    errors: list[str] = []
    all_rows = []
    all_missing = []

    for fold in plan.fold_ids():
        fold_dir = out / (f"fold_{fold}" if plan.mode == "kfold" else "test")
        fold_dir.mkdir(parents=True, exist_ok=True)

        lines = training_manifest_lines(plan, manifests, fold, cfg.with_excerpts)
        (fold_dir / "train_manifest.jsonl").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )

        if plan.mode == "kfold":
            assert plan.primary is not None
            test_manifest = manifests[plan.primary]
            test_ids = plan.test_songs(fold) or []
        else:
            assert plan.test_dataset is not None
            test_manifest = manifests[plan.test_dataset]
            test_ids = test_manifest.song_ids()

        refs = _load_refs(test_manifest, test_ids)
        pairs: list[tuple[Annotation, Optional[Annotation]]] = []
        for song_id in test_ids:
            ref = refs[song_id]
            entry = test_manifest.entry(song_id)
            try:
                grid = FrameGrid.for_duration(entry.duration, cfg.frame_rate)
                predict = _build_predictor(predictor, entry, ref, cfg)
                curves = predict(song_id, grid)
                est = decode(curves, grid, cfg.decode, song_id, duration=entry.duration)
                pairs.append((ref, est))
            except (ToolkitError, OSError) as exc:
                logger.warning("fold %s song %s failed: %s", fold, song_id, exc)
                errors.append(f"{song_id}: {exc}")
                pairs.append((ref, None))

        report = evaluate_corpus(pairs, cfg.eval)
        fold_reports[fold] = report
        (fold_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (fold_dir / "summary.json").write_text(
            report.summary_json(__version__, {"fold": fold, "predictor": predictor}),
            encoding="utf-8",
        )
        all_rows.extend(report.rows)
        all_missing.extend(report.missing)

    pooled = EvalReport(sorted(all_rows, key=lambda r: r.song_id), sorted(all_missing), cfg.eval)
    (out / "pooled_report.csv").write_text(pooled.to_csv(), encoding="utf-8")
    (out / "pooled_summary.json").write_text(
        pooled.summary_json(__version__, {"predictor": predictor}), encoding="utf-8"
    )

    log_lines = [
        f"toolkit_version {__version__}",
        f"predictor {predictor}",
        f"config {json.dumps(cfg.echo(), sort_keys=True)}",
        f"plan_mode {plan.mode}",
    ]
    for fold in sorted(fold_reports):
        report = fold_reports[fold]
        log_lines.append(
            f"fold {fold}: scored={len(report.rows)} missing={len(report.missing)}"
        )
    log_lines.extend(f"error {message}" for message in errors)
    log_lines.append(f"pooled: scored={len(pooled.rows)} missing={len(pooled.missing)}")
    (out / "run.log").write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return RunResult(fold_reports, pooled, errors)

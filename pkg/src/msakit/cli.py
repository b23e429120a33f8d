"""Command-line interface: one executable with a subcommand per pipeline stage.

Every subcommand is deterministic given its flags; randomness funnels through
--seed and no code path consults the wall clock. Exit codes: 0 success, 1 hard
error, 2 data rejects under --strict.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from collections import Counter
from pathlib import Path

from . import __version__
from .annotations import parse_reference, parse_section_records, write_annotation
from .decoding import DecodeConfig, decode
from .errors import ToolkitError
from .excerpting import ExcerptConfig, generate_corpus, read_excerpt_annotations, write_excerpts
from .metrics import EvalConfig, evaluate_corpus
from .pipeline import (
    RunConfig,
    SplitPlan,
    load_manifests,
    make_cross_dataset,
    make_folds,
    run_experiment,
)
from .targets import (
    DEFAULT_FRAME_RATE,
    DEFAULT_RAMP_HALFWIDTH,
    FrameGrid,
    PredictionCurves,
    rasterize,
)
from .taxonomy import UnknownLabel, map_label
from . import pipeline, tensorio

logger = logging.getLogger("msakit")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTS = 2


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _echo_config(directory: Path, subcommand: str, args: argparse.Namespace) -> None:
    payload = {
        k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"
    }
    payload["toolkit_version"] = __version__
    _atomic_write_text(
        directory / f"{subcommand}.config.json",
        json.dumps(payload, sort_keys=True, indent=2) + "\n",
    )


def cmd_map_labels(args: argparse.Namespace) -> int:
    records = parse_section_records(args.in_path)
    lines = []
    rejects: Counter = Counter()
    for rec in records:
        try:
            cls = map_label(rec.raw_label)
        except UnknownLabel:
            rejects[rec.raw_label] += 1
            continue
        lines.append(
            json.dumps(
                {
                    "song_id": rec.song_id,
                    "label": rec.raw_label,
                    "start_sec": rec.start,
                    "end_sec": rec.end,
                    "song_duration_sec": rec.song_duration,
                    "class_name": cls.class_name,
                },
                sort_keys=True,
            )
        )
    _atomic_write_text(args.out, "\n".join(lines) + ("\n" if lines else ""))
    rejects_path = args.out.with_name(args.out.name + ".rejects.json")
    _atomic_write_text(
        rejects_path, json.dumps(dict(sorted(rejects.items())), sort_keys=True, indent=2) + "\n"
    )
    _echo_config(args.out.parent, "map-labels", args)
    total_rejected = sum(rejects.values())
    print(f"mapped {len(lines)} records, rejected {total_rejected}")
    if total_rejected and args.strict:
        return EXIT_REJECTS
    return EXIT_OK


def cmd_make_excerpts(args: argparse.Namespace) -> int:
    cfg = ExcerptConfig(
        pad_min=args.pad_min,
        pad_max=args.pad_max,
        min_duration=args.min_dur,
        seed=args.seed,
        integer_pads=args.integer_pads,
    )
    records = parse_section_records(args.in_path)
    result = generate_corpus(records, cfg)
    _atomic_write_text(args.out, write_excerpts(result.excerpts, cfg.seed))
    _echo_config(args.out.parent, "make-excerpts", args)
    print(f"wrote {len(result.excerpts)} excerpts, rejected {sum(result.rejected.values())}")
    return EXIT_OK


def _effective_rate(args: argparse.Namespace) -> float:
    return args.rate if args.rate is not None else args.frame_rate


def cmd_make_targets(args: argparse.Namespace) -> int:
    rate = _effective_rate(args)
    if rate <= 0:
        raise ToolkitError(f"frame rate must be positive, got {rate}")
    if args.ramp <= 0:
        raise ToolkitError(f"ramp half-width must be positive, got {args.ramp}")
    if args.excerpts is not None:
        annotations = read_excerpt_annotations(args.excerpts)
    else:
        annotations = [
            parse_reference(path) for path in sorted(Path(args.refs).glob("*.lab"))
        ]
    args.out.mkdir(parents=True, exist_ok=True)
    for ann in annotations:
        grid = FrameGrid.for_duration(ann.duration, rate)
        tgt = rasterize(ann, grid, args.ramp)
        stem = args.out / ann.song_id.replace("/", "_")
        tensorio.save_target_tensor(stem, tgt, grid)
        print(
            f"{ann.song_id} frames={grid.count} "
            f"function_masked={int(tgt.function_mask.sum())} "
            f"boundary_masked={int(tgt.boundary_mask.sum())}"
        )
    _echo_config(args.out, "make-targets", args)
    print(f"wrote {len(annotations)} target bundles")
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    rate = _effective_rate(args)
    cfg = DecodeConfig(
        peak_threshold=args.threshold,
        min_gap=args.min_gap,
        median_window=args.median_window,
    )
    stems = sorted(p.parent / p.name[: -len(".f32")] for p in Path(args.pred).glob("*.f32"))
    if not stems:
        raise ToolkitError(f"no prediction bundles under {args.pred}")
    args.out.mkdir(parents=True, exist_ok=True)
    for stem in stems:
        curves, grid = _curves_from_bundle(stem)
        if abs(grid.rate - rate) > 1e-9:
            raise ToolkitError(
                f"{stem}: bundle rate {grid.rate} differs from requested {rate}"
            )
        ann = decode(curves, grid, cfg, song_id=stem.name)
        _atomic_write_text(args.out / f"{stem.name}.lab", write_annotation(ann))
    _echo_config(args.out, "decode", args)
    print(f"decoded {len(stems)} songs")
    return EXIT_OK


def _curves_from_bundle(stem: Path):
    """Accept either prediction bundles or target bundles (targets used as oracles)."""
    bundle = tensorio.load_curves(stem)
    if bundle.mask_names:
        tgt, grid = tensorio.load_target_tensor(stem)
        return PredictionCurves(tgt.boundary.copy(), tgt.function.copy()), grid
    return tensorio.load_prediction_curves(stem)


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = EvalConfig(
        window=args.window,
        frame=args.frame,
        trim=args.trim,
        duration_weighted=args.duration_weighted,
    )
    ref_paths = sorted(Path(args.refs).glob("*.lab"))
    if not ref_paths:
        raise ToolkitError(f"no reference .lab files under {args.refs}")
    pairs = []
    for ref_path in ref_paths:
        ref = parse_reference(ref_path)
        est_path = Path(args.est) / ref_path.name
        if est_path.exists():
            pairs.append((ref, parse_reference(est_path)))
        else:
            pairs.append((ref, None))
    report = evaluate_corpus(pairs, cfg)
    _atomic_write_text(args.out, report.to_csv())
    summary_path = (
        args.summary
        if args.summary is not None
        else args.out.with_name(args.out.stem + ".summary.json")
    )
    _atomic_write_text(summary_path, report.summary_json(__version__))
    _echo_config(args.out.parent, "evaluate", args)
    means = report.means()
    print(
        f"evaluated {len(report.rows)} songs ({len(report.missing)} missing): "
        + " ".join(f"{k}={means[k]:.4f}" for k in ("hr5f", "acc", "chr5f", "cf1"))
    )
    return EXIT_OK


def cmd_folds(args: argparse.Namespace) -> int:
    manifests = load_manifests(args.manifests, check_files=False)
    if args.mode == "kfold":
        if args.primary is None:
            raise ToolkitError("kfold mode needs --primary")
        if args.primary not in manifests:
            raise pipeline.UnknownDataset(f"no dataset named {args.primary!r}")
        extra = sorted(
            n
            for n, m in manifests.items()
            if n != args.primary and m.kind == "fullsong"
        )
        plan = make_folds(manifests[args.primary], k=args.k, seed=args.seed, extra_train=extra)
    else:
        if args.test is None:
            raise ToolkitError("cross mode needs --test")
        plan = make_cross_dataset(args.test, manifests)
    _atomic_write_text(args.out, plan.to_json())
    _echo_config(args.out.parent, "folds", args)
    print(f"wrote plan to {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    plan = SplitPlan.from_json(Path(args.plan).read_text(encoding="utf-8"))
    manifests = load_manifests(args.manifests, check_files=True)
    cfg = RunConfig(
        out_dir=args.out_dir,
        frame_rate=args.frame_rate,
        ramp_halfwidth=args.ramp,
        kernel_halfwidth=args.kernel_halfwidth,
        decode=DecodeConfig(
            peak_threshold=args.threshold,
            min_gap=args.min_gap,
            median_window=args.median_window,
        ),
        eval=EvalConfig(window=args.window, frame=args.frame, trim=args.trim),
        with_excerpts=args.with_excerpts,
        seed=args.seed,
    )
    result = run_experiment(plan, manifests, args.predictor, cfg)
    means = result.pooled.means()
    print(
        f"pooled over {len(result.pooled.rows)} songs "
        f"({len(result.errors)} failures): "
        + " ".join(f"{k}={means[k]:.4f}" for k in ("hr5f", "acc", "chr5f", "cf1"))
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument(
        "--frame-rate", type=float, default=DEFAULT_FRAME_RATE, help="frames per second"
    )
    common.add_argument(
        "--out-dir", type=Path, default=Path("."), help="base directory for run outputs"
    )
    common.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="logging verbosity",
    )

    parser = argparse.ArgumentParser(
        prog="msakit",
        description="Corpus preparation and evaluation for music structure analysis.",
    )
    parser.add_argument("--version", action="version", version=f"msakit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "map-labels", parents=[common], formatter_class=fmt,
        help="map raw section labels onto the 7-class vocabulary",
    )
    p.add_argument("--in", dest="in_path", type=Path, required=True, help="sections.jsonl")
    p.add_argument("--out", type=Path, required=True, help="mapped.jsonl")
    p.add_argument("--strict", action="store_true", help="exit 2 when any record is rejected")
    p.set_defaults(func=cmd_map_labels)

    p = sub.add_parser(
        "make-excerpts", parents=[common], formatter_class=fmt,
        help="sample padded excerpts from section records",
    )
    p.add_argument("--in", dest="in_path", type=Path, required=True, help="sections.jsonl")
    p.add_argument("--out", type=Path, required=True, help="excerpts.jsonl")
    p.add_argument("--pad-min", type=float, default=8.0, help="minimum context padding (s)")
    p.add_argument("--pad-max", type=float, default=12.0, help="maximum context padding (s)")
    p.add_argument("--min-dur", type=float, default=30.0, help="minimum excerpt duration (s)")
    p.add_argument("--integer-pads", action="store_true", help="draw whole-second paddings")
    p.set_defaults(func=cmd_make_excerpts)

    p = sub.add_parser(
        "make-targets", parents=[common], formatter_class=fmt,
        help="rasterize annotations into activation targets with masks",
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--excerpts", type=Path, help="excerpts.jsonl input")
    src.add_argument("--refs", type=Path, help="directory of reference .lab files")
    p.add_argument("--rate", type=float, default=None, help="frame rate; defaults to --frame-rate")
    p.add_argument(
        "--ramp", type=float, default=DEFAULT_RAMP_HALFWIDTH,
        help="boundary pulse half-width (s)",
    )
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_make_targets)

    p = sub.add_parser(
        "decode", parents=[common], formatter_class=fmt,
        help="convert activation curves into labeled segmentations",
    )
    p.add_argument("--pred", type=Path, required=True, help="directory of curve bundles")
    p.add_argument("--rate", type=float, default=None, help="expected frame rate of bundles")
    p.add_argument("--threshold", type=float, default=0.3, help="peak threshold")
    p.add_argument("--min-gap", type=float, default=4.0, help="minimum boundary gap (s)")
    p.add_argument("--median-window", type=float, default=0.5, help="median filter window (s)")
    p.add_argument("--out", type=Path, required=True, help="output directory for .lab files")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser(
        "evaluate", parents=[common], formatter_class=fmt,
        help="score estimated segmentations against references",
    )
    p.add_argument("--refs", type=Path, required=True, help="directory of reference .lab files")
    p.add_argument("--est", type=Path, required=True, help="directory of estimated .lab files")
    p.add_argument("--window", type=float, default=0.5, help="boundary hit window (s)")
    p.add_argument("--frame", type=float, default=0.1, help="frame size for ACC and CF1 (s)")
    p.add_argument("--trim", action="store_true", help="drop first/last boundary times")
    p.add_argument(
        "--duration-weighted", action="store_true", help="weight means by song duration"
    )
    p.add_argument("--out", type=Path, required=True, help="report CSV path")
    p.add_argument("--summary", type=Path, default=None, help="summary JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "folds", parents=[common], formatter_class=fmt,
        help="build a k-fold or cross-dataset split plan",
    )
    p.add_argument("--manifests", type=Path, nargs="+", required=True)
    p.add_argument("--mode", choices=("kfold", "cross"), default="kfold")
    p.add_argument("--primary", default=None, help="primary dataset name (kfold)")
    p.add_argument("--test", default=None, help="held-out dataset name (cross)")
    p.add_argument("--k", type=int, default=4, help="number of folds")
    p.add_argument("--out", type=Path, required=True, help="plan.json path")
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser(
        "run", parents=[common], formatter_class=fmt,
        help="predict, decode, and evaluate every fold of a plan",
    )
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--manifests", type=Path, nargs="+", required=True)
    p.add_argument("--predictor", choices=("oracle", "novelty"), default="oracle")
    p.add_argument(
        "--with-excerpts", action="store_true",
        help="append excerpt manifests to the emitted training manifests",
    )
    p.add_argument("--ramp", type=float, default=DEFAULT_RAMP_HALFWIDTH)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--min-gap", type=float, default=4.0)
    p.add_argument("--median-window", type=float, default=0.5)
    p.add_argument("--window", type=float, default=0.5)
    p.add_argument("--frame", type=float, default=0.1)
    p.add_argument("--trim", action="store_true")
    p.add_argument("--kernel-halfwidth", type=int, default=16, help="novelty kernel (frames)")
    p.set_defaults(func=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        return args.func(args)
    except (ToolkitError, ValueError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR


def cli_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())

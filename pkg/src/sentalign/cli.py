"""Command-line interface wiring the pipeline together.

Subcommands: align, train-iou, filter, evaluate, split, tune, build.
Exit codes: 0 success, 1 input error, 2 constraint violation, 3 internal
failure. Progress events go to standard error as JSON lines.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import FORMAT_VERSIONS, __version__
from .corpus import read_manifest, split_by_speaker, write_manifest
from .errors import ConstraintError, InputError
from .ingest import (
    AlignmentParams,
    alignment_params_preset,
    parse_alignment_params,
    parse_asr_transcript,
    parse_manual_transcript,
    serialize_alignment_params,
)
from .langid import SubprocessDetector
from .mapping import TimeCalibration, read_aligned_jsonl, write_aligned_jsonl
from .metrics import evaluate_alignment
from .pipeline import BuildInput, FilterConfig, PipelineConfig, run_align, run_build
from .quality import (
    GbdtHyperparams,
    apply_filters,
    model_from_json,
    model_to_json,
    predict_iou,
    read_feature_jsonl,
    train_gbdt,
    write_feature_jsonl,
)
from .sentences import load_abbreviations
from .tuning import (
    load_labeled_corpus,
    sweep_threshold,
    tune_alignment_params,
    tune_result_to_json,
    write_sweep_tsv,
)


def log_event(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True, default=str),
          file=sys.stderr)


def _load_params(args) -> AlignmentParams:
    if args.params_file:
        return parse_alignment_params(Path(args.params_file).read_text("utf-8"))
    return alignment_params_preset(args.params_preset)


def _add_params_arguments(parser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--params-preset", default="appendix_b",
                       help="built-in parameter preset (appendix_a, appendix_b)")
    group.add_argument("--params-file", help="key = value parameter file")


def _load_calibration(path: Optional[str]) -> Optional[TimeCalibration]:
    if not path:
        return None
    payload = json.loads(Path(path).read_text("utf-8"))
    calibration = TimeCalibration(start_offset=float(payload["start_offset"]),
                                  end_offset=float(payload["end_offset"]))
    calibration.validate()
    return calibration


def _collect_documents(args) -> List[Tuple[str, Path, Path, Optional[Path]]]:
    """(doc_id, asr_path, transcript_path, speakers_path) per document."""
    docs = []
    if args.corpus:
        root = Path(args.corpus)
        if not root.is_dir():
            raise InputError(f"corpus directory {root} does not exist")
        for asr_path in sorted(root.glob("*.asr.json")):
            doc_id = asr_path.name[:-len(".asr.json")]
            text_path = root / f"{doc_id}.txt"
            if not text_path.exists():
                raise InputError(f"document {doc_id}: missing {text_path.name}")
            speakers = root / f"{doc_id}.speakers.tsv"
            docs.append((doc_id, asr_path, text_path,
                         speakers if speakers.exists() else None))
        if not docs:
            raise InputError(f"no *.asr.json documents in {root}")
    else:
        if not args.asr or not args.transcript:
            raise InputError("either --corpus or both --asr and --transcript required")
        asr_path = Path(args.asr)
        doc_id = asr_path.name
        for suffix in (".asr.json", ".json"):
            if doc_id.endswith(suffix):
                doc_id = doc_id[:-len(suffix)]
                break
        docs.append((doc_id, asr_path, Path(args.transcript),
                     Path(args.speakers) if args.speakers else None))
    return docs


def cmd_align(args) -> int:
    params = _load_params(args)
    abbreviations = load_abbreviations(args.abbrev) if args.abbrev else None
    config = PipelineConfig(
        params=params,
        granularity=args.granularity,
        mode=args.mode,
        band=args.band,
        guard_enabled=not args.no_guard,
        max_length_ratio=args.max_length_ratio,
        calibration=_load_calibration(args.calibration),
        abbreviations=abbreviations,
    )
    config.validate()
    docs = _collect_documents(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def process(doc):
        doc_id, asr_path, text_path, speakers_path = doc
        asr = parse_asr_transcript(asr_path.read_bytes())
        transcript = parse_manual_transcript(
            text_path.read_text("utf-8"), asr.recording_id,
            speakers_path.read_text("utf-8") if speakers_path else None)
        return doc_id, run_align(asr, transcript, config)

    if args.jobs > 1 and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(process, docs))
    else:
        results = [process(doc) for doc in docs]

    rejections = []
    for doc_id, result in results:
        with open(out_dir / f"{doc_id}.aligned.jsonl", "w", encoding="utf-8") as handle:
            write_aligned_jsonl(handle, result.aligned)
        with open(out_dir / f"{doc_id}.features.jsonl", "w", encoding="utf-8") as handle:
            write_feature_jsonl(handle, result.features)
        if result.rejection:
            rejections.append({"recording_id": result.recording_id,
                               "reason": result.rejection})
            log_event("document_rejected", doc=doc_id, reason=result.rejection)
        else:
            non_empty = sum(1 for a in result.aligned if a.span is not None)
            log_event("document_aligned", doc=doc_id,
                      sentences=len(result.aligned), non_empty=non_empty)
        if args.dump_alignment and result.path is not None:
            dump = Path(args.dump_alignment)
            target = dump if len(results) == 1 else dump.with_name(
                f"{doc_id}.{dump.name}")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(result.path.dump_json() + "\n", encoding="utf-8")
    with open(out_dir / "rejections.jsonl", "w", encoding="utf-8") as handle:
        for record in rejections:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


def cmd_train_iou(args) -> int:
    with open(args.features, encoding="utf-8") as handle:
        rows = read_feature_jsonl(handle)
    labels = []
    with open(args.labels, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                labels.append(json.loads(line))
    if len(labels) != len(rows):
        raise InputError(f"{len(rows)} feature rows vs {len(labels)} labels")
    X = []
    y = []
    for row, label in zip(rows, labels):
        if row is None or label is None:
            continue
        X.append(row.as_array())
        y.append(float(label))
    if not X:
        raise InputError("no usable (features, label) pairs")
    hp = GbdtHyperparams(num_leaves=args.num_leaves,
                         min_child_samples=args.min_child_samples,
                         max_bin=args.max_bin,
                         learning_rate=args.learning_rate,
                         num_trees=args.num_trees)
    model = train_gbdt(np.array(X), np.array(y), hp, seed=args.seed)
    Path(args.out).write_text(model_to_json(model) + "\n", encoding="utf-8")
    log_event("model_trained", rows=len(y), trees=len(model.trees), out=args.out)
    return 0


def _attach_estimates(entries, features, model):
    if len(entries) != len(features):
        raise InputError(f"{len(entries)} aligned rows vs {len(features)} feature rows")
    out = []
    for entry, row in zip(entries, features):
        if entry.span is None or row is None:
            out.append(entry)
        else:
            out.append(type(entry)(sentence=entry.sentence, span=entry.span,
                                   iou_estimate=predict_iou(model, row)))
    return out


def _filter_config_from_args(args) -> FilterConfig:
    return FilterConfig(
        iou_threshold=args.threshold,
        cps_min=args.cps_min, cps_max=args.cps_max,
        min_audio_s=args.min_audio_s, max_audio_s=args.max_audio_s,
        language=args.language,
    )


def cmd_filter(args) -> int:
    with open(args.input, encoding="utf-8") as handle:
        entries = read_aligned_jsonl(handle)
    if args.model:
        if not args.features:
            raise InputError("--model requires --features to score entries")
        model = model_from_json(Path(args.model).read_text("utf-8"))
        with open(args.features, encoding="utf-8") as handle:
            features = read_feature_jsonl(handle)
        entries = _attach_estimates(entries, features, model)
    scorable = [e for e in entries if e.span is not None]
    detector = SubprocessDetector(args.lang_detector) if args.lang_detector else None
    config = _filter_config_from_args(args)
    try:
        kept, counts = apply_filters(scorable, config, split_role=args.role,
                                     detector=detector)
    finally:
        if detector is not None:
            detector.close()
    with open(args.out, "w", encoding="utf-8") as handle:
        write_aligned_jsonl(handle, kept)
    counts_payload = {"kept": len(kept), "rejections": counts,
                      "empty_skipped": len(entries) - len(scorable)}
    if args.counts:
        Path(args.counts).write_text(
            json.dumps(counts_payload, sort_keys=True) + "\n", encoding="utf-8")
    log_event("filtered", **counts_payload)
    return 0


def cmd_evaluate(args) -> int:
    with open(args.pred, encoding="utf-8") as handle:
        predicted = read_aligned_jsonl(handle)
    with open(args.gold, encoding="utf-8") as handle:
        gold = read_aligned_jsonl(handle)
    report = evaluate_alignment(predicted, gold)
    print(report.to_json())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    sweep_rows = None
    if args.sweep:
        thresholds = [float(t) for t in args.sweep.split(",") if t]
        sweep_rows = sweep_threshold(list(zip(predicted, gold)), thresholds)
        if args.sweep_out:
            sweep_path = Path(args.sweep_out)
        elif args.out:
            sweep_path = Path(args.out).with_suffix(".sweep.tsv")
        else:
            sweep_path = Path("sweep.tsv")
        write_sweep_tsv(sweep_path, sweep_rows)
        log_event("sweep_written", path=str(sweep_path))
    if args.figures:
        from . import report as figures

        out = Path(args.figures)
        from .metrics import interval_iou

        ious = [interval_iou(p.span, g.span)
                for p, g in zip(predicted, gold)
                if p.span is not None and g.span is not None]
        written = [figures.save_eval_summary(report, out / "eval_summary.png")]
        if ious:
            written.append(figures.save_iou_histogram(
                ious, out / "eval_iou_hist.png", title="gold IoU of TP sentences"))
        if sweep_rows:
            written.append(figures.save_threshold_sweep(
                sweep_rows, out / "eval_sweep.png"))
        log_event("figures_written", paths=[str(p) for p in written])
    return 0


def cmd_split(args) -> int:
    manifest = read_manifest(args.input)
    result = split_by_speaker(manifest.entries, test_hours_target=args.test_hours,
                              speaker_cap=args.speaker_cap, seed=args.seed)
    files = write_manifest(result, args.out_dir, name=args.name)
    log_event("split_written", summary=result.summary(),
              manifest=str(files["manifest"]))
    return 0


def cmd_tune(args) -> int:
    corpus = load_labeled_corpus(args.corpus)
    result = tune_alignment_params(corpus, budget=args.budget, k=args.folds,
                                   seed=args.seed, granularity=args.granularity)
    Path(args.out).write_text(serialize_alignment_params(result.best_params),
                              encoding="utf-8")
    if args.trials_out:
        Path(args.trials_out).write_text(tune_result_to_json(result) + "\n",
                                         encoding="utf-8")
    if args.figures:
        from . import report as figures

        scores = [t.score for t in result.trials]
        best = max(range(len(scores)), key=lambda i: (scores[i], -i))
        figures.save_tune_trials(scores, Path(args.figures) / "tune_trials.png",
                                 best_index=best)
    log_event("tuned", budget=args.budget, best_cv_mean_iou=result.cv_mean_iou,
              out=args.out)
    return 0


def cmd_build(args) -> int:
    root = Path(args.input)
    if not root.is_dir():
        raise InputError(f"input directory {root} does not exist")
    docs = []
    for aligned_path in sorted(root.glob("*.aligned.jsonl")):
        doc_id = aligned_path.name[:-len(".aligned.jsonl")]
        features_path = root / f"{doc_id}.features.jsonl"
        if not features_path.exists():
            raise InputError(f"document {doc_id}: missing features file")
        with open(aligned_path, encoding="utf-8") as handle:
            aligned = read_aligned_jsonl(handle)
        with open(features_path, encoding="utf-8") as handle:
            features = read_feature_jsonl(handle)
        docs.append(BuildInput(recording_id=doc_id, aligned=aligned,
                               features=features))
    if not docs:
        raise InputError(f"no *.aligned.jsonl documents in {root}")
    model = None
    if args.model:
        model = model_from_json(Path(args.model).read_text("utf-8"))
    thresholds = [float(t) for t in args.thresholds.split(",") if t]
    config = _filter_config_from_args(args)
    detector = SubprocessDetector(args.lang_detector) if args.lang_detector else None
    try:
        report = run_build(docs, model, config, args.out_dir,
                           thresholds=thresholds,
                           test_hours_target=args.test_hours,
                           speaker_cap=args.speaker_cap, seed=args.seed,
                           detector=detector)
    finally:
        if detector is not None:
            detector.close()
    summary = report.summary()
    Path(args.out_dir, "build_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if args.figures:
        from . import report as figures

        estimates = [e.iou_estimate for m in report.manifests.values()
                     for e in m.entries if e.iou_estimate is not None]
        if estimates:
            figures.save_iou_histogram(
                estimates, Path(args.figures) / "build_estimates.png",
                title="IoU estimates", xlabel="estimated IoU")
    log_event("build_done", **{name: info for name, info in summary["manifests"].items()})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentalign",
        description="Forced sentence alignment and ASR corpus construction")
    parser.add_argument("--version", action="store_true",
                        help="print toolkit and format versions")
    sub = parser.add_subparsers(dest="command")

    p_align = sub.add_parser("align", help="align documents to sentence spans")
    p_align.add_argument("--asr", help="ASR-JSON word timing file")
    p_align.add_argument("--transcript", help="manual transcript text file")
    p_align.add_argument("--speakers", help="speaker span TSV sidecar")
    p_align.add_argument("--corpus", help="directory of <id>.asr.json + <id>.txt")
    _add_params_arguments(p_align)
    p_align.add_argument("--granularity", choices=("char", "word"), default="char")
    p_align.add_argument("--mode", choices=("full_dp", "linear_memory"),
                         default="linear_memory")
    p_align.add_argument("--band", type=int, default=None,
                         help="diagonal band half-width (off = exact)")
    p_align.add_argument("--no-guard", action="store_true",
                         help="disable the length-ratio guard")
    p_align.add_argument("--max-length-ratio", type=float, default=6.0)
    p_align.add_argument("--calibration", help="JSON file with start/end offsets")
    p_align.add_argument("--abbrev", help="abbreviation list overriding the built-in")
    p_align.add_argument("--dump-alignment", help="write run-length alignment JSON")
    p_align.add_argument("--jobs", type=int, default=1)
    p_align.add_argument("--out-dir", required=True)
    p_align.set_defaults(func=cmd_align)

    p_train = sub.add_parser("train-iou", help="train the IoU estimator")
    p_train.add_argument("--in", dest="features", required=True,
                         help="feature JSONL (null rows are skipped)")
    p_train.add_argument("--labels", required=True,
                         help="JSONL of IoU labels, one number per line")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--num-leaves", type=int, default=3)
    p_train.add_argument("--min-child-samples", type=int, default=7)
    p_train.add_argument("--max-bin", type=int, default=7597)
    p_train.add_argument("--learning-rate", type=float, default=0.1)
    p_train.add_argument("--num-trees", type=int, default=100)
    p_train.set_defaults(func=cmd_train_iou)

    p_filter = sub.add_parser("filter", help="apply corpus filters")
    p_filter.add_argument("--in", dest="input", required=True,
                          help="aligned sentence JSONL")
    p_filter.add_argument("--model", help="IoU estimator (scores entries first)")
    p_filter.add_argument("--features", help="feature JSONL matching --in")
    p_filter.add_argument("--threshold", type=float, default=0.7)
    p_filter.add_argument("--role", choices=("train", "test"), default="train")
    p_filter.add_argument("--cps-min", type=float, default=6.0)
    p_filter.add_argument("--cps-max", type=float, default=23.0)
    p_filter.add_argument("--min-audio-s", type=float, default=1.0)
    p_filter.add_argument("--max-audio-s", type=float, default=15.0)
    p_filter.add_argument("--language", default="de")
    p_filter.add_argument("--lang-detector",
                          help="external detector command (line protocol)")
    p_filter.add_argument("--counts", help="write rejection counts JSON here")
    p_filter.add_argument("--out", required=True)
    p_filter.set_defaults(func=cmd_filter)

    p_eval = sub.add_parser("evaluate", help="score predictions against gold")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gold", required=True)
    p_eval.add_argument("--out", help="write the report JSON here")
    p_eval.add_argument("--sweep", help="comma-separated estimate thresholds")
    p_eval.add_argument("--sweep-out", help="sweep TSV path")
    p_eval.add_argument("--figures", help="directory for report figures")
    p_eval.set_defaults(func=cmd_evaluate)

    p_split = sub.add_parser("split", help="speaker-exclusive train/test split")
    p_split.add_argument("--in", dest="input", required=True,
                         help="manifest TSV of unassigned entries")
    p_split.add_argument("--test-hours", type=float, required=True)
    p_split.add_argument("--speaker-cap", type=float, default=0.1)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--name", default="manifest")
    p_split.add_argument("--out-dir", required=True)
    p_split.set_defaults(func=cmd_split)

    p_tune = sub.add_parser("tune", help="random-search alignment parameters")
    p_tune.add_argument("--corpus", required=True,
                        help="directory of <id>.asr.json/<id>.txt/<id>.gold.jsonl")
    p_tune.add_argument("--budget", type=int, required=True)
    p_tune.add_argument("--folds", type=int, default=3)
    p_tune.add_argument("--seed", type=int, default=0)
    p_tune.add_argument("--granularity", choices=("char", "word"), default="char")
    p_tune.add_argument("--trials-out", help="write all trials as JSON")
    p_tune.add_argument("--figures", help="directory for trial figures")
    p_tune.add_argument("--out", required=True, help="best parameter file")
    p_tune.set_defaults(func=cmd_tune)

    p_build = sub.add_parser("build", help="build manifest family from aligned docs")
    p_build.add_argument("--in", dest="input", required=True,
                         help="directory of <id>.aligned.jsonl + <id>.features.jsonl")
    p_build.add_argument("--model", help="IoU estimator JSON")
    p_build.add_argument("--thresholds", default="0.7,0.9")
    p_build.add_argument("--test-hours", type=float, default=None)
    p_build.add_argument("--speaker-cap", type=float, default=0.1)
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--threshold", type=float, default=0.7,
                         help=argparse.SUPPRESS)
    p_build.add_argument("--cps-min", type=float, default=6.0)
    p_build.add_argument("--cps-max", type=float, default=23.0)
    p_build.add_argument("--min-audio-s", type=float, default=1.0)
    p_build.add_argument("--max-audio-s", type=float, default=15.0)
    p_build.add_argument("--language", default="de")
    p_build.add_argument("--lang-detector")
    p_build.add_argument("--figures", help="directory for estimate histogram")
    p_build.add_argument("--out-dir", required=True)
    p_build.set_defaults(func=cmd_build)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.version:
        print(json.dumps({"sentalign": __version__,
                          "formats": FORMAT_VERSIONS}, sort_keys=True))
        return 0
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except InputError as exc:
        log_event("input_error", message=str(exc))
        return 1
    except ConstraintError as exc:
        log_event("constraint_error", message=str(exc))
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        log_event("internal_error", message=str(exc))
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())

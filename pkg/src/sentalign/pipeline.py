"""End-to-end document processing: align one document, build a corpus.

``run_align`` executes normalize -> split -> align -> map -> (calibrate) ->
featurize for one recording. When the length-ratio guard is enabled and
trips, the document yields one empty aligned sentence per transcript
sentence plus a rejection record, so downstream recall accounting still
sees every sentence.

``run_build`` scores aligned sentences with a quality model, splits them
speaker-exclusively and writes the manifest family: ``train_all``
(unfiltered, estimate column included), one ``train_<t>`` per requested
threshold, and ``test`` filtered at the strictest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

from .align import AlignmentPath, global_align
from .corpus import CorpusEntry, Manifest, dedupe_speakers, split_by_speaker, write_manifest
from .errors import InputError
from .ingest import AlignmentParams, AsrTranscript, ManualTranscript, normalize_text
from .mapping import (
    AlignedSentence,
    SymbolView,
    TimeCalibration,
    apply_time_calibration,
    build_view,
    map_sentences,
)
from .quality import (
    FilterConfig,
    GbdtModel,
    IouFeatures,
    apply_filters,
    extract_document_features,
    length_ratio_guard,
    predict_iou,
)
from .sentences import Sentence, attach_speakers, split_sentences


@dataclass(frozen=True)
class PipelineConfig:
    params: AlignmentParams
    granularity: str = "char"
    mode: str = "linear_memory"
    band: Optional[int] = None
    guard_enabled: bool = True
    max_length_ratio: float = 6.0
    calibration: Optional[TimeCalibration] = None
    abbreviations: Optional[FrozenSet[str]] = None

    def validate(self) -> None:
        self.params.validate()
        if self.granularity not in ("char", "word"):
            raise InputError(f"unknown granularity {self.granularity!r}")
        if self.mode not in ("full_dp", "linear_memory"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.calibration is not None:
            self.calibration.validate()


@dataclass
class AlignResult:
    recording_id: str
    sentences: List[Sentence]
    aligned: List[AlignedSentence]
    features: List[Optional[IouFeatures]]
    path: Optional[AlignmentPath] = None
    view: Optional[SymbolView] = None
    rejection: Optional[str] = None


def run_align(asr: AsrTranscript, transcript: ManualTranscript,
              config: PipelineConfig) -> AlignResult:
    config.validate()
    if asr.recording_id != transcript.recording_id:
        raise InputError(
            f"recording ids differ: {asr.recording_id!r} vs {transcript.recording_id!r}")
    sentences = split_sentences(transcript, config.abbreviations)
    sentences = attach_speakers(sentences, transcript.speaker_spans)
    truth_norm = normalize_text(transcript.text)
    stt_norm_text = normalize_text(" ".join(w.text for w in asr.words)).text

    def rejected(reason: str) -> AlignResult:
        empty = [AlignedSentence(sentence=s) for s in sentences]
        return AlignResult(recording_id=asr.recording_id, sentences=sentences,
                           aligned=empty, features=[None] * len(sentences),
                           rejection=reason)

    if config.guard_enabled and not length_ratio_guard(
            truth_norm.text, stt_norm_text, config.max_length_ratio):
        return rejected("length_ratio")
    if not truth_norm.text or not stt_norm_text:
        return rejected("empty_input")

    view = build_view(config.granularity, sentences, truth_norm, asr)
    if len(view.truth_symbols) == 0 or len(view.stt_symbols) == 0:
        return rejected("empty_input")
    path = global_align(view.truth_symbols, view.stt_symbols, config.params,
                        mode=config.mode, band=config.band)
    aligned = map_sentences(sentences, path, asr, view)
    if config.calibration is not None:
        aligned = [apply_time_calibration(a, config.calibration, asr.duration)
                   for a in aligned]
    features = extract_document_features(aligned, path, view, asr, config.params)
    return AlignResult(recording_id=asr.recording_id, sentences=sentences,
                       aligned=aligned, features=features, path=path, view=view)


@dataclass
class BuildInput:
    """One document's aligned sentences plus their features."""

    recording_id: str
    aligned: Sequence[AlignedSentence]
    features: Sequence[Optional[IouFeatures]]


@dataclass
class BuildReport:
    manifests: Dict[str, Manifest] = field(default_factory=dict)
    files: Dict[str, Dict[str, Path]] = field(default_factory=dict)
    filter_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    speaker_mapping: Dict[str, str] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "manifests": {name: manifest.summary()
                          for name, manifest in sorted(self.manifests.items())},
            "filter_counts": self.filter_counts,
        }


def _corpus_entries(docs: Sequence[BuildInput],
                    model: Optional[GbdtModel]) -> List[CorpusEntry]:
    entries = []
    for doc in docs:
        if len(doc.aligned) != len(doc.features):
            raise InputError(f"{doc.recording_id}: aligned/features length mismatch")
        for aligned, features in zip(doc.aligned, doc.features):
            if aligned.span is None:
                continue
            estimate = None
            if model is not None:
                if features is None:
                    raise InputError(
                        f"{doc.recording_id}: non-empty sentence without features")
                estimate = predict_iou(model, features)
            entries.append(CorpusEntry(
                recording_id=doc.recording_id,
                text=aligned.sentence.text,
                start=aligned.span[0],
                end=aligned.span[1],
                speaker_id=aligned.sentence.speaker_id or "",
                iou_estimate=estimate,
            ))
    return entries


def _filter_corpus_entries(entries: Sequence[CorpusEntry], config: FilterConfig,
                           role: str, detector: Optional[Callable[[str], str]],
                           ) -> Tuple[List[CorpusEntry], Dict[str, int]]:
    as_aligned = [
        AlignedSentence(
            sentence=Sentence(entry.text, (0, len(entry.text)),
                              speaker_id=entry.speaker_id),
            span=(entry.start, entry.end),
            iou_estimate=entry.iou_estimate,
        )
        for entry in entries
    ]
    kept_aligned, counts = apply_filters(as_aligned, config, split_role=role,
                                         detector=detector)
    kept_ids = {id(a) for a in kept_aligned}
    kept = [entry for entry, wrapped in zip(entries, as_aligned)
            if id(wrapped) in kept_ids]
    return kept, counts


def run_build(docs: Sequence[BuildInput], model: Optional[GbdtModel],
              filter_config: FilterConfig, out_dir: str | Path,
              thresholds: Sequence[float] = (0.7, 0.9),
              test_hours_target: Optional[float] = None,
              speaker_cap: float = 0.1, seed: int = 0,
              detector: Optional[Callable[[str], str]] = None) -> BuildReport:
    """Score, split and write the manifest family for a set of documents.

    Without a model only ``train_all`` is written (estimate column null,
    split unassigned). With a model, entries are split speaker-exclusively
    first; ``train_all`` keeps every train-side entry unfiltered, each
    ``train_<t>`` applies the filters at threshold t, and ``test`` applies
    the test-role filters at the strictest requested threshold.
    """
    report = BuildReport()
    entries = _corpus_entries(docs, model)
    if not entries:
        raise InputError("no non-empty aligned sentences to build from")
    entries, mapping = dedupe_speakers(entries)
    report.speaker_mapping = mapping

    if model is None:
        manifest = Manifest(entries=entries)
        report.manifests["train_all"] = manifest
        report.files["train_all"] = write_manifest(manifest, out_dir, "train_all")
        return report

    if test_hours_target is None:
        total_hours = sum(e.duration_s for e in entries) / 3600.0
        test_hours_target = total_hours * 0.02
    split_manifest = split_by_speaker(entries, test_hours_target,
                                      speaker_cap=speaker_cap, seed=seed)
    train_entries = [e for e in split_manifest.entries if e.split == "train"]
    test_entries = [e for e in split_manifest.entries if e.split == "test"]

    manifest_all = Manifest(entries=train_entries)
    report.manifests["train_all"] = manifest_all
    report.files["train_all"] = write_manifest(manifest_all, out_dir, "train_all")

    for threshold in sorted(thresholds):
        config = replace(filter_config, iou_threshold=threshold)
        kept, counts = _filter_corpus_entries(train_entries, config, "train", detector)
        name = f"train_{threshold:g}"
        manifest = Manifest(entries=kept)
        report.manifests[name] = manifest
        report.files[name] = write_manifest(manifest, out_dir, name)
        report.filter_counts[name] = counts

    test_threshold = max(thresholds) if thresholds else filter_config.iou_threshold
    test_config = replace(filter_config, iou_threshold=test_threshold)
    kept_test, test_counts = _filter_corpus_entries(test_entries, test_config,
                                                    "test", detector)
    manifest_test = Manifest(entries=kept_test)
    report.manifests["test"] = manifest_test
    report.files["test"] = write_manifest(manifest_test, out_dir, "test")
    report.filter_counts["test"] = test_counts
    return report

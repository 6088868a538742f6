"""Seeded random search over alignment scores, and threshold sweeps.

Parameter vectors are sampled uniformly (match in [0, 1], every penalty in
[-1, 0]) and scored by k-fold cross-validated mean IoU against a labeled
corpus; time calibration is fitted on the training folds only. Random
search keeps the protocol of the original optimizer while staying trivially
deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConstraintError, InputError
from .ingest import (
    PARAM_KEYS,
    AlignmentParams,
    AsrTranscript,
    ManualTranscript,
    parse_asr_transcript,
    parse_manual_transcript,
)
from .mapping import (
    AlignedSentence,
    TimeCalibration,
    apply_time_calibration,
    fit_time_calibration,
    read_aligned_jsonl,
)
from .metrics import evaluate_alignment, interval_iou, pooled_eval
from .pipeline import AlignResult, PipelineConfig, run_align


@dataclass
class LabeledDocument:
    doc_id: str
    asr: AsrTranscript
    transcript: ManualTranscript
    gold: List[AlignedSentence]


@dataclass
class LabeledCorpus:
    documents: List[LabeledDocument]


@dataclass(frozen=True)
class Trial:
    params: AlignmentParams
    score: float


@dataclass
class TuneResult:
    best_params: AlignmentParams
    cv_mean_iou: float
    trials: List[Trial]


def load_labeled_corpus(directory: str | Path) -> LabeledCorpus:
    """Load ``<id>.asr.json`` + ``<id>.txt`` + ``<id>.gold.jsonl`` triples."""
    root = Path(directory)
    if not root.is_dir():
        raise InputError(f"corpus directory {root} does not exist")
    documents = []
    for asr_path in sorted(root.glob("*.asr.json")):
        doc_id = asr_path.name[:-len(".asr.json")]
        text_path = root / f"{doc_id}.txt"
        gold_path = root / f"{doc_id}.gold.jsonl"
        if not text_path.exists() or not gold_path.exists():
            raise InputError(f"document {doc_id}: missing transcript or gold file")
        asr = parse_asr_transcript(asr_path.read_bytes())
        speakers_path = root / f"{doc_id}.speakers.tsv"
        transcript = parse_manual_transcript(
            text_path.read_text("utf-8"), doc_id,
            speakers_path.read_text("utf-8") if speakers_path.exists() else None)
        with open(gold_path, encoding="utf-8") as handle:
            gold = read_aligned_jsonl(handle)
        documents.append(LabeledDocument(doc_id=doc_id, asr=asr,
                                         transcript=transcript, gold=gold))
    if not documents:
        raise InputError(f"no *.asr.json documents found in {root}")
    return LabeledCorpus(documents=documents)


def sample_params(rng: np.random.Generator) -> AlignmentParams:
    values = {}
    for key in PARAM_KEYS:
        if key == "match_score":
            values[key] = float(rng.uniform(0.0, 1.0))
        else:
            values[key] = float(rng.uniform(-1.0, 0.0))
    return AlignmentParams(**values)


def document_folds(n_docs: int, k: int, seed: int) -> List[List[int]]:
    """Partition document indices into k seeded folds (every doc in exactly one)."""
    order = np.random.default_rng(seed).permutation(n_docs)
    return [fold.tolist() for fold in np.array_split(order, k)]


def _align_documents(corpus: LabeledCorpus, params: AlignmentParams,
                     granularity: str) -> List[AlignResult]:
    config = PipelineConfig(params=params, granularity=granularity,
                            mode="full_dp", guard_enabled=False)
    results = []
    for doc in corpus.documents:
        result = run_align(doc.asr, doc.transcript, config)
        if len(result.aligned) != len(doc.gold):
            raise InputError(
                f"document {doc.doc_id}: {len(result.aligned)} split sentences vs "
                f"{len(doc.gold)} gold records; gold must cover every sentence")
        results.append(result)
    return results


def cv_mean_iou(corpus: LabeledCorpus, params: AlignmentParams, k: int = 3,
                seed: int = 0, granularity: str = "char") -> float:
    """k-fold mean IoU for one parameter vector, calibration per fold."""
    results = _align_documents(corpus, params, granularity)
    folds = document_folds(len(corpus.documents), k, seed)
    fold_scores = []
    for fold in folds:
        eval_ids = set(fold)
        train_pred: List[AlignedSentence] = []
        train_gold: List[AlignedSentence] = []
        for idx, (result, doc) in enumerate(zip(results, corpus.documents)):
            if idx not in eval_ids:
                train_pred.extend(result.aligned)
                train_gold.extend(doc.gold)
        try:
            calibration = fit_time_calibration(train_pred, train_gold)
        except ConstraintError:
            calibration = TimeCalibration(0.0, 0.0)
        reports = []
        for idx in sorted(eval_ids):
            result = results[idx]
            doc = corpus.documents[idx]
            corrected = [apply_time_calibration(a, calibration, doc.asr.duration)
                         for a in result.aligned]
            reports.append(evaluate_alignment(corrected, doc.gold))
        fold_scores.append(pooled_eval(reports).mean_iou)
    return float(np.mean(fold_scores))


def tune_alignment_params(corpus: LabeledCorpus, budget: int, k: int = 3,
                          seed: int = 0, granularity: str = "char") -> TuneResult:
    """Random search: sample ``budget`` parameter vectors, return the CV argmax."""
    if budget < 1:
        raise InputError("budget must be >= 1")
    if not corpus.documents:
        raise InputError("empty corpus")
    if len(corpus.documents) < k:
        raise InputError(f"need at least {k} documents for {k}-fold CV")
    rng = np.random.default_rng(seed)
    trials = []
    for _ in range(budget):
        params = sample_params(rng)
        score = cv_mean_iou(corpus, params, k=k, seed=seed, granularity=granularity)
        trials.append(Trial(params=params, score=score))
    best_index = max(range(len(trials)),
                     key=lambda idx: (trials[idx].score, -idx))
    best = trials[best_index]
    return TuneResult(best_params=best.params, cv_mean_iou=best.score, trials=trials)


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    mean_iou_kept: Optional[float]
    sentence_recall: Optional[float]
    kept: int

    def to_json(self) -> dict:
        return {"threshold": self.threshold, "mean_iou_kept": self.mean_iou_kept,
                "sentence_recall": self.sentence_recall, "kept": self.kept}


def sweep_threshold(pairs: Sequence[Tuple[AlignedSentence, AlignedSentence]],
                    thresholds: Sequence[float]) -> List[SweepRow]:
    """Gold IoU of kept sentences and post-filter recall, per threshold.

    ``pairs`` are (predicted, gold) aligned sentences; predictions must
    carry ``iou_estimate`` whenever they are non-empty. Filtering an entry
    out turns it into an empty prediction for the recall computation.
    """
    for pred, _ in pairs:
        if pred.span is not None and pred.iou_estimate is None:
            raise InputError("non-empty prediction without iou_estimate")
    gold_nonempty = sum(1 for _, gold in pairs if gold.span is not None)
    rows = []
    for threshold in sorted(thresholds):
        kept_ious = []
        kept_count = 0
        tp = 0
        for pred, gold in pairs:
            keep = pred.span is not None and pred.iou_estimate >= threshold
            if not keep:
                continue
            kept_count += 1
            if gold.span is not None:
                tp += 1
                kept_ious.append(interval_iou(pred.span, gold.span))
        rows.append(SweepRow(
            threshold=threshold,
            mean_iou_kept=float(np.mean(kept_ious)) if kept_ious else None,
            sentence_recall=tp / gold_nonempty if gold_nonempty else None,
            kept=kept_count,
        ))
    return rows


def write_sweep_tsv(path: str | Path, rows: Sequence[SweepRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("threshold\tmean_iou_kept\tsentence_recall\tkept\n")
        for row in rows:
            handle.write("\t".join([
                repr(row.threshold),
                "" if row.mean_iou_kept is None else repr(row.mean_iou_kept),
                "" if row.sentence_recall is None else repr(row.sentence_recall),
                str(row.kept),
            ]) + "\n")


def tune_result_to_json(result: TuneResult) -> str:
    return json.dumps({
        "best_params": result.best_params.as_dict(),
        "cv_mean_iou": result.cv_mean_iou,
        "trials": [{"params": t.params.as_dict(), "score": t.score}
                   for t in result.trials],
    }, sort_keys=True)

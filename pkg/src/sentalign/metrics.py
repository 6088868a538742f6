"""Evaluation metrics: interval IoU, sentence precision/recall, WER, BLEU."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .errors import InputError
from .mapping import AlignedSentence


@dataclass(frozen=True)
class EvalReport:
    mean_iou: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision: Optional[float]
    recall: Optional[float]
    n_scored: int

    def to_json(self) -> str:
        return json.dumps({
            "mean_iou": self.mean_iou,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision": self.precision, "recall": self.recall,
            "n_scored": self.n_scored,
        }, sort_keys=True)


def interval_iou(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Intersection over union of two time intervals, in [0, 1]."""
    for name, (start, end) in (("a", a), ("b", b)):
        if end <= start:
            raise InputError(f"degenerate interval {name}: ({start}, {end})")
    intersection = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - intersection
    return intersection / union


def evaluate_alignment(predicted: Sequence[AlignedSentence],
                       gold: Sequence[AlignedSentence]) -> EvalReport:
    """Classify index-matched pairs into TP/FP/TN/FN and average IoU over TPs.

    TP: both non-empty. TN: both empty. FP: gold empty, predicted non-empty.
    FN: gold non-empty, predicted empty. The mean IoU covers TP pairs only.
    """
    if len(predicted) != len(gold):
        raise InputError(
            f"length mismatch: {len(predicted)} predicted vs {len(gold)} gold")
    tp = fp = tn = fn = 0
    iou_total = 0.0
    for pred, ref in zip(predicted, gold):
        if ref.span is None and pred.span is None:
            tn += 1
        elif ref.span is None:
            fp += 1
        elif pred.span is None:
            fn += 1
        else:
            tp += 1
            iou_total += interval_iou(pred.span, ref.span)
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    return EvalReport(
        mean_iou=iou_total / tp if tp > 0 else 0.0,
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall,
        n_scored=len(predicted),
    )


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> float:
    """Word error rate: edit distance divided by reference length (may exceed 1)."""
    if len(reference) == 0:
        raise InputError("empty reference")
    prev = list(range(len(hypothesis) + 1))
    for i, ref_word in enumerate(reference, start=1):
        current = [i] + [0] * len(hypothesis)
        for j, hyp_word in enumerate(hypothesis, start=1):
            cost = 0 if ref_word == hyp_word else 1
            current[j] = min(prev[j] + 1, current[j - 1] + 1, prev[j - 1] + cost)
        prev = current
    return prev[-1] / len(reference)


def _ngrams(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[k:k + order]) for k in range(len(tokens) - order + 1))


def corpus_bleu(references: Sequence[Sequence[str]],
                hypotheses: Sequence[Sequence[str]],
                max_order: int = 4) -> float:
    """Corpus-level BLEU, uniform weights, no smoothing.

    Modified n-gram precisions are aggregated over the whole corpus; any
    aggregated precision of zero yields BLEU 0. Brevity penalty is
    exp(1 - r/c) when the hypothesis corpus is shorter than the reference.
    """
    if len(references) != len(hypotheses):
        raise InputError(
            f"length mismatch: {len(references)} references vs {len(hypotheses)} hypotheses")
    if not references:
        raise InputError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    ref_len = 0
    hyp_len = 0
    for ref, hyp in zip(references, hypotheses):
        ref_len += len(ref)
        hyp_len += len(hyp)
        for order in range(1, max_order + 1):
            hyp_counts = _ngrams(hyp, order)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref, order)
            totals[order - 1] += sum(hyp_counts.values())
            matches[order - 1] += sum(min(count, ref_counts[gram])
                                      for gram, count in hyp_counts.items())
    if any(total == 0 for total in totals):
        return 0.0
    if any(match == 0 for match in matches):
        return 0.0
    log_precision = sum(math.log(match / total)
                        for match, total in zip(matches, totals)) / max_order
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(1, hyp_len))
    return brevity * math.exp(log_precision)


def pooled_eval(reports: Sequence[EvalReport]) -> EvalReport:
    """Aggregate per-document reports into one corpus-level report."""
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    tn = sum(r.tn for r in reports)
    fn = sum(r.fn for r in reports)
    iou_total = sum(r.mean_iou * r.tp for r in reports)
    return EvalReport(
        mean_iou=iou_total / tp if tp > 0 else 0.0,
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=tp / (tp + fp) if tp + fp > 0 else None,
        recall=tp / (tp + fn) if tp + fn > 0 else None,
        n_scored=sum(r.n_scored for r in reports),
    )

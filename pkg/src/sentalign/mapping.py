"""Turn an alignment path plus ASR word timings into per-sentence time spans.

The aligner works on symbol sequences. A :class:`SymbolView` fixes the
granularity (characters of normalized text, or whole words) and carries the
maps back to transcript sentences and ASR words:

* ``sentence_ranges`` gives each sentence's truth symbol range,
* ``stt_symbol_words`` attributes each stt symbol to the ASR word it came
  from (-1 for separators), which implements the overlap rule: a word
  overlaps a projected range when any of its symbols falls inside it.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, replace
from typing import IO, List, Optional, Sequence, Tuple

import numpy as np

from .align import AlignmentPath, match_targets
from .errors import ConstraintError, InputError
from .ingest import AsrTranscript, NormalizedText, normalize_text
from .sentences import Sentence


@dataclass(frozen=True)
class AlignedSentence:
    """A sentence with its predicted time span; span None means "empty"."""

    sentence: Sentence
    span: Optional[Tuple[float, float]] = None
    iou_estimate: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return self.span is None

    def validate(self) -> None:
        if self.span is not None:
            start, end = self.span
            if start < 0 or end <= start:
                raise InputError(f"invalid span ({start}, {end})")


@dataclass(frozen=True)
class TimeCalibration:
    """Constant start/end corrections added to predicted spans."""

    start_offset: float
    end_offset: float

    def validate(self) -> None:
        for name, value in (("start_offset", self.start_offset),
                            ("end_offset", self.end_offset)):
            if not (value == value and abs(value) < 10.0):
                raise InputError(f"{name} must be finite and < 10 s in magnitude: {value}")


@dataclass(frozen=True)
class SymbolView:
    """Alignment-ready symbol sequences for one document at one granularity."""

    granularity: str
    truth_symbols: Sequence
    stt_symbols: Sequence
    sentence_ranges: Tuple[Tuple[int, int], ...]
    stt_symbol_words: np.ndarray  # per stt symbol: ASR word index or -1


def _sentence_symbol_ranges(sentences: Sequence[Sentence],
                            truth_norm: NormalizedText) -> List[Tuple[int, int]]:
    ranges = []
    for sentence in sentences:
        raw_start, raw_end = sentence.raw_char_range
        lo = bisect_left(truth_norm.index_map, raw_start)
        hi = bisect_left(truth_norm.index_map, raw_end)
        ranges.append((lo, hi))
    return ranges


def build_char_view(sentences: Sequence[Sentence], truth_norm: NormalizedText,
                    asr: AsrTranscript) -> SymbolView:
    raw_chunks = []
    char_word: List[int] = []
    for word_idx, word in enumerate(asr.words):
        if raw_chunks:
            raw_chunks.append(" ")
            char_word.append(-1)
        raw_chunks.append(word.text)
        char_word.extend([word_idx] * len(word.text))
    stt_raw = "".join(raw_chunks)
    stt_norm = normalize_text(stt_raw)
    attribution = np.fromiter(
        (char_word[raw_idx] for raw_idx in stt_norm.index_map),
        dtype=np.int64, count=len(stt_norm.index_map))
    return SymbolView(
        granularity="char",
        truth_symbols=truth_norm.text,
        stt_symbols=stt_norm.text,
        sentence_ranges=tuple(_sentence_symbol_ranges(sentences, truth_norm)),
        stt_symbol_words=attribution,
    )


def build_word_view(sentences: Sequence[Sentence], truth_norm: NormalizedText,
                    asr: AsrTranscript) -> SymbolView:
    truth_words = truth_norm.text.split(" ") if truth_norm.text else []
    truth_words = [w for w in truth_words if w]
    # char offset range of each truth word within the normalized text
    word_spans = []
    offset = 0
    for word in truth_words:
        start = truth_norm.text.index(word, offset)
        word_spans.append((start, start + len(word)))
        offset = start + len(word)

    char_ranges = _sentence_symbol_ranges(sentences, truth_norm)
    sentence_ranges = []
    for lo, hi in char_ranges:
        first = None
        last = None
        for idx, (a, b) in enumerate(word_spans):
            if a < hi and b > lo:
                if first is None:
                    first = idx
                last = idx
        if first is None:
            sentence_ranges.append((0, 0))
        else:
            sentence_ranges.append((first, last + 1))

    stt_symbols = []
    attribution = []
    for word_idx, word in enumerate(asr.words):
        normalized = normalize_text(word.text).text
        if normalized:
            stt_symbols.append(normalized)
            attribution.append(word_idx)
    return SymbolView(
        granularity="word",
        truth_symbols=truth_words,
        stt_symbols=stt_symbols,
        sentence_ranges=tuple(sentence_ranges),
        stt_symbol_words=np.array(attribution, dtype=np.int64),
    )


def build_view(granularity: str, sentences: Sequence[Sentence],
               truth_norm: NormalizedText, asr: AsrTranscript) -> SymbolView:
    if granularity == "char":
        return build_char_view(sentences, truth_norm, asr)
    if granularity == "word":
        return build_word_view(sentences, truth_norm, asr)
    raise InputError(f"unknown granularity {granularity!r}")


def map_sentences(sentences: Sequence[Sentence], path: AlignmentPath,
                  asr: AsrTranscript, view: SymbolView) -> List[AlignedSentence]:
    """Project each sentence through the alignment onto ASR word times.

    A sentence whose truth symbols align entirely to gaps (or that has no
    alignable symbols at all) comes back empty. Spans are clipped to
    [0, duration] when the transcript carries a duration.
    """
    if len(view.sentence_ranges) != len(sentences):
        raise InputError("sentence ranges do not match sentences")
    targets = match_targets(path, len(view.truth_symbols))
    result = []
    for sentence, (lo, hi) in zip(sentences, view.sentence_ranges):
        result.append(AlignedSentence(sentence=sentence,
                                      span=_sentence_span(targets, lo, hi, asr, view)))
    return result


def _sentence_span(targets: np.ndarray, lo: int, hi: int, asr: AsrTranscript,
                   view: SymbolView) -> Optional[Tuple[float, float]]:
    if hi <= lo:
        return None
    matched = targets[lo:hi]
    matched = matched[matched >= 0]
    if matched.size == 0:
        return None
    jlo = int(matched.min())
    jhi = int(matched.max()) + 1
    word_ids = view.stt_symbol_words[jlo:jhi]
    word_ids = word_ids[word_ids >= 0]
    if word_ids.size == 0:
        return None
    first_word = asr.words[int(word_ids.min())]
    last_word = asr.words[int(word_ids.max())]
    start, end = first_word.start, last_word.end
    if asr.duration is not None:
        start = min(start, asr.duration)
        end = min(end, asr.duration)
    start = max(0.0, start)
    if end <= start:
        return None
    return start, end


def projected_ranges(path: AlignmentPath, view: SymbolView) -> List[Optional[Tuple[int, int]]]:
    """Per sentence, the minimal stt symbol range its matches cover."""
    targets = match_targets(path, len(view.truth_symbols))
    out: List[Optional[Tuple[int, int]]] = []
    for lo, hi in view.sentence_ranges:
        matched = targets[lo:hi] if hi > lo else targets[0:0]
        matched = matched[matched >= 0]
        if matched.size == 0:
            out.append(None)
        else:
            out.append((int(matched.min()), int(matched.max()) + 1))
    return out


def fit_time_calibration(predicted: Sequence[AlignedSentence],
                         gold: Sequence[AlignedSentence],
                         method: str = "mean") -> TimeCalibration:
    """Fit constant start/end offsets from index-matched prediction pairs.

    ``mean`` uses the mean signed residual per edge (least-squares optimal);
    ``grid`` maximizes mean interval IoU over a coarse offset grid per edge.
    """
    if len(predicted) != len(gold):
        raise InputError("predicted and gold lists must be index-matched")
    pairs = [(p.span, g.span) for p, g in zip(predicted, gold)
             if p.span is not None and g.span is not None]
    if not pairs:
        raise ConstraintError("no pairs with both spans present")
    if method == "mean":
        start_offset = float(np.mean([g[0] - p[0] for p, g in pairs]))
        end_offset = float(np.mean([g[1] - p[1] for p, g in pairs]))
        return TimeCalibration(start_offset=start_offset, end_offset=end_offset)
    if method == "grid":
        return _grid_calibration(pairs)
    raise InputError(f"unknown calibration method {method!r}")


def _grid_calibration(pairs) -> TimeCalibration:
    from .metrics import interval_iou

    grid = np.round(np.arange(-2.0, 2.0001, 0.01), 2)

    def mean_iou(start_offset: float, end_offset: float) -> float:
        total = 0.0
        count = 0
        for (ps, pe), g in pairs:
            shifted = (ps + start_offset, pe + end_offset)
            if shifted[1] > shifted[0]:
                total += interval_iou(shifted, g)
            count += 1
        return total / count

    best_start = min(grid, key=lambda off: (-mean_iou(off, 0.0), abs(off), off))
    best_end = min(grid, key=lambda off: (-mean_iou(best_start, off), abs(off), off))
    return TimeCalibration(start_offset=float(best_start), end_offset=float(best_end))


def apply_time_calibration(aligned: AlignedSentence, calibration: TimeCalibration,
                           duration: Optional[float] = None) -> AlignedSentence:
    """Shift a span by the calibration offsets, clipping at 0 and duration.

    A span that collapses (start >= end) is demoted to empty; empty
    sentences pass through unchanged.
    """
    calibration.validate()
    if aligned.span is None:
        return aligned
    start, end = aligned.span
    start = max(0.0, start + calibration.start_offset)
    end = max(0.0, end + calibration.end_offset)
    if duration is not None:
        start = min(start, duration)
        end = min(end, duration)
    if end <= start:
        return replace(aligned, span=None)
    return replace(aligned, span=(start, end))


def aligned_sentence_to_json(aligned: AlignedSentence) -> dict:
    start, end = aligned.span if aligned.span is not None else (None, None)
    return {
        "text": aligned.sentence.text,
        "start": start,
        "end": end,
        "iou_estimate": aligned.iou_estimate,
        "speaker": aligned.sentence.speaker_id,
    }


def aligned_sentence_from_json(payload: dict) -> AlignedSentence:
    try:
        text = payload["text"]
        start = payload["start"]
        end = payload["end"]
    except KeyError as exc:
        raise InputError(f"aligned sentence record missing {exc.args[0]!r}") from exc
    if (start is None) != (end is None):
        raise InputError(f"record for {text!r} has only one of start/end")
    sentence = Sentence(text=text, raw_char_range=(0, len(text)),
                        speaker_id=payload.get("speaker"))
    span = (float(start), float(end)) if start is not None else None
    aligned = AlignedSentence(sentence=sentence, span=span,
                              iou_estimate=payload.get("iou_estimate"))
    aligned.validate()
    return aligned


def write_aligned_jsonl(handle: IO[str], sentences: Sequence[AlignedSentence]) -> None:
    for aligned in sentences:
        handle.write(json.dumps(aligned_sentence_to_json(aligned),
                                ensure_ascii=False, sort_keys=True) + "\n")


def read_aligned_jsonl(handle: IO[str]) -> List[AlignedSentence]:
    result = []
    for lineno, line in enumerate(handle, start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: invalid JSON: {exc.msg}") from exc
        result.append(aligned_sentence_from_json(payload))
    return result

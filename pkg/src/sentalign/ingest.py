"""Parsing of ASR word timings, manual transcripts and alignment parameters.

Canonical input formats:

* ASR-JSON: ``{"recording_id": str, "duration": number?, "words":
  [{"text": str, "start": number, "end": number, "confidence": number?}]}``
* Manual transcript: UTF-8 plain text, optional sidecar speaker TSV with
  lines ``speaker_id<TAB>char_start<TAB>char_end``.
* Alignment parameters: line-oriented ``key = value`` with exactly the 14
  gap/match score keys; two built-in presets (``appendix_a``, ``appendix_b``)
  load without a file.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import InputError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class AsrWord:
    """One recognized word with its time span and confidence."""

    text: str
    start: float
    end: float
    confidence: float = 1.0

    def validate(self) -> None:
        if not self.text or any(ch.isspace() for ch in self.text):
            raise InputError(f"word text must be non-empty without whitespace: {self.text!r}")
        if self.start < 0:
            raise InputError(f"negative time: start={self.start}")
        if self.end < self.start:
            raise InputError(f"time ordering violated: end {self.end} < start {self.start}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class AsrTranscript:
    """Ordered timed words produced by an ASR engine for one recording."""

    recording_id: str
    words: Tuple[AsrWord, ...]
    duration: Optional[float] = None
    confidence_defaulted: bool = False

    def validate(self) -> None:
        prev_start = 0.0
        for idx, word in enumerate(self.words):
            word.validate()
            if word.start < prev_start:
                raise InputError(
                    f"words out of order by start time at index {idx}: "
                    f"{word.start} < {prev_start}"
                )
            prev_start = word.start
            if self.duration is not None and word.end > self.duration:
                raise InputError(
                    f"word at index {idx} ends at {word.end} beyond duration {self.duration}"
                )


@dataclass(frozen=True)
class ManualTranscript:
    """Manual transcript text plus optional speaker attribution spans."""

    recording_id: str
    text: str
    speaker_spans: Optional[Tuple[Tuple[str, Tuple[int, int]], ...]] = None

    def validate(self) -> None:
        if not self.speaker_spans:
            return
        prev_end = 0
        for speaker_id, (start, end) in self.speaker_spans:
            if not speaker_id:
                raise InputError("speaker span with empty speaker id")
            if start < prev_end:
                raise InputError(f"overlapping speaker spans at char {start}")
            if not 0 <= start <= end <= len(self.text):
                raise InputError(f"speaker span ({start}, {end}) outside transcript bounds")
            prev_end = end


PARAM_KEYS = (
    "match_score",
    "mismatch_score",
    "truth_left_open_gap_score",
    "truth_internal_open_gap_score",
    "truth_right_open_gap_score",
    "truth_left_extend_gap_score",
    "truth_internal_extend_gap_score",
    "truth_right_extend_gap_score",
    "stt_left_open_gap_score",
    "stt_internal_open_gap_score",
    "stt_right_open_gap_score",
    "stt_left_extend_gap_score",
    "stt_internal_extend_gap_score",
    "stt_right_extend_gap_score",
)


@dataclass(frozen=True)
class AlignmentParams:
    """The 14 match/mismatch/boundary-gap scores driving the aligner.

    ``truth_*`` scores price gap runs inserted into the truth sequence,
    ``stt_*`` scores price gap runs inserted into the stt sequence. The
    left/right variants apply to runs at the very start/end of the gapped
    sequence; setting them to zero gives semi-global (free end gap)
    behaviour.
    """

    match_score: float
    mismatch_score: float
    truth_left_open_gap_score: float
    truth_internal_open_gap_score: float
    truth_right_open_gap_score: float
    truth_left_extend_gap_score: float
    truth_internal_extend_gap_score: float
    truth_right_extend_gap_score: float
    stt_left_open_gap_score: float
    stt_internal_open_gap_score: float
    stt_right_open_gap_score: float
    stt_left_extend_gap_score: float
    stt_internal_extend_gap_score: float
    stt_right_extend_gap_score: float

    def validate(self) -> None:
        for key in PARAM_KEYS:
            value = getattr(self, key)
            if not isinstance(value, (int, float)) or value != value:
                raise InputError(f"non-numeric value for {key}: {value!r}")
            if key.endswith("gap_score") and value > 0:
                raise InputError(f"gap score must be non-positive: {key}={value}")
        if self.mismatch_score > self.match_score:
            raise InputError(
                f"mismatch_score {self.mismatch_score} exceeds match_score {self.match_score}"
            )

    def as_dict(self) -> dict:
        return {key: getattr(self, key) for key in PARAM_KEYS}


#: Scores tuned against a hand-aligned reference corpus.
APPENDIX_A = AlignmentParams(
    match_score=0.03875752471676385,
    mismatch_score=-1.0,
    truth_left_open_gap_score=-0.5038367052042227,
    truth_internal_open_gap_score=-1.0,
    truth_right_open_gap_score=-0.43980186690399603,
    truth_left_extend_gap_score=-0.2440180768676541,
    truth_internal_extend_gap_score=-0.4817146150129493,
    truth_right_extend_gap_score=-0.2594102766979399,
    stt_left_open_gap_score=-1.0,
    stt_internal_open_gap_score=-0.7698209478188247,
    stt_right_open_gap_score=-0.9815365376036425,
    stt_left_extend_gap_score=-0.25266456311369834,
    stt_internal_extend_gap_score=-0.7698209478188247,
    stt_right_extend_gap_score=-0.5619337177636895,
)

#: Semi-global scores (free end gaps) used for production corpus builds.
APPENDIX_B = AlignmentParams(
    match_score=1.0,
    mismatch_score=-1.0,
    truth_left_open_gap_score=0.0,
    truth_internal_open_gap_score=-1.0,
    truth_right_open_gap_score=0.0,
    truth_left_extend_gap_score=0.0,
    truth_internal_extend_gap_score=-1.0,
    truth_right_extend_gap_score=0.0,
    stt_left_open_gap_score=0.0,
    stt_internal_open_gap_score=-1.0,
    stt_right_open_gap_score=0.0,
    stt_left_extend_gap_score=0.0,
    stt_internal_extend_gap_score=-1.0,
    stt_right_extend_gap_score=0.0,
)

PARAM_PRESETS = {"appendix_a": APPENDIX_A, "appendix_b": APPENDIX_B}


def parse_asr_transcript(data: bytes | str) -> AsrTranscript:
    """Parse canonical ASR-JSON into an :class:`AsrTranscript`.

    Missing per-word confidences default to 1.0 and set
    ``confidence_defaulted`` on the transcript so downstream features can
    flag the degraded signal.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"ASR file is not valid UTF-8: {exc}") from exc
    else:
        text = data
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"ASR JSON syntax error at position {exc.pos}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise InputError("ASR JSON must be an object")

    recording_id = payload.get("recording_id")
    if not isinstance(recording_id, str) or not recording_id:
        raise InputError("missing or empty recording_id")
    duration = payload.get("duration")
    if duration is not None and not isinstance(duration, (int, float)):
        raise InputError(f"duration must be a number, got {duration!r}")
    raw_words = payload.get("words")
    if not isinstance(raw_words, list):
        raise InputError("missing words array")

    words = []
    defaulted = False
    for idx, entry in enumerate(raw_words):
        if not isinstance(entry, dict):
            raise InputError(f"word at index {idx} is not an object")
        try:
            text_field = entry["text"]
            start = entry["start"]
            end = entry["end"]
        except KeyError as exc:
            raise InputError(f"word at index {idx} missing field {exc.args[0]!r}") from exc
        confidence = entry.get("confidence")
        if confidence is None:
            confidence = 1.0
            defaulted = True
        for name, value in (("start", start), ("end", end), ("confidence", confidence)):
            if not isinstance(value, (int, float)):
                raise InputError(f"word at index {idx}: {name} must be a number")
        if not isinstance(text_field, str):
            raise InputError(f"word at index {idx}: text must be a string")
        word = AsrWord(text=text_field, start=float(start), end=float(end),
                       confidence=float(confidence))
        try:
            word.validate()
        except InputError as exc:
            raise InputError(f"word at index {idx}: {exc}") from exc
        words.append(word)

    transcript = AsrTranscript(
        recording_id=recording_id,
        words=tuple(words),
        duration=float(duration) if duration is not None else None,
        confidence_defaulted=defaulted,
    )
    transcript.validate()
    return transcript


def serialize_asr_transcript(transcript: AsrTranscript) -> str:
    """Inverse of :func:`parse_asr_transcript` (round-trip safe)."""
    payload = {
        "recording_id": transcript.recording_id,
        "words": [
            {"text": w.text, "start": w.start, "end": w.end, "confidence": w.confidence}
            for w in transcript.words
        ],
    }
    if transcript.duration is not None:
        payload["duration"] = transcript.duration
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def parse_manual_transcript(text: str, recording_id: str,
                            speaker_tsv: Optional[str] = None) -> ManualTranscript:
    """Build a ManualTranscript from plain text and an optional speaker TSV."""
    spans = None
    if speaker_tsv is not None:
        parsed = []
        for lineno, line in enumerate(speaker_tsv.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise InputError(f"speaker file line {lineno}: expected 3 tab-separated fields")
            speaker_id, start_s, end_s = parts
            try:
                start, end = int(start_s), int(end_s)
            except ValueError as exc:
                raise InputError(f"speaker file line {lineno}: non-integer char offset") from exc
            parsed.append((speaker_id, (start, end)))
        parsed.sort(key=lambda item: item[1])
        spans = tuple(parsed)
    transcript = ManualTranscript(recording_id=recording_id, text=text, speaker_spans=spans)
    transcript.validate()
    return transcript


def parse_alignment_params(text: str) -> AlignmentParams:
    """Parse a ``key = value`` config with exactly the 14 parameter keys."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"line {lineno}: expected 'key = value'")
        key, _, raw_value = stripped.partition("=")
        key = key.strip()
        if key not in PARAM_KEYS:
            raise InputError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise InputError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(raw_value.strip())
        except ValueError as exc:
            raise InputError(f"line {lineno}: non-numeric value for {key!r}") from exc
    missing = [key for key in PARAM_KEYS if key not in values]
    if missing:
        raise InputError(f"missing key {missing[0]!r}" +
                         (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))
    params = AlignmentParams(**values)
    params.validate()
    return params


def serialize_alignment_params(params: AlignmentParams) -> str:
    return "".join(f"{key} = {getattr(params, key)!r}\n" for key in PARAM_KEYS)


def alignment_params_preset(name: str) -> AlignmentParams:
    try:
        return PARAM_PRESETS[name]
    except KeyError:
        raise InputError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PARAM_PRESETS))}"
        ) from None


@dataclass(frozen=True)
class NormalizedText:
    """Normalized text plus a monotone map from normalized to raw positions."""

    text: str
    index_map: Tuple[int, ...]

    def raw_index(self, norm_index: int) -> int:
        return self.index_map[norm_index]


def normalize_text(raw: str) -> NormalizedText:
    """Lowercase, strip punctuation, collapse whitespace; keep an index map.

    All Unicode punctuation categories (P*) are removed; letters (including
    umlauts and eszett), digits and symbols are kept. Runs of whitespace
    collapse to a single space mapped to the run's first raw position.
    Leading and trailing whitespace disappears entirely. Idempotent.
    """
    chars: list[str] = []
    index_map: list[int] = []
    pending_space_at: Optional[int] = None
    for raw_idx, ch in enumerate(raw):
        if ch.isspace():
            if pending_space_at is None:
                pending_space_at = raw_idx
            continue
        if unicodedata.category(ch).startswith("P"):
            continue
        if pending_space_at is not None and chars:
            chars.append(" ")
            index_map.append(pending_space_at)
        pending_space_at = None
        for lowered in ch.lower():
            chars.append(lowered)
            index_map.append(raw_idx)
    return NormalizedText(text="".join(chars), index_map=tuple(index_map))

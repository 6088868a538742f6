"""Rule-based sentence splitting with abbreviation handling.

A sentence boundary is placed after ``.``, ``!``, ``?`` or ``:`` when the
terminator is followed by whitespace and the next sentence starts with an
uppercase letter or a digit. A candidate boundary is suppressed when the
token ending at the terminator is a known abbreviation, a single letter
(initials) or a number (ordinals like "1.").
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .errors import InputError
from .ingest import ManualTranscript

TERMINATORS = ".!?:"


@dataclass(frozen=True)
class Sentence:
    """A sentence with its character range into the source transcript."""

    text: str
    raw_char_range: Tuple[int, int]
    speaker_id: Optional[str] = None


def load_default_abbreviations() -> FrozenSet[str]:
    data = resources.files("sentalign.data").joinpath("abbreviations_de.txt").read_text("utf-8")
    return frozenset(line.strip() for line in data.splitlines() if line.strip())


def load_abbreviations(path: str) -> FrozenSet[str]:
    with open(path, encoding="utf-8") as handle:
        return frozenset(line.strip() for line in handle if line.strip())


def _token_before(text: str, terminator_idx: int) -> str:
    """The whitespace-delimited token ending at (and including) the terminator."""
    start = terminator_idx
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:terminator_idx + 1]


def _suppressed(token: str, abbreviations: FrozenSet[str]) -> bool:
    if token in abbreviations:
        return True
    core = token[:-1]
    # initials ("A.") and ordinal numbers ("1.") never end a sentence
    if len(core) == 1 and core.isalpha():
        return True
    if core and core.isdigit():
        return True
    return False


def split_sentences(transcript: ManualTranscript,
                    abbreviations: Optional[FrozenSet[str]] = None) -> List[Sentence]:
    """Split transcript text into sentences with character offsets.

    Every non-whitespace character of the transcript belongs to exactly one
    sentence; the gaps between consecutive sentence ranges are whitespace
    only. Deterministic for a fixed abbreviation set.
    """
    if abbreviations is None:
        abbreviations = load_default_abbreviations()
    text = transcript.text
    n = len(text)
    boundaries = []
    idx = 0
    while idx < n:
        ch = text[idx]
        if ch in TERMINATORS:
            # absorb terminator runs ("..." or "?!") into one candidate
            end = idx
            while end + 1 < n and text[end + 1] in TERMINATORS:
                end += 1
            follow = end + 1
            while follow < n and text[follow].isspace():
                follow += 1
            has_gap = follow > end + 1
            starts_fresh = follow < n and (text[follow].isupper() or text[follow].isdigit())
            if has_gap and starts_fresh and not _suppressed(_token_before(text, idx), abbreviations):
                boundaries.append(end + 1)
            idx = end + 1
        else:
            idx += 1

    sentences: List[Sentence] = []
    cursor = 0
    for boundary in boundaries + [n]:
        start = cursor
        while start < boundary and text[start].isspace():
            start += 1
        end = boundary
        while end > start and text[end - 1].isspace():
            end -= 1
        if end > start:
            sentences.append(Sentence(text=text[start:end], raw_char_range=(start, end)))
        cursor = boundary
    return sentences


def attach_speakers(sentences: Sequence[Sentence],
                    speaker_spans: Optional[Sequence[Tuple[str, Tuple[int, int]]]],
                    ) -> List[Sentence]:
    """Assign to each sentence the speaker covering most of its characters."""
    if not speaker_spans:
        return list(sentences)
    result = []
    for sentence in sentences:
        s_start, s_end = sentence.raw_char_range
        best_speaker = None
        best_overlap = 0
        for speaker_id, (span_start, span_end) in speaker_spans:
            overlap = min(s_end, span_end) - max(s_start, span_start)
            if overlap > best_overlap:
                best_overlap = overlap
                best_speaker = speaker_id
        result.append(Sentence(text=sentence.text, raw_char_range=sentence.raw_char_range,
                               speaker_id=best_speaker))
    return result


def check_coverage(transcript: ManualTranscript, sentences: Sequence[Sentence]) -> None:
    """Verify the split invariant: ranges ordered, gaps whitespace-only."""
    cursor = 0
    for sentence in sentences:
        start, end = sentence.raw_char_range
        if start < cursor:
            raise InputError(f"sentence range ({start}, {end}) overlaps previous range")
        if transcript.text[cursor:start].strip():
            raise InputError(f"non-whitespace text dropped before offset {start}")
        if transcript.text[start:end] != sentence.text:
            raise InputError(f"sentence text does not match range ({start}, {end})")
        cursor = end
    if transcript.text[cursor:].strip():
        raise InputError("non-whitespace text dropped after last sentence")

"""Corpus assembly: speaker dedup, speaker-exclusive splitting, manifests.

The train/test split assigns whole speakers so that no speaker appears in
both sets, and caps every test speaker below a configurable share of the
test set's duration. Manifests are written as TSV plus a per-recording cut
list for an external audio cutter; identical inputs and seed produce
byte-identical files.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConstraintError, InputError

MANIFEST_FORMAT_VERSION = 1

MANIFEST_COLUMNS = ("recording_id", "start", "end", "text", "speaker_id",
                    "iou_estimate", "split")


@dataclass(frozen=True)
class CorpusEntry:
    recording_id: str
    text: str
    start: float
    end: float
    speaker_id: str
    iou_estimate: Optional[float] = None
    split: str = "unassigned"

    def validate(self) -> None:
        if self.end <= self.start:
            raise InputError(f"entry span ({self.start}, {self.end}) is degenerate")
        if self.iou_estimate is not None and not 0.0 <= self.iou_estimate <= 1.0:
            raise InputError(f"iou_estimate {self.iou_estimate} outside [0, 1]")
        if self.split not in ("train", "test", "unassigned"):
            raise InputError(f"unknown split {self.split!r}")

    @property
    def duration_s(self) -> float:
        return self.end - self.start


@dataclass
class Manifest:
    entries: List[CorpusEntry] = field(default_factory=list)

    def validate(self) -> None:
        train = {e.speaker_id for e in self.entries if e.split == "train"}
        test = {e.speaker_id for e in self.entries if e.split == "test"}
        shared = train & test
        if shared:
            raise ConstraintError(f"speakers in both splits: {sorted(shared)[:5]}")

    def summary(self) -> dict:
        splits: Dict[str, dict] = {}
        for entry in self.entries:
            bucket = splits.setdefault(entry.split,
                                       {"hours": 0.0, "speakers": set(), "entries": 0})
            bucket["hours"] += entry.duration_s / 3600.0
            bucket["speakers"].add(entry.speaker_id)
            bucket["entries"] += 1
        return {
            split: {"hours": info["hours"], "speakers": len(info["speakers"]),
                    "entries": info["entries"]}
            for split, info in sorted(splits.items())
        }


def canonical_speaker_id(label: str, recording_id: str) -> str:
    """Case-folded, whitespace-collapsed label; empty labels get a synthetic id."""
    collapsed = " ".join(label.split()).casefold()
    if not collapsed:
        return f"unknown-{recording_id}"
    return collapsed


def dedupe_speakers(entries: Sequence[CorpusEntry],
                    ) -> Tuple[List[CorpusEntry], Dict[str, str]]:
    """Rewrite speaker labels to canonical ids; returns the mapping for audit."""
    mapping: Dict[str, str] = {}
    result = []
    for entry in entries:
        canonical = canonical_speaker_id(entry.speaker_id, entry.recording_id)
        mapping[entry.speaker_id or f"<empty:{entry.recording_id}>"] = canonical
        result.append(replace(entry, speaker_id=canonical))
    return result, mapping


def split_by_speaker(entries: Sequence[CorpusEntry], test_hours_target: float,
                     speaker_cap: float = 0.1, seed: int = 0) -> Manifest:
    """Greedy seeded speaker-exclusive split with a per-speaker test cap.

    Speakers are visited in seeded shuffled order; a speaker joins the test
    set unless its duration alone would reach ``speaker_cap`` of the target.
    Assignment stops once the test set reaches the target; everyone else
    goes to train. A post-hoc pass re-verifies the cap against the final
    test duration and demotes violators (with refill) if any slip through.
    """
    if not entries:
        raise InputError("no entries to split")
    for entry in entries:
        entry.validate()
        if not entry.speaker_id:
            raise InputError("every entry needs a speaker_id; run dedupe_speakers")
    if test_hours_target <= 0:
        raise InputError("test_hours_target must be positive")
    if not 0.0 < speaker_cap <= 1.0:
        raise InputError("speaker_cap must lie in (0, 1]")
    total_hours = sum(e.duration_s for e in entries) / 3600.0
    if test_hours_target >= total_hours:
        raise ConstraintError(
            f"test target {test_hours_target} h >= total {total_hours:.3f} h")

    speaker_hours: Dict[str, float] = {}
    for entry in entries:
        speaker_hours[entry.speaker_id] = (speaker_hours.get(entry.speaker_id, 0.0)
                                           + entry.duration_s / 3600.0)
    order = sorted(speaker_hours)
    random.Random(seed).shuffle(order)

    banished: set = set()
    test_speakers = _greedy_fill(order, speaker_hours, test_hours_target,
                                 speaker_cap, banished)
    # cap re-verification against the realized test duration
    for _ in range(len(order)):
        test_total = sum(speaker_hours[s] for s in test_speakers)
        violators = [s for s in test_speakers
                     if speaker_hours[s] / test_total >= speaker_cap]
        if not violators:
            break
        worst = max(violators, key=lambda s: (speaker_hours[s], s))
        banished.add(worst)
        test_speakers = _greedy_fill(order, speaker_hours, test_hours_target,
                                     speaker_cap, banished)

    manifest = Manifest(entries=[
        replace(entry, split="test" if entry.speaker_id in test_speakers else "train")
        for entry in entries
    ])
    manifest.validate()
    return manifest


def _greedy_fill(order: Sequence[str], speaker_hours: Dict[str, float],
                 target: float, cap: float, banished: set) -> set:
    chosen: set = set()
    test_total = 0.0
    for speaker in order:
        if test_total >= target:
            break
        if speaker in banished or speaker_hours[speaker] >= cap * target:
            continue
        chosen.add(speaker)
        test_total += speaker_hours[speaker]
    if test_total < target:
        raise ConstraintError(
            f"cannot reach {target} test hours: eligible speakers provide only "
            f"{test_total:.3f} h under a {cap:.0%} cap")
    return chosen


def _format_float(value: float) -> str:
    return repr(float(value))


def write_manifest(manifest: Manifest, out_dir: str | Path,
                   name: str = "manifest") -> Dict[str, Path]:
    """Write the manifest TSV and a per-recording cut list JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv_path = out / f"{name}.tsv"
    with open(tsv_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for entry in manifest.entries:
            if "\t" in entry.text or "\n" in entry.text:
                raise InputError(f"entry text contains tab/newline: {entry.text[:40]!r}")
            handle.write("\t".join([
                entry.recording_id,
                _format_float(entry.start),
                _format_float(entry.end),
                entry.text,
                entry.speaker_id,
                "" if entry.iou_estimate is None else _format_float(entry.iou_estimate),
                entry.split,
            ]) + "\n")

    cuts: Dict[str, List[Tuple[float, float]]] = {}
    for entry in manifest.entries:
        cuts.setdefault(entry.recording_id, []).append((entry.start, entry.end))
    cut_path = out / f"{name}.cuts.json"
    payload = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "recordings": {rec: sorted(spans) for rec, spans in sorted(cuts.items())},
    }
    with open(cut_path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, ensure_ascii=False)
        handle.write("\n")
    return {"manifest": tsv_path, "cuts": cut_path}


def read_manifest(path: str | Path) -> Manifest:
    entries = []
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_COLUMNS:
            raise InputError(f"unexpected manifest header: {header}")
        for lineno, line in enumerate(handle, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(MANIFEST_COLUMNS):
                raise InputError(f"line {lineno}: expected {len(MANIFEST_COLUMNS)} columns")
            rec, start, end, text, speaker, estimate, split = parts
            entry = CorpusEntry(
                recording_id=rec, text=text, start=float(start), end=float(end),
                speaker_id=speaker,
                iou_estimate=float(estimate) if estimate else None,
                split=split,
            )
            entry.validate()
            entries.append(entry)
    return Manifest(entries=entries)

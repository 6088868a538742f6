import random

import pytest

from sentalign.corpus import (
    CorpusEntry,
    Manifest,
    canonical_speaker_id,
    dedupe_speakers,
    read_manifest,
    split_by_speaker,
    write_manifest,
)
from sentalign.errors import ConstraintError, InputError


def make_entries(speaker_hours, seconds_per_entry=60.0):
    """speaker_hours: dict speaker -> total hours, split into equal entries."""
    entries = []
    for speaker, hours in speaker_hours.items():
        remaining = hours * 3600.0
        t = 0.0
        while remaining > 1e-9:
            chunk = min(seconds_per_entry, remaining)
            entries.append(CorpusEntry(
                recording_id=f"rec-{speaker}", text=f"text {speaker} {t}",
                start=t, end=t + chunk, speaker_id=speaker, iou_estimate=0.9))
            t += chunk
            remaining -= chunk
    return entries


def test_dedupe_same_name_different_spacing_and_case():
    entries = [
        CorpusEntry("r1", "a", 0.0, 1.0, "Anna Muster"),
        CorpusEntry("r1", "b", 1.0, 2.0, "anna  muster"),
    ]
    deduped, mapping = dedupe_speakers(entries)
    assert deduped[0].speaker_id == deduped[1].speaker_id == "anna muster"
    assert mapping["Anna Muster"] == "anna muster"


def test_dedupe_no_fuzzy_matching():
    entries = [
        CorpusEntry("r1", "a", 0.0, 1.0, "Anna Muster"),
        CorpusEntry("r1", "b", 1.0, 2.0, "A. Muster"),
    ]
    deduped, _ = dedupe_speakers(entries)
    assert deduped[0].speaker_id != deduped[1].speaker_id


def test_dedupe_empty_label_gets_synthetic_id():
    entries = [CorpusEntry("rec7", "a", 0.0, 1.0, "")]
    deduped, _ = dedupe_speakers(entries)
    assert deduped[0].speaker_id == "unknown-rec7"
    assert canonical_speaker_id("  ", "rec9") == "unknown-rec9"


def test_dedupe_preserves_diacritics():
    assert canonical_speaker_id("Jürg Müller", "r") == "jürg müller"


def test_split_cap_unsatisfiable():
    entries = make_entries({f"s{k}": 1.0 for k in range(3)})
    with pytest.raises(ConstraintError):
        split_by_speaker(entries, test_hours_target=1.0, speaker_cap=0.1, seed=1)


def test_split_thirty_small_speakers():
    # ~0.2 h speakers (jittered below the 10 % boundary), 2 h target
    rng = random.Random(5)
    hours = {f"s{k:02d}": rng.uniform(0.15, 0.199) for k in range(30)}
    entries = make_entries(hours)
    manifest = split_by_speaker(entries, test_hours_target=2.0, speaker_cap=0.1,
                                seed=11)
    test_speakers = {e.speaker_id for e in manifest.entries if e.split == "test"}
    train_speakers = {e.speaker_id for e in manifest.entries if e.split == "train"}
    assert not test_speakers & train_speakers
    test_hours = sum(e.duration_s for e in manifest.entries
                     if e.split == "test") / 3600.0
    assert test_hours >= 2.0
    for speaker in test_speakers:
        share = hours[speaker] / test_hours
        assert share < 0.1


def test_split_deterministic_and_conserving():
    entries = make_entries({f"s{k}": 0.01 + 0.002 * k for k in range(20)})
    first = split_by_speaker(entries, test_hours_target=0.08, speaker_cap=0.5,
                             seed=42)
    second = split_by_speaker(entries, test_hours_target=0.08, speaker_cap=0.5,
                              seed=42)
    assert first.entries == second.entries
    assert len(first.entries) == len(entries)
    assert all(e.split in ("train", "test") for e in first.entries)
    different = split_by_speaker(entries, test_hours_target=0.08, speaker_cap=0.5,
                                 seed=43)
    assert {e.split for e in different.entries} == {"train", "test"}


def test_split_properties_random_instances():
    rng = random.Random(77)
    for trial in range(10):
        hours = {f"s{k}": rng.uniform(0.02, 0.3) for k in range(rng.randint(8, 25))}
        entries = make_entries(hours)
        total = sum(hours.values())
        target = total * 0.2
        try:
            manifest = split_by_speaker(entries, test_hours_target=target,
                                        speaker_cap=0.35, seed=trial)
        except ConstraintError:
            continue
        test_speakers = {e.speaker_id for e in manifest.entries if e.split == "test"}
        train_speakers = {e.speaker_id for e in manifest.entries if e.split == "train"}
        assert not test_speakers & train_speakers
        test_hours = sum(e.duration_s for e in manifest.entries
                         if e.split == "test") / 3600.0
        for speaker in test_speakers:
            assert hours[speaker] / test_hours < 0.35
        assert len(manifest.entries) == len(entries)


def test_split_requires_speaker_ids():
    entries = [CorpusEntry("r", "x", 0.0, 600.0, "")]
    with pytest.raises(InputError):
        split_by_speaker(entries, test_hours_target=0.05)


def test_split_target_must_be_below_total():
    entries = make_entries({"a": 0.5, "b": 0.5})
    with pytest.raises(ConstraintError):
        split_by_speaker(entries, test_hours_target=1.0)


def test_manifest_round_trip(tmp_path):
    entries = make_entries({"anna": 0.02, "beat": 0.03})
    entries = [e if k % 2 else type(e)(**{**e.__dict__, "iou_estimate": None})
               for k, e in enumerate(entries)]
    manifest = Manifest(entries=entries)
    paths = write_manifest(manifest, tmp_path, name="test")
    restored = read_manifest(paths["manifest"])
    assert restored.entries == manifest.entries


def test_manifest_rows_and_header(tmp_path):
    manifest = Manifest(entries=make_entries({"a": 0.02})[:2])
    paths = write_manifest(manifest, tmp_path)
    lines = paths["manifest"].read_text().splitlines()
    assert lines[0].startswith("recording_id\tstart\tend")
    assert len(lines) == 3


def test_cut_list_groups_by_recording(tmp_path):
    import json

    entries = make_entries({"a": 0.02, "b": 0.02})
    manifest = Manifest(entries=entries)
    paths = write_manifest(manifest, tmp_path)
    payload = json.loads(paths["cuts"].read_text())
    assert set(payload["recordings"]) == {"rec-a", "rec-b"}
    for spans in payload["recordings"].values():
        assert spans == sorted(spans)


def test_manifest_write_is_byte_deterministic(tmp_path):
    entries = make_entries({f"s{k}": 0.02 for k in range(8)})
    manifest = split_by_speaker(entries, test_hours_target=0.05,
                                speaker_cap=0.5, seed=5)
    first = write_manifest(manifest, tmp_path / "one")
    second = write_manifest(manifest, tmp_path / "two")
    assert first["manifest"].read_bytes() == second["manifest"].read_bytes()
    assert first["cuts"].read_bytes() == second["cuts"].read_bytes()


def test_exclusivity_enforced_by_validate():
    bad = Manifest(entries=[
        CorpusEntry("r", "a", 0.0, 1.0, "s1", split="train"),
        CorpusEntry("r", "b", 1.0, 2.0, "s1", split="test"),
    ])
    with pytest.raises(ConstraintError):
        bad.validate()

import json
import random

import pytest

from sentalign.errors import InputError
from sentalign.ingest import (
    APPENDIX_A,
    APPENDIX_B,
    PARAM_KEYS,
    AlignmentParams,
    alignment_params_preset,
    normalize_text,
    parse_alignment_params,
    parse_asr_transcript,
    parse_manual_transcript,
    serialize_alignment_params,
    serialize_asr_transcript,
)


def make_asr_json(words, recording_id="rec1", duration=None):
    payload = {"recording_id": recording_id, "words": words}
    if duration is not None:
        payload["duration"] = duration
    return json.dumps(payload)


def test_parse_three_words_sorted():
    data = make_asr_json([
        {"text": "guten", "start": 0.0, "end": 0.4, "confidence": 0.9},
        {"text": "tag", "start": 0.4, "end": 0.8, "confidence": 0.8},
        {"text": "allerseits", "start": 0.8, "end": 1.5, "confidence": 0.7},
    ])
    transcript = parse_asr_transcript(data)
    assert len(transcript.words) == 3
    assert [w.text for w in transcript.words] == ["guten", "tag", "allerseits"]
    assert transcript.confidence_defaulted is False


def test_parse_rejects_end_before_start():
    data = make_asr_json([{"text": "a", "start": 1.0, "end": 0.5, "confidence": 1.0}])
    with pytest.raises(InputError, match="time ordering"):
        parse_asr_transcript(data)


def test_parse_reports_first_out_of_order_index():
    data = make_asr_json([
        {"text": "b", "start": 2.0, "end": 2.5, "confidence": 1.0},
        {"text": "a", "start": 0.0, "end": 0.5, "confidence": 1.0},
    ])
    with pytest.raises(InputError, match="index 1"):
        parse_asr_transcript(data)


def test_parse_rejects_negative_time_and_bad_confidence():
    with pytest.raises(InputError, match="negative time"):
        parse_asr_transcript(make_asr_json(
            [{"text": "a", "start": -0.1, "end": 0.5, "confidence": 1.0}]))
    with pytest.raises(InputError, match="confidence"):
        parse_asr_transcript(make_asr_json(
            [{"text": "a", "start": 0.0, "end": 0.5, "confidence": 1.5}]))


def test_parse_reports_json_syntax_position():
    with pytest.raises(InputError, match="position"):
        parse_asr_transcript('{"recording_id": "x", "words": [')


def test_missing_confidence_defaults_with_flag():
    data = make_asr_json([{"text": "a", "start": 0.0, "end": 0.5}])
    transcript = parse_asr_transcript(data)
    assert transcript.words[0].confidence == 1.0
    assert transcript.confidence_defaulted is True


def test_word_beyond_duration_rejected():
    data = make_asr_json([{"text": "a", "start": 0.0, "end": 5.0, "confidence": 1.0}],
                         duration=4.0)
    with pytest.raises(InputError, match="duration"):
        parse_asr_transcript(data)


def test_round_trip_random_transcripts():
    rng = random.Random(5)
    for _ in range(20):
        words = []
        t = 0.0
        for k in range(rng.randint(1, 12)):
            start = t + rng.random() * 0.2
            end = start + 0.1 + rng.random()
            words.append({"text": f"w{k}", "start": start, "end": end,
                          "confidence": rng.random()})
            t = start
        data = make_asr_json(words, duration=words[-1]["end"] + 1.0)
        transcript = parse_asr_transcript(data)
        again = parse_asr_transcript(serialize_asr_transcript(transcript))
        assert again == transcript


def test_preset_appendix_b_values():
    params = alignment_params_preset("appendix_b")
    assert params.match_score == 1.0
    assert params.mismatch_score == -1.0
    for role in ("truth", "stt"):
        for side in ("left", "right"):
            assert getattr(params, f"{role}_{side}_open_gap_score") == 0.0
            assert getattr(params, f"{role}_{side}_extend_gap_score") == 0.0
        assert getattr(params, f"{role}_internal_open_gap_score") == -1.0
        assert getattr(params, f"{role}_internal_extend_gap_score") == -1.0


def test_preset_appendix_a_values():
    params = alignment_params_preset("appendix_a")
    assert params.match_score == 0.03875752471676385
    assert params.truth_internal_extend_gap_score == -0.4817146150129493
    assert params.stt_right_open_gap_score == -0.9815365376036425


def test_unknown_preset_rejected():
    with pytest.raises(InputError, match="unknown preset"):
        alignment_params_preset("appendix_c")


def test_params_config_round_trip():
    text = serialize_alignment_params(APPENDIX_A)
    assert parse_alignment_params(text) == APPENDIX_A


def test_params_missing_key_named():
    text = "\n".join(f"{key} = -0.5" for key in PARAM_KEYS
                     if key != "stt_left_open_gap_score")
    text = text.replace("match_score = -0.5", "match_score = 0.5", 1)
    with pytest.raises(InputError, match="stt_left_open_gap_score"):
        parse_alignment_params(text)


def test_params_unknown_key_rejected():
    text = serialize_alignment_params(APPENDIX_B) + "bogus_key = 1.0\n"
    with pytest.raises(InputError, match="bogus_key"):
        parse_alignment_params(text)


def test_params_non_numeric_rejected():
    text = serialize_alignment_params(APPENDIX_B).replace("1.0", "one", 1)
    with pytest.raises(InputError, match="non-numeric"):
        parse_alignment_params(text)


def test_params_positive_gap_rejected():
    with pytest.raises(InputError, match="non-positive"):
        AlignmentParams(**{**APPENDIX_B.as_dict(),
                           "truth_internal_open_gap_score": 0.5}).validate()


def test_normalize_basic():
    norm = normalize_text("In der Abfahrt,")
    assert norm.text == "in der abfahrt"
    assert len(norm.index_map) == 14


def test_normalize_empty():
    norm = normalize_text("")
    assert norm.text == ""
    assert norm.index_map == ()


def test_normalize_collapses_whitespace_with_map():
    norm = normalize_text("A  B")
    assert norm.text == "a b"
    assert norm.index_map[2] == 3


def test_normalize_preserves_german_letters():
    norm = normalize_text("Straße ÄÖÜ")
    assert norm.text == "straße äöü"


def test_normalize_idempotent_and_monotone():
    rng = random.Random(9)
    alphabet = "aA bB.,!?:ßü 123  -\tx\n"
    for _ in range(100):
        raw = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        norm = normalize_text(raw)
        again = normalize_text(norm.text)
        assert again.text == norm.text
        assert len(norm.index_map) == len(norm.text)
        assert all(b >= a for a, b in zip(norm.index_map, norm.index_map[1:]))
        assert all(0 <= idx < len(raw) for idx in norm.index_map)


def test_manual_transcript_speaker_spans_validated():
    with pytest.raises(InputError, match="overlap"):
        parse_manual_transcript("abcdef", "rec", "s1\t0\t4\ns2\t3\t6\n")
    parsed = parse_manual_transcript("abcdef", "rec", "s1\t0\t3\ns2\t3\t6\n")
    assert parsed.speaker_spans == (("s1", (0, 3)), ("s2", (3, 6)))

import random

from sentalign.ingest import ManualTranscript
from sentalign.sentences import (
    attach_speakers,
    check_coverage,
    load_default_abbreviations,
    split_sentences,
)


def split_text(text, abbreviations=None):
    transcript = ManualTranscript(recording_id="r", text=text)
    return split_sentences(transcript, abbreviations)


def test_two_terminal_periods():
    sentences = split_text("Er kam. Sie ging.")
    assert [s.text for s in sentences] == ["Er kam.", "Sie ging."]
    assert sentences[0].raw_char_range == (0, 7)
    assert sentences[1].raw_char_range == (8, 17)


def test_abbreviation_suppresses_boundary():
    sentences = split_text("Dr. Muster sprach.", frozenset({"Dr."}))
    assert [s.text for s in sentences] == ["Dr. Muster sprach."]


def test_default_abbreviations_loaded():
    abbreviations = load_default_abbreviations()
    assert "Dr." in abbreviations
    assert "z.B." in abbreviations
    sentences = split_text("Wir sehen z.B. Folgendes. Es gilt.", abbreviations)
    assert [s.text for s in sentences] == ["Wir sehen z.B. Folgendes.", "Es gilt."]


def test_empty_text_yields_no_sentences():
    assert split_text("") == []
    assert split_text("   \n ") == []


def test_ordinal_number_never_splits():
    sentences = split_text("Die 1. Lesung beginnt. Danach folgt mehr.")
    assert [s.text for s in sentences] == ["Die 1. Lesung beginnt.", "Danach folgt mehr."]


def test_single_letter_initial_never_splits():
    sentences = split_text("Frau A. Muster sprach. Dann Ende.")
    assert [s.text for s in sentences] == ["Frau A. Muster sprach.", "Dann Ende."]


def test_colon_boundary_with_uppercase_start():
    sentences = split_text("Er sagte: Die Sitzung beginnt.")
    assert [s.text for s in sentences] == ["Er sagte:", "Die Sitzung beginnt."]


def test_lowercase_continuation_not_split():
    sentences = split_text("Die Nr. drei fehlt heute.")
    assert [s.text for s in sentences] == ["Die Nr. drei fehlt heute."]


def test_question_and_exclamation():
    sentences = split_text("Wer spricht? Ich! Gut so.")
    assert [s.text for s in sentences] == ["Wer spricht?", "Ich!", "Gut so."]


def test_trailing_text_without_terminator():
    sentences = split_text("Erster Satz. Zweiter ohne Ende")
    assert [s.text for s in sentences] == ["Erster Satz.", "Zweiter ohne Ende"]


def test_coverage_and_determinism_random_texts():
    rng = random.Random(123)
    vocab = ["Der", "Rat", "tagt", "heute", "Dr.", "Nr.", "5", "Bern", "morgen"]
    abbreviations = load_default_abbreviations()
    for _ in range(50):
        words = [rng.choice(vocab) for _ in range(rng.randint(0, 30))]
        text = ""
        for word in words:
            text += word
            text += rng.choice([" ", " ", ". ", "? ", "! ", ": ", "  "])
        transcript = ManualTranscript(recording_id="r", text=text)
        first = split_sentences(transcript, abbreviations)
        second = split_sentences(transcript, abbreviations)
        assert first == second
        check_coverage(transcript, first)
        for sentence in first:
            assert sentence.text.strip() == sentence.text
            assert sentence.text


def test_attach_speakers_full_span():
    sentences = split_text("Er kam. Sie ging.")
    spans = [("anna", (0, 17))]
    attached = attach_speakers(sentences, spans)
    assert [s.speaker_id for s in attached] == ["anna", "anna"]


def test_attach_speakers_majority():
    # 10-char sentence straddling spans of 6 and 4 chars -> majority speaker
    sentences = split_text("abcdefghij")
    assert sentences[0].raw_char_range == (0, 10)
    attached = attach_speakers(sentences, [("a", (0, 6)), ("b", (6, 10))])
    assert attached[0].speaker_id == "a"


def test_attach_speakers_none():
    sentences = split_text("Er kam. Sie ging.")
    attached = attach_speakers(sentences, None)
    assert all(s.speaker_id is None for s in attached)

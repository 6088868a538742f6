import io
import random

import pytest

from sentalign.align import global_align
from sentalign.errors import ConstraintError, InputError
from sentalign.ingest import (
    APPENDIX_B,
    AsrTranscript,
    AsrWord,
    ManualTranscript,
    normalize_text,
)
from sentalign.mapping import (
    AlignedSentence,
    TimeCalibration,
    aligned_sentence_from_json,
    apply_time_calibration,
    build_view,
    fit_time_calibration,
    map_sentences,
    read_aligned_jsonl,
    write_aligned_jsonl,
)
from sentalign.sentences import Sentence, split_sentences

from _oracle import brute_best_score


def make_asr(texts, step=1.0, start=0.0, confidence=0.9, duration=None):
    words = []
    t = start
    for text in texts:
        words.append(AsrWord(text=text, start=t, end=t + step, confidence=confidence))
        t += step
    return AsrTranscript(recording_id="rec", words=tuple(words), duration=duration)


def align_document(text, asr, granularity="char", params=APPENDIX_B):
    transcript = ManualTranscript(recording_id="rec", text=text)
    sentences = split_sentences(transcript)
    truth_norm = normalize_text(text)
    view = build_view(granularity, sentences, truth_norm, asr)
    path = global_align(view.truth_symbols, view.stt_symbols, params)
    return sentences, view, path


def test_identity_sentence_span():
    asr = make_asr(["eins", "zwei", "drei"])
    sentences, view, path = align_document("Eins zwei drei.", asr)
    aligned = map_sentences(sentences, path, asr, view)
    assert len(aligned) == 1
    assert aligned[0].span == (0.0, 3.0)


def test_absent_sentence_is_empty():
    asr = make_asr(["eins", "zwei", "drei"])
    text = "Eins zwei drei. Qqq www yyy."
    sentences, view, path = align_document(text, asr)
    aligned = map_sentences(sentences, path, asr, view)
    assert aligned[0].span == (0.0, 3.0)
    assert aligned[1].is_empty


def test_substituted_word_still_anchors_span():
    # 6-word pair, second sentence's first word substituted in the ASR output
    text = "Eins zwei drei. Vier fuenf sechs."
    asr = make_asr(["eins", "zwei", "drei", "blah", "fuenf", "sechs"])
    for granularity in ("word", "char"):
        sentences, view, path = align_document(text, asr, granularity=granularity)
        if granularity == "word":
            # 6x6 symbols: cheap to confirm the DP found the enumeration optimum
            assert path.score == pytest.approx(
                brute_best_score(view.truth_symbols, view.stt_symbols, APPENDIX_B),
                abs=1e-9)
        aligned = map_sentences(sentences, path, asr, view)
        assert aligned[1].span is not None
        assert aligned[1].span[0] == pytest.approx(3.0)
        assert aligned[1].span[1] == pytest.approx(6.0)


def test_span_clipped_to_duration():
    asr = make_asr(["eins", "zwei"], duration=1.5)
    sentences, view, path = align_document("Eins zwei.", asr)
    aligned = map_sentences(sentences, path, asr, view)
    assert aligned[0].span == (0.0, 1.5)


def test_output_count_matches_input_count():
    asr = make_asr(["eins", "zwei", "drei"])
    text = "Eins zwei drei. Qqq. Zzz."
    sentences, view, path = align_document(text, asr)
    aligned = map_sentences(sentences, path, asr, view)
    assert len(aligned) == len(sentences)


def test_word_granularity_identity():
    asr = make_asr(["eins", "zwei", "drei", "vier"])
    sentences, view, path = align_document("Eins zwei. Drei vier.", asr,
                                           granularity="word")
    aligned = map_sentences(sentences, path, asr, view)
    assert aligned[0].span == (0.0, 2.0)
    assert aligned[1].span == (2.0, 4.0)


def test_identity_mapping_reaches_iou_one():
    from sentalign.metrics import interval_iou

    rng = random.Random(17)
    vocab = ["rat", "tagt", "heute", "bern", "antrag", "zu", "sitzung"]
    for _ in range(5):
        n_sent = rng.randint(1, 4)
        sent_words = [[rng.choice(vocab) for _ in range(rng.randint(2, 5))]
                      for _ in range(n_sent)]
        text = " ".join(" ".join(w).capitalize() + "." for w in sent_words)
        flat = [w for ws in sent_words for w in ws]
        asr = make_asr(flat, step=0.5)
        sentences, view, path = align_document(text, asr)
        aligned = map_sentences(sentences, path, asr, view)
        cursor = 0.0
        for sent, al in zip(sent_words, aligned):
            gold = (cursor, cursor + 0.5 * len(sent))
            assert al.span is not None
            assert interval_iou(al.span, gold) == pytest.approx(1.0)
            cursor = gold[1]


def test_fit_calibration_uniform_shift():
    gold = [AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 2.0)),
            AlignedSentence(Sentence("b", (0, 1)), span=(3.0, 4.0))]
    predicted = [AlignedSentence(Sentence("a", (0, 1)), span=(0.8, 1.8)),
                 AlignedSentence(Sentence("b", (0, 1)), span=(2.8, 3.8))]
    cal = fit_time_calibration(predicted, gold)
    assert cal.start_offset == pytest.approx(0.2)
    assert cal.end_offset == pytest.approx(0.2)


def test_fit_calibration_exact_predictions():
    spans = [AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 2.0))]
    cal = fit_time_calibration(spans, spans)
    assert cal.start_offset == pytest.approx(0.0)
    assert cal.end_offset == pytest.approx(0.0)


def test_fit_calibration_mean_of_residuals():
    gold = [AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 2.0)),
            AlignedSentence(Sentence("b", (0, 1)), span=(5.0, 6.0))]
    predicted = [AlignedSentence(Sentence("a", (0, 1)), span=(0.9, 2.0)),
                 AlignedSentence(Sentence("b", (0, 1)), span=(4.7, 6.0))]
    cal = fit_time_calibration(predicted, gold)
    assert cal.start_offset == pytest.approx(0.2)


def test_fit_calibration_ignores_empty_pairs_and_errors_when_none():
    empty = AlignedSentence(Sentence("a", (0, 1)), span=None)
    with pytest.raises(ConstraintError):
        fit_time_calibration([empty], [empty])


def test_apply_calibration_shifts_span():
    aligned = AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 2.0))
    out = apply_time_calibration(aligned, TimeCalibration(0.1, -0.1))
    assert out.span == (pytest.approx(1.1), pytest.approx(1.9))


def test_apply_calibration_empty_unchanged():
    aligned = AlignedSentence(Sentence("a", (0, 1)), span=None)
    out = apply_time_calibration(aligned, TimeCalibration(0.5, 0.5))
    assert out.is_empty


def test_apply_calibration_clips_at_zero():
    aligned = AlignedSentence(Sentence("a", (0, 1)), span=(0.05, 0.2))
    out = apply_time_calibration(aligned, TimeCalibration(-0.1, 0.0))
    assert out.span == (0.0, pytest.approx(0.2))


def test_apply_calibration_collapse_demotes_to_empty():
    aligned = AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 1.2))
    out = apply_time_calibration(aligned, TimeCalibration(0.3, -0.3))
    assert out.is_empty


def test_calibration_round_trip_zero_residual():
    rng = random.Random(23)
    gold = []
    predicted = []
    for k in range(20):
        start = k * 2.0
        gold.append(AlignedSentence(Sentence(f"s{k}", (0, 1)), span=(start, start + 1.5)))
        predicted.append(AlignedSentence(
            Sentence(f"s{k}", (0, 1)),
            span=(start + rng.uniform(-0.2, 0.2), start + 1.5 + rng.uniform(-0.2, 0.2))))
    cal = fit_time_calibration(predicted, gold)
    corrected = [apply_time_calibration(p, cal) for p in predicted]
    start_residual = sum(g.span[0] - c.span[0] for g, c in zip(gold, corrected))
    end_residual = sum(g.span[1] - c.span[1] for g, c in zip(gold, corrected))
    assert abs(start_residual / len(gold)) < 1e-9
    assert abs(end_residual / len(gold)) < 1e-9


def test_calibration_offset_bound_enforced():
    with pytest.raises(InputError):
        apply_time_calibration(
            AlignedSentence(Sentence("a", (0, 1)), span=(1.0, 2.0)),
            TimeCalibration(11.0, 0.0))


def test_jsonl_round_trip():
    sentences = [
        AlignedSentence(Sentence("Er kam.", (0, 7), speaker_id="anna"),
                        span=(0.0, 1.5), iou_estimate=0.93),
        AlignedSentence(Sentence("Sie ging.", (8, 17)), span=None),
    ]
    buffer = io.StringIO()
    write_aligned_jsonl(buffer, sentences)
    buffer.seek(0)
    restored = read_aligned_jsonl(buffer)
    assert restored[0].span == (0.0, 1.5)
    assert restored[0].iou_estimate == 0.93
    assert restored[0].sentence.speaker_id == "anna"
    assert restored[1].is_empty


def test_json_record_with_half_span_rejected():
    with pytest.raises(InputError):
        aligned_sentence_from_json({"text": "x", "start": 1.0, "end": None})

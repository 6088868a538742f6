import json
import random

import pytest

from sentalign.errors import InputError
from sentalign.mapping import AlignedSentence
from sentalign.metrics import corpus_bleu, evaluate_alignment, interval_iou, wer
from sentalign.sentences import Sentence


def aligned(span):
    return AlignedSentence(Sentence("x", (0, 1)), span=span)


def test_iou_identity():
    assert interval_iou((0, 10), (0, 10)) == pytest.approx(1.0)


def test_iou_disjoint():
    assert interval_iou((0, 1), (2, 3)) == 0.0


def test_iou_partial_overlap():
    assert interval_iou((0, 10), (5, 15)) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_iou_degenerate_rejected():
    with pytest.raises(InputError):
        interval_iou((1.0, 1.0), (0.0, 2.0))


def test_iou_properties_random():
    rng = random.Random(55)
    for _ in range(200):
        a = sorted((rng.uniform(0, 10), rng.uniform(0, 10)))
        b = sorted((rng.uniform(0, 10), rng.uniform(0, 10)))
        if a[0] == a[1] or b[0] == b[1]:
            continue
        a, b = tuple(a), tuple(b)
        value = interval_iou(a, b)
        assert 0.0 <= value <= 1.0
        assert value == pytest.approx(interval_iou(b, a))
        if a == b:
            assert value == pytest.approx(1.0)
        if a[1] <= b[0] or b[1] <= a[0]:
            assert value == 0.0


def test_evaluate_perfect_case():
    pairs = [aligned((k, k + 1.0)) for k in range(5)]
    report = evaluate_alignment(pairs, pairs)
    assert report.precision == 1.0
    assert report.recall == 1.0
    assert report.mean_iou == pytest.approx(1.0)


def test_evaluate_false_positive_lowers_precision():
    gold = [aligned((0.0, 1.0)), aligned(None)]
    predicted = [aligned((0.0, 1.0)), aligned((5.0, 6.0))]
    report = evaluate_alignment(predicted, gold)
    assert report.fp == 1
    assert report.precision == pytest.approx(0.5)


def test_evaluate_ten_pair_hand_count():
    # 6 TP, 1 FP, 1 TN, 2 FN -> precision 6/7, recall 6/8
    gold = ([aligned((k, k + 1.0)) for k in range(6)]
            + [aligned(None)]            # FP: gold empty, predicted set
            + [aligned(None)]            # TN
            + [aligned((20.0, 21.0)), aligned((22.0, 23.0))])  # FNs
    predicted = ([aligned((k, k + 1.0)) for k in range(6)]
                 + [aligned((10.0, 11.0))]
                 + [aligned(None)]
                 + [aligned(None), aligned(None)])
    report = evaluate_alignment(predicted, gold)
    assert (report.tp, report.fp, report.tn, report.fn) == (6, 1, 1, 2)
    assert report.precision == pytest.approx(6 / 7)
    assert report.recall == pytest.approx(6 / 8)
    assert report.tp + report.fp + report.tn + report.fn == 10


def test_evaluate_length_mismatch_rejected():
    with pytest.raises(InputError):
        evaluate_alignment([aligned(None)], [])


def test_evaluate_report_json_round_trip():
    report = evaluate_alignment([aligned((0, 1.0))], [aligned((0, 1.0))])
    payload = json.loads(report.to_json())
    assert payload["tp"] == 1
    assert payload["mean_iou"] == 1.0


def test_wer_identity():
    assert wer("a b c".split(), "a b c".split()) == 0.0


def test_wer_substitution_and_deletion():
    assert wer("a b c d".split(), "a x c".split()) == pytest.approx(0.5)


def test_wer_can_exceed_one():
    assert wer(["a"], "a b c".split()) == pytest.approx(2.0)


def test_wer_empty_reference_rejected():
    with pytest.raises(InputError):
        wer([], ["a"])


def test_wer_relabeling_invariance():
    rng = random.Random(2)
    vocab = ["a", "b", "c", "d"]
    mapping = {"a": "w", "b": "x", "c": "y", "d": "z"}
    for _ in range(50):
        ref = [rng.choice(vocab) for _ in range(rng.randint(1, 10))]
        hyp = [rng.choice(vocab) for _ in range(rng.randint(0, 10))]
        direct = wer(ref, hyp)
        relabeled = wer([mapping[w] for w in ref], [mapping[w] for w in hyp])
        assert direct == pytest.approx(relabeled)


def test_bleu_identity():
    refs = ["der rat tagt heute wieder".split()] * 3
    assert corpus_bleu(refs, refs) == pytest.approx(1.0)


def test_bleu_single_pair_hand_computed():
    # p1=4/5 p2=3/4 p3=2/3 p4=1/2, BP=1 -> (0.2)^(1/4)
    ref = "a b c d e".split()
    hyp = "a b c d x".split()
    assert corpus_bleu([ref], [hyp]) == pytest.approx(0.6687, abs=1e-3)


def test_bleu_zero_when_no_common_fourgram():
    ref = "a b c d e".split()
    hyp = "a x b y c".split()
    assert corpus_bleu([ref], [hyp]) == 0.0


def test_bleu_length_mismatch_and_empty_rejected():
    with pytest.raises(InputError):
        corpus_bleu([["a"]], [])
    with pytest.raises(InputError):
        corpus_bleu([], [])


def _corrupt(words, rate, rng, vocab):
    out = []
    for word in words:
        roll = rng.random()
        if roll < rate / 3:
            continue  # deletion
        if roll < 2 * rate / 3:
            out.append(rng.choice(vocab))  # substitution
        else:
            out.append(word)
        if rng.random() < rate / 3:
            out.append(rng.choice(vocab))  # insertion
    return out or [rng.choice(vocab)]


def test_monotone_corruption_wer_up_bleu_down():
    rng = random.Random(99)
    vocab = [f"w{k}" for k in range(30)]
    refs = [[rng.choice(vocab) for _ in range(12)] for _ in range(40)]
    rates = [0.0, 0.1, 0.3]
    wers = []
    bleus = []
    for rate in rates:
        gen = random.Random(7)
        hyps = [_corrupt(ref, rate, gen, vocab) for ref in refs]
        wers.append(sum(wer(r, h) for r, h in zip(refs, hyps)) / len(refs))
        bleus.append(corpus_bleu(refs, hyps))
    assert wers[0] <= wers[1] <= wers[2]
    assert bleus[0] >= bleus[1] >= bleus[2]

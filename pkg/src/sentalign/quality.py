"""Alignment quality estimation and corpus filters.

The quality estimator is a small gradient-boosted regression tree ensemble
trained on four per-sentence features (length ratio, normalized alignment
score, mean ASR confidence, chars per second) against interval-IoU labels.
Trees are grown leaf-wise over histogram bins with squared-error gain, so
training is fully deterministic; models serialize to versioned JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, IO, List, Optional, Sequence, Tuple

import numpy as np

from .align import GAP_STT, GAP_TRUTH, MATCH, AlignmentPath
from .errors import ConstraintError, InputError
from .langid import UNKNOWN, detect_language
from .mapping import AlignedSentence, SymbolView, projected_ranges
from .ingest import AlignmentParams, AsrTranscript

MODEL_FORMAT_VERSION = 1

FEATURE_NAMES = ("length_ratio", "norm_alignment_score", "mean_confidence",
                 "chars_per_second")

FILTER_ORDER = ("iou", "cps", "language", "audio_length", "unique")


@dataclass(frozen=True)
class IouFeatures:
    length_ratio: float
    norm_alignment_score: float
    mean_confidence: float
    chars_per_second: float

    def as_array(self) -> np.ndarray:
        return np.array([self.length_ratio, self.norm_alignment_score,
                         self.mean_confidence, self.chars_per_second])

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in FEATURE_NAMES}

    @classmethod
    def from_row(cls, row: dict) -> "IouFeatures":
        try:
            return cls(**{name: float(row[name]) for name in FEATURE_NAMES})
        except KeyError as exc:
            raise InputError(f"feature row missing {exc.args[0]!r}") from exc


def length_ratio_guard(truth_text: str, stt_text: str, max_ratio: float = 6.0) -> bool:
    """True when the longer/shorter length ratio is within the bound.

    Expects already-normalized texts. A ratio of exactly ``max_ratio``
    passes; a zero-length short side fails.
    """
    len_a, len_b = len(truth_text), len(stt_text)
    short, long = min(len_a, len_b), max(len_a, len_b)
    if short == 0:
        return False
    return long / short <= max_ratio


def _op_positions(path: AlignmentPath) -> Tuple[np.ndarray, np.ndarray]:
    """truth/stt symbols consumed before each op."""
    truth_pos = np.zeros(len(path.ops), dtype=np.int64)
    stt_pos = np.zeros(len(path.ops), dtype=np.int64)
    t = s = 0
    for idx, (kind, _, _) in enumerate(path.ops):
        truth_pos[idx] = t
        stt_pos[idx] = s
        if kind == MATCH:
            t += 1
            s += 1
        elif kind == GAP_TRUTH:
            s += 1
        else:
            t += 1
    return truth_pos, stt_pos


def sentence_alignment_scores(path: AlignmentPath, view: SymbolView,
                              params: AlignmentParams) -> List[Optional[float]]:
    """Re-score each sentence's slice of the alignment path.

    The slice runs from the first to the last op consuming one of the
    sentence's truth symbols. Gap runs cut by a slice edge are priced as
    fresh runs; run classes come from the global path position.
    """
    m = len(view.truth_symbols)
    n = len(view.stt_symbols)
    op_for_truth = np.full(m, -1, dtype=np.int64)
    for idx, (kind, i, _) in enumerate(path.ops):
        if kind != GAP_TRUTH:
            op_for_truth[i] = idx
    truth_pos, stt_pos = _op_positions(path)

    scores: List[Optional[float]] = []
    for lo, hi in view.sentence_ranges:
        if hi <= lo:
            scores.append(None)
            continue
        first = int(op_for_truth[lo])
        last = int(op_for_truth[hi - 1])
        scores.append(_score_slice(path, first, last, truth_pos, stt_pos,
                                   view, params, m, n))
    return scores


def _score_slice(path: AlignmentPath, first: int, last: int,
                 truth_pos: np.ndarray, stt_pos: np.ndarray, view: SymbolView,
                 params: AlignmentParams, m: int, n: int) -> float:
    score = 0.0
    idx = first
    while idx <= last:
        kind = path.ops[idx][0]
        if kind == MATCH:
            _, i, j = path.ops[idx]
            equal = view.truth_symbols[i] == view.stt_symbols[j]
            score += params.match_score if equal else params.mismatch_score
            idx += 1
            continue
        run = 1
        while idx + run <= last and path.ops[idx + run][0] == kind:
            run += 1
        if kind == GAP_TRUTH:
            pos = int(truth_pos[idx])
            cls = "left" if pos == 0 else ("right" if pos == m else "internal")
            score += getattr(params, f"truth_{cls}_open_gap_score")
            score += (run - 1) * getattr(params, f"truth_{cls}_extend_gap_score")
        else:
            pos = int(stt_pos[idx])
            cls = "left" if pos == 0 else ("right" if pos == n else "internal")
            score += getattr(params, f"stt_{cls}_open_gap_score")
            score += (run - 1) * getattr(params, f"stt_{cls}_extend_gap_score")
        idx += run
    return score


def extract_document_features(aligned: Sequence[AlignedSentence],
                              path: AlignmentPath, view: SymbolView,
                              asr: AsrTranscript, params: AlignmentParams,
                              ) -> List[Optional[IouFeatures]]:
    """Features for every non-empty aligned sentence (None for empty ones)."""
    ranges = projected_ranges(path, view)
    scores = sentence_alignment_scores(path, view, params)
    features: List[Optional[IouFeatures]] = []
    for idx, entry in enumerate(aligned):
        if entry.span is None or ranges[idx] is None:
            features.append(None)
            continue
        lo, hi = view.sentence_ranges[idx]
        jlo, jhi = ranges[idx]
        word_ids = view.stt_symbol_words[jlo:jhi]
        word_ids = word_ids[word_ids >= 0]
        confidences = [asr.words[w].confidence
                       for w in range(int(word_ids.min()), int(word_ids.max()) + 1)]
        start, end = entry.span
        features.append(IouFeatures(
            length_ratio=(hi - lo) / max(1, jhi - jlo),
            norm_alignment_score=scores[idx] / (hi - lo),
            mean_confidence=float(np.mean(confidences)),
            chars_per_second=len(entry.sentence.text) / (end - start),
        ))
    return features


def extract_features(index: int, aligned: Sequence[AlignedSentence],
                     path: AlignmentPath, view: SymbolView, asr: AsrTranscript,
                     params: AlignmentParams) -> IouFeatures:
    """Features for one sentence; empty aligned sentences are not featurizable."""
    if aligned[index].span is None:
        raise InputError(f"sentence {index} is not featurizable: empty aligned sentence")
    result = extract_document_features(aligned, path, view, asr, params)[index]
    assert result is not None
    return result


def write_feature_jsonl(handle: IO[str], rows: Sequence[Optional[IouFeatures]]) -> None:
    for row in rows:
        payload = row.to_row() if row is not None else None
        handle.write(json.dumps(payload, sort_keys=True) + "\n")


def read_feature_jsonl(handle: IO[str]) -> List[Optional[IouFeatures]]:
    rows: List[Optional[IouFeatures]] = []
    for line in handle:
        if not line.strip():
            continue
        payload = json.loads(line)
        rows.append(IouFeatures.from_row(payload) if payload is not None else None)
    return rows


@dataclass(frozen=True)
class GbdtHyperparams:
    num_leaves: int = 3
    min_child_samples: int = 7
    max_bin: int = 7597
    learning_rate: float = 0.1
    num_trees: int = 100

    def validate(self) -> None:
        if self.num_leaves < 2:
            raise InputError("num_leaves must be >= 2")
        if self.min_child_samples < 1:
            raise InputError("min_child_samples must be >= 1")
        if self.max_bin < 2:
            raise InputError("max_bin must be >= 2")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be > 0")
        if self.num_trees < 1:
            raise InputError("num_trees must be >= 1")


@dataclass
class GbdtModel:
    base_prediction: float
    trees: List[dict]
    hyperparams: GbdtHyperparams
    feature_bins: List[List[float]]

    def predict_one(self, x: np.ndarray) -> float:
        total = self.base_prediction
        for tree in self.trees:
            node = tree
            while "value" not in node:
                branch = "left" if x[node["feature"]] <= node["threshold"] else "right"
                node = node[branch]
            total += node["value"]
        return total


class _Leaf:
    __slots__ = ("rows", "value", "best")

    def __init__(self, rows: np.ndarray, value: float):
        self.rows = rows
        self.value = value
        self.best: Optional[Tuple[float, int, int]] = None  # gain, feature, bin


def _bin_thresholds(column: np.ndarray, max_bin: int) -> List[float]:
    unique = np.unique(column)
    if len(unique) < 2:
        return []
    mids = (unique[:-1] + unique[1:]) / 2.0
    if len(mids) > max_bin - 1:
        picks = np.linspace(0, len(mids) - 1, max_bin - 1).round().astype(int)
        mids = mids[np.unique(picks)]
    return [float(v) for v in mids]


def _best_split(codes: np.ndarray, residuals: np.ndarray, rows: np.ndarray,
                n_bins: Sequence[int], min_child: int,
                ) -> Optional[Tuple[float, int, int]]:
    best: Optional[Tuple[float, int, int]] = None
    res = residuals[rows]
    total_sum = float(res.sum())
    total_n = len(rows)
    parent = total_sum * total_sum / total_n
    for feature in range(codes.shape[1]):
        bins = n_bins[feature]
        if bins < 2:
            continue
        feat_codes = codes[rows, feature]
        counts = np.bincount(feat_codes, minlength=bins)
        sums = np.bincount(feat_codes, weights=res, minlength=bins)
        left_n = np.cumsum(counts)[:-1]
        left_sum = np.cumsum(sums)[:-1]
        right_n = total_n - left_n
        right_sum = total_sum - left_sum
        legal = (left_n >= min_child) & (right_n >= min_child)
        if not legal.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            gains = np.where(
                legal,
                left_sum ** 2 / left_n + right_sum ** 2 / right_n - parent,
                -np.inf,
            )
        bin_idx = int(np.argmax(gains))
        gain = float(gains[bin_idx])
        if gain > 0 and (best is None or gain > best[0]):
            best = (gain, feature, bin_idx)
    return best


def _grow_tree(codes: np.ndarray, residuals: np.ndarray,
               thresholds: Sequence[Sequence[float]], hp: GbdtHyperparams,
               ) -> Optional[Tuple[dict, np.ndarray]]:
    """One leaf-wise regression tree on the residuals, or None if no split."""
    n_bins = [len(t) + 1 for t in thresholds]
    all_rows = np.arange(len(residuals))
    root = _Leaf(all_rows, float(residuals.mean()))
    root.best = _best_split(codes, residuals, all_rows, n_bins,
                            hp.min_child_samples)
    if root.best is None:
        return None

    nodes: Dict[int, dict] = {}
    leaves: List[_Leaf] = [root]
    leaf_nodes: Dict[int, dict] = {id(root): {}}
    tree = leaf_nodes[id(root)]
    while len(leaves) < hp.num_leaves:
        candidates = [(leaf.best[0], idx) for idx, leaf in enumerate(leaves)
                      if leaf.best is not None]
        if not candidates:
            break
        _, leaf_idx = max(candidates, key=lambda item: (item[0], -item[1]))
        leaf = leaves[leaf_idx]
        gain, feature, bin_idx = leaf.best  # type: ignore[misc]
        mask = codes[leaf.rows, feature] <= bin_idx
        left = _Leaf(leaf.rows[mask], float(residuals[leaf.rows[mask]].mean()))
        right = _Leaf(leaf.rows[~mask], float(residuals[leaf.rows[~mask]].mean()))
        for child in (left, right):
            child.best = _best_split(codes, residuals, child.rows, n_bins,
                                     hp.min_child_samples)
        node = leaf_nodes.pop(id(leaf))
        node["feature"] = feature
        node["threshold"] = thresholds[feature][bin_idx]
        node["left"] = {}
        node["right"] = {}
        leaf_nodes[id(left)] = node["left"]
        leaf_nodes[id(right)] = node["right"]
        leaves[leaf_idx] = left
        leaves.append(right)

    predictions = np.zeros(len(residuals))
    for leaf in leaves:
        value = hp.learning_rate * leaf.value
        node = leaf_nodes[id(leaf)]
        node["value"] = value
        node["count"] = int(len(leaf.rows))
        predictions[leaf.rows] = value
    return tree, predictions


def train_gbdt(X: np.ndarray, y: np.ndarray,
               hp: Optional[GbdtHyperparams] = None, seed: int = 0) -> GbdtModel:
    """Squared-error gradient boosting with histogram splits, grown leaf-wise.

    Deterministic: there is no row or feature subsampling, so the seed does
    not influence the result. Training stops early once residuals vanish or
    no legal positive-gain split remains.
    """
    hp = hp or GbdtHyperparams()
    hp.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError("X must be 2-D with one row per label")
    if len(y) == 0:
        raise InputError("no training rows")
    # fewer than 2 * min_child_samples rows admits no legal split and yields
    # a base-only model rather than an error
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise InputError("features and labels must be finite")
    if (y < 0).any() or (y > 1).any():
        raise InputError("labels must lie in [0, 1]")

    thresholds = [_bin_thresholds(X[:, f], hp.max_bin) for f in range(X.shape[1])]
    codes = np.zeros(X.shape, dtype=np.int64)
    for f, ts in enumerate(thresholds):
        if ts:
            codes[:, f] = np.searchsorted(np.asarray(ts), X[:, f], side="left")

    predictions = np.full(len(y), float(y.mean()))
    trees: List[dict] = []
    for _ in range(hp.num_trees):
        residuals = y - predictions
        if np.abs(residuals).max() < 1e-12:
            break
        grown = _grow_tree(codes, residuals, thresholds, hp)
        if grown is None:
            break
        tree, tree_predictions = grown
        trees.append(tree)
        predictions = predictions + tree_predictions
    return GbdtModel(base_prediction=float(y.mean()), trees=trees, hyperparams=hp,
                     feature_bins=[list(ts) for ts in thresholds])


def predict_iou(model: GbdtModel, features: IouFeatures) -> float:
    """Model output clamped into [0, 1]; the target is an IoU."""
    raw = model.predict_one(features.as_array())
    return min(1.0, max(0.0, raw))


def predict_iou_array(model: GbdtModel, x: np.ndarray) -> float:
    return min(1.0, max(0.0, model.predict_one(np.asarray(x, dtype=np.float64))))


def crossval_mae(X: np.ndarray, y: np.ndarray, hp: Optional[GbdtHyperparams] = None,
                 k: int = 3, seed: int = 0) -> float:
    """Mean absolute error pooled over k held-out folds (seeded assignment)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if k < 2:
        raise InputError("k must be >= 2")
    if len(y) < k:
        raise InputError(f"need at least {k} rows for {k}-fold CV, got {len(y)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    folds = np.array_split(order, k)
    abs_error = 0.0
    for fold in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[fold] = False
        model = train_gbdt(X[mask], y[mask], hp, seed=seed)
        for row in fold:
            abs_error += abs(predict_iou_array(model, X[row]) - y[row])
    return abs_error / len(y)


def model_to_json(model: GbdtModel) -> str:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "base_prediction": model.base_prediction,
        "hyperparams": {
            "num_leaves": model.hyperparams.num_leaves,
            "min_child_samples": model.hyperparams.min_child_samples,
            "max_bin": model.hyperparams.max_bin,
            "learning_rate": model.hyperparams.learning_rate,
            "num_trees": model.hyperparams.num_trees,
        },
        "feature_names": list(FEATURE_NAMES),
        "feature_bins": model.feature_bins,
        "trees": model.trees,
    }
    return json.dumps(payload, sort_keys=True)


def model_from_json(text: str) -> GbdtModel:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid model JSON: {exc.msg}") from exc
    if payload.get("format_version") != MODEL_FORMAT_VERSION:
        raise InputError(f"unsupported model format {payload.get('format_version')!r}")
    hp = GbdtHyperparams(**payload["hyperparams"])
    return GbdtModel(base_prediction=float(payload["base_prediction"]),
                     trees=payload["trees"], hyperparams=hp,
                     feature_bins=payload["feature_bins"])


@dataclass(frozen=True)
class FilterConfig:
    iou_threshold: float = 0.7
    max_length_ratio: float = 6.0
    cps_min: float = 6.0
    cps_max: float = 23.0
    min_audio_s: float = 1.0
    max_audio_s: float = 15.0
    language: str = "de"
    unique_sentences: bool = True

    def validate(self) -> None:
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise InputError("iou_threshold must lie in [0, 1]")
        if self.cps_min >= self.cps_max:
            raise InputError("cps_min must be below cps_max")
        if self.min_audio_s >= self.max_audio_s:
            raise InputError("min_audio_s must be below max_audio_s")


def apply_filters(entries: Sequence[AlignedSentence], config: FilterConfig,
                  split_role: str = "train",
                  detector: Optional[Callable[[str], str]] = None,
                  ) -> Tuple[List[AlignedSentence], Dict[str, int]]:
    """Keep entries passing all filters; count rejections per filter.

    Filters run in the fixed order iou, cps, language, then (test role only)
    audio length [min, max) and sentence uniqueness, so rejection counts are
    reproducible. Bounds on chars per second are inclusive; sentences whose
    detected language is "unknown" are kept.
    """
    config.validate()
    if split_role not in ("train", "test"):
        raise InputError(f"split_role must be train or test, got {split_role!r}")
    detector = detector or detect_language
    counts = {name: 0 for name in FILTER_ORDER}
    kept: List[AlignedSentence] = []
    seen_texts = set()
    for entry in entries:
        if entry.iou_estimate is None:
            raise InputError("iou_estimate missing; run the estimator first")
        if entry.span is None:
            raise InputError("cannot filter an empty aligned sentence")
        if entry.iou_estimate < config.iou_threshold:
            counts["iou"] += 1
            continue
        start, end = entry.span
        audio_s = end - start
        cps = len(entry.sentence.text) / audio_s
        if not config.cps_min <= cps <= config.cps_max:
            counts["cps"] += 1
            continue
        language = detector(entry.sentence.text)
        if language != UNKNOWN and language != config.language:
            counts["language"] += 1
            continue
        if split_role == "test":
            if not config.min_audio_s <= audio_s < config.max_audio_s:
                counts["audio_length"] += 1
                continue
            if config.unique_sentences:
                if entry.sentence.text in seen_texts:
                    counts["unique"] += 1
                    continue
                seen_texts.add(entry.sentence.text)
        kept.append(entry)
    return kept, counts

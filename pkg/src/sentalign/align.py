"""Optimal global pairwise alignment under boundary-aware affine gap scoring.

Scoring model
-------------
Aligned equal symbols score ``match_score``, unequal ones ``mismatch_score``.
A maximal gap run of length k in sequence S costs
``open_gap_score + (k - 1) * extend_gap_score``. The run's score class is
determined by its position within S: ``left`` if no symbol of S has been
consumed yet, ``right`` if all symbols of S have been consumed, ``internal``
otherwise. ``truth_*`` parameters price runs of gaps inserted into the truth
sequence (stt symbols consumed), ``stt_*`` parameters price runs of gaps
inserted into the stt sequence (truth symbols consumed).

Implementation
--------------
Three-state DP (match / gap-in-truth / gap-in-stt) filled row by row with
numpy. Horizontal gap runs within a row are resolved with a running-max scan,
so each row costs O(n) vector work. ``full_dp`` keeps every row for
traceback; ``linear_memory`` keeps checkpoint rows every ~sqrt(m) rows and
recomputes one stripe at a time during traceback, which bounds working
memory to O(n * sqrt(m)) while producing the identical path.

Traceback prefers MatchOrSub over GapInStt over GapInTruth wherever scores
tie, so results are reproducible. The path's ``score`` field is computed by
re-scoring the traced ops with the run cost formula above, which makes
``rescore_path`` agree with it exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError
from .ingest import AlignmentParams

MATCH = "match"
GAP_TRUTH = "gap_truth"
GAP_STT = "gap_stt"

Op = Tuple[str, Optional[int], Optional[int]]

_NEG = float("-inf")

# internal state ids for traceback
_M, _T, _U = 0, 1, 2

PATH_FORMAT_VERSION = 1


@dataclass
class AlignmentPath:
    """An alignment as an ordered op list plus its score.

    Ops are ``(kind, i, j)`` tuples: ``("match", i, j)`` aligns truth[i] to
    stt[j], ``("gap_truth", None, j)`` consumes stt[j] against a gap in the
    truth sequence, ``("gap_stt", i, None)`` consumes truth[i] against a gap
    in the stt sequence.
    """

    ops: List[Op]
    score: float

    def to_rle(self) -> dict:
        """Compact op-run-length encoding; indices are implied by op order."""
        runs: List[List[object]] = []
        for kind, _, _ in self.ops:
            if runs and runs[-1][0] == kind:
                runs[-1][1] += 1  # type: ignore[operator]
            else:
                runs.append([kind, 1])
        return {"format_version": PATH_FORMAT_VERSION, "score": self.score,
                "runs": [[k, c] for k, c in runs]}

    @classmethod
    def from_rle(cls, payload: dict) -> "AlignmentPath":
        if payload.get("format_version") != PATH_FORMAT_VERSION:
            raise InputError(f"unsupported path format: {payload.get('format_version')!r}")
        ops: List[Op] = []
        i = j = 0
        for kind, count in payload["runs"]:
            for _ in range(int(count)):
                if kind == MATCH:
                    ops.append((MATCH, i, j))
                    i += 1
                    j += 1
                elif kind == GAP_TRUTH:
                    ops.append((GAP_TRUTH, None, j))
                    j += 1
                elif kind == GAP_STT:
                    ops.append((GAP_STT, i, None))
                    i += 1
                else:
                    raise InputError(f"unknown op kind {kind!r}")
        return cls(ops=ops, score=float(payload["score"]))

    def dump_json(self) -> str:
        return json.dumps(self.to_rle(), sort_keys=True)


def _encode_symbols(truth: Sequence, stt: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    codes: Dict[object, int] = {}
    def encode(seq: Sequence) -> np.ndarray:
        out = np.empty(len(seq), dtype=np.int64)
        for idx, sym in enumerate(seq):
            code = codes.get(sym)
            if code is None:
                code = len(codes)
                codes[sym] = code
            out[idx] = code
        return out
    return encode(truth), encode(stt)


def _truth_gap_scores(params: AlignmentParams, i: int, m: int) -> Tuple[float, float]:
    if i == 0:
        return params.truth_left_open_gap_score, params.truth_left_extend_gap_score
    if i == m:
        return params.truth_right_open_gap_score, params.truth_right_extend_gap_score
    return params.truth_internal_open_gap_score, params.truth_internal_extend_gap_score


def _stt_gap_vectors(params: AlignmentParams, n: int) -> Tuple[np.ndarray, np.ndarray]:
    open_vec = np.full(n + 1, params.stt_internal_open_gap_score)
    ext_vec = np.full(n + 1, params.stt_internal_extend_gap_score)
    open_vec[0] = params.stt_left_open_gap_score
    ext_vec[0] = params.stt_left_extend_gap_score
    open_vec[n] = params.stt_right_open_gap_score
    ext_vec[n] = params.stt_right_extend_gap_score
    return open_vec, ext_vec


class _RowKernel:
    """Fills DP rows; row i holds scores for truth[0:i] vs every stt prefix."""

    def __init__(self, truth_codes: np.ndarray, stt_codes: np.ndarray,
                 params: AlignmentParams, band: Optional[int] = None):
        self.truth = truth_codes
        self.stt = stt_codes
        self.params = params
        self.m = len(truth_codes)
        self.n = len(stt_codes)
        self.stt_open, self.stt_ext = _stt_gap_vectors(params, self.n)
        self.band = band
        self._idx = np.arange(self.n + 1, dtype=np.float64)

    def window(self, i: int) -> Tuple[int, int]:
        """Inclusive column window [lo, hi] filled for row i."""
        if self.band is None:
            return 0, self.n
        center = 0 if self.m == 0 else round(i * self.n / self.m)
        lo = max(0, center - self.band)
        hi = min(self.n, center + self.band)
        return lo, hi

    def first_rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        m_row = np.full(self.n + 1, _NEG)
        u_row = np.full(self.n + 1, _NEG)
        m_row[0] = 0.0
        lo, hi = self.window(0)
        self._mask_outside(m_row, u_row, lo=lo, hi=hi)
        t_row = self._t_scan(0, np.maximum(m_row, u_row))
        self._mask_outside(t_row, lo=lo, hi=hi)
        return m_row, t_row, u_row

    def next_rows(self, i: int, m_prev: np.ndarray, t_prev: np.ndarray,
                  u_prev: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        sub = np.where(self.stt == self.truth[i - 1],
                       self.params.match_score, self.params.mismatch_score)
        m_row = np.full(self.n + 1, _NEG)
        diag = np.maximum(np.maximum(m_prev, t_prev), u_prev)
        m_row[1:] = diag[:-1] + sub
        u_row = np.maximum(np.maximum(m_prev, t_prev) + self.stt_open,
                           u_prev + self.stt_ext)
        # mask before the T scan so run anchors respect the band during both
        # the forward fill and traceback recomputation
        lo, hi = self.window(i)
        self._mask_outside(m_row, u_row, lo=lo, hi=hi)
        t_row = self._t_scan(i, np.maximum(m_row, u_row))
        self._mask_outside(t_row, lo=lo, hi=hi)
        return m_row, t_row, u_row

    def _t_scan(self, i: int, anchor: np.ndarray) -> np.ndarray:
        """Best score ending in a horizontal (gap-in-truth) run per column.

        T(i, j) = max over k < j of anchor(k) + open_i + (j - 1 - k) * ext_i,
        computed with a running max over anchor(k) - k * ext_i.
        """
        open_score, ext_score = _truth_gap_scores(self.params, i, self.m)
        t_row = np.full(self.n + 1, _NEG)
        if self.n == 0:
            return t_row
        basis = anchor - self._idx * ext_score
        running = np.maximum.accumulate(basis[:-1])
        t_row[1:] = open_score + np.arange(self.n, dtype=np.float64) * ext_score + running
        return t_row

    def t_run_starts(self, i: int, anchor: np.ndarray) -> np.ndarray:
        """For each column j >= 1, the column where the best run opened."""
        _, ext_score = _truth_gap_scores(self.params, i, self.m)
        basis = (anchor - self._idx * ext_score)[:-1]
        running = np.maximum.accumulate(basis)
        positions = np.arange(len(basis), dtype=np.int64)
        hits = np.where(basis >= running, positions, 0)
        return np.maximum.accumulate(hits)

    def _mask_outside(self, *rows: np.ndarray, lo: int, hi: int) -> None:
        if self.band is None:
            return
        for row in rows:
            row[:lo] = _NEG
            row[hi + 1:] = _NEG


class _RowStore:
    """Provides DP rows by index, either fully stored or via checkpoints."""

    def __init__(self, kernel: _RowKernel, stride: int):
        self.kernel = kernel
        self.stride = max(1, stride)
        self.checkpoints: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._stripe: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.final: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None

    def fill(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = self.kernel.first_rows()
        self._remember(0, rows)
        for i in range(1, self.kernel.m + 1):
            rows = self.kernel.next_rows(i, *rows)
            self._remember(i, rows)
        self.final = rows
        return rows

    def _remember(self, i: int, rows: Tuple[np.ndarray, np.ndarray, np.ndarray]) -> None:
        if self.stride == 1 or i % self.stride == 0 or i == self.kernel.m:
            self.checkpoints[i] = rows

    def get(self, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if i in self.checkpoints:
            return self.checkpoints[i]
        if i not in self._stripe:
            base = (i // self.stride) * self.stride
            rows = self.checkpoints[base]
            self._stripe = {base: rows}
            for step in range(base + 1, min(base + self.stride, self.kernel.m) + 1):
                rows = self.kernel.next_rows(step, *rows)
                self._stripe[step] = rows
        return self._stripe[i]


def _validate_inputs(truth: Sequence, stt: Sequence, params: AlignmentParams) -> None:
    if len(truth) == 0:
        raise InputError("truth sequence is empty")
    if len(stt) == 0:
        raise InputError("stt sequence is empty")
    params.validate()


def _traceback(store: _RowStore, params: AlignmentParams) -> List[Op]:
    kernel = store.kernel
    m, n = kernel.m, kernel.n
    assert store.final is not None
    m_final, t_final, u_final = store.final
    finals = (m_final[n], t_final[n], u_final[n])
    if all(value == _NEG for value in finals):
        raise InputError("no alignment within the configured band; widen --band")
    # tie preference: MatchOrSub, then GapInStt, then GapInTruth
    if finals[_M] >= finals[_U] and finals[_M] >= finals[_T]:
        state = _M
    elif finals[_U] >= finals[_T]:
        state = _U
    else:
        state = _T

    ops: List[Op] = []
    i, j = m, n
    run_start_cache: Dict[int, np.ndarray] = {}
    while i > 0 or j > 0:
        m_row, t_row, u_row = store.get(i)
        if state == _M:
            mp, tp, up = store.get(i - 1)
            ops.append((MATCH, i - 1, j - 1))
            sub = (params.match_score if kernel.truth[i - 1] == kernel.stt[j - 1]
                   else params.mismatch_score)
            target = m_row[j]
            if mp[j - 1] + sub == target:
                state = _M
            elif up[j - 1] + sub == target:
                state = _U
            else:
                state = _T
            i -= 1
            j -= 1
        elif state == _U:
            mp, tp, up = store.get(i - 1)
            ops.append((GAP_STT, i - 1, None))
            target = u_row[j]
            if mp[j] + kernel.stt_open[j] == target:
                state = _M
            elif up[j] + kernel.stt_ext[j] == target:
                state = _U
            else:
                state = _T
            i -= 1
        else:  # _T: emit the whole horizontal run at once
            if i not in run_start_cache:
                run_start_cache[i] = kernel.t_run_starts(i, np.maximum(m_row, u_row))
            k = int(run_start_cache[i][j - 1])
            for col in range(j - 1, k - 1, -1):
                ops.append((GAP_TRUTH, None, col))
            j = k
            state = _M if m_row[j] >= u_row[j] else _U
    ops.reverse()
    return ops


def global_align(truth: Sequence, stt: Sequence, params: AlignmentParams,
                 mode: str = "full_dp", band: Optional[int] = None) -> AlignmentPath:
    """Globally align two symbol sequences, maximizing the path score.

    ``mode`` selects the memory strategy: ``full_dp`` stores every DP row,
    ``linear_memory`` stores sqrt-spaced checkpoints and recomputes stripes
    during traceback. Both modes return the identical path. ``band``
    restricts the DP to a diagonal corridor of the given half-width, trading
    optimality for speed; the default (None) is exact.
    """
    _validate_inputs(truth, stt, params)
    if mode not in ("full_dp", "linear_memory"):
        raise InputError(f"unknown alignment mode {mode!r}")
    truth_codes, stt_codes = _encode_symbols(truth, stt)
    kernel = _RowKernel(truth_codes, stt_codes, params, band=band)
    stride = 1 if mode == "full_dp" else max(1, int(math.isqrt(kernel.m)))
    store = _RowStore(kernel, stride)
    store.fill()
    ops = _traceback(store, params)
    score = _score_ops(ops, truth_codes, stt_codes, params)
    return AlignmentPath(ops=ops, score=score)


def _score_ops(ops: Sequence[Op], truth_codes: np.ndarray, stt_codes: np.ndarray,
               params: AlignmentParams) -> float:
    m, n = len(truth_codes), len(stt_codes)
    score = 0.0
    idx = 0
    truth_pos = 0
    stt_pos = 0
    while idx < len(ops):
        kind = ops[idx][0]
        if kind == MATCH:
            _, i, j = ops[idx]
            score += (params.match_score if truth_codes[i] == stt_codes[j]
                      else params.mismatch_score)
            truth_pos += 1
            stt_pos += 1
            idx += 1
            continue
        run_len = 1
        while idx + run_len < len(ops) and ops[idx + run_len][0] == kind:
            run_len += 1
        if kind == GAP_TRUTH:
            open_score, ext_score = _truth_gap_scores(params, truth_pos, m)
            stt_pos += run_len
        else:
            if stt_pos == 0:
                open_score = params.stt_left_open_gap_score
                ext_score = params.stt_left_extend_gap_score
            elif stt_pos == n:
                open_score = params.stt_right_open_gap_score
                ext_score = params.stt_right_extend_gap_score
            else:
                open_score = params.stt_internal_open_gap_score
                ext_score = params.stt_internal_extend_gap_score
            truth_pos += run_len
        score += open_score + (run_len - 1) * ext_score
        idx += run_len
    return score


def _check_path(ops: Sequence[Op], m: int, n: int) -> None:
    truth_next = 0
    stt_next = 0
    for op_idx, (kind, i, j) in enumerate(ops):
        if kind == MATCH:
            if i != truth_next or j != stt_next:
                raise InputError(f"inconsistent path at op {op_idx}")
            truth_next += 1
            stt_next += 1
        elif kind == GAP_TRUTH:
            if j != stt_next:
                raise InputError(f"inconsistent path at op {op_idx}")
            stt_next += 1
        elif kind == GAP_STT:
            if i != truth_next:
                raise InputError(f"inconsistent path at op {op_idx}")
            truth_next += 1
        else:
            raise InputError(f"unknown op kind {kind!r} at op {op_idx}")
    if truth_next != m or stt_next != n:
        raise InputError(
            f"path covers {truth_next}x{stt_next} symbols, sequences are {m}x{n}"
        )


def rescore_path(path: AlignmentPath, truth: Sequence, stt: Sequence,
                 params: AlignmentParams) -> float:
    """Recompute a path's score from its ops; validation oracle for align."""
    params.validate()
    _check_path(path.ops, len(truth), len(stt))
    truth_codes, stt_codes = _encode_symbols(truth, stt)
    return _score_ops(path.ops, truth_codes, stt_codes, params)


def match_targets(path: AlignmentPath, truth_len: int) -> np.ndarray:
    """Per truth index, the stt index it matches, or -1 for gap-aligned."""
    targets = np.full(truth_len, -1, dtype=np.int64)
    for kind, i, j in path.ops:
        if kind == MATCH:
            targets[i] = j
    return targets


def project_range(path: AlignmentPath, truth_range: Tuple[int, int],
                  truth_len: Optional[int] = None) -> Optional[Tuple[int, int]]:
    """Minimal stt range covering all matches inside a truth index range.

    Returns None ("empty") when the truth span aligns entirely to gaps.
    """
    lo, hi = truth_range
    if truth_len is None:
        truth_len = max((i for kind, i, _ in path.ops if i is not None), default=-1) + 1
    if not 0 <= lo <= hi <= truth_len:
        raise InputError(f"truth range ({lo}, {hi}) out of bounds for length {truth_len}")
    first = None
    last = None
    for kind, i, j in path.ops:
        if kind == MATCH and lo <= i < hi:
            if first is None:
                first = j
            last = j
    if first is None:
        return None
    return first, last + 1

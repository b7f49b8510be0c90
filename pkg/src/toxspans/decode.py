"""Turn per-feature logits into predicted character offsets.

Decoders here are pure functions of a :class:`LogitBundle` and the
:class:`TokenizedFeature` it was computed from. A prediction for a whole
split is a ``dict`` mapping sample id to a sorted tuple of offsets.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .bundle import CrfParams, LogitBundle
from .corpus import atomic_write_text, format_offsets, parse_offsets
from .features import NONTOXIC, TOXIC, TokenizedFeature
from .metric import example_f1

Prediction = dict[int, tuple[int, ...]]
Candidate = tuple[float, tuple[int, ...]]  # (score, offsets) of one scored span or word


class ThresholdUnset(ValueError):
    def __init__(self):
        super().__init__("decode threshold is unset; run tune_threshold on a dev set first")


@dataclass
class DecodeConfig:
    top_k: int = 20
    max_span_len: int = 30
    threshold: float | None = None
    word_prob_threshold: float = 0.5
    allow_single_token_spans: bool = True

    def __post_init__(self):
        if self.top_k < 1 or self.max_span_len < 1:
            raise ValueError("top_k and max_span_len must be >= 1")


@dataclass(frozen=True)
class ScoredSpan:
    start_tok: int
    end_tok: int
    score: float
    source: str = "SP"


def merge_windows(offset_lists: Iterable[Iterable[int]]) -> tuple[int, ...]:
    out: set[int] = set()
    for offs in offset_lists:
        out.update(offs)
    return tuple(sorted(out))


def token_offsets(feature: TokenizedFeature, indices: Iterable[int]) -> list[int]:
    out = []
    for i in indices:
        span = feature.tokens[i].char_span
        if span is not None:
            out.extend(range(*span))
    return out


def span_offsets(feature: TokenizedFeature, start_tok: int, end_tok: int) -> tuple[int, ...]:
    """Character range from the start token's first to the end token's last character."""
    a = feature.tokens[start_tok].char_span
    b = feature.tokens[end_tok].char_span
    if a is None or b is None:
        return ()
    return tuple(range(a[0], b[1]))


def _content(feature: TokenizedFeature) -> list[int]:
    return [i for i, t in enumerate(feature.tokens) if not t.is_sentinel and feature.prediction_mask[i]]


def decode_tc(bundle: LogitBundle, feature: TokenizedFeature) -> tuple[int, ...]:
    logits = bundle.token_logits
    toxic = [i for i in _content(feature) if logits[i, TOXIC] > logits[i, NONTOXIC]]
    return tuple(sorted(set(token_offsets(feature, toxic))))


def _top_k(logits: np.ndarray, positions: Sequence[int], k: int) -> list[int]:
    order = sorted(positions, key=lambda i: (-logits[i], i))
    return order[:k]


def valid_span(start: int, end: int, cfg: DecodeConfig) -> bool:
    if end < start or (end == start and not cfg.allow_single_token_spans):
        return False
    return end - start + 1 < cfg.max_span_len


def enumerate_spans(start_logits: np.ndarray, end_logits: np.ndarray, cfg: DecodeConfig,
                    positions: Sequence[int] | None = None,
                    scorer: Callable[[int, int], float] | None = None,
                    source: str = "SP") -> list[ScoredSpan]:
    """Valid (start, end) pairs from the top-k start and top-k end positions.

    Default score is ``start_logit + end_logit``. Results are sorted by
    score descending, then earlier start, then shorter span.
    """
    if positions is None:
        positions = range(len(start_logits))
    starts = _top_k(start_logits, positions, cfg.top_k)
    ends = _top_k(end_logits, positions, cfg.top_k)
    spans = []
    for s in starts:
        for e in ends:
            if not valid_span(s, e, cfg):
                continue
            score = scorer(s, e) if scorer else float(start_logits[s] + end_logits[e])
            spans.append(ScoredSpan(s, e, score, source))
    spans.sort(key=lambda sp: (-sp.score, sp.start_tok, sp.end_tok - sp.start_tok))
    return spans


def score_sptc(start_logits: np.ndarray, end_logits: np.ndarray, token_toxic_logits: np.ndarray,
               i_s: int, i_e: int) -> float:
    """Mean of the boundary logits plus mean toxicity logit over the span."""
    n = len(token_toxic_logits)
    if not 0 <= i_s <= i_e < n:
        raise IndexError(f"span ({i_s}, {i_e}) out of range for length {n}")
    boundary = (start_logits[i_s] + end_logits[i_e]) / 2
    return float(boundary + np.sum(token_toxic_logits[i_s:i_e + 1]) / (i_e - i_s + 1))


def sp_candidates(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig) -> list[Candidate]:
    spans = enumerate_spans(bundle.start_logits, bundle.end_logits, cfg, _content(feature))
    return [(sp.score, span_offsets(feature, sp.start_tok, sp.end_tok)) for sp in spans]


def sptc_candidates(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig) -> list[Candidate]:
    tox = bundle.token_logits[:, TOXIC]

    def scorer(i: int, j: int) -> float:
        return score_sptc(bundle.start_logits, bundle.end_logits, tox, i, j)

    spans = enumerate_spans(bundle.start_logits, bundle.end_logits, cfg, _content(feature), scorer, "SPTC")
    return [(sp.score, span_offsets(feature, sp.start_tok, sp.end_tok)) for sp in spans]


def apply_threshold(candidates: Iterable[Candidate], threshold: float | None) -> tuple[int, ...]:
    if threshold is None:
        raise ThresholdUnset()
    return merge_windows(offs for score, offs in candidates if score > threshold)


def decode_sp(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig) -> tuple[int, ...]:
    if cfg.threshold is None:
        raise ThresholdUnset()
    return apply_threshold(sp_candidates(bundle, feature, cfg), cfg.threshold)


def decode_sptc(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig,
                mode: str = "combined") -> tuple[int, ...]:
    if mode == "token_only":
        return decode_tc(bundle, feature)
    if mode == "span_only":
        return decode_sp(bundle, feature, cfg)
    if mode != "combined":
        raise ValueError(f"unknown SPTC decode mode {mode!r}")
    if cfg.threshold is None:
        raise ThresholdUnset()
    return apply_threshold(sptc_candidates(bundle, feature, cfg), cfg.threshold)


def pair_multi_spans(starts: Sequence[int], ends: Sequence[int], cfg: DecodeConfig) -> list[tuple[int, int]]:
    """Greedy left-to-right: each start takes the nearest unused reachable end."""
    free = sorted(ends)
    pairs = []
    for s in sorted(starts):
        for e in free:
            if e >= s:
                if valid_span(s, e, cfg):
                    pairs.append((s, e))
                    free.remove(e)
                break
    return pairs


def decode_msp(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig) -> tuple[int, ...]:
    content = _content(feature)
    starts = [i for i in content if bundle.start_logits[i] > 0.0]
    ends = [i for i in content if bundle.end_logits[i] > 0.0]
    return merge_windows(span_offsets(feature, s, e) for s, e in pair_multi_spans(starts, ends, cfg))


def viterbi_decode(params: CrfParams, emissions: np.ndarray, mask: Sequence[int] | None = None) -> list[int]:
    """Highest-scoring label path over the masked positions.

    Ties resolve to the lowest label index, scanning from the last position
    backwards.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    if mask is not None:
        emissions = emissions[np.asarray(mask, dtype=bool)]
    n = len(emissions)
    if n == 0:
        raise ValueError("viterbi_decode needs at least one unmasked position")
    trans = params.transitions
    score = params.start_transitions + emissions[0]
    back = np.zeros((n, params.num_labels), dtype=np.int64)
    for t in range(1, n):
        cand = score[:, None] + trans  # (prev, next)
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(params.num_labels)] + emissions[t]
    score = score + params.end_transitions
    path = [int(np.argmax(score))]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def decode_crf(bundle: LogitBundle, feature: TokenizedFeature, params: CrfParams) -> tuple[int, ...]:
    positions = [i for i, m in enumerate(feature.prediction_mask) if m]
    labels = viterbi_decode(params, bundle.token_logits[positions])
    toxic = [i for i, lab in zip(positions, labels) if lab == TOXIC and not feature.tokens[i].is_sentinel]
    return tuple(sorted(set(token_offsets(feature, toxic))))


def word_candidates(word_probs: Sequence[float], words: Sequence) -> list[Candidate]:
    out = []
    for p, w in zip(word_probs, words):
        span = w.char_span if hasattr(w, "char_span") else w
        if span is not None:
            out.append((float(p), tuple(range(*span))))
    return out


def decode_word_baseline(word_probs: Sequence[float], words: Sequence, threshold: float) -> tuple[int, ...]:
    """Offsets of every word whose toxic probability exceeds ``threshold``.

    ``words`` holds tokens or ``(start, end)`` character spans.
    """
    return apply_threshold(word_candidates(word_probs, words), threshold)


def threshold_curve(candidates: Sequence[Sequence[Candidate]],
                    golds: Sequence[Iterable[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Mean dev F1 at every candidate threshold: ``-inf`` and each distinct score."""
    if len(candidates) != len(golds) or not golds:
        raise ValueError("need one candidate list per dev sample and at least one sample")
    all_scores = sorted({c[0] for cands in candidates for c in cands})
    grid = np.array([-np.inf, *all_scores])
    table = np.empty((len(golds), len(grid)))
    for i, (cands, gold) in enumerate(zip(candidates, golds)):
        gold = set(gold)
        ranked = sorted(cands, key=lambda c: -c[0])
        levels, union = [example_f1((), gold)], set()
        for _, offs in ranked:
            union.update(offs)
            levels.append(example_f1(union, gold))
        asc = np.array([c[0] for c in ranked[::-1]])
        included = len(ranked) - np.searchsorted(asc, grid, side="right")
        table[i] = np.asarray(levels)[included]
    return grid, table.sum(axis=0) / len(golds)


def tune_threshold(candidates: Sequence[Sequence[Candidate]], golds: Sequence[Iterable[int]]) -> float:
    """Threshold maximising mean dev F1; ties go to the smallest candidate."""
    grid, f1 = threshold_curve(candidates, golds)
    return float(grid[int(np.argmax(f1))])


def write_predictions(pred: Mapping[int, Iterable[int]], path: str | os.PathLike) -> None:
    lines = [f"{sid}\t{format_offsets(pred[sid])}\n" for sid in sorted(pred)]
    atomic_write_text(path, "".join(lines))


def read_predictions(path: str | os.PathLike) -> Prediction:
    pred: Prediction = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        sid, _, cell = line.partition("\t")
        try:
            key = int(sid)
        except ValueError:
            raise ValueError(f"{path}:{n + 1}: bad sample id {sid!r}") from None
        pred[key] = tuple(sorted(set(parse_offsets(cell, n))))
    return pred

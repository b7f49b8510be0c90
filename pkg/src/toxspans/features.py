"""Model-input features: label projection from character offsets to tokens
and overlapping-window segmentation.

Feature layout::

    [CLS] (offense) [SEP] content ... [SEP]

The dummy question token only appears for the span-style tasks (SP, MSP,
SPTC). Padding is added at batch collation time, not stored here.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import DatasetSplit, TextSample, offsets_to_spans
from .tokenizer import CLS, QUESTION, SEP, Token, Tokenizer, Vocabulary, special

logger = logging.getLogger(__name__)

NONTOXIC, TOXIC, SPECIAL = 0, 1, 2
DUMMY = SPECIAL  # CRF label for [CLS]
CLS_TOXIC_RATIO = 0.30


class Task(str, enum.Enum):
    TC = "TC"
    SP = "SP"
    MSP = "MSP"
    SPTC = "SPTC"
    CRF = "CRF"
    WORD = "WORD"

    @property
    def has_question(self) -> bool:
        return self in (Task.SP, Task.MSP, Task.SPTC)


class TokenNotFound(LookupError):
    pass


@dataclass
class TaskLabels:
    token_classes: list[int]
    start_index: int = 0
    end_index: int = 0
    start_multi: list[int] = field(default_factory=list)
    end_multi: list[int] = field(default_factory=list)
    cls_toxic: bool = False


@dataclass
class TokenizedFeature:
    sample_id: int
    window_index: int
    token_ids: list[int]
    tokens: list[Token]
    task: Task
    labels: TaskLabels
    prediction_mask: list[int]
    content_start: int
    span_index: int | None = None  # SP training features: which gold span

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def content_positions(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if not t.is_sentinel]


def char_positions_to_token_indices(tokens: Sequence[Token], span: tuple[int, int]) -> tuple[int, int]:
    """First and last token whose character span intersects ``[start, end)``."""
    start, end = span
    hits = [i for i, t in enumerate(tokens)
            if t.char_span is not None and t.char_span[0] < end and start < t.char_span[1]]
    if not hits:
        raise TokenNotFound(f"no token overlaps characters [{start}, {end})")
    return hits[0], hits[-1]


def make_token_labels(sample: TextSample, tokens: Sequence[Token], task: Task = Task.TC) -> TaskLabels:
    gold = set(sample.gold_offsets)
    classes = []
    for t in tokens:
        if t.is_sentinel:
            classes.append(SPECIAL)
        else:
            classes.append(TOXIC if any(o in gold for o in range(*t.char_span)) else NONTOXIC)
    n = len(sample.text)
    cls_toxic = n > 0 and len(sample.gold_offsets) / n > CLS_TOXIC_RATIO
    return TaskLabels(classes, cls_toxic=cls_toxic)


def window_bounds(n: int, capacity: int, stride: int) -> list[tuple[int, int]]:
    """Content windows where consecutive windows share ``stride`` tokens."""
    if n <= capacity:
        return [(0, n)]
    step = capacity - stride
    bounds, start = [], 0
    while True:
        end = min(start + capacity, n)
        bounds.append((start, end))
        if end == n:
            return bounds
        start += step


def gold_token_intervals(sample: TextSample, content: Sequence[Token],
                         warnings: list[str] | None = None) -> list[tuple[int, int]]:
    """Gold character spans projected to content-token index intervals."""
    intervals = []
    for span in offsets_to_spans(sample.gold_offsets):
        try:
            intervals.append(char_positions_to_token_indices(content, span))
        except TokenNotFound:
            msg = f"sample {sample.id}: gold span {span} covers no token; skipped"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    return intervals


def _merge_intervals(intervals: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for s, e in sorted(intervals):
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(e, merged[-1][1]))
        else:
            merged.append((s, e))
    return merged


def make_features(sample: TextSample, task: Task | str, max_len: int, stride: int, vocab: Vocabulary,
                  tokenizer: Tokenizer | None = None, training: bool = True,
                  warnings: list[str] | None = None) -> list[TokenizedFeature]:
    """Build the windowed features of one sample.

    In training mode SP yields one feature per (gold span, window fully
    containing it), or one no-answer feature per window when the sample has
    no gold offsets. Every other task, and SP outside training, yields one
    feature per window.
    """
    task = Task(task)
    tokenizer = tokenizer or Tokenizer()
    prefix = [special(CLS), special(QUESTION), special(SEP)] if task.has_question else [special(CLS), special(SEP)]
    capacity = max_len - len(prefix) - 1
    if capacity < 1:
        raise ValueError(f"max_len={max_len} leaves no room for content")
    if not 0 < stride < capacity:
        raise ValueError(f"stride must be in (0, {capacity}), got {stride}")

    content = tokenizer.tokenize(sample.text)
    intervals = gold_token_intervals(sample, content, warnings) if sample.gold_offsets else []
    label_base = make_token_labels(sample, content, task)
    off = len(prefix)

    features: list[TokenizedFeature] = []
    for w, (ws, we) in enumerate(window_bounds(len(content), capacity, stride)):
        tokens = prefix + content[ws:we] + [special(SEP)]
        n = len(tokens)
        classes = [SPECIAL] * off + label_base.token_classes[ws:we] + [SPECIAL]
        if task is Task.CRF:
            mask = [1] + [0] * (off - 1) + [1] * (we - ws) + [0]
        else:
            mask = [0 if t.surface == SEP and t.is_sentinel else 1 for t in tokens]
        inside = [(s - ws + off, e - ws + off) for s, e in intervals if s >= ws and e < we]

        def feat(labels: TaskLabels, span_index: int | None = None) -> TokenizedFeature:
            return TokenizedFeature(sample.id, w, vocab.encode(tokens), tokens, task, labels, list(mask), off, span_index)

        base = dict(token_classes=classes, cls_toxic=label_base.cls_toxic)
        if task is Task.SP and training:
            if not sample.gold_offsets:
                features.append(feat(TaskLabels(**base)))
            for k, (s, e) in enumerate(intervals):
                if s >= ws and e < we:
                    features.append(feat(TaskLabels(**base, start_index=s - ws + off, end_index=e - ws + off), k))
        elif task is Task.MSP:
            starts, ends = [0] * n, [0] * n
            for s, e in _merge_intervals(inside):
                starts[s] = 1
                ends[e] = 1
            features.append(feat(TaskLabels(**base, start_multi=starts, end_multi=ends)))
        elif task in (Task.SP, Task.SPTC):
            s, e = inside[0] if inside else (0, 0)
            features.append(feat(TaskLabels(**base, start_index=s, end_index=e)))
        else:
            features.append(feat(TaskLabels(**base)))

    if task is Task.SP and training and warnings is not None:
        fitted = {f.span_index for f in features if f.span_index is not None}
        for k in range(len(intervals)):
            if k not in fitted:
                msg = f"sample {sample.id}: gold span #{k} fits no window; skipped"
                logger.warning(msg)
                warnings.append(msg)
    return features


def featurize(split: DatasetSplit | Iterable[TextSample], task: Task | str, max_len: int, stride: int,
              vocab: Vocabulary, tokenizer: Tokenizer | None = None, training: bool = True,
              warnings: list[str] | None = None) -> list[TokenizedFeature]:
    out: list[TokenizedFeature] = []
    for sample in split:
        out.extend(make_features(sample, task, max_len, stride, vocab, tokenizer, training, warnings))
    return out

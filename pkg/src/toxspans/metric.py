"""Per-example character-offset F1, averaged over examples."""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import DatasetSplit


def example_f1(pred: Iterable[int], gold: Iterable[int]) -> float:
    """Dice overlap of two offset sets; two empty sets score 1.0, one empty 0.0."""
    p, g = set(pred), set(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    return 2 * len(p & g) / (len(p) + len(g))


@dataclass
class EvalReport:
    per_sample_f1: dict[int, float]
    mean_f1: float
    n_samples: int
    n_empty_gold: int
    missing_predictions: list[int] = field(default_factory=list)

    def histogram(self, buckets: int = 10) -> list[int]:
        counts = [0] * buckets
        for v in self.per_sample_f1.values():
            counts[min(int(v * buckets), buckets - 1)] += 1
        return counts

    def to_json(self) -> str:
        return json.dumps({
            "mean_f1": self.mean_f1,
            "n_samples": self.n_samples,
            "n_empty_gold": self.n_empty_gold,
            "missing_predictions": self.missing_predictions,
            "histogram": {"edges": [i / 10 for i in range(11)], "counts": self.histogram(10)},
            "per_sample_f1": {str(k): v for k, v in self.per_sample_f1.items()},
        }, indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        return (f"F1 = {self.mean_f1:.4f} over {self.n_samples} samples "
                f"({self.n_empty_gold} with empty gold, {len(self.missing_predictions)} missing predictions)")


def evaluate(predictions: Mapping[int, Iterable[int]], split: DatasetSplit) -> EvalReport:
    known = {s.id for s in split.samples}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise KeyError(f"predictions for unknown sample ids: {unknown[:10]}")
    per, missing = {}, []
    for s in split.samples:
        if s.id not in predictions:
            missing.append(s.id)
        per[s.id] = example_f1(predictions.get(s.id, ()), s.gold_offsets)
    mean = statistics.fmean(per.values()) if per else 0.0
    empty = sum(1 for s in split.samples if not s.gold_offsets)
    return EvalReport(per, mean, len(per), empty, missing)

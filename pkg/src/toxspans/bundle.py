"""Plain numpy containers for per-feature model outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CRF_LABELS = ("NONTOXIC", "TOXIC", "DUMMY")


@dataclass
class LogitBundle:
    token_logits: np.ndarray | None = None  # (n, C): TC/SPTC toxicity, CRF emissions, WORD classes
    start_logits: np.ndarray | None = None  # (n,)
    end_logits: np.ndarray | None = None  # (n,)
    cls_logits: np.ndarray | None = None  # (2,) auxiliary text-level toxicity (TC)

    def __len__(self) -> int:
        for arr in (self.token_logits, self.start_logits, self.end_logits):
            if arr is not None:
                return len(arr)
        return 0


@dataclass
class CrfParams:
    transitions: np.ndarray  # (L, L): transitions[i, j] scores label i followed by label j
    start_transitions: np.ndarray  # (L,)
    end_transitions: np.ndarray  # (L,)

    @property
    def num_labels(self) -> int:
        return len(self.start_transitions)

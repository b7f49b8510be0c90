"""Batch collation and the per-head training objectives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from ..features import SPECIAL, Task, TokenizedFeature
from ..tokenizer import PAD_ID


@dataclass
class Batch:
    token_ids: torch.Tensor  # (B, L) long
    attn_mask: torch.Tensor  # (B, L) bool, False on padding
    prediction_mask: torch.Tensor  # (B, L) bool
    token_classes: torch.Tensor  # (B, L) long
    start_index: torch.Tensor  # (B,) long
    end_index: torch.Tensor  # (B,) long
    start_multi: torch.Tensor  # (B, L) float
    end_multi: torch.Tensor  # (B, L) float
    cls_toxic: torch.Tensor  # (B,) long

    def __len__(self) -> int:
        return self.token_ids.size(0)


def collate(features: Sequence[TokenizedFeature]) -> Batch:
    B = len(features)
    L = max(len(f) for f in features)
    ids = torch.full((B, L), PAD_ID, dtype=torch.long)
    attn = torch.zeros(B, L, dtype=torch.bool)
    pmask = torch.zeros(B, L, dtype=torch.bool)
    classes = torch.full((B, L), SPECIAL, dtype=torch.long)
    smulti = torch.zeros(B, L, dtype=torch.float64)
    emulti = torch.zeros(B, L, dtype=torch.float64)
    for b, f in enumerate(features):
        n = len(f)
        ids[b, :n] = torch.tensor(f.token_ids)
        attn[b, :n] = True
        pmask[b, :n] = torch.tensor(f.prediction_mask, dtype=torch.bool)
        classes[b, :n] = torch.tensor(f.labels.token_classes)
        if f.labels.start_multi:
            smulti[b, :n] = torch.tensor(f.labels.start_multi, dtype=torch.float64)
            emulti[b, :n] = torch.tensor(f.labels.end_multi, dtype=torch.float64)
    return Batch(
        ids, attn, pmask, classes,
        torch.tensor([f.labels.start_index for f in features]),
        torch.tensor([f.labels.end_index for f in features]),
        smulti, emulti,
        torch.tensor([int(f.labels.cls_toxic) for f in features]),
    )


def loss_tc(out: dict[str, torch.Tensor], batch: Batch, cls_aux: bool = True) -> torch.Tensor:
    """Mean token cross-entropy, plus the [CLS] text-toxicity term when ``cls_aux``."""
    sel = batch.prediction_mask & (batch.token_classes != SPECIAL)
    has_tokens = bool(sel.any())
    if not has_tokens and not cls_aux:
        raise ValueError("loss_tc: every position is masked")
    logits = out["token_logits"]
    loss = F.cross_entropy(logits[sel], batch.token_classes[sel]) if has_tokens else logits.sum() * 0.0
    if cls_aux:
        loss = loss + F.cross_entropy(out["cls_logits"], batch.cls_toxic)
    return loss


def _masked_ce(logits: torch.Tensor, mask: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if not bool(mask.gather(1, target.unsqueeze(1)).all()):
        raise ValueError("span target on a masked position")
    return F.cross_entropy(logits.masked_fill(~mask, float("-inf")), target)


def loss_sp(out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    """Average of start and end cross-entropies, softmax over sequence positions."""
    m = batch.prediction_mask
    return (_masked_ce(out["start_logits"], m, batch.start_index)
            + _masked_ce(out["end_logits"], m, batch.end_index)) / 2


def loss_msp(out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    m = batch.prediction_mask
    if not bool(m.any()):
        raise ValueError("loss_msp: every position is masked")
    terms = torch.cat([
        F.binary_cross_entropy_with_logits(out["start_logits"][m], batch.start_multi[m], reduction="none"),
        F.binary_cross_entropy_with_logits(out["end_logits"][m], batch.end_multi[m], reduction="none"),
    ])
    return terms.mean()


def loss_sptc(out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    """Token cross-entropy plus the halved start/end cross-entropies."""
    return loss_tc(out, batch, cls_aux=False) + loss_sp(out, batch)


def loss_crf(crf, out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    return crf.nll(out["token_logits"], batch.token_classes, batch.prediction_mask).mean()


def loss_word(out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    """3-class cross-entropy (non-toxic / toxic / special) over non-padding positions."""
    m = batch.attn_mask
    return F.cross_entropy(out["token_logits"][m], batch.token_classes[m])


def compute_loss(model, out: dict[str, torch.Tensor], batch: Batch) -> torch.Tensor:
    head = model.head
    if head is Task.TC:
        return loss_tc(out, batch)
    if head is Task.SP:
        return loss_sp(out, batch)
    if head is Task.MSP:
        return loss_msp(out, batch)
    if head is Task.SPTC:
        return loss_sptc(out, batch)
    if head is Task.CRF:
        return loss_crf(model.crf, out, batch)
    return loss_word(out, batch)

"""Finite-difference verification of the analytic (autograd) loss gradients."""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import torch

from ..features import Task, TokenizedFeature
from .losses import collate, compute_loss
from .network import EncoderConfig, TaggerModel


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_check(head: Task | str, enc: EncoderConfig, features: TokenizedFeature | Sequence[TokenizedFeature],
                   samples_per_param: int = 6, step: float = 1e-5, seed: int = 0,
                   model: TaggerModel | None = None) -> float:
    """Max relative error between autograd and central-difference gradients.

    Up to ``samples_per_param`` entries of every parameter tensor are probed.
    Dropout is disabled so the loss is a deterministic function of the weights.
    """
    if isinstance(features, TokenizedFeature):
        features = [features]
    model = model or TaggerModel(replace(enc, dropout_rate=0.0), head)
    model.eval()
    batch = collate(features)

    def loss_value() -> torch.Tensor:
        return compute_loss(model, model(batch.token_ids, batch.attn_mask), batch)

    model.zero_grad()
    loss_value().backward()
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.grad is None:
                continue
            flat, grad = p.view(-1), p.grad.view(-1)
            picks = torch.randperm(flat.numel(), generator=gen)[:samples_per_param]
            if name.startswith("embedding"):
                used = torch.unique(batch.token_ids).tolist()
                cols = torch.randperm(p.size(1), generator=gen)[:2].tolist()
                picks = torch.tensor([r * p.size(1) + c for r in used[:samples_per_param] for c in cols])
            for j in picks.tolist():
                orig = flat[j].item()
                flat[j] = orig + step
                up = loss_value().item()
                flat[j] = orig - step
                down = loss_value().item()
                flat[j] = orig
                worst = max(worst, relative_error(grad[j].item(), (up - down) / (2 * step)))
    return worst

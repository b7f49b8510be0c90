"""Integrated Gradients over embedding-layer outputs.

The path integral from the baseline embeddings ``x0`` to the input
embeddings ``x`` is approximated with a right Riemann sum::

    attr = (x - x0) * mean_{k=1..n} grad F(x0 + k/n * (x - x0))

Token scores sum attributions over the embedding coordinates of each
token. Token-classification targets are the softmax toxic probabilities of
tokens predicted toxic; span targets are the start logit at each predicted
span start plus the end logit at its end.
"""

from __future__ import annotations

import html
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .decode import DecodeConfig, enumerate_spans
from .features import TOXIC, Task, TokenizedFeature
from .bundle import LogitBundle
from .model.losses import collate
from .tokenizer import PAD_ID, Token


@dataclass
class AttributionConfig:
    n_steps: int = 50
    baseline: str = "zero_embeddings"  # or "pad_embeddings"
    target_rule: str = "tc_toxic_over_half"  # or "sp_predicted_spans"
    approximation: str = "riemann_right"
    chunk_size: int = 256

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.approximation != "riemann_right":
            raise ValueError("only the right Riemann sum is supported")
        if self.baseline not in ("zero_embeddings", "pad_embeddings"):
            raise ValueError(f"unknown baseline {self.baseline!r}")


@dataclass
class AttributionResult:
    token_scores: np.ndarray
    word_scores: dict[int, float]
    completeness_gap: float  # max over targets of |sum(attr) - (F(x) - F(x0))|
    targets_used: list[str]
    target_deltas: list[float] = field(default_factory=list)  # F(x) - F(x0) per target
    target_gaps: list[float] = field(default_factory=list)

    @property
    def normalized_token_scores(self) -> np.ndarray:
        total = np.abs(self.token_scores).sum()
        return self.token_scores / total if total > 0 else self.token_scores


def riemann_right_ig(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, x0: torch.Tensor,
                     n_steps: int = 50, chunk_size: int = 256) -> tuple[torch.Tensor, float, float]:
    """Attributions of scalar ``fn`` at ``x`` relative to ``x0``.

    ``fn`` maps a batch of inputs (m, *x.shape) to m scalars. Returns the
    attribution tensor, ``F(x)`` and ``F(x0)``.
    """
    diff = x - x0
    total = torch.zeros_like(x)
    alphas = torch.arange(1, n_steps + 1, dtype=x.dtype) / n_steps
    for i in range(0, n_steps, chunk_size):
        a = alphas[i:i + chunk_size].view(-1, *([1] * x.dim()))
        points = (x0 + a * diff).detach().requires_grad_(True)
        (grad,) = torch.autograd.grad(fn(points).sum(), points)
        if not torch.isfinite(grad).all():
            raise FloatingPointError("non-finite gradient along the integration path")
        total += grad.sum(0)
    with torch.no_grad():
        ends = fn(torch.stack([x, x0]))
    return diff * total / n_steps, float(ends[0]), float(ends[1])


def select_targets_tc(bundle: LogitBundle, feature: TokenizedFeature | None = None) -> list[int]:
    """Content tokens whose softmax toxic probability is strictly above 0.5."""
    logits = bundle.token_logits
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = z[:, TOXIC] / z.sum(axis=1)
    keep = range(len(probs)) if feature is None else [i for i, t in enumerate(feature.tokens) if not t.is_sentinel]
    return [i for i in keep if probs[i] > 0.5]


def select_targets_sp(bundle: LogitBundle, spans: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    """One (start index, end index) target pair per predicted span."""
    return [(int(s), int(e)) for s, e in spans]


def predicted_spans(bundle: LogitBundle, feature: TokenizedFeature, cfg: DecodeConfig) -> list[tuple[int, int]]:
    if cfg.threshold is None:
        raise ValueError("span attribution needs a decode threshold")
    content = [i for i, t in enumerate(feature.tokens) if not t.is_sentinel]
    spans = enumerate_spans(bundle.start_logits, bundle.end_logits, cfg, content)
    return [(sp.start_tok, sp.end_tok) for sp in spans if sp.score > cfg.threshold]


def aggregate_words(token_scores: Sequence[float], tokens: Sequence[Token]) -> dict[int, float]:
    """Sum token scores per word; sentinel tokens are dropped."""
    words: dict[int, float] = {}
    for score, tok in zip(token_scores, tokens):
        if not tok.is_sentinel:
            words[tok.word_index] = words.get(tok.word_index, 0.0) + float(score)
    return words


def _bundle(model, ids: torch.Tensor, attn: torch.Tensor) -> LogitBundle:
    with torch.no_grad():
        out = {k: v[0].numpy() for k, v in model(ids, attn).items()}
    return LogitBundle(out.get("token_logits"), out.get("start_logits"), out.get("end_logits"), out.get("cls_logits"))


def integrated_gradients(model, feature: TokenizedFeature, cfg: AttributionConfig = AttributionConfig(),
                         decode_cfg: DecodeConfig | None = None) -> AttributionResult:
    """Attribute the model's toxic predictions on one feature to its tokens."""
    model.eval()
    batch = collate([feature])
    ids, attn = batch.token_ids, batch.attn_mask
    with torch.no_grad():
        x = model.embed(ids)[0]
        if cfg.baseline == "zero_embeddings":
            x0 = torch.zeros_like(x)
        else:
            x0 = model.embed(torch.full_like(ids, PAD_ID))[0]
    bundle = _bundle(model, ids, attn)

    def run(points: torch.Tensor) -> dict[str, torch.Tensor]:
        return model.forward_embeddings(points, attn.expand(points.size(0), -1))

    targets: list[tuple[str, list[Callable]]] = []  # (description, scalar fns summed into one group)
    if cfg.target_rule == "tc_toxic_over_half":
        if model.head not in (Task.TC, Task.SPTC):
            raise ValueError(f"{cfg.target_rule} needs a token-classification head, got {model.head.value}")
        for i in select_targets_tc(bundle, feature):
            targets.append((f"p_toxic[{i}]", [lambda p, i=i: torch.softmax(run(p)["token_logits"][:, i], -1)[:, TOXIC]]))
    elif cfg.target_rule == "sp_predicted_spans":
        if model.head not in (Task.SP, Task.SPTC):
            raise ValueError(f"{cfg.target_rule} needs a span head, got {model.head.value}")
        for s, e in select_targets_sp(bundle, predicted_spans(bundle, feature, decode_cfg or DecodeConfig())):
            targets.append((f"span[{s},{e}]", [lambda p, s=s: run(p)["start_logits"][:, s],
                                               lambda p, e=e: run(p)["end_logits"][:, e]]))
    else:
        raise ValueError(f"unknown target rule {cfg.target_rule!r}")

    n = len(feature)
    if not targets:
        return AttributionResult(np.zeros(n), aggregate_words(np.zeros(n), feature.tokens), 0.0, [])

    groups, gaps, deltas = [], [], []
    for _, fns in targets:
        group = torch.zeros_like(x)
        for fn in fns:
            attr, fx, fx0 = riemann_right_ig(fn, x, x0, cfg.n_steps, cfg.chunk_size)
            gaps.append(abs(float(attr.sum()) - (fx - fx0)))
            deltas.append(fx - fx0)
            group += attr
        groups.append(group.sum(-1))
    token_scores = torch.stack(groups).mean(0).numpy()
    return AttributionResult(token_scores, aggregate_words(token_scores, feature.tokens), max(gaps),
                             [d for d, _ in targets], deltas, gaps)


def result_json(result: AttributionResult, feature: TokenizedFeature) -> dict:
    norm = result.normalized_token_scores
    return {
        "sample_id": feature.sample_id,
        "window_index": feature.window_index,
        "tokens": [t.surface for t in feature.tokens],
        "char_spans": [list(t.char_span) if t.char_span else None for t in feature.tokens],
        "token_scores": result.token_scores.tolist(),
        "token_scores_l1": norm.tolist(),
        "word_scores": {str(k): v for k, v in sorted(result.word_scores.items())},
        "targets": result.targets_used,
        "completeness_gap": result.completeness_gap,
    }


def html_report(items: Sequence[tuple[AttributionResult, TokenizedFeature]]) -> str:
    rows = []
    for result, feature in items:
        norm = result.normalized_token_scores
        peak = max(float(np.abs(norm).max()), 1e-12) if len(norm) else 1.0
        cells = []
        for tok, v in zip(feature.tokens, norm):
            a = min(abs(float(v)) / peak, 1.0)
            color = f"rgba(220,40,40,{a:.3f})" if v >= 0 else f"rgba(40,90,220,{a:.3f})"
            cells.append(f'<span title="{float(v):+.4f}" style="background:{color};padding:1px 2px">'
                         f"{html.escape(tok.surface)}</span>")
        rows.append(f"<p><b>sample {feature.sample_id}</b> (targets: {html.escape(', '.join(result.targets_used) or 'none')})"
                    f"<br>{' '.join(cells)}</p>")
    style = "body{font-family:sans-serif;max-width:60em;margin:2em auto;line-height:1.8}"
    return (f"<!DOCTYPE html>\n<html><head><meta charset='utf-8'><title>Token attributions</title>"
            f"<style>{style}</style></head><body>\n" + "\n".join(rows) + "\n</body></html>\n")


def dump_json(items: Sequence[tuple[AttributionResult, TokenizedFeature]]) -> str:
    return json.dumps([result_json(r, f) for r, f in items], indent=2) + "\n"

"""Training loop: AdamW with decoupled weight decay, linear LR decay to zero,
one checkpoint per epoch scored on the dev split."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import torch

from ..corpus import DatasetSplit
from ..decode import DecodeConfig, tune_threshold
from ..features import Task, featurize
from ..metric import evaluate
from ..tokenizer import Tokenizer, Vocabulary, build_vocab
from .checkpoint import ModelCheckpoint
from .losses import collate, compute_loss
from .network import EncoderConfig, TaggerModel

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 3
    learning_rate: float = 3e-3
    weight_decay: float = 0.01
    lr_schedule: str = "linear_decay"  # or "constant"
    optimizer: str = "adamw"  # or "adam"
    early_stopping_patience: int | None = None
    clip_norm: float | None = 1.0
    min_count: int = 1

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs <= 0 or self.learning_rate <= 0:
            raise ValueError("batch_size, epochs and learning_rate must be positive")
        if self.lr_schedule not in ("linear_decay", "constant"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.optimizer not in ("adamw", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _param_groups(model: torch.nn.Module, weight_decay: float):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        (no_decay if name.endswith("bias") or "norm" in name else decay).append(p)
    return [{"params": decay, "weight_decay": weight_decay}, {"params": no_decay, "weight_decay": 0.0}]


def _batches(n: int, size: int, rng: random.Random | None):
    order = list(range(n))
    if rng is not None:
        rng.shuffle(order)
    return [order[i:i + size] for i in range(0, n, size)]


def dataset_loss(model: TaggerModel, features, batch_size: int = 64) -> float:
    model.eval()
    total = 0.0
    with torch.no_grad():
        for idx in _batches(len(features), batch_size, None):
            batch = collate([features[i] for i in idx])
            total += float(compute_loss(model, model(batch.token_ids, batch.attn_mask), batch)) * len(idx)
    return total / max(len(features), 1)


def dev_score(predictor, dev: DatasetSplit, decode_cfg: DecodeConfig) -> tuple[float, float | None]:
    """Dev F1, tuning the score threshold on dev itself for thresholded heads."""
    from ..inference import THRESHOLD_HEADS

    threshold = None
    cfg = decode_cfg
    if predictor.head in THRESHOLD_HEADS:
        cands = predictor.candidates(dev, decode_cfg)
        threshold = tune_threshold([cands[s.id] for s in dev], [s.gold_offsets for s in dev])
        field = "word_prob_threshold" if predictor.head is Task.WORD else "threshold"
        cfg = replace(decode_cfg, **{field: threshold})
    return evaluate(predictor.predict(dev, cfg), dev).mean_f1, threshold


def train(split: DatasetSplit, dev: DatasetSplit, head: Task | str, enc: EncoderConfig, tc: TrainConfig,
          decode_cfg: DecodeConfig | None = None, vocab: Vocabulary | None = None,
          tokenizer: Tokenizer | None = None) -> list[ModelCheckpoint]:
    """Train one model; returns one checkpoint per completed epoch.

    With ``early_stopping_patience`` set, training stops once dev loss has
    not improved for that many epochs.
    """
    head = Task(head)
    if not len(split) or not len(dev):
        raise ValueError("train and dev splits must be non-empty")
    decode_cfg = decode_cfg or DecodeConfig()
    tokenizer = tokenizer or Tokenizer()
    vocab = vocab or build_vocab(split, tc.min_count, tokenizer)
    enc = replace(enc, vocab_size=len(vocab))

    torch.manual_seed(enc.seed)
    rng = random.Random(enc.seed)
    model = TaggerModel(enc, head)
    train_feats = featurize(split, head, enc.max_len, enc.stride, vocab, tokenizer, training=True)
    dev_feats = featurize(dev, head, enc.max_len, enc.stride, vocab, tokenizer, training=True)
    if not train_feats:
        raise ValueError("no training features")

    opt_cls = torch.optim.AdamW if tc.optimizer == "adamw" else torch.optim.Adam
    wd = tc.weight_decay if tc.optimizer == "adamw" else 0.0
    optimizer = opt_cls(_param_groups(model, wd), lr=tc.learning_rate)
    total_steps = tc.epochs * math.ceil(len(train_feats) / tc.batch_size)
    if tc.lr_schedule == "linear_decay":
        schedule = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: max(0.0, 1.0 - step / total_steps))
    else:
        schedule = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: 1.0)

    from ..inference import Predictor

    predictor = Predictor(model, vocab, tokenizer)
    checkpoints: list[ModelCheckpoint] = []
    best, stale = math.inf, 0
    for epoch in range(1, tc.epochs + 1):
        model.train()
        running, seen = 0.0, 0
        for idx in _batches(len(train_feats), tc.batch_size, rng):
            batch = collate([train_feats[i] for i in idx])
            loss = compute_loss(model, model(batch.token_ids, batch.attn_mask), batch)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss.item()} at epoch {epoch}, step {seen}")
            optimizer.zero_grad()
            loss.backward()
            if tc.clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tc.clip_norm)
            optimizer.step()
            schedule.step()
            running += loss.item() * len(idx)
            seen += len(idx)

        dev_loss = dataset_loss(model, dev_feats) if dev_feats else float("nan")
        dev_f1, threshold = dev_score(predictor, dev, decode_cfg)
        ckpt = ModelCheckpoint.from_model(model, vocab, tokenizer, epoch=epoch, dev_loss=dev_loss, dev_f1=dev_f1,
                                          train_loss=running / seen, threshold=threshold,
                                          train_config=asdict(tc))
        checkpoints.append(ckpt)
        logger.info("%s epoch %d: train loss %.4f dev loss %.4f dev F1 %.4f", head.value, epoch,
                    ckpt.train_loss, dev_loss, dev_f1)

        if tc.early_stopping_patience is not None:
            if dev_loss < best:
                best, stale = dev_loss, 0
            else:
                stale += 1
                if stale >= tc.early_stopping_patience:
                    break
    return checkpoints


def select_checkpoints(ckpts: Sequence[ModelCheckpoint], k: int,
                       criterion: str = "dev_loss_asc") -> list[ModelCheckpoint]:
    """Top-``k`` checkpoints; ties go to the earlier epoch."""
    if k > len(ckpts):
        raise ValueError(f"asked for {k} checkpoints but only {len(ckpts)} available")
    if criterion == "dev_loss_asc":
        key = lambda c: (c.dev_loss, c.epoch)
    elif criterion == "dev_f1_desc":
        key = lambda c: (-c.dev_f1, c.epoch)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return sorted(ckpts, key=key)[:k]


def metrics_log(ckpts: Sequence[ModelCheckpoint]) -> list[dict]:
    return [{"epoch": c.epoch, "train_loss": c.train_loss, "dev_loss": c.dev_loss, "dev_f1": c.dev_f1,
             "threshold": c.threshold, "rng_digest": c.rng_digest} for c in ckpts]

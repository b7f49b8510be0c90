"""Self-describing checkpoint files (``.npz``): float64 parameter arrays plus a
JSON metadata record holding configs, vocabulary and dev-set results."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..features import Task
from ..tokenizer import Tokenizer, Vocabulary
from .network import EncoderConfig, TaggerModel

FORMAT = "toxspans-checkpoint/1"


@dataclass
class ModelCheckpoint:
    head: Task
    encoder: EncoderConfig
    state: dict[str, np.ndarray]
    vocab_tokens: list[str]
    epoch: int
    dev_loss: float
    dev_f1: float
    train_loss: float = float("nan")
    seed: int = 0
    rng_digest: str = ""
    threshold: float | None = None
    lowercase: bool = True
    subword_pieces: list[str] | None = None
    train_config: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: TaggerModel, vocab: Vocabulary, tokenizer: Tokenizer, **meta) -> "ModelCheckpoint":
        state = {k: v.detach().cpu().numpy().astype(np.float64).copy() for k, v in model.state_dict().items()}
        digest = hashlib.sha256(torch.get_rng_state().numpy().tobytes()).hexdigest()[:16]
        pieces = sorted(tokenizer.subword_pieces) if tokenizer.subword_pieces is not None else None
        return cls(head=model.head, encoder=model.cfg, state=state, vocab_tokens=vocab.content_tokens,
                   lowercase=vocab.lowercase, subword_pieces=pieces, rng_digest=digest,
                   seed=model.cfg.seed, **meta)

    def vocab(self) -> Vocabulary:
        return Vocabulary(self.vocab_tokens, lowercase=self.lowercase)

    def tokenizer(self) -> Tokenizer:
        return Tokenizer(self.subword_pieces)

    def model(self) -> TaggerModel:
        model = TaggerModel(self.encoder, self.head)
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.state.items()})
        model.eval()
        return model

    def meta(self) -> dict:
        return {
            "format": FORMAT,
            "head": self.head.value,
            "encoder": self.encoder.to_dict(),
            "vocab_tokens": self.vocab_tokens,
            "lowercase": self.lowercase,
            "subword_pieces": self.subword_pieces,
            "epoch": self.epoch,
            "dev_loss": self.dev_loss,
            "dev_f1": self.dev_f1,
            "train_loss": self.train_loss,
            "seed": self.seed,
            "rng_digest": self.rng_digest,
            "threshold": self.threshold,
            "train_config": self.train_config,
        }

    def save(self, path: str | os.PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"param:{k}": v for k, v in self.state.items()}
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz.tmp")
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(self.meta(), sort_keys=True)), **arrays)
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ModelCheckpoint":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("format") != FORMAT:
                raise ValueError(f"{path}: not a {FORMAT} file")
            state = {k[len("param:"):]: z[k].copy() for k in z.files if k.startswith("param:")}
        return cls(head=Task(meta["head"]), encoder=EncoderConfig(**meta["encoder"]), state=state,
                   vocab_tokens=meta["vocab_tokens"], epoch=meta["epoch"], dev_loss=meta["dev_loss"],
                   dev_f1=meta["dev_f1"], train_loss=meta["train_loss"], seed=meta["seed"],
                   rng_digest=meta["rng_digest"], threshold=meta["threshold"], lowercase=meta["lowercase"],
                   subword_pieces=meta["subword_pieces"], train_config=meta["train_config"])

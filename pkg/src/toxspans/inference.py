"""Run a model over a split and decode its outputs into predictions."""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np
import torch

from .bundle import LogitBundle
from .corpus import DatasetSplit
from .decode import (Candidate, DecodeConfig, Prediction, apply_threshold, decode_crf, decode_msp,
                     decode_tc, merge_windows, sp_candidates, sptc_candidates, word_candidates)
from .features import Task, TokenizedFeature, featurize
from .model.losses import collate
from .tokenizer import Tokenizer, Vocabulary

THRESHOLD_HEADS = (Task.SP, Task.SPTC, Task.WORD)


class IncompatibleDecoder(ValueError):
    pass


class Predictor:
    def __init__(self, model, vocab: Vocabulary, tokenizer: Tokenizer | None = None):
        self.model = model
        self.vocab = vocab
        self.tokenizer = tokenizer or Tokenizer()
        self.head = model.head

    @classmethod
    def from_checkpoint(cls, ckpt) -> "Predictor":
        return cls(ckpt.model(), ckpt.vocab(), ckpt.tokenizer())

    def features(self, split, training: bool = False, task: Task | None = None) -> list[TokenizedFeature]:
        cfg = self.model.cfg
        return featurize(split, task or self.head, cfg.max_len, cfg.stride, self.vocab, self.tokenizer, training)

    def bundles(self, features: Sequence[TokenizedFeature], batch_size: int = 64) -> list[LogitBundle]:
        self.model.eval()
        out: list[LogitBundle] = []
        with torch.no_grad():
            for i in range(0, len(features), batch_size):
                chunk = features[i:i + batch_size]
                batch = collate(chunk)
                res = {k: v.numpy() for k, v in self.model(batch.token_ids, batch.attn_mask).items()}
                for b, f in enumerate(chunk):
                    n = len(f)
                    out.append(LogitBundle(
                        token_logits=res["token_logits"][b, :n].copy() if "token_logits" in res else None,
                        start_logits=res["start_logits"][b, :n].copy() if "start_logits" in res else None,
                        end_logits=res["end_logits"][b, :n].copy() if "end_logits" in res else None,
                        cls_logits=res["cls_logits"][b].copy() if "cls_logits" in res else None,
                    ))
        return out

    def _check_mode(self, mode: str) -> None:
        allowed = {Task.SPTC: ("combined", "token_only", "span_only")}.get(self.head, ("default",))
        if mode not in allowed:
            raise IncompatibleDecoder(f"{self.head.value} checkpoint cannot use decoder {mode!r}")

    def candidates(self, split: DatasetSplit, cfg: DecodeConfig, mode: str = "default") -> dict[int, list[Candidate]]:
        """Per-sample scored spans (SP, SPTC) or scored words (WORD) for thresholding."""
        if mode == "default" and self.head is Task.SPTC:
            mode = "combined"
        self._check_mode(mode)
        if self.head not in THRESHOLD_HEADS or mode == "token_only":
            raise IncompatibleDecoder(f"{self.head.value}/{mode} decoding has no score threshold")
        feats = self.features(split)
        cands: dict[int, list[Candidate]] = {s.id: [] for s in split}
        for f, b in zip(feats, self.bundles(feats)):
            if self.head is Task.WORD:
                logits = b.token_logits
                z = np.exp(logits - logits.max(axis=1, keepdims=True))
                probs = z[:, 1] / z.sum(axis=1)
                pos = [i for i, t in enumerate(f.tokens) if not t.is_sentinel]
                cands[f.sample_id].extend(word_candidates(probs[pos], [f.tokens[i] for i in pos]))
            elif mode == "combined":
                cands[f.sample_id].extend(sptc_candidates(b, f, cfg))
            else:
                cands[f.sample_id].extend(sp_candidates(b, f, cfg))
        return cands

    def predict(self, split: DatasetSplit, cfg: DecodeConfig, mode: str = "default") -> Prediction:
        if mode == "default" and self.head is Task.SPTC:
            mode = "combined"
        self._check_mode(mode)
        if self.head in THRESHOLD_HEADS and mode != "token_only":
            threshold = cfg.word_prob_threshold if self.head is Task.WORD else cfg.threshold
            return {sid: apply_threshold(c, threshold) for sid, c in self.candidates(split, cfg, mode).items()}
        feats = self.features(split)
        per_sample: dict[int, list] = defaultdict(list)
        crf_params = self.model.crf.params() if self.head is Task.CRF else None
        for f, b in zip(feats, self.bundles(feats)):
            if self.head in (Task.TC, Task.SPTC):
                per_sample[f.sample_id].append(decode_tc(b, f))
            elif self.head is Task.MSP:
                per_sample[f.sample_id].append(decode_msp(b, f, cfg))
            else:
                per_sample[f.sample_id].append(decode_crf(b, f, crf_params))
        return {s.id: merge_windows(per_sample.get(s.id, ())) for s in split}

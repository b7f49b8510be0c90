"""From-scratch encoders with the five task heads plus the word-level baseline."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..features import Task
from .crf import CRF


@dataclass
class EncoderConfig:
    vocab_size: int = 0
    embedding_dim: int = 64
    hidden_dim: int = 64
    encoder: str = "bilstm"  # or "tiny_transformer"
    num_layers: int = 1
    dropout_rate: float = 0.1
    max_len: int = 128
    stride: int = 32
    num_heads: int = 2
    seed: int = 0

    def __post_init__(self):
        if min(self.embedding_dim, self.hidden_dim, self.num_layers, self.max_len) <= 0:
            raise ValueError("encoder dimensions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.encoder not in ("bilstm", "tiny_transformer"):
            raise ValueError(f"unknown encoder kind {self.encoder!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def sinusoidal_positions(length: int, dim: int, dtype=torch.float64) -> torch.Tensor:
    pos = torch.arange(length, dtype=dtype).unsqueeze(1)
    freq = torch.exp(torch.arange(0, dim, 2, dtype=dtype) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq)[:, : dim // 2]
    return pe


def _run_lstm(lstm: nn.LSTM, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    packed = nn.utils.rnn.pack_padded_sequence(x, lengths.clamp(min=1).cpu(), batch_first=True,
                                               enforce_sorted=False)
    out, _ = lstm(packed)
    out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=x.size(1))
    return out


class TaggerModel(nn.Module):
    """Embedding -> encoder -> task head.

    ``forward`` returns a dict with a subset of ``token_logits``,
    ``start_logits``, ``end_logits`` and ``cls_logits``.
    """

    def __init__(self, cfg: EncoderConfig, head: Task | str):
        super().__init__()
        self.cfg = cfg
        self.head = Task(head)
        torch.manual_seed(cfg.seed)
        self.embedding = nn.Embedding(cfg.vocab_size, cfg.embedding_dim)
        self.dropout = nn.Dropout(cfg.dropout_rate)
        if cfg.encoder == "bilstm":
            self.encoder = nn.LSTM(cfg.embedding_dim, cfg.hidden_dim, num_layers=cfg.num_layers,
                                   bidirectional=True, batch_first=True,
                                   dropout=cfg.dropout_rate if cfg.num_layers > 1 else 0.0)
            out_dim = 2 * cfg.hidden_dim
        else:
            if cfg.embedding_dim % cfg.num_heads:
                raise ValueError("embedding_dim must be divisible by num_heads")
            layer = nn.TransformerEncoderLayer(cfg.embedding_dim, cfg.num_heads, dim_feedforward=2 * cfg.hidden_dim,
                                               dropout=cfg.dropout_rate, activation="gelu", batch_first=True)
            self.encoder = nn.TransformerEncoder(layer, max(cfg.num_layers, 2), enable_nested_tensor=False)
            out_dim = cfg.embedding_dim

        h = self.head
        if h in (Task.TC, Task.SPTC, Task.WORD):
            self.token_out = nn.Linear(out_dim, 3 if h is Task.WORD else 2)
        if h is Task.TC:
            self.cls_out = nn.Linear(out_dim, 2)
        if h in (Task.SP, Task.MSP, Task.SPTC):
            self.span_out = nn.Linear(out_dim, 2)
        if h is Task.CRF:
            self.crf_lstm = nn.LSTM(out_dim, cfg.hidden_dim, bidirectional=True, batch_first=True)
            self.token_out = nn.Linear(2 * cfg.hidden_dim, 3)
            self.crf = CRF(3)
        self.double()

    def embed(self, token_ids: torch.Tensor) -> torch.Tensor:
        return self.embedding(token_ids)

    def encode(self, emb: torch.Tensor, attn_mask: torch.Tensor) -> torch.Tensor:
        lengths = attn_mask.sum(1)
        x = self.dropout(emb)
        if self.cfg.encoder == "bilstm":
            return self.dropout(_run_lstm(self.encoder, x, lengths))
        x = x + sinusoidal_positions(x.size(1), x.size(2), x.dtype)
        return self.encoder(x, src_key_padding_mask=~attn_mask.bool())

    def forward_embeddings(self, emb: torch.Tensor, attn_mask: torch.Tensor) -> dict[str, torch.Tensor]:
        hid = self.encode(emb, attn_mask)
        out: dict[str, torch.Tensor] = {}
        h = self.head
        if h is Task.CRF:
            hid = self.dropout(_run_lstm(self.crf_lstm, hid, attn_mask.sum(1)))
        if hasattr(self, "token_out"):
            out["token_logits"] = self.token_out(hid)
        if h is Task.TC:
            out["cls_logits"] = self.cls_out(hid[:, 0])
        if hasattr(self, "span_out"):
            start, end = self.span_out(hid).unbind(-1)
            out["start_logits"], out["end_logits"] = start, end
        return out

    def forward(self, token_ids: torch.Tensor, attn_mask: torch.Tensor) -> dict[str, torch.Tensor]:
        if int(token_ids.max()) >= self.cfg.vocab_size:
            raise ValueError("token id out of vocabulary range")
        return self.forward_embeddings(self.embed(token_ids), attn_mask)

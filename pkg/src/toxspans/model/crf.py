"""Linear-chain CRF with start/end transitions.

Masks need not be contiguous: masked-out positions are squeezed out before
the recursions, so a mask such as ``[1, 0, 1, 1, 0]`` (``[CLS]`` kept,
``[SEP]`` dropped) scores the 3-step chain over the kept positions.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..bundle import CrfParams


def compact(mask: torch.Tensor, *tensors: torch.Tensor):
    """Move unmasked positions to the front of each row, preserving order."""
    mask = mask.bool()
    order = torch.sort((~mask).to(torch.int64), dim=1, stable=True).indices
    lengths = mask.sum(1)
    out = []
    for t in tensors:
        idx = order if t.dim() == 2 else order.unsqueeze(-1).expand(-1, -1, t.size(-1))
        out.append(t.gather(1, idx))
    new_mask = torch.arange(mask.size(1), device=mask.device).unsqueeze(0) < lengths.unsqueeze(1)
    return new_mask, lengths, out


class CRF(nn.Module):
    def __init__(self, num_labels: int = 3):
        super().__init__()
        self.num_labels = num_labels
        self.transitions = nn.Parameter(torch.empty(num_labels, num_labels).uniform_(-0.1, 0.1))
        self.start_transitions = nn.Parameter(torch.empty(num_labels).uniform_(-0.1, 0.1))
        self.end_transitions = nn.Parameter(torch.empty(num_labels).uniform_(-0.1, 0.1))

    def _check(self, lengths: torch.Tensor) -> None:
        if bool((lengths == 0).any()):
            raise ValueError("CRF needs at least one unmasked position per sequence")

    def log_partition(self, emissions: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Forward algorithm in log space; returns ``log Z`` per sequence."""
        mask, lengths, (em,) = compact(mask, emissions)
        self._check(lengths)
        alpha = self.start_transitions + em[:, 0]
        for t in range(1, em.size(1)):
            nxt = torch.logsumexp(alpha.unsqueeze(2) + self.transitions, dim=1) + em[:, t]
            alpha = torch.where(mask[:, t:t + 1], nxt, alpha)
        return torch.logsumexp(alpha + self.end_transitions, dim=1)

    def path_score(self, emissions: torch.Tensor, tags: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        mask, lengths, (em, tags) = compact(mask, emissions, tags)
        self._check(lengths)
        em_score = em.gather(2, tags.unsqueeze(-1)).squeeze(-1)
        score = self.start_transitions[tags[:, 0]] + em_score[:, 0]
        m = mask.to(em.dtype)
        for t in range(1, em.size(1)):
            score = score + m[:, t] * (self.transitions[tags[:, t - 1], tags[:, t]] + em_score[:, t])
        last = tags.gather(1, (lengths - 1).unsqueeze(1)).squeeze(1)
        return score + self.end_transitions[last]

    def nll(self, emissions: torch.Tensor, tags: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.log_partition(emissions, mask) - self.path_score(emissions, tags, mask)

    def params(self) -> CrfParams:
        def arr(p):
            return p.detach().cpu().numpy().astype(np.float64)

        return CrfParams(arr(self.transitions), arr(self.start_transitions), arr(self.end_transitions))

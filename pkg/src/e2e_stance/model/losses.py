from __future__ import annotations

import torch
import torch.nn.functional as F

from .features import IGNORE

EPS = 1e-7


def loss_stance(logits: torch.Tensor, labels: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Token cross entropy summed over positions; averaged over the batch by default.

    ``reduction="none"`` returns one value per sample and ``"sum"`` the batch total.
    """
    if logits.shape[:-1] != labels.shape:
        raise ValueError(f"logits {tuple(logits.shape[:-1])} and labels {tuple(labels.shape)} differ in length")
    tok = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1),
                          ignore_index=IGNORE, reduction="none").view(labels.shape)
    per_sample = tok.sum(-1)
    return _reduce(per_sample, reduction)


def loss_node(s_hat: torch.Tensor, s: torch.Tensor, w: float = 1.0, mask: torch.Tensor | None = None,
              reduction: str = "mean") -> torch.Tensor:
    """Weighted binary cross entropy over entity nodes.

    -sum_i [w s_i log s_hat_i + (1 - s_i) log(1 - s_hat_i)] per sample, with
    s_hat clamped to [1e-7, 1 - 1e-7]. 1-D inputs are one sample.
    """
    if s_hat.shape != s.shape:
        raise ValueError("salience predictions and targets differ in shape")
    if s_hat.dim() == 1:
        s_hat, s = s_hat[None], s[None]
        mask = None if mask is None else mask[None]
    p = s_hat.clamp(EPS, 1 - EPS)
    terms = -(w * s * torch.log(p) + (1 - s) * torch.log1p(-p))
    if mask is not None:
        terms = terms * mask
    return _reduce(terms.sum(-1), reduction)


def loss_multi(stance: torch.Tensor, node: torch.Tensor | None) -> torch.Tensor:
    return stance if node is None else stance + node


def _reduce(values: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return values.mean()
    if reduction == "sum":
        return values.sum()
    if reduction == "none":
        return values
    raise ValueError(f"unknown reduction {reduction!r}")

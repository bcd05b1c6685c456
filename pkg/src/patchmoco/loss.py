"""Contrastive objectives: temperature-scaled InfoNCE and its four-term sum.

Each InfoNCE term scores one positive pair against a shared set of queue
negatives via a softmax over K+1 similarities.  The combined objective
pairs both query embeddings (content and shuffle) with both key queues,
giving four equally weighted terms.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

_NORM_TOL = 1e-3


def _check_unit_rows(name: str, t: torch.Tensor) -> None:
    with torch.no_grad():
        if t.numel() and (t.norm(dim=1) - 1.0).abs().max().item() > _NORM_TOL:
            raise ValueError(f"{name} rows must be unit-norm")


def info_nce(q: torch.Tensor, k_pos: torch.Tensor, negatives: torch.Tensor,
             temperature: float = 0.07) -> torch.Tensor:
    """Mean InfoNCE over the batch.

    Per sample i: -log( exp(q_i . k_i / t) / (exp(q_i . k_i / t)
    + sum_j exp(q_i . n_j / t)) ) with the positive key in the numerator and
    the K shared negatives in the denominator.  Gradients flow into q only.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if q.shape != k_pos.shape:
        raise ValueError(f"q {tuple(q.shape)} and k_pos {tuple(k_pos.shape)} differ")
    _check_unit_rows("q", q)
    _check_unit_rows("k_pos", k_pos)
    _check_unit_rows("negatives", negatives)
    l_pos = (q * k_pos.detach()).sum(dim=1, keepdim=True)
    l_neg = q @ negatives.detach().t()
    logits = torch.cat([l_pos, l_neg], dim=1) / temperature
    targets = torch.zeros(q.shape[0], dtype=torch.long, device=q.device)
    return F.cross_entropy(logits, targets)


@dataclass
class LossTerms:
    """The four contrastive terms; total is their unweighted sum."""
    q1k1: torch.Tensor
    q1k2: torch.Tensor
    q2k1: torch.Tensor
    q2k2: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.q1k1 + self.q1k2 + self.q2k1 + self.q2k2

    def to_floats(self) -> dict:
        with torch.no_grad():
            return {
                "q1k1": float(self.q1k1), "q1k2": float(self.q1k2),
                "q2k1": float(self.q2k1), "q2k2": float(self.q2k2),
                "total": float(self.total),
            }


def combined_loss(q1, q2, k1_pos, k2_pos, queue1, queue2,
                  temperature: float = 0.07) -> LossTerms:
    """Four-term objective crossing both queries with both key queues.

    q1/k1_pos come from the content views, q2/k2_pos from the shuffle
    views; queue1 holds content-momentum negatives and queue2 holds
    shuffle-momentum negatives.
    """
    neg1 = queue1.snapshot()
    neg2 = queue2.snapshot()
    return LossTerms(
        q1k1=info_nce(q1, k1_pos, neg1, temperature),
        q1k2=info_nce(q1, k2_pos, neg2, temperature),
        q2k1=info_nce(q2, k1_pos, neg1, temperature),
        q2k2=info_nce(q2, k2_pos, neg2, temperature),
    )


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log softmax probability of the true class."""
    labels = labels.long()
    n_classes = logits.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return F.cross_entropy(logits, labels)

"""The randomized-transformation prediction wrapper and its decision rules.

Predictions draw n chain realizations, run the backbone on each transformed
copy, and aggregate.  Aggregation accumulates in float64 and divides once:
identical per-sample outputs then average to themselves exactly, so an
identity chain reproduces the plain backbone's output bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from .errors import ConfigurationError
from .transforms import TransformSpec, apply_chain, sample_params

RULES = ("softmax_mean", "logits_mean", "majority_vote")


@dataclass
class DefenseConfig:
    specs: Sequence[TransformSpec] = field(default_factory=list)
    s_len: int = 1
    n_infer: int = 16
    rule: str = "softmax_mean"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown decision rule {self.rule!r}")
        if self.n_infer < 1:
            raise ConfigurationError("n_infer must be >= 1")
        if self.specs and not 1 <= self.s_len <= len(self.specs):
            raise ConfigurationError(f"need 1 <= S <= K, got S={self.s_len}, K={len(self.specs)}")


@dataclass
class PredictionOutcome:
    scores: np.ndarray  # [C], rule-dependent aggregate
    label: int
    samples: Optional[np.ndarray] = None  # [n, C] raw per-sample outputs


def _sample_outputs(model, x: torch.Tensor, cfg: DefenseConfig, rng, fixed_perm=False):
    """Per-sample logits [n, B, C] for a [B, C, H, W] batch."""
    single = x.dim() == 3
    xb = x.unsqueeze(0) if single else x
    if cfg.specs:
        draws = sample_params(cfg, rng, cfg.n_infer, fixed_perm=fixed_perm)
    else:
        draws = [None] * cfg.n_infer
    outs = []
    with torch.no_grad():
        for params in draws:
            xt = xb if params is None else apply_chain(xb, params)
            outs.append(model(xt))
    return torch.stack(outs)  # [n, B, C]


def aggregate(logit_samples: torch.Tensor, rule: str) -> torch.Tensor:
    """Aggregate [n, ..., C] per-sample logits into [..., C] scores.

    Softmax runs in the model's dtype so a single sample reproduces the
    plain model output; only the reduction is carried out in float64.
    """
    if rule == "softmax_mean":
        return torch.softmax(logit_samples, dim=-1).double().mean(dim=0)
    if rule == "logits_mean":
        return logit_samples.double().mean(dim=0)
    if rule == "majority_vote":
        votes = logit_samples.argmax(dim=-1)
        c = logit_samples.shape[-1]
        counts = torch.zeros((*logit_samples.shape[1:-1], c), dtype=torch.float64)
        for cls in range(c):
            counts[..., cls] = (votes == cls).double().sum(dim=0)
        return counts / logit_samples.shape[0]
    raise ConfigurationError(f"unknown decision rule {rule!r}")


def predict_scores(model, x: torch.Tensor, cfg: DefenseConfig, rng) -> PredictionOutcome:
    """Monte Carlo prediction for one image ([C, H, W])."""
    samples = _sample_outputs(model, x, cfg, rng)[:, 0, :]  # [n, C]
    if cfg.rule == "softmax_mean":
        per_sample = torch.softmax(samples, dim=-1)
    else:
        per_sample = samples
    scores = aggregate(samples, cfg.rule)
    label = int(scores.argmax().item())  # argmax takes the lowest index on ties
    return PredictionOutcome(
        scores=scores.numpy(), label=label, samples=per_sample.double().numpy()
    )


def predict_label(model, x: torch.Tensor, cfg: DefenseConfig, rng) -> int:
    return predict_scores(model, x, cfg, rng).label


def predict_labels_batch(model, x: torch.Tensor, cfg: DefenseConfig, rng) -> np.ndarray:
    """Batched prediction labels.

    The n Monte Carlo chain draws (kinds, flags, strengths) are shared
    across the batch for throughput; per-pixel auxiliary randomness inside
    each transform is still drawn independently per image.
    """
    samples = _sample_outputs(model, x, cfg, rng)  # [n, B, C]
    scores = aggregate(samples, cfg.rule)  # [B, C]
    return scores.argmax(dim=-1).numpy()

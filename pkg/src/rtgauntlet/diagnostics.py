"""Spread statistics over single-draw signed gradients.

Strong attacks on randomized defenses correlate with low spread of their
gradient estimates, so the toolkit measures three views of it: the
dimension-normalized sample variance, the mean cosine similarity of each
sample to the sample mean, and the fraction of matching signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DegenerateStatisticError, InputError


@dataclass
class GradientStats:
    mean_grad: torch.Tensor
    variance: float
    cosine: float
    sign_match: float
    n: int
    d: int


def _stack(samples) -> torch.Tensor:
    if isinstance(samples, torch.Tensor):
        t = samples
    else:
        t = torch.stack(list(samples))
    if t.dim() < 2 or t.shape[0] < 1:
        raise InputError("need [n, ...] gradient samples")
    return t.reshape(t.shape[0], -1).double()


def mean_grad(samples) -> torch.Tensor:
    """Elementwise mean over samples."""
    flat = _stack(samples)
    return flat.mean(dim=0)


def grad_variance(samples) -> float:
    """Unbiased sample variance, averaged over dimensions:
    (1/d) (1/(n-1)) sum_j ||mu - g_j||^2."""
    flat = _stack(samples)
    n, d = flat.shape
    if n < 2:
        raise InputError("variance needs at least 2 samples")
    mu = flat.mean(dim=0)
    return float(((mu - flat) ** 2).sum() / (d * (n - 1)))


def cosine_sim(samples) -> float:
    """Mean cosine similarity between each sample and the sample mean."""
    flat = _stack(samples)
    mu = flat.mean(dim=0)
    mu_norm = mu.norm()
    if mu_norm == 0:
        raise DegenerateStatisticError("cosine similarity undefined: zero mean gradient")
    norms = flat.norm(dim=1).clamp(min=1e-30)
    return float(((flat @ mu) / (norms * mu_norm)).mean())


def sign_match(samples) -> float:
    """Mean fraction of dimensions whose sign equals the mean gradient's
    sign; zeros match only zeros."""
    flat = _stack(samples)
    mu_sign = torch.sign(flat.mean(dim=0))
    return float((torch.sign(flat) == mu_sign).double().mean())


def gradient_stats(samples) -> GradientStats:
    flat = _stack(samples)
    n, d = flat.shape
    return GradientStats(
        mean_grad=flat.mean(dim=0),
        variance=grad_variance(flat) if n >= 2 else 0.0,
        cosine=cosine_sim(flat),
        sign_match=sign_match(flat),
        n=n,
        d=d,
    )

"""Smooth stand-ins for non-differentiable scalar ops.

Rounding and modulo have zero derivative almost everywhere, which kills
first-order attacks.  The cubic-corrected round keeps the forward value close
to the exact op while giving a usable derivative; the modulo built on top of
it inherits that property.  The remaining helpers (soft clamp, soft extrema,
smooth step) exist so that every transform in the catalog stays
finite-difference checkable: hard branches would make central differences
disagree with autograd near the branch points.
"""

import math

import torch
from torch import Tensor

from ..errors import ParameterError


def smooth_round(x: Tensor) -> Tensor:
    """round(x) + (x - round(x))^3, with round-half-even tie-breaking.

    Agrees with exact rounding at integers; deviates by at most 0.125
    (attained at fractional part 0.5).  Derivative is 3(x - round(x))^2.
    """
    r = torch.round(x)
    d = x - r
    return r.detach() + d * d * d


def exact_mod(x: Tensor, divisor: float) -> Tensor:
    """Reference modulo built from exact rounding; output in [0, divisor)."""
    if divisor <= 0:
        raise ParameterError(f"modulo divisor must be positive, got {divisor}")
    u = x / divisor
    d = u - torch.round(u)
    return torch.where(d > 0, d, d + 1.0) * divisor


def smooth_mod(x: Tensor, divisor: float) -> Tensor:
    """Differentiable modulo: exact_mod with smooth_round substituted.

    For fractional parts away from 0 and 0.5 the value tracks the exact
    modulo up to the cubic smoothing error; the derivative is nonzero almost
    everywhere, unlike the exact op.
    """
    if divisor <= 0:
        raise ParameterError(f"modulo divisor must be positive, got {divisor}")
    u = x / divisor
    d = u - smooth_round(u)
    # The branch condition matches exact_mod's: the cubic correction never
    # changes the sign of (u - round(u)).
    return torch.where(d > 0, d, d + 1.0) * divisor


def smoothstep(x: Tensor, edge: float, width: float) -> Tensor:
    """C1 ramp from 0 to 1 over [edge, edge + width]; exactly 0/1 outside."""
    t = torch.clamp((x - edge) / width, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def softclamp01(x: Tensor, sharpness: float = 30.0) -> Tensor:
    """Smooth approximation of clamp(x, 0, 1) via shifted softplus pair."""
    k = sharpness
    return (torch.nn.functional.softplus(k * x) - torch.nn.functional.softplus(k * (x - 1.0))) / k


def softmax_weights(x: Tensor, dim: int, sharpness: float) -> Tensor:
    """Soft argmax weights along `dim`."""
    return torch.softmax(sharpness * x, dim=dim)


def softmax_reduce(x: Tensor, dim: int, sharpness: float = 40.0) -> Tensor:
    """Smooth maximum along `dim` (softmax-weighted average, not logsumexp,
    so the result stays inside the convex hull of the inputs)."""
    w = softmax_weights(x, dim, sharpness)
    return (w * x).sum(dim=dim)


def softmin_reduce(x: Tensor, dim: int, sharpness: float = 40.0) -> Tensor:
    """Smooth minimum along `dim`."""
    return -softmax_reduce(-x, dim, sharpness)


def smooth_abs(x: Tensor, eps: float = 1e-4) -> Tensor:
    """sqrt(x^2 + eps^2): |x| without the kink at zero."""
    return torch.sqrt(x * x + eps * eps)


TWO_PI = 2.0 * math.pi

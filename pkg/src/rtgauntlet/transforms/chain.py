"""Sequential application of a sampled transform chain."""

from __future__ import annotations

import torch
from torch import Tensor

from ..errors import ParameterError
from .catalog import get_entry
from .spec import TransformParams


def _check_strength(kind: str, alpha: float) -> None:
    entry = get_entry(kind)
    if entry.valid_range is not None:
        lo, hi = entry.valid_range
        if not lo <= alpha <= hi:
            raise ParameterError(
                f"{kind}: strength {alpha} outside valid range [{lo}, {hi}]"
            )


def apply_chain(x: Tensor, params: TransformParams) -> Tensor:
    """Apply the chain to x ([C, H, W] or [B, C, H, W]), skipping slots whose
    apply flag is off.  Output stays in [0, 1] with the input's shape; the
    input is returned untouched when nothing applies."""
    single = x.dim() == 3
    out = x.unsqueeze(0) if single else x
    for kind, applied, alpha, seed in zip(
        params.perm, params.apply_flags, params.strengths,
        params.seeds or (0,) * len(params.perm),
    ):
        if not applied:
            continue
        _check_strength(kind, alpha)
        out = get_entry(kind).fn(out, alpha, seed)
    return out.squeeze(0) if single else out


def chain_is_differentiable(params: TransformParams) -> tuple[bool, str]:
    """Whether every applied slot has an exact gradient; if not, the first
    offending kind."""
    for kind, applied in zip(params.perm, params.apply_flags):
        if applied and not get_entry(kind).differentiable:
            return False, kind
    return True, ""


def check_image(x: Tensor) -> None:
    """Validate the [0, 1] range contract."""
    if x.numel() and (x.min() < 0 or x.max() > 1):
        raise ParameterError("image values must lie in [0, 1]")

"""Trainable surrogates for non-differentiable transforms.

The surrogate is a six-layer fully-convolutional net (five 5x5 kernels plus
a final 3x3, all stride 1) fed the RGB image, two normalized coordinate
channels, and the transform's strength broadcast per pixel; the input block
is concatenated to every layer except the last.  One output pixel can only
see input pixels up to Chebyshev distance 5*2 + 1*1 = 11, which is exactly
why these surrogates cannot represent long-range transforms.

Four gradient-substitution modes wire surrogates into a chain: `exact` uses
true transform gradients, `bpda` keeps the true forward but backpropagates
through the surrogate everywhere, `identity` backpropagates as the identity,
and `combo` uses exact gradients where they exist and surrogates elsewhere.
"""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, TrainingError
from .transforms import TransformParams, get_entry
from .transforms.spec import TransformSpec

BPDA_MAGIC = "RTGAUNTLET-BPDA-v1"

GRADIENT_MODES = ("exact", "bpda", "identity", "combo")


class BpdaNet(nn.Module):
    def __init__(self, param_dim: int = 1, hidden: int = 32):
        super().__init__()
        self.param_dim = param_dim
        in_ch = 3 + 2 + param_dim
        self.conv1 = nn.Conv2d(in_ch, hidden, 5, padding=2)
        self.conv2 = nn.Conv2d(hidden + in_ch, hidden, 5, padding=2)
        self.conv3 = nn.Conv2d(hidden + in_ch, hidden, 5, padding=2)
        self.conv4 = nn.Conv2d(hidden + in_ch, hidden, 5, padding=2)
        self.conv5 = nn.Conv2d(hidden + in_ch, hidden, 5, padding=2)
        self.conv6 = nn.Conv2d(hidden, 3, 3, padding=1)

    def forward(self, x: torch.Tensor, alpha) -> torch.Tensor:
        b, _, h, w = x.shape
        ys = torch.linspace(0.0, 1.0, h, dtype=x.dtype, device=x.device)
        xs = torch.linspace(0.0, 1.0, w, dtype=x.dtype, device=x.device)
        ii, jj = torch.meshgrid(ys, xs, indexing="ij")
        coords = torch.stack([ii, jj])[None].expand(b, 2, h, w)
        parts = [x, coords]
        if self.param_dim:
            a = torch.as_tensor(alpha, dtype=x.dtype, device=x.device).reshape(-1)
            a = a.expand(self.param_dim)[None, :, None, None].expand(b, self.param_dim, h, w)
            parts.append(a)
        inp = torch.cat(parts, dim=1)
        h1 = F.relu(self.conv1(inp))
        h2 = F.relu(self.conv2(torch.cat([h1, inp], dim=1)))
        h3 = F.relu(self.conv3(torch.cat([h2, inp], dim=1)))
        h4 = F.relu(self.conv4(torch.cat([h3, inp], dim=1)))
        h5 = F.relu(self.conv5(torch.cat([h4, inp], dim=1)))
        return self.conv6(h5)


def _identity_target(x, alpha, seed):
    return x


def train_bpda(kind: str, images: torch.Tensor, rng: np.random.Generator,
               epochs: int = 10, lr: float = 0.01, batch_size: int = 32,
               spec: Optional[TransformSpec] = None, hidden: int = 32):
    """Fit a surrogate to one transform kind by minimizing the Euclidean
    distance to its output, resampling strength and auxiliary draws per
    batch.  `kind` may be "identity" for a sanity surrogate.  Returns
    (net, history) where history tracks epoch loss and the best so far."""
    if kind == "identity":
        fn, param_dim, sample_alpha = _identity_target, 0, lambda: 0.0
    else:
        entry = get_entry(kind)
        fn = entry.fn
        param_dim = entry.param_dim
        dist = (spec or entry.default_spec()).strength
        sample_alpha = (lambda: dist.sample(rng)) if dist else (lambda: 0.0)

    net = BpdaNet(param_dim=param_dim, hidden=hidden)
    torch.manual_seed(int(rng.integers(2**31)))
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    n = len(images)
    history = {"loss": [], "best_loss": []}
    best = float("inf")
    best_state = None
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for i in range(0, n, batch_size):
            xb = images[torch.from_numpy(order[i : i + batch_size])]
            alpha = sample_alpha()
            seed = int(rng.integers(2**31))
            with torch.no_grad():
                target = fn(xb, alpha, seed)
            pred = net(xb, alpha)
            # per-image Euclidean distance, averaged over the batch
            loss = (pred - target).flatten(1).norm(dim=1).mean()
            if not torch.isfinite(loss):
                raise TrainingError(f"surrogate training for {kind!r} diverged")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        epoch_loss = float(np.mean(losses))
        history["loss"].append(epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}
        history["best_loss"].append(best)
    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return net, history


def surrogate_mse(net: BpdaNet, kind: str, images: torch.Tensor, rng) -> float:
    """Per-pixel mean squared error of the surrogate on held-out images."""
    fn = _identity_target if kind == "identity" else get_entry(kind).fn
    dist = None if kind == "identity" else get_entry(kind).default_spec().strength
    total, count = 0.0, 0
    with torch.no_grad():
        for _ in range(4):
            alpha = dist.sample(rng) if dist else 0.0
            seed = int(rng.integers(2**31))
            target = fn(images, alpha, seed)
            pred = net(images, alpha)
            total += float(((pred - target) ** 2).sum())
            count += target.numel()
    return total / count


# --------------------------------------------------------------------------
# gradient substitution
# --------------------------------------------------------------------------


def apply_transform_with_mode(x: torch.Tensor, kind: str, alpha: float, seed: int,
                              mode: str, surrogates: Optional[Mapping[str, BpdaNet]] = None):
    """Apply one transform with the requested gradient path."""
    if mode not in GRADIENT_MODES:
        raise ConfigurationError(f"unknown gradient mode {mode!r}")
    entry = get_entry(kind)
    if mode == "exact" or (mode == "combo" and entry.differentiable):
        if not entry.differentiable:
            raise ConfigurationError(f"{kind!r} has no exact gradient")
        return entry.fn(x, alpha, seed)
    if mode == "identity":
        true_out = entry.fn(x.detach(), alpha, seed)
        return x + (true_out - x.detach()).detach()
    # bpda path (also combo on non-differentiable kinds)
    if surrogates is None or kind not in surrogates:
        raise ConfigurationError(f"gradient mode {mode!r} needs a surrogate for {kind!r}")
    true_out = entry.fn(x.detach(), alpha, seed)
    surr_out = surrogates[kind](x, alpha)
    return surr_out + (true_out - surr_out.detach()).detach()


def apply_chain_with_mode(x: torch.Tensor, params: TransformParams, mode: str,
                          surrogates: Optional[Mapping[str, BpdaNet]] = None) -> torch.Tensor:
    single = x.dim() == 3
    out = x.unsqueeze(0) if single else x
    for kind, applied, alpha, seed in zip(
        params.perm, params.apply_flags, params.strengths,
        params.seeds or (0,) * len(params.perm),
    ):
        if not applied:
            continue
        out = apply_transform_with_mode(out, kind, alpha, seed, mode, surrogates)
    return out.squeeze(0) if single else out


def save_surrogate(path, kind: str, net: BpdaNet):
    torch.save(
        {
            "magic": BPDA_MAGIC,
            "kind": kind,
            "param_dim": net.param_dim,
            "hidden": net.conv1.out_channels,
            "state_dict": net.state_dict(),
        },
        path,
    )


def load_surrogate(path) -> tuple[str, BpdaNet]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("magic") != BPDA_MAGIC:
        raise ConfigurationError(f"{path} is not a {BPDA_MAGIC} surrogate checkpoint")
    net = BpdaNet(param_dim=payload["param_dim"], hidden=payload["hidden"])
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return payload["kind"], net

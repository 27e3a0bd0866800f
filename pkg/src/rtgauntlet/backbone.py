"""Small pre-activation residual classifier plus its training loops.

Every residual block exposes its skip path and residual branch separately so
the backward pass can be reshaped: the branch gradient can be scaled down
(skip-gradient attacks) and the final stage's rectifiers can backpropagate
as identity (linear-backward attacks).  Both knobs change gradients only,
never forward values.
"""

from __future__ import annotations

import copy
import hashlib
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigurationError, DataError, InputError, TrainingError
from .transforms import ChainConfig, apply_chain, sample_params

CHECKPOINT_MAGIC = "RTGAUNTLET-CKPT-v1"


class _ScaleGrad(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x

    @staticmethod
    def backward(ctx, grad):
        return grad * ctx.scale, None


def scale_grad(x: torch.Tensor, scale: float) -> torch.Tensor:
    if scale == 1.0:
        return x  # bit-identical fast path
    return _ScaleGrad.apply(x, scale)


class _LinearBackwardRelu(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return F.relu(x)

    @staticmethod
    def backward(ctx, grad):
        return grad


def relu_maybe_linbp(x: torch.Tensor, linbp: bool) -> torch.Tensor:
    return _LinearBackwardRelu.apply(x) if linbp else F.relu(x)


class PreActBlock(nn.Module):
    """Pre-activation residual block with addressable branch gradient."""

    def __init__(self, c_in: int, c_out: int, stride: int):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, stride=1, padding=1, bias=False)
        self.shortcut = None
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False)
        # backward-only controls, set through Backbone
        self.branch_grad_scale = 1.0
        self.linbp = False

    def forward(self, x):
        pre = relu_maybe_linbp(self.bn1(x), self.linbp)
        skip = x if self.shortcut is None else self.shortcut(pre)
        out = self.conv1(pre)
        out = self.conv2(relu_maybe_linbp(self.bn2(out), self.linbp))
        return skip + scale_grad(out, self.branch_grad_scale)


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: int = 2
    num_classes: int = 2
    in_channels: int = 3

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "blocks_per_stage": self.blocks_per_stage,
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
        }

    @staticmethod
    def from_dict(d: dict) -> "Architecture":
        return Architecture(
            tuple(d["widths"]), d["blocks_per_stage"], d["num_classes"], d["in_channels"]
        )


class Backbone(nn.Module):
    """3-stage pre-activation ResNet for 32x32-ish inputs."""

    def __init__(self, arch: Architecture = Architecture()):
        super().__init__()
        self.arch = arch
        w = arch.widths
        self.stem = nn.Conv2d(arch.in_channels, w[0], 3, padding=1, bias=False)
        stages = []
        c_in = w[0]
        for i, width in enumerate(w):
            blocks = []
            for b in range(arch.blocks_per_stage):
                stride = 2 if (i > 0 and b == 0) else 1
                blocks.append(PreActBlock(c_in, width, stride))
                c_in = width
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.bn_final = nn.BatchNorm2d(w[-1])
        self.fc = nn.Linear(w[-1], arch.num_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.arch.in_channels:
            raise InputError(f"expected [B, {self.arch.in_channels}, H, W] input, got {tuple(x.shape)}")
        out = self.stem(x)
        for stage in self.stages:
            out = stage(out)
        out = F.relu(self.bn_final(out))
        out = out.mean(dim=(2, 3))
        return self.fc(out)

    def residual_blocks(self):
        for stage in self.stages:
            yield from stage

    def set_backward_config(self, sgm_scale: float = 1.0, linbp: bool = False,
                            linbp_stages: Optional[tuple[int, ...]] = None):
        """Configure gradient shaping; linbp applies to the last stage's
        blocks unless stages are given explicitly."""
        if linbp_stages is None:
            linbp_stages = (len(self.stages) - 1,)
        for i, stage in enumerate(self.stages):
            for block in stage:
                block.branch_grad_scale = sgm_scale
                block.linbp = linbp and i in linbp_stages

    def backward_config(self, sgm_scale: float = 1.0, linbp: bool = False,
                        linbp_stages: Optional[tuple[int, ...]] = None):
        """Context manager applying a backward configuration temporarily."""
        return _BackwardConfig(self, sgm_scale, linbp, linbp_stages)


class _BackwardConfig:
    def __init__(self, model, sgm_scale, linbp, linbp_stages):
        self.model = model
        self.args = (sgm_scale, linbp, linbp_stages)

    def __enter__(self):
        self.saved = [(b.branch_grad_scale, b.linbp) for b in self.model.residual_blocks()]
        self.model.set_backward_config(*self.args)
        return self.model

    def __exit__(self, *exc):
        for block, (scale, linbp) in zip(self.model.residual_blocks(), self.saved):
            block.branch_grad_scale = scale
            block.linbp = linbp
        return False


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class AugmentConfig:
    """Transform-chain augmentation used during training."""

    specs: list = field(default_factory=list)
    s_len: int = 1
    n_train: int = 1  # sampled chains per input per step


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.05
    weight_decay: float = 5e-4
    momentum: float = 0.9
    lr_period: int = 10
    lr_period_double: bool = True
    val_fraction: float = 0.1
    augment: Optional[AugmentConfig] = None
    adv: Optional["AdvTrainConfig"] = None

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ConfigurationError("training hyperparameters must be positive")
        if self.augment is not None and self.augment.n_train < 1:
            raise ConfigurationError("n_train must be >= 1")


@dataclass
class AdvTrainConfig:
    attack: object = None  # AttackConfig; default built by adv_train
    pretrain_clean: bool = True
    pretrain_epochs: int = 10


def _augmented_batch(xb, yb, augment: Optional[AugmentConfig], rng):
    if augment is None or not augment.specs:
        return xb, yb
    cfg = ChainConfig(tuple(augment.specs), augment.s_len)
    reps_x, reps_y = [], []
    for params in sample_params(cfg, rng, augment.n_train):
        reps_x.append(apply_chain(xb, params))
        reps_y.append(yb)
    return torch.cat(reps_x), torch.cat(reps_y)


def _evaluate_val(model, xv, yv, augment, rng, batch_size=256):
    model.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(xv), batch_size):
            xb, yb = xv[i : i + batch_size], yv[i : i + batch_size]
            if augment is not None and augment.specs:
                cfg = ChainConfig(tuple(augment.specs), augment.s_len)
                xb = apply_chain(xb, sample_params(cfg, rng, 1)[0])
            correct += (model(xb).argmax(1) == yb).sum().item()
    return correct / max(len(xv), 1)


def train_clean(model: Backbone, data, config: TrainConfig, seed: int = 0):
    """SGD training with warm-restart cosine annealing; each batch passes
    through freshly sampled transform chains.  Returns (model holding the
    best-validation weights, per-epoch history)."""
    config.validate()
    x, y = data
    if len(x) == 0:
        raise DataError("empty training set")
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)

    n_val = int(len(x) * config.val_fraction)
    order = torch.from_numpy(rng.permutation(len(x)))
    x, y = x[order], y[order]
    xv, yv = x[:n_val], y[:n_val]
    xt, yt = x[n_val:], y[n_val:]

    opt = torch.optim.SGD(
        model.parameters(), lr=config.learning_rate,
        momentum=config.momentum, weight_decay=config.weight_decay,
    )
    sched = torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(
        opt, T_0=max(config.lr_period, 1), T_mult=2 if config.lr_period_double else 1
    )

    best_acc, best_state = -1.0, copy.deepcopy(model.state_dict())
    history = []
    for epoch in range(config.epochs):
        model.train()
        perm = torch.from_numpy(rng.permutation(len(xt)))
        losses = []
        for i in range(0, len(xt), config.batch_size):
            idx = perm[i : i + config.batch_size]
            xb, yb = _augmented_batch(xt[idx], yt[idx], config.augment, rng)
            opt.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            if not torch.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        sched.step()
        val_acc = _evaluate_val(model, xv, yv, config.augment, rng)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_acc": val_acc})
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return model, history


def adv_train(model: Backbone, data, config: TrainConfig, seed: int = 0):
    """Adversarial training: every minibatch is replaced by adversarial
    examples crafted against the current model before the gradient step."""
    from .attack import AttackConfig, pgd_attack
    from .defense import DefenseConfig

    if config.adv is None:
        raise ConfigurationError("adv_train needs config.adv")
    attack_cfg = config.adv.attack or AttackConfig(
        epsilon=8 / 255, steps=50, step_size=(8 / 255) / 8,
        objective="linear", sgm_scale=0.5, optimizer="aggmo",
    )
    if attack_cfg.epsilon <= 0:
        raise ConfigurationError("adversarial training needs epsilon > 0")

    if config.adv.pretrain_clean:
        pre = TrainConfig(
            epochs=config.adv.pretrain_epochs, batch_size=config.batch_size,
            learning_rate=config.learning_rate, weight_decay=config.weight_decay,
            momentum=config.momentum, lr_period=config.lr_period,
            lr_period_double=config.lr_period_double,
            val_fraction=config.val_fraction, augment=config.augment,
        )
        model, _ = train_clean(model, data, pre, seed=seed)

    x, y = data
    if len(x) == 0:
        raise DataError("empty training set")
    rng = np.random.default_rng(seed + 1)
    torch.manual_seed(seed + 1)
    augment = config.augment or AugmentConfig()
    defense_cfg = DefenseConfig(specs=augment.specs, s_len=augment.s_len, n_infer=1)

    n_val = int(len(x) * config.val_fraction)
    order = torch.from_numpy(rng.permutation(len(x)))
    x, y = x[order], y[order]
    xv, yv = x[:n_val], y[:n_val]
    xt, yt = x[n_val:], y[n_val:]

    opt = torch.optim.SGD(
        model.parameters(), lr=config.learning_rate * 0.2,
        momentum=config.momentum, weight_decay=config.weight_decay,
    )
    sched = torch.optim.lr_scheduler.CosineAnnealingWarmRestarts(
        opt, T_0=max(config.lr_period, 1), T_mult=2 if config.lr_period_double else 1
    )

    history = []
    for epoch in range(config.epochs):
        perm = torch.from_numpy(rng.permutation(len(xt)))
        losses = []
        for i in range(0, len(xt), config.batch_size):
            idx = perm[i : i + config.batch_size]
            xb, yb = xt[idx], yt[idx]
            model.eval()
            x_adv = pgd_attack(model, xb, yb, defense_cfg, attack_cfg, rng)
            model.train()
            xb2, yb2 = _augmented_batch(x_adv.detach(), yb, augment, rng)
            opt.zero_grad()
            loss = F.cross_entropy(model(xb2), yb2)
            if not torch.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        sched.step()
        val_acc = _evaluate_val(model, xv, yv, augment, rng)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_acc": val_acc})
    model.eval()
    return model, history


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def save_checkpoint(path, model: Backbone, config_digest: str = "", extra: dict = None):
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "arch": model.arch.to_dict(),
        "state_dict": model.state_dict(),
        "config_digest": config_digest,
        "rng_state": torch.get_rng_state(),
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[Backbone, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise ConfigurationError(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
    model = Backbone(Architecture.from_dict(payload["arch"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def state_digest(model: nn.Module) -> str:
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    return hashlib.sha256(buf.getvalue()).hexdigest()[:16]

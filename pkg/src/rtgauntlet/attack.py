"""Gradient attacks on randomized-transformation defenses.

The attack maximizes a chosen objective over the epsilon-ball: per step it
samples n chain realizations (one shared ordering by default, which lowers
gradient variance), estimates the objective gradient through the transform
chain and the backbone, signs it, and feeds it to an optimizer — by default
aggregated momentum, which averages several velocity buffers with different
damping constants.  No early stopping: the expectation-maximizing threat
model wants the final iterate, not the first misclassified one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigurationError, GradientPathError, InputError
from .transforms import apply_chain, get_entry, sample_params

OBJECTIVES = ("eot_ce", "softmax_ce", "logits_ce", "linear")
OPTIMIZERS = ("sgd_momentum", "adam", "aggmo")


def aggmo_betas(b: int = 6, a: float = 0.1) -> tuple[float, ...]:
    """Damping ladder 1 - a^(b-1): 0, 0.9, 0.99, ... for a=0.1."""
    return tuple(1.0 - a ** i for i in range(b))


@dataclass
class AttackConfig:
    epsilon: float = 8 / 255
    steps: int = 200
    step_size: Optional[float] = None  # default epsilon / 4
    step_schedule: Optional[Sequence[tuple[int, float]]] = None  # (from_step, size)
    n_attack: int = 10
    objective: str = "linear"
    target: Optional[str] = None  # None | "auto" (targeted linear)
    sgm_scale: float = 1.0
    linbp: bool = False
    optimizer: str = "aggmo"
    momentum: float = 0.9  # sgd_momentum damping
    adam_betas: tuple[float, float] = (0.9, 0.999)
    aggmo: tuple[float, ...] = field(default_factory=aggmo_betas)
    momentum_boosting: bool = False
    mb_decay: float = 1.0
    fixed_perm: bool = True
    signed: bool = True
    gradient_mode: str = "exact"  # exact | bpda | identity | combo
    seed_offset: int = 0

    def __post_init__(self):
        if self.epsilon < 0 or self.steps < 0 or self.n_attack < 1:
            raise ConfigurationError("epsilon/steps/n_attack out of range")
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"unknown objective {self.objective!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if len(set(self.aggmo)) != len(self.aggmo) or any(not 0 <= m < 1 for m in self.aggmo):
            raise ConfigurationError("aggmo constants must be distinct and in [0, 1)")
        if not 0 < self.sgm_scale <= 1:
            raise ConfigurationError("sgm_scale must be in (0, 1]")

    def step_size_at(self, t: int) -> float:
        if self.step_schedule:
            size = None
            for start, value in self.step_schedule:
                if t >= start:
                    size = value
            if size is not None:
                return size
        return self.step_size if self.step_size is not None else self.epsilon / 4.0


@dataclass
class AttackState:
    """Live optimizer state for one batch of inputs."""

    delta: torch.Tensor
    velocities: list[torch.Tensor]
    step_index: int = 0


# --------------------------------------------------------------------------
# objectives
# --------------------------------------------------------------------------


def _losses_batch(logit_samples: torch.Tensor, y: torch.Tensor, objective: str,
                  target: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Per-input loss [B] from per-sample logits [n, B, C]."""
    n, b, c = logit_samples.shape
    if objective == "eot_ce":
        flat = logit_samples.reshape(n * b, c)
        ce = F.cross_entropy(flat, y.repeat(n), reduction="none")
        return ce.reshape(n, b).mean(dim=0)
    if objective == "softmax_ce":
        mean_soft = torch.softmax(logit_samples, dim=-1).mean(dim=0)
        return -torch.log(mean_soft.gather(1, y[:, None]).squeeze(1).clamp(min=1e-12))
    if objective == "logits_ce":
        return F.cross_entropy(logit_samples.mean(dim=0), y, reduction="none")
    if objective == "linear":
        mean_logits = logit_samples.mean(dim=0)
        own = mean_logits.gather(1, y[:, None]).squeeze(1)
        if target is not None:
            other = mean_logits.gather(1, target[:, None]).squeeze(1)
        else:
            masked = mean_logits.scatter(1, y[:, None], float("-inf"))
            other = masked.max(dim=1).values
        return other - own
    raise ConfigurationError(f"unknown objective {objective!r}")


def objective_value(logit_samples: torch.Tensor, y: int, objective: str,
                    target: Optional[int] = None) -> torch.Tensor:
    """Scalar attack loss for one input's [n, C] logit samples."""
    if logit_samples.dim() != 2:
        raise InputError("expected [n, C] logit samples")
    c = logit_samples.shape[1]
    if not 0 <= y < c:
        raise InputError(f"label {y} out of range for {c} classes")
    t = None if target is None else torch.tensor([target])
    return _losses_batch(logit_samples[:, None, :], torch.tensor([y]), objective, t)[0]


# --------------------------------------------------------------------------
# gradient estimation
# --------------------------------------------------------------------------


def _chain_forward(x: torch.Tensor, params, mode: str, surrogates):
    if mode == "exact":
        ok, kind = _chain_diff_ok(params)
        if not ok:
            raise GradientPathError(
                f"transform {kind!r} has no exact gradient; use a surrogate gradient mode"
            )
        return apply_chain(x, params)
    from .bpda import apply_chain_with_mode

    return apply_chain_with_mode(x, params, mode, surrogates)


def _chain_diff_ok(params):
    for kind, applied in zip(params.perm, params.apply_flags):
        if applied and not get_entry(kind).differentiable:
            return False, kind
    return True, ""


def grad_estimate(model, x_adv: torch.Tensor, y: torch.Tensor, defense_cfg, cfg: AttackConfig,
                  rng, surrogates=None, target: Optional[torch.Tensor] = None,
                  collect_samples: bool = False):
    """Estimate the objective gradient at x_adv ([B, C, H, W]).

    Returns the (optionally signed) gradient; with collect_samples also the
    per-sample signed single-draw gradients used by the spread diagnostics.
    """
    draws = (
        sample_params(defense_cfg, rng, cfg.n_attack, fixed_perm=cfg.fixed_perm)
        if defense_cfg.specs
        else [None] * cfg.n_attack
    )
    xg = x_adv.detach().clone().requires_grad_(True)
    logits = []
    with model.backward_config(sgm_scale=cfg.sgm_scale, linbp=cfg.linbp):
        for params in draws:
            xt = xg if params is None else _chain_forward(xg, params, cfg.gradient_mode, surrogates)
            logits.append(model(xt))
        stacked = torch.stack(logits)  # [n, B, C]
        loss = _losses_batch(stacked, y, cfg.objective, target).sum()
        grad = torch.autograd.grad(loss, xg)[0]
    out = torch.sign(grad) if cfg.signed else grad

    if not collect_samples:
        return out

    # single-draw signed gradients: replicate the batch, one chain each
    n = cfg.n_attack
    xr = x_adv.detach().repeat(n, 1, 1, 1).requires_grad_(True)
    b = x_adv.shape[0]
    per = []
    with model.backward_config(sgm_scale=cfg.sgm_scale, linbp=cfg.linbp):
        for i, params in enumerate(draws):
            xi = xr[i * b : (i + 1) * b]
            xt = xi if params is None else _chain_forward(xi, params, cfg.gradient_mode, surrogates)
            per.append(model(xt))
        stacked1 = torch.stack(per)  # [n, B, C]
        losses = torch.stack(
            [_losses_batch(stacked1[i : i + 1], y, cfg.objective, target) for i in range(n)]
        )
        grads = torch.autograd.grad(losses.sum(), xr)[0]
    sample_grads = torch.sign(grads.reshape(n, *x_adv.shape))
    return out, sample_grads


# --------------------------------------------------------------------------
# update rules
# --------------------------------------------------------------------------


def momentum_boost(prev_accum: torch.Tensor, grad: torch.Tensor, decay: float = 1.0) -> torch.Tensor:
    """Accumulate l1-normalized gradients; zero gradients decay the history."""
    if prev_accum.shape != grad.shape:
        raise InputError("accumulator/gradient shape mismatch")
    flat = grad.reshape(grad.shape[0], -1) if grad.dim() > 1 else grad.reshape(1, -1)
    norm = flat.abs().sum(dim=1).clamp(min=0.0)
    scale = torch.where(norm > 0, 1.0 / norm.clamp(min=1e-30), torch.zeros_like(norm))
    shaped = scale.reshape(-1, *([1] * (grad.dim() - 1))) if grad.dim() > 1 else scale
    return decay * prev_accum + grad * shaped


def aggmo_step(state: AttackState, grad_sign: torch.Tensor, step_size: float,
               betas: Sequence[float]) -> AttackState:
    """One aggregated-momentum update: each velocity v_b <- mu_b v_b + g,
    position += step/B * sum(v_b)."""
    if len(state.velocities) != len(betas):
        raise ConfigurationError("velocity count must match damping constants")
    update = torch.zeros_like(state.delta)
    for i, mu in enumerate(betas):
        state.velocities[i] = state.velocities[i] * mu + grad_sign
        update = update + state.velocities[i]
    state.delta = state.delta + (step_size / len(betas)) * update
    state.step_index += 1
    return state


def project(x_adv: torch.Tensor, x: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Clamp the perturbation into the epsilon box, then into pixel range."""
    delta = torch.clamp(x_adv - x, -epsilon, epsilon)
    return torch.clamp(x + delta, 0.0, 1.0)


class _Adam:
    def __init__(self, shape, betas, eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = torch.zeros(shape)
        self.v = torch.zeros(shape)
        self.t = 0

    def update(self, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return mhat / (vhat.sqrt() + self.eps)


# --------------------------------------------------------------------------
# the attack loop
# --------------------------------------------------------------------------


def pgd_attack(model, x: torch.Tensor, y: torch.Tensor, defense_cfg, cfg: AttackConfig,
               rng, surrogates=None, snapshot_steps: Optional[Sequence[int]] = None):
    """Projected-ascent attack on a batch; returns the final iterate (and
    snapshots at the requested step counts when asked)."""
    single = x.dim() == 3
    xb = x.unsqueeze(0) if single else x
    yb = torch.as_tensor([y] if single else y, dtype=torch.long)
    model.eval()

    gen = torch.Generator().manual_seed(int(rng.integers(2**63 - 1)) ^ cfg.seed_offset)
    lo = torch.clamp(xb - cfg.epsilon, min=0.0)
    hi = torch.clamp(xb + cfg.epsilon, max=1.0)
    u = (torch.rand(xb.shape, generator=gen, dtype=torch.float32) * 2.0 - 1.0) * cfg.epsilon
    x_adv = torch.clamp(xb + u.to(xb.dtype), 0.0, 1.0)
    x_adv = torch.min(torch.max(x_adv, lo), hi)

    target = None
    if cfg.target == "auto" and cfg.objective == "linear":
        # pick the strongest wrong class at the random start
        draws = (
            sample_params(defense_cfg, rng, cfg.n_attack, fixed_perm=cfg.fixed_perm)
            if defense_cfg.specs else [None] * cfg.n_attack
        )
        with torch.no_grad():
            samples = torch.stack(
                [model(x_adv if p is None else apply_chain(x_adv, p)) for p in draws]
            )
        masked = samples.mean(dim=0).scatter(1, yb[:, None], float("-inf"))
        target = masked.argmax(dim=1)

    state = AttackState(
        delta=x_adv - xb,
        velocities=[torch.zeros_like(xb) for _ in range(len(cfg.aggmo))],
    )
    adam = _Adam(xb.shape, cfg.adam_betas) if cfg.optimizer == "adam" else None
    sgd_v = torch.zeros_like(xb)
    mb_accum = torch.zeros_like(xb)
    snapshots = {}
    want = set(snapshot_steps or ())

    for t in range(cfg.steps):
        raw = grad_estimate(model, x_adv, yb, defense_cfg, _unsigned(cfg), rng, surrogates, target)
        if cfg.momentum_boosting:
            mb_accum = momentum_boost(mb_accum, raw, cfg.mb_decay)
            raw = mb_accum
        g = torch.sign(raw) if cfg.signed else raw
        gamma = cfg.step_size_at(t)
        if cfg.optimizer == "aggmo":
            state.delta = x_adv - xb
            aggmo_step(state, g, gamma, cfg.aggmo)
            x_adv = xb + state.delta
        elif cfg.optimizer == "sgd_momentum":
            sgd_v = cfg.momentum * sgd_v + g
            x_adv = x_adv + gamma * sgd_v
        else:
            x_adv = x_adv + gamma * adam.update(g)
        x_adv = torch.min(torch.max(x_adv, lo), hi)
        if (t + 1) in want:
            snapshots[t + 1] = x_adv.detach().clone()

    x_adv = x_adv.detach()
    out = x_adv.squeeze(0) if single else x_adv
    if snapshot_steps is not None:
        return out, snapshots
    return out


def _unsigned(cfg: AttackConfig) -> AttackConfig:
    from dataclasses import replace

    return replace(cfg, signed=False)

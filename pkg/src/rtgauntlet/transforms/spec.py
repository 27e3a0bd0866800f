"""Transform descriptors and the sampling of chain realizations.

A defense is configured by K `TransformSpec`s plus a chain length S.  One
realization of the chain's randomness is a `TransformParams`: an ordered
draw of S distinct kinds, a Bernoulli apply flag and a strength value per
slot, plus a per-slot seed for the auxiliary draws a transform makes
internally (noise fields, box positions, ...).  Keeping those draws keyed by
a seed fixed at sampling time makes every transform application a pure
function of (input, strength, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigurationError, ParameterError

GROUPS = (
    "noise",
    "blur",
    "color",
    "edge",
    "compression",
    "geometric",
    "stylization",
)

_SEED_MAX = 2**63 - 1


@dataclass(frozen=True)
class StrengthDist:
    """Distribution of a transform's strength in its native units.

    `weak` is the end of the range closest to the identity transform and
    `strong` the most aggressive end; tuning interpolates the strong end
    toward `weak`, so a tuning value of 0 prunes the transform's effect.
    """

    weak: float
    strong: float
    dist: str = "uniform"  # "uniform" | "normal"

    def __post_init__(self):
        if self.dist not in ("uniform", "normal"):
            raise ParameterError(f"unknown strength distribution {self.dist!r}")

    @property
    def low(self) -> float:
        return min(self.weak, self.strong)

    @property
    def high(self) -> float:
        return max(self.weak, self.strong)

    def sample(self, rng: np.random.Generator) -> float:
        if self.weak == self.strong:
            return float(self.weak)
        if self.dist == "uniform":
            return float(rng.uniform(self.low, self.high))
        mean = 0.5 * (self.weak + self.strong)
        sd = abs(self.strong - self.weak) / 6.0
        return float(np.clip(rng.normal(mean, sd), self.low, self.high))

    def rescaled(self, v: float) -> "StrengthDist":
        """Move the strong end to weak + v * (strong - weak), v in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ParameterError(f"tuning value must be in [0, 1], got {v}")
        return StrengthDist(self.weak, self.weak + v * (self.strong - self.weak), self.dist)


@dataclass(frozen=True)
class TransformSpec:
    """One configured transform: its kind, apply probability and strength."""

    kind: str
    group: str
    apply_prob: float
    strength: Optional[StrengthDist]
    differentiable: bool = True
    tune: Optional[str] = None  # "p", "a", or None (not tuned)

    def __post_init__(self):
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ParameterError(
                f"{self.kind}: apply_prob must be in [0, 1], got {self.apply_prob}"
            )
        if self.group not in GROUPS:
            raise ParameterError(f"{self.kind}: unknown group {self.group!r}")
        if self.tune not in (None, "p", "a"):
            raise ConfigurationError(
                f"{self.kind}: tune must be 'p', 'a' or None, got {self.tune!r}"
            )
        if self.tune == "a" and self.strength is None:
            raise ConfigurationError(f"{self.kind}: cannot tune strength, none defined")


@dataclass(frozen=True)
class TransformParams:
    """One sampled realization of a transform chain."""

    perm: tuple[str, ...]
    apply_flags: tuple[bool, ...]
    strengths: tuple[float, ...]
    seeds: tuple[int, ...] = field(default=())

    def __post_init__(self):
        s = len(self.perm)
        if len(set(self.perm)) != s:
            raise ParameterError("chain permutation entries must be distinct")
        if len(self.apply_flags) != s or len(self.strengths) != s:
            raise ParameterError("perm, apply_flags and strengths must share one length")
        if self.seeds and len(self.seeds) != s:
            raise ParameterError("seeds, when given, must have one entry per slot")


@dataclass(frozen=True)
class ChainConfig:
    """Minimal sampling config: the K specs plus the chain length S."""

    specs: tuple
    s_len: int


def sample_params(
    config,
    rng: np.random.Generator,
    n: int,
    fixed_perm: bool = False,
) -> list[TransformParams]:
    """Draw n chain realizations from `config` (anything with .specs and .s_len).

    Each realization orders `s_len` distinct kinds uniformly out of the K
    configured ones.  With `fixed_perm` a single ordering is shared by all n
    draws while apply flags, strengths and auxiliary seeds stay independent.
    """
    specs: Sequence[TransformSpec] = config.specs
    s_len: int = config.s_len
    k = len(specs)
    if not 1 <= s_len <= k:
        raise ConfigurationError(f"need 1 <= S <= K, got S={s_len}, K={k}")
    by_index = list(specs)

    def draw_perm() -> tuple[int, ...]:
        return tuple(int(i) for i in rng.permutation(k)[:s_len])

    shared = draw_perm() if fixed_perm else None
    out = []
    for _ in range(n):
        idx = shared if shared is not None else draw_perm()
        flags, strengths, seeds = [], [], []
        for i in idx:
            spec = by_index[i]
            flags.append(bool(rng.random() < spec.apply_prob))
            strengths.append(spec.strength.sample(rng) if spec.strength else 0.0)
            seeds.append(int(rng.integers(0, _SEED_MAX)))
        out.append(
            TransformParams(
                perm=tuple(by_index[i].kind for i in idx),
                apply_flags=tuple(flags),
                strengths=tuple(strengths),
                seeds=tuple(seeds),
            )
        )
    return out

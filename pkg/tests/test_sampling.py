"""Chain-realization sampling: permutation statistics, flags, seeds."""

from dataclasses import dataclass

import numpy as np
import pytest
from scipy import stats

from rtgauntlet.errors import ConfigurationError, ParameterError
from rtgauntlet.transforms import StrengthDist, TransformParams, TransformSpec, sample_params, specs_for


@dataclass
class Cfg:
    specs: list
    s_len: int


def _cfg(kinds, s_len, p=1.0):
    specs = specs_for(kinds)
    specs = [type(s)(s.kind, s.group, p, s.strength, s.differentiable, s.tune) for s in specs]
    return Cfg(specs, s_len)


KINDS5 = ["gaussian-noise", "uniform-noise", "erase", "affine", "crop"]


def test_degenerate_space():
    cfg = _cfg(["gaussian-noise"], 1, p=1.0)
    (params,) = sample_params(cfg, np.random.default_rng(0), 1)
    assert params.perm == ("gaussian-noise",)
    assert params.apply_flags == (True,)
    lo, hi = cfg.specs[0].strength.low, cfg.specs[0].strength.high
    assert lo <= params.strengths[0] <= hi


def test_zero_probability_never_applies():
    cfg = _cfg(KINDS5, 3, p=0.0)
    for params in sample_params(cfg, np.random.default_rng(1), 50):
        assert not any(params.apply_flags)


def test_kind_frequency_matches_uniform_permutations():
    # K=5, S=3: every kind appears with probability 3/5
    cfg = _cfg(KINDS5, 3)
    rng = np.random.default_rng(7)
    counts = {k: 0 for k in KINDS5}
    n = 100_000
    for params in sample_params(cfg, rng, n):
        for k in params.perm:
            counts[k] += 1
    for k, c in counts.items():
        assert c / n == pytest.approx(0.6, abs=0.01), k


def test_fixed_perm_shares_ordering_but_not_strengths():
    cfg = _cfg(KINDS5, 3)
    draws = sample_params(cfg, np.random.default_rng(3), 40, fixed_perm=True)
    perms = {p.perm for p in draws}
    assert len(perms) == 1
    assert len({p.strengths for p in draws}) > 1
    assert len({p.seeds for p in draws}) > 1


def test_random_perm_uniform_over_ordered_subsets():
    # chi-square over Perm(K=4, S=2) = 12 outcomes must not reject at 1%
    kinds = KINDS5[:4]
    cfg = _cfg(kinds, 2)
    rng = np.random.default_rng(11)
    counts = {}
    n = 10_000
    for params in sample_params(cfg, rng, n):
        counts[params.perm] = counts.get(params.perm, 0) + 1
    assert len(counts) == 12
    _, p = stats.chisquare(list(counts.values()))
    assert p > 0.01


def test_s_larger_than_k_rejected():
    cfg = _cfg(KINDS5[:2], 3)
    with pytest.raises(ConfigurationError):
        sample_params(cfg, np.random.default_rng(0), 1)


def test_params_validation():
    with pytest.raises(ParameterError):
        TransformParams(perm=("a", "a"), apply_flags=(True, True), strengths=(0.0, 0.0))
    with pytest.raises(ParameterError):
        TransformParams(perm=("a", "b"), apply_flags=(True,), strengths=(0.0, 0.0))


def test_spec_validation():
    with pytest.raises(ParameterError):
        TransformSpec("gaussian-noise", "noise", 1.5, StrengthDist(0.0, 0.1))
    with pytest.raises(ConfigurationError):
        TransformSpec("hflip", "geometric", 0.5, None, tune="a")
    with pytest.raises(ConfigurationError):
        TransformSpec("hflip", "geometric", 0.5, None, tune="both")


def test_strength_rescaling_round_trips():
    dist = StrengthDist(weak=100.0, strong=30.0)
    for v in np.linspace(0.0, 1.0, 11):
        scaled = dist.rescaled(v)
        recovered = (scaled.strong - dist.weak) / (dist.strong - dist.weak)
        assert recovered == pytest.approx(v, abs=1e-9)

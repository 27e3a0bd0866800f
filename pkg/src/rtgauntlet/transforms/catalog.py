"""The transform catalog: every supported kind with its defaults.

Kinds with a meaningful strength default to apply_prob 1 and are tuned via
their strength; kinds without one are tuned via their apply probability.
`weak` is the identity-most end of the native strength range, `strong` the
most aggressive; valid_range bounds what a strength may ever be set to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from ..errors import ParameterError
from . import ops
from .spec import StrengthDist, TransformSpec


@dataclass(frozen=True)
class CatalogEntry:
    kind: str
    group: str
    fn: Callable
    differentiable: bool
    apply_prob: float
    weak: Optional[float]  # None -> kind has no strength knob
    strong: Optional[float]
    valid_range: Optional[tuple[float, float]]
    tune: Optional[str]

    def default_spec(self) -> TransformSpec:
        strength = None if self.weak is None else StrengthDist(self.weak, self.strong)
        return TransformSpec(
            kind=self.kind,
            group=self.group,
            apply_prob=self.apply_prob,
            strength=strength,
            differentiable=self.differentiable,
            tune=self.tune,
        )

    @property
    def param_dim(self) -> int:
        """Strength dimensionality, i.e. surrogate parameter channels."""
        return 0 if self.weak is None else 1


def _e(kind, group, fn, weak, strong, valid, diff=True, p=1.0, tune="a"):
    return CatalogEntry(kind, group, fn, diff, p, weak, strong, valid, tune)


def _p(kind, group, fn, diff=True, p=0.5):
    # strength-free kind: only its apply probability can be tuned
    return CatalogEntry(kind, group, fn, diff, p, None, None, None, "p")


_ENTRIES = [
    # noise injection
    _e("erase", "noise", ops.erase, 0.05, 0.4, (0.0, 0.6)),
    _e("gaussian-noise", "noise", ops.gaussian_noise, 0.0, 0.15, (0.0, 1.0)),
    _e("pepper", "noise", ops.pepper, 0.0, 0.1, (0.0, 0.5)),
    _e("poisson-noise", "noise", ops.poisson_noise, 0.0, 0.2, (0.0, 1.0)),
    _e("salt", "noise", ops.salt, 0.0, 0.1, (0.0, 0.5)),
    _e("speckle-noise", "noise", ops.speckle_noise, 0.0, 0.3, (0.0, 1.0)),
    _e("uniform-noise", "noise", ops.uniform_noise, 0.0, 0.2, (0.0, 1.0)),
    # blur filtering
    _e("box-blur", "blur", ops.box_blur, 1.0, 5.0, (1.0, 7.0)),
    _e("gaussian-blur", "blur", ops.gaussian_blur, 0.01, 1.5, (0.0, 3.0)),
    _e("median-blur", "blur", ops.median_blur, 1.0, 4.0, (1.0, 5.0)),
    _e("motion-blur", "blur", ops.motion_blur, 1.0, 6.0, (1.0, 7.0)),
    # color-space alteration
    _e("hsv", "color", ops.hsv_alter, 0.0, 0.2, (0.0, 0.5)),
    _e("lab", "color", ops.lab_alter, 0.0, 0.2, (0.0, 0.5)),
    _e("xyz", "color", ops.xyz_alter, 0.0, 0.2, (0.0, 0.5)),
    _e("yuv", "color", ops.yuv_alter, 0.0, 0.2, (0.0, 0.5)),
    _p("gray-mix", "color", ops.gray_mix),
    _p("gray-partial-mix", "color", ops.gray_partial_mix),
    _p("two-channel-gray", "color", ops.two_channel_gray),
    _p("one-channel-partial-gray", "color", ops.one_channel_partial_gray),
    # edge detection
    _p("laplacian", "edge", ops.laplacian),
    _p("sobel", "edge", ops.sobel),
    # lossy compression
    _e("jpeg", "compression", ops.jpeg, 100.0, 30.0, (1.0, 100.0)),
    _e("color-precision-reduction", "compression", ops.color_precision_reduction, 64.0, 8.0, (2.0, 256.0)),
    _e("fft-perturbation", "compression", ops.fft_perturbation, 0.0, 0.4, (0.0, 1.0)),
    # geometric
    _e("affine", "geometric", ops.affine, 0.0, 20.0, (0.0, 45.0)),
    _e("crop", "geometric", ops.crop, 1.0, 0.6, (0.3, 1.0)),
    _p("hflip", "geometric", ops.hflip),
    _p("vflip", "geometric", ops.vflip),
    _e("swirl", "geometric", ops.swirl, 0.0, 2.5, (0.0, 5.0)),
    # stylization
    _e("color-jitter", "stylization", ops.color_jitter, 0.0, 0.4, (0.0, 1.0)),
    _e("gamma", "stylization", ops.gamma, 0.0, 0.7, (0.0, 1.5)),
    _e("sharpen", "stylization", ops.sharpen, 0.0, 2.0, (0.0, 4.0)),
    _e("solarize", "stylization", ops.solarize, 1.0, 0.5, (0.3, 1.0)),
    # non-differentiable (surrogate-only gradient paths)
    _p("histogram-equalization", "stylization", ops.histogram_equalization, diff=False),
    _p("adaptive-histogram", "stylization", ops.adaptive_histogram, diff=False),
    _p("contrast-stretching", "stylization", ops.contrast_stretching, diff=False),
]

CATALOG: dict[str, CatalogEntry] = {e.kind: e for e in _ENTRIES}

DIFFERENTIABLE_KINDS = tuple(e.kind for e in _ENTRIES if e.differentiable)
NON_DIFFERENTIABLE_KINDS = tuple(e.kind for e in _ENTRIES if not e.differentiable)


def get_entry(kind: str) -> CatalogEntry:
    try:
        return CATALOG[kind]
    except KeyError:
        raise ParameterError(f"unknown transform kind {kind!r}") from None


def transform_catalog() -> list[TransformSpec]:
    """Default spec for every catalog kind."""
    return [e.default_spec() for e in _ENTRIES]


def specs_for(kinds, overrides: Optional[dict] = None) -> list[TransformSpec]:
    """Default specs for a subset of kinds, with optional per-kind field
    overrides ({kind: {field: value}})."""
    out = []
    for kind in kinds:
        spec = get_entry(kind).default_spec()
        if overrides and kind in overrides:
            from dataclasses import replace

            out.append(replace(spec, **overrides[kind]))
        else:
            out.append(spec)
    return out

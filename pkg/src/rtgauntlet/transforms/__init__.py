"""Differentiable image transformations, their sampling and composition."""

from .catalog import (
    CATALOG,
    DIFFERENTIABLE_KINDS,
    NON_DIFFERENTIABLE_KINDS,
    CatalogEntry,
    get_entry,
    specs_for,
    transform_catalog,
)
from .chain import apply_chain, chain_is_differentiable, check_image
from .smooth import exact_mod, smooth_mod, smooth_round
from .spec import ChainConfig, StrengthDist, TransformParams, TransformSpec, sample_params

__all__ = [
    "CATALOG",
    "DIFFERENTIABLE_KINDS",
    "NON_DIFFERENTIABLE_KINDS",
    "CatalogEntry",
    "ChainConfig",
    "StrengthDist",
    "TransformParams",
    "TransformSpec",
    "apply_chain",
    "chain_is_differentiable",
    "check_image",
    "exact_mod",
    "get_entry",
    "sample_params",
    "smooth_mod",
    "smooth_round",
    "specs_for",
    "transform_catalog",
]

"""Experiment configuration: YAML files, dotted overrides, digests.

A config is a nested mapping with one section per pipeline concern.  Every
artifact records the sha256 digest of the canonical (sorted-key JSON)
config so mismatched artifacts refuse to combine.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from typing import Optional, Sequence

import yaml

from ..attack import AttackConfig, aggmo_betas
from ..backbone import AdvTrainConfig, AugmentConfig, TrainConfig
from ..defense import DefenseConfig
from ..errors import ConfigurationError
from ..transforms import StrengthDist, get_entry

DEFAULTS: dict = {
    "seed": 0,
    "dataset": {"type": "synthetic", "size": 32, "classes": 2, "n_train": 2000, "n_test": 500},
    "defense": {
        "s_len": 2,
        "n_infer": 16,
        "rule": "softmax_mean",
        "transforms": [{"kind": "gaussian-noise"}, {"kind": "affine"}, {"kind": "crop"}],
    },
    "train": {
        "epochs": 20,
        "batch_size": 128,
        "learning_rate": 0.05,
        "weight_decay": 5e-4,
        "momentum": 0.9,
        "lr_period": 10,
        "lr_period_double": True,
        "val_fraction": 0.1,
        "n_train": 1,
    },
    "adv": {
        "epochs": 8,
        "steps": 50,
        "step_size": None,  # epsilon / 8
        "n_attack": 2,
        "pretrain_clean": True,
        "pretrain_epochs": 10,
    },
    "attack": {
        "epsilon": "8/255",
        "steps": 200,
        "step_size": None,  # epsilon / 4
        "n_attack": 10,
        "objective": "linear",
        "sgm_scale": 0.5,
        "linbp": False,
        "optimizer": "aggmo",
        "aggmo_b": 6,
        "momentum": 0.9,
        "momentum_boosting": False,
        "fixed_perm": True,
        "signed": True,
        "gradient_mode": "exact",
        "target": None,
        "n_eval_inputs": 100,
        "snapshot_every": 0,
    },
    "eval": {"n_runs": 10, "at_least_once_trials": 0},
    "tuner": {
        "budget": 160,
        "patience": 40,
        "min_trials": 80,
        "workers": 1,
        "train_fraction": 0.2,
        "val_samples": 200,
        "trial_epochs": 10,
        "attack_steps": 100,
        "attack_n": 10,
        "finalize": False,
        "final_n_train": 4,
    },
    "bpda": {"kinds": None, "epochs": 10, "lr": 0.01, "hidden": 32, "n_images": 256},
    "diagnose": {
        "n_inputs": 100,
        "n_samples": 10,
        "variants": [
            {"name": "eot_ce", "objective": "eot_ce"},
            {"name": "softmax_ce", "objective": "softmax_ce"},
            {"name": "logits_ce", "objective": "logits_ce"},
            {"name": "linear", "objective": "linear"},
            {"name": "linear+sgm", "objective": "linear", "sgm_scale": 0.5},
        ],
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    return yaml.safe_load(text)


def apply_overrides(cfg: dict, overrides: Sequence[str]) -> dict:
    """Apply `section.key=value` strings onto the nested config."""
    out = json.loads(json.dumps(cfg))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override through scalar at {part!r}")
        node[parts[-1]] = _parse_value(raw)
    return out


def load_config(path: Optional[str] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        cfg = _merge(cfg, user)
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def fraction(value) -> float:
    """Numbers may be written as fractions like '8/255' in config files."""
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/", 1)
        return float(num) / float(den)
    return float(value)


# --------------------------------------------------------------------------
# builders from config blocks to typed configs
# --------------------------------------------------------------------------


def build_defense(cfg: dict) -> DefenseConfig:
    block = cfg["defense"]
    specs = []
    for item in block.get("transforms", []):
        spec = get_entry(item["kind"]).default_spec()
        if "apply_prob" in item:
            spec = replace(spec, apply_prob=float(item["apply_prob"]))
        if "strength" in item and item["strength"] is not None:
            sd = item["strength"]
            spec = replace(
                spec,
                strength=StrengthDist(float(sd["weak"]), float(sd["strong"]), sd.get("dist", "uniform")),
            )
        if "tune" in item:
            spec = replace(spec, tune=item["tune"])
        specs.append(spec)
    return DefenseConfig(
        specs=specs,
        s_len=int(block.get("s_len", 1)),
        n_infer=int(block.get("n_infer", 16)),
        rule=block.get("rule", "softmax_mean"),
    )


def build_attack(cfg: dict, **over) -> AttackConfig:
    block = dict(cfg["attack"])
    block.update(over)
    eps = fraction(block["epsilon"])
    step = block.get("step_size")
    aggmo = aggmo_betas(int(block.get("aggmo_b", 6)))
    return AttackConfig(
        epsilon=eps,
        steps=int(block["steps"]),
        step_size=None if step is None else fraction(step),
        n_attack=int(block["n_attack"]),
        objective=block["objective"],
        target=block.get("target"),
        sgm_scale=float(block.get("sgm_scale", 1.0)),
        linbp=bool(block.get("linbp", False)),
        optimizer=block.get("optimizer", "aggmo"),
        momentum=float(block.get("momentum", 0.9)),
        aggmo=aggmo,
        momentum_boosting=bool(block.get("momentum_boosting", False)),
        fixed_perm=bool(block.get("fixed_perm", True)),
        signed=bool(block.get("signed", True)),
        gradient_mode=block.get("gradient_mode", "exact"),
    )


def build_train(cfg: dict, defense: DefenseConfig, with_adv: bool = False) -> TrainConfig:
    block = cfg["train"]
    augment = AugmentConfig(
        specs=list(defense.specs), s_len=defense.s_len, n_train=int(block.get("n_train", 1))
    )
    adv = None
    if with_adv:
        ab = cfg["adv"]
        eps = fraction(cfg["attack"]["epsilon"])
        step = ab.get("step_size")
        adv = AdvTrainConfig(
            attack=AttackConfig(
                epsilon=eps,
                steps=int(ab.get("steps", 50)),
                step_size=fraction(step) if step is not None else eps / 8.0,
                n_attack=int(ab.get("n_attack", 2)),
                objective="linear",
                sgm_scale=0.5,
                optimizer="aggmo",
            ),
            pretrain_clean=bool(ab.get("pretrain_clean", True)),
            pretrain_epochs=int(ab.get("pretrain_epochs", 10)),
        )
    return TrainConfig(
        epochs=int(cfg["adv"]["epochs"]) if with_adv else int(block["epochs"]),
        batch_size=int(block["batch_size"]),
        learning_rate=float(block["learning_rate"]),
        weight_decay=float(block["weight_decay"]),
        momentum=float(block["momentum"]),
        lr_period=int(block["lr_period"]),
        lr_period_double=bool(block["lr_period_double"]),
        val_fraction=float(block["val_fraction"]),
        augment=augment,
        adv=adv,
    )

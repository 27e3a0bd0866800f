"""Stochastic-defense evaluation: repeated runs with confidence intervals.

Adversarial inputs are generated once; accuracy is then computed n_runs
times, re-seeding only the defense's transform sampling, and reported as
mean with a normal-approximation 95% interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..defense import DefenseConfig, predict_labels_batch


@dataclass
class EvalResult:
    mean: float
    ci_half: float | None
    per_run: list[float] = field(default_factory=list)
    n_runs: int = 0
    config_digest: str = ""


def evaluate_with_ci(model, defense_cfg: DefenseConfig, inputs: torch.Tensor,
                     labels: torch.Tensor, n_runs: int = 10, seed: int = 0,
                     config_digest: str = "", batch_size: int = 128) -> EvalResult:
    """Accuracy of the defended model on fixed inputs over n_runs re-seeded
    evaluations; the interval is 1.96 * sample std / sqrt(n_runs)."""
    accs = []
    labels_np = labels.numpy()
    for run in range(max(n_runs, 1)):
        rng = np.random.default_rng((seed, run))
        correct = 0
        for i in range(0, len(inputs), batch_size):
            pred = predict_labels_batch(model, inputs[i : i + batch_size], defense_cfg, rng)
            correct += int((pred == labels_np[i : i + batch_size]).sum())
        accs.append(correct / len(inputs))
    if n_runs < 2:
        return EvalResult(accs[0], None, accs, n_runs, config_digest)
    mean = float(np.mean(accs))
    half = float(1.96 * np.std(accs, ddof=1) / np.sqrt(n_runs))
    return EvalResult(mean, half, accs, n_runs, config_digest)


def at_least_once_eval(model, defense_cfg: DefenseConfig, inputs: torch.Tensor,
                       labels: torch.Tensor, m_trials: int, seed: int = 0,
                       batch_size: int = 128) -> float:
    """Accuracy under the stricter count: an input is wrong if any of
    m_trials stochastic evaluations misclassifies it."""
    labels_np = labels.numpy()
    ever_wrong = np.zeros(len(inputs), dtype=bool)
    for trial in range(max(m_trials, 1)):
        rng = np.random.default_rng((seed, 7919, trial))
        for i in range(0, len(inputs), batch_size):
            pred = predict_labels_batch(model, inputs[i : i + batch_size], defense_cfg, rng)
            ever_wrong[i : i + batch_size] |= pred != labels_np[i : i + batch_size]
    return float(1.0 - ever_wrong.mean())


def clean_accuracy(model, inputs: torch.Tensor, labels: torch.Tensor,
                   batch_size: int = 256) -> float:
    """Plain (undefended) model accuracy."""
    model.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(inputs), batch_size):
            pred = model(inputs[i : i + batch_size]).argmax(1)
            correct += int((pred == labels[i : i + batch_size]).sum())
    return correct / len(inputs)

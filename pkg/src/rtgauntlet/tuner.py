"""Bayesian-optimization tuning of transform probabilities and strengths.

Each transform contributes exactly one coordinate in [0, 1]: its apply
probability if it has no strength knob, otherwise a rescaling of its
strength range (0 collapses the transform to its identity end, which is how
tuning prunes useless kinds).  A Gaussian-process surrogate with expected
improvement proposes points; trial evaluation trains a shortened defense
and measures adversarial accuracy under a fast attack.  The loop runs a
fixed number of evaluators per round (two by default) and appends results
in proposal order, so runs are reproducible.
"""

from __future__ import annotations

import csv
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

from .errors import ConfigurationError
from .transforms import TransformSpec


@dataclass
class TrialPoint:
    values: np.ndarray  # in [0, 1]^K
    objective: float  # adversarial accuracy in [0, 1]; nan when failed
    failed: bool = False
    wall_time: float = 0.0


@dataclass
class TunerState:
    history: list[TrialPoint] = field(default_factory=list)
    best: Optional[TrialPoint] = None
    budget: int = 160
    patience: int = 40
    min_trials: int = 80

    def record(self, point: TrialPoint) -> bool:
        """Append a trial; returns whether it improved the best."""
        self.history.append(point)
        if not point.failed and (self.best is None or point.objective > self.best.objective):
            self.best = point
            return True
        return False


# --------------------------------------------------------------------------
# value <-> spec mapping
# --------------------------------------------------------------------------


def apply_trial_values(specs: Sequence[TransformSpec], values: np.ndarray) -> list[TransformSpec]:
    """Rewrite each spec's tuned knob from its [0, 1] coordinate."""
    if len(values) != len(specs):
        raise ConfigurationError("one value per spec required")
    out = []
    for spec, v in zip(specs, values):
        v = float(v)
        if spec.tune == "p":
            out.append(replace(spec, apply_prob=v))
        elif spec.tune == "a":
            out.append(replace(spec, strength=spec.strength.rescaled(v)))
        else:
            raise ConfigurationError(f"{spec.kind}: spec does not declare a tuned knob")
    return out


def trial_values_from_specs(base: Sequence[TransformSpec], tuned: Sequence[TransformSpec]) -> np.ndarray:
    """Inverse of apply_trial_values (round-trips to float precision)."""
    vals = []
    for b, t in zip(base, tuned):
        if b.tune == "p":
            vals.append(t.apply_prob)
        else:
            span = b.strength.strong - b.strength.weak
            vals.append((t.strength.strong - b.strength.weak) / span)
    return np.asarray(vals, dtype=np.float64)


# --------------------------------------------------------------------------
# the optimization loop
# --------------------------------------------------------------------------


def _fit_gp(xs: np.ndarray, ys: np.ndarray, rng: np.random.Generator) -> GaussianProcessRegressor:
    kernel = (
        ConstantKernel(1.0, (1e-3, 1e3))
        * Matern(length_scale=0.3, length_scale_bounds=(1e-2, 1e2), nu=2.5)
        + WhiteKernel(1e-4, noise_level_bounds=(1e-10, 1e-1))
    )
    gp = GaussianProcessRegressor(
        kernel=kernel, normalize_y=True, n_restarts_optimizer=1,
        random_state=int(rng.integers(2**31)),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # hyperparameters pinned at bounds are fine here
        gp.fit(xs, ys)
    return gp


def _expected_improvement(gp, cand: np.ndarray, best: float, xi: float = 0.01) -> np.ndarray:
    mu, sd = gp.predict(cand, return_std=True)
    sd = np.maximum(sd, 1e-12)
    z = (mu - best - xi) / sd
    phi = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    big_phi = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2)))
    return (mu - best - xi) * big_phi + sd * phi


def _propose(state: TunerState, dim: int, count: int, rng: np.random.Generator,
             n_candidates: int = 2048) -> list[np.ndarray]:
    done = [t for t in state.history if not t.failed]
    if len(done) < max(2 * dim, 6):
        return [rng.random(dim) for _ in range(count)]
    xs = np.stack([t.values for t in done])
    ys = np.array([t.objective for t in done])
    gp = _fit_gp(xs, ys, rng)
    cand = rng.random((n_candidates, dim))
    # local refinement candidates around the incumbent
    local = np.clip(state.best.values + 0.08 * rng.standard_normal((n_candidates // 4, dim)), 0, 1)
    cand = np.vstack([cand, local])
    ei = _expected_improvement(gp, cand, state.best.objective)
    order = np.argsort(-ei)
    picks, chosen = [], []
    for idx in order:
        p = cand[idx]
        if all(np.linalg.norm(p - q) > 0.05 for q in chosen):
            picks.append(p)
            chosen.append(p)
            if len(picks) == count:
                break
    while len(picks) < count:
        picks.append(rng.random(dim))
    return picks


def tune(
    dim: int,
    objective_fn: Callable[[np.ndarray], float],
    rng: np.random.Generator,
    budget: int = 160,
    patience: int = 40,
    min_trials: int = 80,
    workers: int = 2,
    init_history: Optional[Sequence[TrialPoint]] = None,
) -> TunerState:
    """Maximize objective_fn over [0, 1]^dim.

    Stops at the trial budget, or once at least `min_trials` ran and the
    last `patience` trials brought no improvement.  A failed evaluation
    (exception) is recorded and the loop continues.  With several workers,
    proposals of one round are evaluated concurrently but recorded in
    proposal order, keeping the run deterministic for a given rng.
    """
    state = TunerState(budget=budget, patience=patience, min_trials=min_trials)
    since_improve = 0
    if init_history:
        for t in init_history:
            if state.record(t):
                since_improve = 0
            else:
                since_improve += 1

    pool = ThreadPoolExecutor(max_workers=max(workers, 1))
    try:
        while len(state.history) < state.budget:
            room = state.budget - len(state.history)
            count = min(max(workers, 1), room)
            points = _propose(state, dim, count, rng)

            def run(v):
                t0 = time.perf_counter()
                try:
                    return TrialPoint(v, float(objective_fn(v)), False, time.perf_counter() - t0)
                except Exception:
                    return TrialPoint(v, float("nan"), True, time.perf_counter() - t0)

            results = list(pool.map(run, points)) if count > 1 else [run(points[0])]
            stop = False
            for t in results:
                improved = state.record(t)
                since_improve = 0 if improved else since_improve + 1
                if len(state.history) >= state.min_trials and since_improve >= state.patience:
                    stop = True
                    break
            if stop:
                break
    finally:
        pool.shutdown(wait=False)
    return state


# --------------------------------------------------------------------------
# persistence (resumable history)
# --------------------------------------------------------------------------


def save_history(path, state: TunerState):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = len(state.history[0].values) if state.history else 0
        writer.writerow(["trial_id", *[f"v{i}" for i in range(dim)], "objective", "failed", "wall_time"])
        for i, t in enumerate(state.history):
            writer.writerow([i, *[f"{v:.10g}" for v in t.values], f"{t.objective:.10g}",
                             int(t.failed), f"{t.wall_time:.6f}"])


def load_history(path) -> list[TrialPoint]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len([h for h in header if h.startswith("v")])
        for row in reader:
            values = np.array([float(v) for v in row[1 : 1 + dim]])
            out.append(TrialPoint(values, float(row[1 + dim]), bool(int(row[2 + dim])),
                                  float(row[3 + dim])))
    return out

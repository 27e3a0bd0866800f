"""Experiment stages and their artifacts.

Every stage reads the shared config, derives its randomness from the
experiment seed, and appends rows to results.csv (long format, one metric
per row; the timestamp lives in its own final column so outputs stay
byte-comparable without it).  Artifacts carry the config digest and refuse
to combine across digests.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import replace

import numpy as np
import torch

from ..attack import pgd_attack
from ..backbone import Architecture, Backbone, adv_train, load_checkpoint, save_checkpoint, train_clean
from ..bpda import load_surrogate, save_surrogate, surrogate_mse, train_bpda
from ..defense import DefenseConfig
from ..errors import StageError
from ..tuner import apply_trial_values, save_history, tune
from ..transforms import NON_DIFFERENTIABLE_KINDS, get_entry
from . import report as report_mod
from .config import build_attack, build_defense, build_train, config_digest, fraction
from .data import make_dataset
from .evaluation import at_least_once_eval, clean_accuracy, evaluate_with_ci

RESULTS_SCHEMA = "# rtgauntlet-results-v1"
STATS_SCHEMA = "# rtgauntlet-stats-v1"
ADV_MAGIC = "RTGAUNTLET-ADV-v1"

RESULT_COLUMNS = ["stage", "metric", "value", "detail", "config_digest", "seed", "timestamp"]


class Experiment:
    def __init__(self, cfg: dict, out_dir: str):
        self.cfg = cfg
        self.out = out_dir
        self.digest = config_digest(cfg)
        self.seed = int(cfg.get("seed", 0))
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(os.path.join(out_dir, "plotdata"), exist_ok=True)

    # -- results bookkeeping ------------------------------------------------

    def _results_path(self):
        return os.path.join(self.out, "results.csv")

    def record(self, stage: str, metric: str, value, detail: str = ""):
        path = self._results_path()
        new = not os.path.exists(path)
        with open(path, "a", newline="") as fh:
            if new:
                fh.write(RESULTS_SCHEMA + "\n")
                csv.writer(fh).writerow(RESULT_COLUMNS)
            csv.writer(fh).writerow(
                [stage, metric, f"{value:.10g}" if isinstance(value, float) else value,
                 detail, self.digest, self.seed, f"{time.time():.3f}"]
            )

    def record_eval(self, stage: str, name: str, res):
        self.record(stage, f"{name}_mean", float(res.mean), detail=f"runs={res.n_runs}")
        if res.ci_half is not None:
            self.record(stage, f"{name}_ci95", float(res.ci_half))

    # -- shared pieces -------------------------------------------------------

    def dataset(self):
        return make_dataset(self.cfg["dataset"], self.seed)

    def defense(self) -> DefenseConfig:
        return build_defense(self.cfg)

    def model_path(self, name="ckpt-clean.pt"):
        return os.path.join(self.out, name)

    def load_model(self, name="ckpt-clean.pt") -> Backbone:
        path = self.model_path(name)
        if not os.path.exists(path):
            raise StageError(f"stage needs a checkpoint at {path}; run its training stage first")
        model, payload = load_checkpoint(path)
        return model

    def _eval_subset(self, test):
        xte, yte = test
        n = min(int(self.cfg["attack"].get("n_eval_inputs", 100)), len(xte))
        return xte[:n], yte[:n]

    # -- stages ---------------------------------------------------------------

    def stage_train(self):
        torch.manual_seed(self.seed)
        (xtr, ytr), (xte, yte) = self.dataset()
        defense = self.defense()
        classes = int(ytr.max().item()) + 1
        model = Backbone(Architecture(num_classes=classes))
        tcfg = build_train(self.cfg, defense)
        model, history = train_clean(model, (xtr, ytr), tcfg, seed=self.seed)
        save_checkpoint(self.model_path(), model, self.digest, extra={"history": history})
        self.record("train", "best_val_acc", max(h["val_acc"] for h in history))
        self.record("train", "plain_test_acc", clean_accuracy(model, xte, yte))
        res = evaluate_with_ci(model, defense, xte[:200], yte[:200],
                               n_runs=int(self.cfg["eval"]["n_runs"]), seed=self.seed,
                               config_digest=self.digest)
        self.record_eval("train", "defended_clean_acc", res)
        return model

    def stage_adv_train(self):
        torch.manual_seed(self.seed + 1)
        (xtr, ytr), (xte, yte) = self.dataset()
        defense = self.defense()
        classes = int(ytr.max().item()) + 1
        model = Backbone(Architecture(num_classes=classes))
        tcfg = build_train(self.cfg, defense, with_adv=True)
        model, history = adv_train(model, (xtr, ytr), tcfg, seed=self.seed)
        save_checkpoint(self.model_path("ckpt-adv.pt"), model, self.digest,
                        extra={"history": history})
        self.record("adv-train", "final_val_acc", history[-1]["val_acc"] if history else 0.0)
        res = evaluate_with_ci(model, defense, xte[:200], yte[:200],
                               n_runs=int(self.cfg["eval"]["n_runs"]), seed=self.seed,
                               config_digest=self.digest)
        self.record_eval("adv-train", "defended_clean_acc", res)
        return model

    def stage_attack(self, model_name="ckpt-clean.pt", attack_over=None, tag="attack"):
        model = self.load_model(model_name)
        _, test = self.dataset()
        x, y = self._eval_subset(test)
        defense = self.defense()
        acfg = build_attack(self.cfg, **(attack_over or {}))
        rng = np.random.default_rng((self.seed, 17))
        surrogates = self._load_surrogates() if acfg.gradient_mode in ("bpda", "combo") else None

        every = int(self.cfg["attack"].get("snapshot_every", 0))
        snap_steps = list(range(every, acfg.steps + 1, every)) if every else None
        out = pgd_attack(model, x, y, defense, acfg, rng, surrogates=surrogates,
                         snapshot_steps=snap_steps)
        x_adv, snapshots = out if snap_steps is not None else (out, {})

        archive = {
            "magic": ADV_MAGIC, "ids": list(range(len(x))), "x": x, "x_adv": x_adv,
            "y": y, "seed": self.seed, "config_digest": self.digest, "tag": tag,
        }
        torch.save(archive, os.path.join(self.out, f"adv-{tag}.pt"))
        self.record(tag, "epsilon", acfg.epsilon)
        self.record(tag, "steps", acfg.steps)

        if snapshots:
            rows = []
            for step, xs in sorted(snapshots.items()):
                res = evaluate_with_ci(model, defense, xs, y, n_runs=3,
                                       seed=self.seed + 23, config_digest=self.digest)
                rows.append({"steps": step, "attack": tag, "adv_acc": res.mean})
            report_mod.write_plotdata(
                os.path.join(self.out, "plotdata", f"acc_vs_steps_{tag}.csv"),
                ["steps", "attack", "adv_acc"], rows,
            )
        return x_adv

    def stage_evaluate(self, tag="attack", model_name="ckpt-clean.pt"):
        path = os.path.join(self.out, f"adv-{tag}.pt")
        if not os.path.exists(path):
            raise StageError(f"no adversarial archive at {path}; run the attack stage first")
        archive = torch.load(path, map_location="cpu", weights_only=False)
        if archive.get("magic") != ADV_MAGIC:
            raise StageError(f"{path} is not an adversarial archive")
        if archive["config_digest"] != self.digest:
            raise StageError(
                f"archive digest {archive['config_digest']} does not match config {self.digest}"
            )
        model = self.load_model(model_name)
        defense = self.defense()
        n_runs = int(self.cfg["eval"]["n_runs"])
        res = evaluate_with_ci(model, defense, archive["x_adv"], archive["y"],
                               n_runs=n_runs, seed=self.seed + 29, config_digest=self.digest)
        self.record_eval("evaluate", f"adv_acc_{tag}", res)
        m = int(self.cfg["eval"].get("at_least_once_trials", 0))
        if m:
            alo = at_least_once_eval(model, defense, archive["x_adv"], archive["y"], m,
                                     seed=self.seed + 31)
            self.record("evaluate", f"at_least_once_acc_{tag}", alo, detail=f"m={m}")
        return res

    def stage_tune(self):
        (xtr, ytr), _ = self.dataset()
        tb = self.cfg["tuner"]
        defense = self.defense()
        rng = np.random.default_rng((self.seed, 41))

        frac = float(tb["train_fraction"])
        n_sub = max(int(len(xtr) * frac), 64)
        n_val = int(tb["val_samples"])
        x_sub, y_sub = xtr[:n_sub], ytr[:n_sub]
        x_val, y_val = xtr[n_sub : n_sub + n_val], ytr[n_sub : n_sub + n_val]
        classes = int(ytr.max().item()) + 1
        eps = fraction(self.cfg["attack"]["epsilon"])

        def objective(values):
            specs = apply_trial_values(defense.specs, values)
            trial_defense = replace(defense, specs=specs)
            trial_rng = np.random.default_rng((self.seed, 43, int(values.sum() * 1e6) & 0xFFFF))
            model = Backbone(Architecture(num_classes=classes))
            tcfg = build_train(self.cfg, trial_defense)
            tcfg = replace(tcfg, epochs=int(tb["trial_epochs"]))
            model, _ = train_clean(model, (x_sub, y_sub), tcfg, seed=self.seed)
            acfg = build_attack(self.cfg, steps=int(tb["attack_steps"]),
                                n_attack=int(tb["attack_n"]))
            x_adv = pgd_attack(model, x_val, y_val, trial_defense, acfg, trial_rng)
            res = evaluate_with_ci(model, trial_defense, x_adv, y_val, n_runs=2,
                                   seed=self.seed + 47)
            return res.mean

        state = tune(
            dim=len(defense.specs), objective_fn=objective, rng=rng,
            budget=int(tb["budget"]), patience=int(tb["patience"]),
            min_trials=int(tb["min_trials"]), workers=int(tb["workers"]),
        )
        save_history(os.path.join(self.out, "tuning-history.csv"), state)
        self.record("tune", "trials", len(state.history))
        self.record("tune", "best_objective", state.best.objective,
                    detail=",".join(f"{v:.4f}" for v in state.best.values))
        if tb.get("finalize"):
            self.finalize_best(state)
        return state

    def finalize_best(self, state):
        """Full-data training at the tuned point, then strong-attack eval."""
        (xtr, ytr), (xte, yte) = self.dataset()
        defense = self.defense()
        tuned = replace(defense, specs=apply_trial_values(defense.specs, state.best.values))
        classes = int(ytr.max().item()) + 1
        model = Backbone(Architecture(num_classes=classes))
        tcfg = build_train(self.cfg, tuned)
        tcfg.augment.n_train = int(self.cfg["tuner"].get("final_n_train", 4))
        model, _ = train_clean(model, (xtr, ytr), tcfg, seed=self.seed)
        save_checkpoint(self.model_path("ckpt-tuned.pt"), model, self.digest)
        x, y = self._eval_subset((xte, yte))
        acfg = build_attack(self.cfg)
        x_adv = pgd_attack(model, x, y, tuned, acfg, np.random.default_rng((self.seed, 53)))
        res = evaluate_with_ci(model, tuned, x_adv, y,
                               n_runs=int(self.cfg["eval"]["n_runs"]), seed=self.seed + 59)
        clean = evaluate_with_ci(model, tuned, xte[:200], yte[:200], n_runs=3, seed=self.seed + 61)
        self.record_eval("finalize", "adv_acc", res)
        self.record_eval("finalize", "clean_acc", clean)
        return model, res

    def stage_bpda_train(self):
        (xtr, _), _ = self.dataset()
        bb = self.cfg["bpda"]
        defense = self.defense()
        kinds = bb.get("kinds") or [s.kind for s in defense.specs]
        images = xtr[: int(bb.get("n_images", 256))]
        rng = np.random.default_rng((self.seed, 67))
        for kind in kinds:
            net, history = train_bpda(
                kind, images, rng, epochs=int(bb["epochs"]), lr=float(bb["lr"]),
                hidden=int(bb.get("hidden", 32)),
            )
            save_surrogate(os.path.join(self.out, f"bpda-{kind}.pt"), kind, net)
            mse = surrogate_mse(net, kind, images[:64], np.random.default_rng((self.seed, 71)))
            self.record("bpda-train", f"mse_{kind}", mse)

    def _load_surrogates(self):
        out = {}
        for name in os.listdir(self.out):
            if name.startswith("bpda-") and name.endswith(".pt"):
                kind, net = load_surrogate(os.path.join(self.out, name))
                out[kind] = net
        if not out:
            raise StageError("no trained surrogates in the run directory; run bpda-train first")
        return out

    def stage_diagnose(self, model_name="ckpt-clean.pt"):
        from ..attack import grad_estimate
        from ..diagnostics import cosine_sim, grad_variance, sign_match

        model = self.load_model(model_name)
        _, test = self.dataset()
        db = self.cfg["diagnose"]
        n_inputs = min(int(db["n_inputs"]), len(test[0]))
        x, y = test[0][:n_inputs], test[1][:n_inputs]
        defense = self.defense()
        path = os.path.join(self.out, "stats.csv")
        new = not os.path.exists(path)
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                fh.write(STATS_SCHEMA + "\n")
                writer.writerow(["input_id", "objective", "modifier", "n",
                                 "variance", "cosine", "sign_match"])
            for variant in db["variants"]:
                acfg = build_attack(
                    self.cfg, steps=0, n_attack=int(db["n_samples"]),
                    objective=variant.get("objective", "linear"),
                    sgm_scale=variant.get("sgm_scale", 1.0),
                    fixed_perm=variant.get("fixed_perm", True),
                )
                modifier = variant.get("name", variant.get("objective", ""))
                rng = np.random.default_rng((self.seed, 73))
                for i in range(n_inputs):
                    _, samples = grad_estimate(
                        model, x[i : i + 1], y[i : i + 1], defense, acfg, rng,
                        collect_samples=True,
                    )
                    flat = samples[:, 0]
                    try:
                        cos = cosine_sim(flat)
                    except Exception:
                        cos = float("nan")
                    writer.writerow([
                        i, acfg.objective, modifier, acfg.n_attack,
                        f"{grad_variance(flat):.8g}", f"{cos:.8g}", f"{sign_match(flat):.8g}",
                    ])
        self.record("diagnose", "rows", n_inputs * len(db["variants"]))

    def stage_preset_table2(self):
        """Three-attack comparison: the expectation baseline, the linear
        objective, and linear + skip-scaling + aggregated momentum."""
        variants = [
            ("baseline-eot", {"objective": "eot_ce", "optimizer": "sgd_momentum",
                              "momentum": 0.0, "sgm_scale": 1.0, "fixed_perm": False}),
            ("linear", {"objective": "linear", "optimizer": "sgd_momentum",
                        "momentum": 0.0, "sgm_scale": 1.0}),
            ("linear-sgm-aggmo", {"objective": "linear", "optimizer": "aggmo",
                                  "sgm_scale": 0.5}),
        ]
        rows = []
        for tag, over in variants:
            self.stage_attack(attack_over=over, tag=tag)
            res = self.stage_evaluate(tag=tag)
            rows.append({"attack": tag, "adv_acc_mean": res.mean, "adv_acc_ci95": res.ci_half})
        report_mod.write_plotdata(
            os.path.join(self.out, "plotdata", "attack_comparison.csv"),
            ["attack", "adv_acc_mean", "adv_acc_ci95"], rows,
        )
        return rows

    def stage_report(self):
        report_mod.generate(self.out)
        self.record("report", "generated", 1)


STAGES = {
    "train": Experiment.stage_train,
    "adv-train": Experiment.stage_adv_train,
    "attack": Experiment.stage_attack,
    "evaluate": Experiment.stage_evaluate,
    "tune": Experiment.stage_tune,
    "bpda-train": Experiment.stage_bpda_train,
    "diagnose": Experiment.stage_diagnose,
    "report": Experiment.stage_report,
    "table2-desk": Experiment.stage_preset_table2,
}


def run_experiment(cfg: dict, out_dir: str, stages):
    exp = Experiment(cfg, out_dir)
    for stage in stages:
        if stage not in STAGES:
            raise StageError(f"unknown stage {stage!r}; choose from {sorted(STAGES)}")
        STAGES[stage](exp)
    return exp

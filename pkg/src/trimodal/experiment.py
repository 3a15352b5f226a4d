"""Experiment grid runner: variants x seeds, two-stage protocol, summary.

One cell = (variant, seed). Per seed, the dataset is generated (or loaded)
and split once, and each needed component — the three uni-modal networks,
the attention network, the early-fusion baseline — is trained at most once
and reused by every variant of that seed, with all sub-seeds derived from
(seed, role) so results do not depend on variant order. Composite variants
train only their fusion stage on top of the frozen components.

Bundle layout under the output directory:

    config.json                 resolved configuration (deterministic copy)
    summary.json, summary.txt   mean +- sd accuracy per variant
    <variant>/seed<k>/          train_log.jsonl, train_log.<child>.jsonl,
                                eval.json, confusion.txt, confusion.json,
                                model.ckpt

Every file is a pure function of (config, dataset file): no timestamps, so
re-running an identical config reproduces the bundle bit for bit.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checkpoint import save_model
from .data import SyntheticSpec, generate_synthetic, load_dataset, speaker_split
from .metrics import emit_confusion_plot, evaluate
from .models import MODEL_KINDS, HybridNet, LateFusionClstm, ModelConfig, build_model
from .training import TrainConfig, train_fusion_head, train_subnetwork
from .util import derive_seed, dump_json

BASE_COMPONENTS = ("speech", "visual", "text", "ef", "mma")


class ExperimentConfigError(ValueError):
    pass


def _section(config: dict, name: str, required: bool = True) -> dict:
    sec = config.get(name)
    if sec is None:
        if required:
            raise ExperimentConfigError(f"config is missing the {name!r} section")
        return {}
    if not isinstance(sec, dict):
        raise ExperimentConfigError(f"config section {name!r} must be an object")
    return dict(sec)


def _filtered_kwargs(cls, d: dict, where: str) -> dict:
    allowed = {f.name for f in fields(cls)}
    unknown = set(d) - allowed
    if unknown:
        raise ExperimentConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return d


def model_config_from(config: dict) -> ModelConfig:
    return ModelConfig.from_dict(_filtered_kwargs(ModelConfig, _section(config, "model", required=False), "model"))


def train_config_from(config: dict, seed: int, fusion: bool = False) -> TrainConfig:
    sec = _section(config, "training", required=False)
    fusion_epochs = sec.pop("fusion_epochs", None)
    sec.pop("fusion_holdout", None)  # consumed by the experiment runner
    sec = _filtered_kwargs(TrainConfig, sec, "training")
    sec.pop("seed", None)
    cfg = TrainConfig(seed=seed, **sec)
    if fusion and fusion_epochs is not None:
        cfg.epochs = int(fusion_epochs)
    return cfg


def prepare_data(config: dict, seed: int):
    """Per-seed (train, test, descriptor); sub-seeds derived from `seed`."""
    sec = _section(config, "data")
    fraction = float(sec.get("split_fraction", 0.8))
    if "synthetic" in sec:
        spec_kwargs = _filtered_kwargs(SyntheticSpec, dict(sec["synthetic"]), "data.synthetic")
        spec_kwargs["seed"] = derive_seed(seed, "data")
        spec = SyntheticSpec(**spec_kwargs)
        conversations = generate_synthetic(spec)
        descriptor = (f"synthetic:{spec.mode} seed={spec.seed} "
                      f"n={spec.n_conversations}")
    elif "path" in sec:
        conversations = load_dataset(sec["path"])
        descriptor = str(sec["path"])
    else:
        raise ExperimentConfigError("data section needs 'synthetic' or 'path'")
    train, test = speaker_split(conversations, fraction, derive_seed(seed, "split"))
    return train, test, descriptor


class _SeedRunner:
    """Trains/caches components for one seed and materializes variants."""

    def __init__(self, config: dict, seed: int):
        self.config = config
        self.seed = seed
        self.model_config = model_config_from(config)
        self.train_data, self.test_data, self.descriptor = prepare_data(config, seed)
        # Stacking holdout: composite variants train their sub-networks on
        # one slice of the training conversations and the fusion stage on
        # the held-out remainder, so the fusion head sees honest (not
        # memorized) sub-network predictions. fusion_holdout=0 disables it.
        holdout = float(_section(config, "training", required=False)
                        .get("fusion_holdout", 0.25))
        if not 0.0 <= holdout < 1.0:
            raise ExperimentConfigError("training.fusion_holdout must be in [0, 1)")
        if holdout > 0.0 and len(self.train_data) > 1:
            rng = np.random.default_rng(derive_seed(seed, "fusion-holdout"))
            order = rng.permutation(len(self.train_data))
            n_fusion = max(1, int(round(holdout * len(self.train_data))))
            self.fusion_data = [self.train_data[i] for i in order[:n_fusion]]
            self.subnet_data = [self.train_data[i] for i in order[n_fusion:]]
        else:
            self.fusion_data = self.train_data
            self.subnet_data = self.train_data
        self._components: dict[tuple, tuple] = {}  # (kind, slice) -> (model, report)

    def component(self, kind: str, data_slice: str = "full"):
        key = (kind, data_slice)
        if key not in self._components:
            data = self.train_data if data_slice == "full" else self.subnet_data
            model = build_model(kind, self.model_config,
                                derive_seed(self.seed, f"init:{kind}"))
            cfg = train_config_from(self.config, derive_seed(self.seed, f"train:{kind}"))
            report = train_subnetwork(model, data, cfg)
            self._components[key] = (model, report)
        return self._components[key]

    def _composite(self, variant: str, cls):
        fusion_cfg = train_config_from(
            self.config, derive_seed(self.seed, f"train:{variant}"), fusion=True)
        children = {k: self.component(k, "subnet")[0] for k in cls.child_keys}
        logs = {k: self.component(k, "subnet")[1] for k in cls.child_keys}
        model = cls(self.model_config, children)
        model.reseed(derive_seed(self.seed, f"init:{variant}"))
        logs[""] = train_fusion_head(model, self.fusion_data, fusion_cfg)
        return model, logs

    def materialize(self, variant: str):
        """Returns (model, {stage name -> TrainReport})."""
        if variant in BASE_COMPONENTS:
            model, report = self.component(variant, "full")
            return model, {"": report}
        if variant == "lf":
            return self._composite(variant, LateFusionClstm)
        if variant == "mman":
            return self._composite(variant, HybridNet)
        raise ExperimentConfigError(f"unknown variant {variant!r}; expected one of "
                                    f"{MODEL_KINDS}")


def _run_cell(runner: _SeedRunner, variant: str, cell_dir: Path) -> dict:
    cell_dir.mkdir(parents=True, exist_ok=True)
    model, logs = runner.materialize(variant)
    for stage, report in logs.items():
        name = "train_log.jsonl" if stage == "" else f"train_log.{stage}.jsonl"
        report.to_jsonl(cell_dir / name)
    report = evaluate(model, runner.test_data, dataset_name=runner.descriptor)
    report.save(cell_dir / "eval.json")
    emit_confusion_plot(report, cell_dir / "confusion")
    save_model(model, cell_dir / "model.ckpt")
    return {"variant": variant, "seed": runner.seed, "status": "ok",
            "accuracy": report.accuracy}


def run_seed(config: dict, out_dir, seed: int, variants) -> list[dict]:
    """All cells of one seed; failures are recorded, not raised."""
    out_dir = Path(out_dir)
    runner = None
    cells = []
    for variant in variants:
        cell_dir = out_dir / variant / f"seed{seed}"
        try:
            if runner is None:
                runner = _SeedRunner(config, seed)
            cells.append(_run_cell(runner, variant, cell_dir))
        except Exception as e:  # cell failures must not sink the bundle
            cells.append({"variant": variant, "seed": seed, "status": "failed",
                          "error": f"{type(e).__name__}: {e}"})
    return cells


def _run_seed_star(args):
    return run_seed(*args)


def summarize(cells: list[dict], variants) -> dict:
    summary = {"cells": cells, "variants": {}}
    for variant in variants:
        accs = [c["accuracy"] for c in cells
                if c["variant"] == variant and c["status"] == "ok"]
        failures = sum(1 for c in cells
                       if c["variant"] == variant and c["status"] == "failed")
        entry = {"n_ok": len(accs), "failures": failures, "accuracies": accs}
        if accs:
            entry["mean_accuracy"] = float(np.mean(accs))
            entry["sd_accuracy"] = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        summary["variants"][variant] = entry
    return summary


def render_summary(summary: dict, variants) -> str:
    lines = [f"{'variant':>10}  {'mean_acc':>9}  {'sd':>8}  {'runs':>4}  accuracies"]
    for variant in variants:
        e = summary["variants"][variant]
        if e["n_ok"]:
            accs = " ".join(f"{a:.4f}" for a in e["accuracies"])
            lines.append(f"{variant:>10}  {e['mean_accuracy']:>9.4f}  "
                         f"{e['sd_accuracy']:>8.4f}  {e['n_ok']:>4}  {accs}")
        else:
            lines.append(f"{variant:>10}  {'-':>9}  {'-':>8}  {0:>4}  "
                         f"all failed ({e['failures']})")
    return "\n".join(lines) + "\n"


def run_experiment(config: dict, out_dir, workers: int = 1) -> dict:
    """Run the grid, write the bundle, return the summary dict."""
    exp = _section(config, "experiment")
    variants = list(exp.get("variants", []))
    seeds = [int(s) for s in exp.get("seeds", [0])]
    if not variants:
        raise ExperimentConfigError("experiment.variants must name at least one model")
    for v in variants:
        if v not in MODEL_KINDS:
            raise ExperimentConfigError(f"unknown variant {v!r}; expected one of "
                                        f"{MODEL_KINDS}")
    if len(set(seeds)) != len(seeds):
        raise ExperimentConfigError("experiment.seeds must be distinct")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(config, out_dir / "config.json")

    if workers > 1 and len(seeds) > 1:
        jobs = [(config, out_dir, seed, variants) for seed in seeds]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_seed = list(pool.map(_run_seed_star, jobs))
    else:
        per_seed = [run_seed(config, out_dir, seed, variants) for seed in seeds]

    cells = [cell for batch in per_seed for cell in batch]
    cells.sort(key=lambda c: (variants.index(c["variant"]), c["seed"]))
    summary = summarize(cells, variants)
    dump_json(summary, out_dir / "summary.json")
    with open(out_dir / "summary.txt", "w", encoding="utf-8") as fh:
        fh.write(render_summary(summary, variants))
    return summary

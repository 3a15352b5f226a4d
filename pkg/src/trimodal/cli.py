"""Command-line interface.

Subcommands: generate, split, train, train-fusion, eval, gradcheck,
count-params, experiment, plot. Each reads an optional JSON config file
(sections: data, model, training, experiment; see docs/config.md) plus
`--set section.key=value` overrides; reports are written as files so runs
are diffable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import load_model, save_model
from .data import (SyntheticSpec, generate_synthetic, load_dataset, save_dataset,
                   speaker_split)
from .experiment import (model_config_from, run_experiment, train_config_from,
                         _filtered_kwargs, _section)
from .metrics import EvalReport, emit_confusion_plot, evaluate, render_confusion
from .models import (MODEL_KINDS, HybridNet, LateFusionClstm, build_model,
                     count_parameters, parameter_breakdown)
from .training import train_fusion_head, train_subnetwork
from .util import derive_seed
from .verify import TINY_CONFIG, grad_errors


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def apply_overrides(config: dict, assignments) -> dict:
    """`--set a.b=value` overrides; values parse as JSON, else strings."""
    for item in assignments or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return config


def _config_from_args(args) -> dict:
    return apply_overrides(load_config(args.config), getattr(args, "set", None))


def _dataset_meta(conversations):
    dims = conversations[0].dims()
    return dims, conversations[0].n_classes


def _resolve_model_section(config: dict, conversations) -> None:
    """Fill input dims and class count from the data; reject mismatches."""
    dims, n_classes = _dataset_meta(conversations)
    section = config.setdefault("model", {})
    derived = {"dim_speech": dims["s"], "dim_visual": dims["v"],
               "dim_text": dims["t"], "n_classes": n_classes}
    for key, value in derived.items():
        if key in section and section[key] != value:
            raise SystemExit(f"config model.{key}={section[key]} but the dataset "
                             f"has {value}")
        section[key] = value


def _load_children(args, keys) -> dict:
    given = dict(item.split("=", 1) for item in args.subnet or [])
    missing = set(keys) - set(given)
    if missing:
        raise SystemExit(f"missing --subnet checkpoints for: {sorted(missing)}; "
                         f"pass e.g. --subnet speech=speech.ckpt")
    return {k: load_model(given[k]) for k in keys}


def cmd_generate(args) -> int:
    config = _config_from_args(args)
    spec_kwargs = dict(_section(config, "data", required=False).get("synthetic", {}))
    if args.seed is not None:
        spec_kwargs["seed"] = args.seed
    if args.mode:
        spec_kwargs["mode"] = args.mode
    if args.conversations is not None:
        spec_kwargs["n_conversations"] = args.conversations
    spec = SyntheticSpec(**_filtered_kwargs(SyntheticSpec, spec_kwargs, "data.synthetic"))
    conversations = generate_synthetic(spec)
    save_dataset(conversations, args.out)
    total = sum(len(c) for c in conversations)
    print(f"wrote {len(conversations)} conversations ({total} utterances) to {args.out}")
    return 0


def cmd_split(args) -> int:
    conversations = load_dataset(args.data)
    train, test = speaker_split(conversations, args.fraction, args.seed)
    save_dataset(train, args.train_out)
    save_dataset(test, args.test_out)
    print(f"train: {len(train)} conversations -> {args.train_out}")
    print(f"test:  {len(test)} conversations -> {args.test_out}")
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    conversations = load_dataset(args.data)
    _resolve_model_section(config, conversations)
    model_cfg = model_config_from(config)
    train_cfg = train_config_from(config, args.seed, fusion=args.variant in ("lf", "mman"))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.variant in ("lf", "mman"):
        keys = (LateFusionClstm if args.variant == "lf" else HybridNet).child_keys
        children = _load_children(args, keys)
        cls = LateFusionClstm if args.variant == "lf" else HybridNet
        model = cls(model_cfg, children).reseed(derive_seed(args.seed, f"init:{args.variant}"))
        report = train_fusion_head(model, conversations, train_cfg)
    else:
        model = build_model(args.variant, model_cfg,
                            derive_seed(args.seed, f"init:{args.variant}"))
        report = train_subnetwork(model, conversations, train_cfg)
    report.to_jsonl(out_dir / "train_log.jsonl")
    save_model(model, out_dir / "model.ckpt")
    print(f"{args.variant}: {report.epochs} epochs, final loss "
          f"{report.losses[-1]:.4f}, train acc {report.accuracies[-1]:.4f}")
    print(f"checkpoint: {out_dir / 'model.ckpt'}")
    return 0


def cmd_train_fusion(args) -> int:
    args.variant = "mman"
    return cmd_train(args)


def cmd_eval(args) -> int:
    model = load_model(args.model)
    conversations = load_dataset(args.data)
    report = evaluate(model, conversations, dataset_name=str(args.data))
    if args.out:
        report.save(args.out)
    print(render_confusion(report), end="")
    return 0


def cmd_gradcheck(args) -> int:
    kinds = args.variants or list(MODEL_KINDS)
    errors = grad_errors(kinds, TINY_CONFIG, m_len=args.utterances, seed=args.seed,
                         step=args.step)
    worst_name = max(errors, key=errors.get)
    ok = errors[worst_name] < args.tolerance
    for kind, err in errors.items():
        status = "ok" if err < args.tolerance else "FAIL"
        print(f"{kind:>8}  max rel err {err:.3e}  [{status}]")
    print(f"worst: {worst_name} {errors[worst_name]:.3e} "
          f"({'<' if ok else '>='} tolerance {args.tolerance:g})")
    return 0 if ok else 1


def cmd_count_params(args) -> int:
    config = _config_from_args(args)
    model_cfg = model_config_from(config)
    kinds = args.variants or list(MODEL_KINDS)
    for kind in kinds:
        model = build_model(kind, model_cfg, seed=0)
        print(f"{kind:>8}  {count_parameters(model):>10,} parameters")
        if args.breakdown:
            for name, size in parameter_breakdown(model).items():
                print(f"{'':>10}{name:<40} {size:>8}")
    return 0


def cmd_experiment(args) -> int:
    config = _config_from_args(args)
    summary = run_experiment(config, args.out, workers=args.workers)
    with open(Path(args.out) / "summary.txt", encoding="utf-8") as fh:
        print(fh.read(), end="")
    failed = [c for c in summary["cells"] if c["status"] == "failed"]
    if failed:
        print(f"{len(failed)} cell(s) failed; see summary.json")
    return 0


def cmd_plot(args) -> int:
    report = EvalReport.load(args.report)
    txt_path, json_path = emit_confusion_plot(report, args.out)
    print(f"wrote {txt_path} and {json_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trimodal",
        description="Tri-modal attention fusion networks at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="JSON config file (see docs/config.md)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set training.epochs=10")

    p = sub.add_parser("generate", help="write a synthetic dataset file")
    add_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", choices=("redundant", "complementary", "xor"))
    p.add_argument("--conversations", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="speaker-disjoint train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one architecture on a dataset file")
    add_config(p)
    p.add_argument("--variant", required=True, choices=MODEL_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subnet", action="append", metavar="NAME=CKPT",
                   help="trained sub-network checkpoints (lf/mman variants)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-fusion",
                       help="train the hybrid fusion head over four frozen sub-networks")
    add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subnet", action="append", metavar="NAME=CKPT", required=True,
                   help="speech=..., visual=..., text=..., mma=...")
    p.set_defaults(func=cmd_train_fusion)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="write the evaluation report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every architecture at tiny dims")
    p.add_argument("--variants", nargs="*", choices=MODEL_KINDS)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--utterances", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("count-params", help="exact trainable-scalar counts")
    add_config(p)
    p.add_argument("--variants", nargs="*", choices=MODEL_KINDS)
    p.add_argument("--breakdown", action="store_true")
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("experiment", help="run a variants x seeds grid")
    add_config(p)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="render a confusion matrix from an eval report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True, help="base path; writes .txt and .json")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``modcap <command> [flags]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .decoding import export_attention_trace
from .estimator import CompositionalCaptioner
from .presets import PRESETS, SCENE_PRESETS
from .scenes import SceneConfig, generate_splits, load_dataset, save_dataset
from .vocab import load_lexicon, save_lexicon

VARIANT_FLAGS = ("no_mod", "no_mil", "no_amil")
DEFAULT_VARIANTS = ("complete", "no_mod", "no_mil", "no_amil")
TABLE_COLUMNS = (
    "bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider",
    "object", "attribute", "relation", "color", "count", "size",
)


class CLIError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(f"{self.prog}: {message}")


def parse_variant(spec: str) -> dict:
    """``"no_mod+no_amil"`` -> estimator switches; ``"complete"`` -> all on."""
    flags = {"use_modules": True, "use_mil": True, "use_amil": True}
    if spec == "complete":
        return flags
    for part in spec.split("+"):
        if part not in VARIANT_FLAGS:
            raise CLIError(f"unknown ablation '{part}' (choose from complete, {', '.join(VARIANT_FLAGS)})")
        key = {"no_mod": "use_modules", "no_mil": "use_mil", "no_amil": "use_amil"}[part]
        flags[key] = False
    return flags


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CLIError(f"{what} not found: {p}")
    return p


def _estimator(args, **switches) -> CompositionalCaptioner:
    params = dict(PRESETS[args.preset])
    if getattr(args, "epochs", None) is not None:
        params["epochs"] = args.epochs
    params.update(switches)
    return CompositionalCaptioner(random_state=args.seed, **params)


def _lexicon_for(data_path: Path, explicit: str | None):
    if explicit:
        return load_lexicon(_existing(explicit, "lexicon"))
    sibling = data_path.parent / "lexicon.json"
    return load_lexicon(sibling) if sibling.exists() else None


def _load_model(path: str) -> CompositionalCaptioner:
    ckpt_dir = _existing(path, "checkpoint")
    if ckpt_dir.is_file():
        ckpt_dir = ckpt_dir.parent
    if not (ckpt_dir / "checkpoint.bin").exists():
        raise CLIError(f"checkpoint not found: {ckpt_dir / 'checkpoint.bin'}")
    return CompositionalCaptioner.load(ckpt_dir)


def _pick_scene(scenes, scene_id: str | None):
    if scene_id is None:
        return scenes[0]
    for s in scenes:
        if s.scene_id == scene_id:
            return s
    raise CLIError(f"scene '{scene_id}' not in dataset")


# -- commands ---------------------------------------------------------------
def cmd_gen_data(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    overrides = dict(SCENE_PRESETS[args.preset])
    if args.noise is not None:
        overrides["noise"] = args.noise
    if args.references is not None:
        overrides["n_references"] = args.references
    config = SceneConfig(**overrides)
    splits = generate_splits({"train": args.n_train, "val": args.n_val, "test": args.n_test}, args.seed, config)
    for name, scenes in splits.items():
        save_dataset(out / f"{name}.jsonl", scenes)
    save_lexicon(out / "lexicon.json", config.lexicon())
    with open(out / "scene_config.json", "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
    print(f"wrote {', '.join(f'{k}={len(v)}' for k, v in splits.items())} to {out}")
    return 0


def cmd_train(args) -> int:
    data = _existing(args.data, "dataset")
    lexicon = _lexicon_for(data, args.lexicon)
    scenes = load_dataset(data)
    switches = parse_variant("+".join(f for f in VARIANT_FLAGS if getattr(args, f)) or "complete")
    est = _estimator(args, **switches)
    out = Path(args.out_dir)
    est.fit(scenes, lexicon=lexicon, out_dir=out, resume=args.resume)
    est.save(out)
    last = est.history_[-1] if est.history_ else {}
    print(f"trained {len(est.history_)} epochs; total loss {last.get('total', float('nan')):.6f}; checkpoint {out}")
    return 0


def cmd_ablate(args) -> int:
    train_path = _existing(args.train, "dataset")
    test_path = _existing(args.test, "dataset")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    switches = {v: parse_variant(v) for v in variants}
    lexicon = _lexicon_for(train_path, args.lexicon)
    train_scenes, test_scenes = load_dataset(train_path), load_dataset(test_path)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in args.seeds:
        for variant in variants:
            args.seed = seed
            est = _estimator(args, **switches[variant])
            est.fit(train_scenes, lexicon=lexicon)
            est.save(out / f"{variant}_seed{seed}")
            report = est.evaluate(test_scenes).to_dict()
            rows.append({"variant": variant, "seed": seed, **{k: report[k] for k in TABLE_COLUMNS}})
            print(f"seed {seed} {variant}: bleu4={report['bleu4']:.4f} color={report['color']:.4f} count={report['count']:.4f}")
    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["variant", "seed", *TABLE_COLUMNS])
        writer.writeheader()
        writer.writerows(rows)
    print(format_table(rows, variants))
    return 0


def format_table(rows: list[dict], variants) -> str:
    """Per-variant means over seeds, one line per variant."""
    header = f"{'variant':<22}" + "".join(f"{c:>10}" for c in TABLE_COLUMNS)
    lines = [header]
    for v in variants:
        sel = [r for r in rows if r["variant"] == v]
        means = [sum(r[c] for r in sel) / len(sel) for c in TABLE_COLUMNS]
        lines.append(f"{v:<22}" + "".join(f"{m:>10.4f}" for m in means))
    return "\n".join(lines)


def cmd_evaluate(args) -> int:
    est = _load_model(args.checkpoint)
    scenes = load_dataset(_existing(args.data, "dataset"))
    report = est.evaluate(scenes)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_csv(out / "report.csv")
    print(" ".join(f"{k}={v:.4f}" for k, v in report.to_dict().items()))
    return 0


def cmd_caption(args) -> int:
    est = _load_model(args.checkpoint)
    scene = _pick_scene(load_dataset(_existing(args.data, "dataset")), args.scene_id)
    print(est.decode([scene])[0].text)
    return 0


def cmd_export_attention(args) -> int:
    est = _load_model(args.checkpoint)
    scene = _pick_scene(load_dataset(_existing(args.data, "dataset")), args.scene_id)
    caption = est.decode([scene])[0]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"attention_{scene.scene_id}.csv"
    export_attention_trace(caption, path)
    print(f"{caption.text}\n{len(caption.trace)} rows -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modcap", description="Compositional captioning on synthetic region features.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, preset=True):
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        if preset:
            p.add_argument("--preset", choices=sorted(PRESETS), default="desk", help="scale preset")
        p.add_argument("--out-dir", required=True, help="directory for all outputs")

    p = sub.add_parser("gen-data", help="generate train/val/test scene files and a lexicon")
    common(p)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-val", type=int, default=100)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--noise", type=float, default=None, help="region feature noise level")
    p.add_argument("--references", type=int, default=None, help="captions per scene (1-5)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model")
    common(p)
    p.add_argument("--data", required=True, help="training scenes (.jsonl)")
    p.add_argument("--lexicon", default=None, help="lexicon file (default: lexicon.json next to --data)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--resume", action="store_true", help="continue from the state in --out-dir")
    for flag in VARIANT_FLAGS:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, action="store_true", help=f"ablation: {flag}")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    common(p)
    p.add_argument("--train", required=True, help="training scenes (.jsonl)")
    p.add_argument("--test", required=True, help="held-out scenes (.jsonl)")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument(
        "--variants",
        default=",".join(DEFAULT_VARIANTS),
        help="comma-separated variants; combine ablations with '+', e.g. no_mod+no_amil",
    )
    p.add_argument("--seeds", type=int, nargs="+", default=[0], help="one run per seed and variant")
    p.set_defaults(func=cmd_ablate)

    for name, func, help_text in (
        ("evaluate", cmd_evaluate, "score a checkpoint on a dataset"),
        ("caption", cmd_caption, "caption one scene"),
        ("export-attention", cmd_export_attention, "write the per-token attention trace of one scene"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--checkpoint", required=True, help="model directory or its checkpoint.bin")
        p.add_argument("--data", required=True, help="scenes (.jsonl)")
        p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; decoding is deterministic")
        if name == "caption":
            p.add_argument("--scene-id", default=None, help="scene to caption (default: first)")
            p.add_argument("--out-dir", default=None, help="unused; captions go to stdout")
        else:
            if name == "export-attention":
                p.add_argument("--scene-id", default=None, help="scene to trace (default: first)")
            p.add_argument("--out-dir", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # one-line error for scripts
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

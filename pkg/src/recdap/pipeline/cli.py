"""Command-line entry point: ``recdap {train,eval,ablate,gen-synth,grad-check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, RecdapError
from .config import PRESETS, VARIANTS, RunConfig
from .evaluation import evaluate, validate_report
from .training import build_run, load_model, train

# flag name -> RunConfig field
RUN_FLAGS = {
    "dataset_dir": "dataset_dir",
    "embeddings": "embeddings",
    "few": "few",
    "batch_size": "batch_size",
    "lr": "lr",
    "margin": "margin",
    "t_steps": "t_steps",
    "dim": "dim",
    "seed": "seed",
    "variant": "variant",
    "max_steps": "max_steps",
    "eval_interval": "eval_interval",
    "patience": "patience",
}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _add_run_flags(p: argparse.ArgumentParser, variant: bool = True):
    p.add_argument("--dataset-dir", help="directory in NELL-One layout")
    p.add_argument("--embeddings", help="pretrained embeddings (JSON or TSV)")
    p.add_argument("--config", help="JSON file of RunConfig fields")
    p.add_argument("--preset", choices=sorted(PRESETS), help="base settings applied before --config and flags")
    p.add_argument("--few", type=int, help="support triples per task (k)")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--t-steps", type=int, help="diffusion steps T")
    p.add_argument("--dim", type=int, help="embedding dimension d")
    p.add_argument("--seed", type=int)
    if variant:
        p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--unfiltered", action="store_true", help="rank without removing other true tails")
    p.add_argument("--out-dir", help="run directory (default runs/<variant>-<config hash>)")


def build_config(args, **forced) -> RunConfig:
    fields: dict = dict(PRESETS[args.preset]) if args.preset else {}
    if args.config:
        try:
            fields.update(json.loads(Path(args.config).read_text()))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
    for flag, name in RUN_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            fields[name] = value
    if getattr(args, "unfiltered", False):
        fields["filtered"] = False
    fields.update(forced)
    return RunConfig.from_dict(fields)


def _run_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out_dir) if args.out_dir else Path("runs") / f"{cfg.variant}-{cfg.config_hash()}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_and_report(cfg: RunConfig, out: Path) -> dict:
    (out / "config.json").write_text(_dump(cfg.to_dict()))
    run = build_run(cfg)
    result = train(cfg, run, out_dir=out)
    rep = result.best_report or evaluate(run.model, run.dataset, "valid")
    validate_report(rep)
    (out / "metrics.json").write_text(_dump(rep))
    return rep


def cmd_train(args) -> int:
    cfg = build_config(args)
    out = _run_dir(args, cfg)
    print(_dump(_train_and_report(cfg, out)))
    return 0


def cmd_eval(args) -> int:
    run = load_model(args.checkpoint, args.dataset_dir)
    if args.unfiltered:
        run.model.config = run.model.config.replace(filtered=False)
    rep = evaluate(run.model, run.dataset, args.split)
    validate_report(rep)
    text = _dump(rep)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"metrics_{args.split}.json").write_text(text)
    print(text)
    return 0


def cmd_ablate(args) -> int:
    variants = args.variant or list(VARIANTS)
    reports = []
    for variant in variants:
        cfg = build_config(args, variant=variant)
        out = Path(args.out_dir) / variant if args.out_dir else _run_dir(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        reports.append(_train_and_report(cfg, out))
    print(_dump(reports[0] if len(reports) == 1 else reports))
    return 0


def cmd_gen_synth(args) -> int:
    from ..synth import SynthConfig, write_fixture

    cfg = SynthConfig(entities=args.entities, relations=args.relations, dim=args.dim, seed=args.seed)
    root = write_fixture(args.out_dir, cfg)
    print(_dump(json.loads((root / "manifest.json").read_text())))
    return 0


def cmd_grad_check(args) -> int:
    from .gradcheck_suite import run_suite

    results = run_suite(args.seed)
    for r in results:
        print(r.line(), file=sys.stderr)
    summary = {
        "passed": all(r.passed for r in results),
        "checks": {r.name: {"max_rel_error": r.max_rel_error, "tolerance": r.tolerance} for r in results},
    }
    print(_dump(summary))
    return 0 if summary["passed"] else 1


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recdap", description="Few-shot KG completion with conditional diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and report its best validation metrics")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset-dir", help="override the dataset directory stored in the checkpoint")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--unfiltered", action="store_true")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate ablation variants")
    _add_run_flags(p, variant=False)
    p.add_argument("--variant", choices=VARIANTS, action="append", help="repeatable; default: all variants")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gen-synth", help="write the synthetic fixture")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--relations", type=int, default=20)
    p.add_argument("--dim", type=int, default=32, help="embedding width (the synthetic preset uses 32)")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("grad-check", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (RecdapError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``pausetts {prepare,train,synth,eval,make-synthetic}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import Config, load_config

log = logging.getLogger("pausetts")

ABLATIONS = {"ps": "model.use_ps_encoder", "pw": "model.use_pw_encoder", "adv": "adv.enabled"}


class CommandError(RuntimeError):
    pass


def cmd_prepare(args) -> int:
    from .prepare import format_histogram, prepare_corpus

    cfg = load_config(args.config)
    res = prepare_corpus(args.raw_dir, args.out_dir, cfg)
    print(f"wrote {res.n_utterances} utterances to {res.manifest}")
    print(format_histogram(res.histogram))
    if res.failures:
        for uid, msg in sorted(res.failures.items()):
            print(f"failed {uid}: {msg}", file=sys.stderr)
        raise CommandError(f"{len(res.failures)} utterance(s) failed to prepare")
    return 0


def train_config(args) -> Config:
    cfg = load_config(args.config)
    overrides = {}
    for name in args.ablate or []:
        overrides[ABLATIONS[name]] = False
    if args.max_steps is not None:
        overrides["train.max_steps"] = args.max_steps
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    return cfg.updated(overrides) if overrides else cfg


def cmd_train(args) -> int:
    from .trainer import run_training

    cfg = train_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    trainer = run_training(args.manifest, cfg, out, resume=args.resume)
    print(f"trained to step {trainer.step}; checkpoints in {out}")
    return 0


def _parse_override(text: str | None):
    if text is None:
        return None
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError as exc:
        raise CommandError(f"--pause-override must be comma-separated integers: {text!r}") from exc


def cmd_synth(args) -> int:
    from .inference import bundle_example, load_text_bundle, synthesize_example, synthesize_manifest, write_synthesis
    from .trainer import Trainer

    trainer = Trainer.from_checkpoint(args.checkpoint)
    model, cfg = trainer.model, trainer.cfg
    if args.manifest:
        path = synthesize_manifest(model, trainer.vocab, cfg, args.manifest, args.out_dir, seed=args.seed)
        print(f"wrote hypothesis manifest {path}")
        return 0
    if not args.text_bundle or not args.out:
        raise CommandError("synth needs --text-bundle and --out (or --manifest and --out-dir)")
    bundle = load_text_bundle(args.text_bundle)
    speaker = args.speaker if args.speaker is not None else int(bundle.get("speaker", 0))
    ex = bundle_example(bundle, speaker, trainer.vocab, cfg)
    result = synthesize_example(model, ex, _parse_override(args.pause_override), seed=args.seed)
    mel_path, side = write_synthesis(result, args.out)
    print(f"wrote {mel_path} ({result['mel'].shape[0]} frames) and {side}")
    return 0


def cmd_eval(args) -> int:
    from .inference import evaluate_manifests

    cfg = load_config(args.config)
    report = evaluate_manifests(args.ref, args.hyp, cfg)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_make_synthetic(args) -> int:
    from .synthetic import make_synthetic_corpus, tiny_config

    cfg = tiny_config()
    manifest = make_synthetic_corpus(args.out_dir, cfg, n_utts=args.n_utts, seed=args.seed)
    cfg_path = Path(args.out_dir) / "tiny_config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
    print(f"wrote {manifest} and {cfg_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pausetts", description="Pause-aware text-to-mel synthesis toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("prepare", help="features + manifest from audio and alignment JSON")
    sp.add_argument("raw_dir")
    sp.add_argument("out_dir")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("train", help="train or resume a model")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--config")
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.add_argument("--ablate", action="append", choices=sorted(ABLATIONS), help="disable a component (repeatable)")
    sp.add_argument("--max-steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("synth", help="synthesize mel from a text bundle or a whole manifest")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--text-bundle")
    sp.add_argument("--out", help="output mel .pst (sidecar JSON written next to it)")
    sp.add_argument("--manifest")
    sp.add_argument("--out-dir")
    sp.add_argument("--speaker", type=int)
    sp.add_argument("--pause-override", help="comma-separated pause classes, one per word")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("eval", help="objective metrics between reference and hypothesis manifests")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("make-synthetic", help="write the rule-generated toy corpus and its config")
    sp.add_argument("out_dir")
    sp.add_argument("--n-utts", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_make_synthetic)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # one machine-parsable line per failure
        if args.verbose:
            log.exception("command failed")
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

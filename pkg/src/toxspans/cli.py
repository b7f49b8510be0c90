"""Command-line front end.

Every command exits 0 on success; on failure it prints a JSON error object
on stderr and exits 1. Relative output paths are resolved against
``$TOXSPANS_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import corpus
from .corpus import atomic_write_text, load_dataset, write_dataset

OUTPUT_ROOT_ENV = "TOXSPANS_OUTPUT_ROOT"

log = logging.getLogger("toxspans")


class CliError(RuntimeError):
    pass


def out_path(p: str) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(p)
    return path if path.is_absolute() or not root else Path(root) / path


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_prepare(args) -> None:
    split = load_dataset(args.input)
    if args.merge_trial:
        split = corpus.merge_splits(split, load_dataset(args.merge_trial))
    if args.clean:
        split = corpus.clean_split(split)
    write_dataset(split, out_path(args.output))
    print(f"wrote {len(split)} samples to {out_path(args.output)}")


def cmd_synth(args) -> None:
    from .synth import SynthConfig, generate

    cfg = SynthConfig(train_size=args.size, dev_size=args.dev_size or max(args.size // 10, 1),
                      test_size=args.test_size or max(args.size // 10, 1), lexicon_size=args.lexicon_size,
                      seed=args.seed)
    out = out_path(args.out_dir)
    for name, split in generate(cfg).items():
        write_dataset(split, out / f"{name}.csv")
    print(f"wrote train/dev/test CSVs to {out}")


def _overrides(args) -> dict:
    ov: dict = {}
    enc = {k: v for k, v in {
        "embedding_dim": args.embedding_dim, "hidden_dim": args.hidden_dim, "encoder": args.encoder,
        "max_len": args.max_len, "stride": args.stride, "dropout_rate": args.dropout,
        "num_layers": args.num_layers}.items() if v is not None}
    tr = {k: v for k, v in {
        "epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.lr,
        "weight_decay": args.weight_decay}.items() if v is not None}
    if enc:
        ov["encoder"] = enc
    if tr:
        ov["train"] = tr
    if args.head:
        ov["head"] = args.head
    if args.seed is not None:
        ov["seed"] = args.seed
    return ov


def cmd_train(args) -> None:
    from .config import resolve_config
    from .model import metrics_log, select_checkpoints, train
    from .tokenizer import Tokenizer, learn_subword_pieces

    cfg = resolve_config(args.preset, args.config, _overrides(args))
    train_split = load_dataset(args.train)
    if args.merge_trial:
        train_split = corpus.merge_splits(train_split, load_dataset(args.merge_trial))
    dev = load_dataset(args.dev)
    tokenizer = Tokenizer(learn_subword_pieces(s.text for s in train_split)) if args.subword else Tokenizer()
    ckpts = train(train_split, dev, cfg.head, cfg.encoder, cfg.train, cfg.decode, tokenizer=tokenizer)
    out = out_path(args.out_dir)
    for ck in ckpts:
        ck.save(out / f"epoch_{ck.epoch}.npz")
    best = select_checkpoints(ckpts, 1)[0]
    best.vocab().save(out / "vocab.tsv")
    log_obj = {"config": cfg.to_dict(), "epochs": metrics_log(ckpts), "best_epoch": best.epoch}
    atomic_write_text(out / "metrics.json", _json_dump(log_obj))
    print(f"trained {cfg.head.value}: {len(ckpts)} checkpoints in {out}; best epoch {best.epoch} "
          f"(dev loss {best.dev_loss:.4f}, dev F1 {best.dev_f1:.4f})")


def _decode_cfg(args, ckpt):
    from .decode import DecodeConfig

    cfg = DecodeConfig(top_k=args.top_k, max_span_len=args.max_span_len,
                       allow_single_token_spans=not args.strict_spans)
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    if threshold is not None:
        cfg = replace(cfg, threshold=threshold, word_prob_threshold=threshold)
    return cfg


def _load_for_decode(args):
    from .inference import Predictor
    from .model import ModelCheckpoint

    ckpt = ModelCheckpoint.load(args.checkpoint)
    if args.decoder and args.decoder != ckpt.head.value:
        raise CliError(f"{ckpt.head.value} checkpoint is incompatible with the {args.decoder} decoder")
    return ckpt, Predictor.from_checkpoint(ckpt)


def cmd_predict(args) -> None:
    from .decode import write_predictions

    ckpt, predictor = _load_for_decode(args)
    split = load_dataset(args.data, has_gold=False)
    pred = predictor.predict(split, _decode_cfg(args, ckpt), args.mode)
    write_predictions(pred, out_path(args.out))
    print(f"wrote {len(pred)} predictions to {out_path(args.out)}")


def cmd_tune_threshold(args) -> None:
    from .decode import tune_threshold, threshold_curve
    from .inference import THRESHOLD_HEADS

    ckpt, predictor = _load_for_decode(args)
    if ckpt.head not in THRESHOLD_HEADS:
        raise CliError(f"{ckpt.head.value} checkpoints have no score threshold to tune")
    dev = load_dataset(args.dev)
    cands = predictor.candidates(dev, _decode_cfg(args, ckpt), args.mode)
    ordered = [cands[s.id] for s in dev]
    golds = [s.gold_offsets for s in dev]
    threshold = tune_threshold(ordered, golds)
    grid, f1 = threshold_curve(ordered, golds)
    result = {"threshold": threshold, "dev_f1": float(f1.max()), "mode": args.mode, "checkpoint": str(args.checkpoint)}
    if args.out:
        atomic_write_text(out_path(args.out), _json_dump(result))
    if args.write_back:
        ckpt.threshold = threshold
        ckpt.save(args.checkpoint)
    print(json.dumps(result, sort_keys=True))


def cmd_evaluate(args) -> None:
    from .decode import read_predictions
    from .metric import evaluate

    report = evaluate(read_predictions(args.predictions), load_dataset(args.gold))
    if args.out_json:
        atomic_write_text(out_path(args.out_json), report.to_json())
    if args.out_text:
        atomic_write_text(out_path(args.out_text), report.summary() + "\n")
    print(report.summary())


def cmd_ensemble(args) -> None:
    from .decode import write_predictions
    from .ensemble import load_spec, materialize
    from .metric import evaluate

    spec = load_spec(args.spec)
    gold = load_dataset(args.gold) if args.gold else None
    split = load_dataset(args.data, has_gold=False) if args.data else gold
    pred = materialize(spec, split)
    write_predictions(pred, out_path(args.out))
    msg = f"wrote {len(pred)} combined predictions to {out_path(args.out)}"
    if gold is not None:
        report = evaluate(pred, gold)
        if args.report:
            atomic_write_text(out_path(args.report), report.to_json())
        msg += f"; {report.summary()}"
    print(msg)


def cmd_attribute(args) -> None:
    from .attribution import AttributionConfig, dump_json, html_report, integrated_gradients
    from .features import Task

    ckpt, predictor = _load_for_decode(args)
    rule = args.target_rule or ("sp_predicted_spans" if ckpt.head is Task.SP else "tc_toxic_over_half")
    cfg = AttributionConfig(n_steps=args.n_steps, baseline=args.baseline, target_rule=rule)
    split = load_dataset(args.data, has_gold=False)
    wanted = set(args.sample_ids) if args.sample_ids else None
    samples = [s for s in split if wanted is None or s.id in wanted]
    decode_cfg = _decode_cfg(args, ckpt)
    items = []
    for f in predictor.features(samples):
        items.append((integrated_gradients(predictor.model, f, cfg, decode_cfg), f))
    out = out_path(args.out_dir)
    atomic_write_text(out / "attributions.json", dump_json(items))
    atomic_write_text(out / "attributions.html", html_report(items))
    print(f"wrote attributions for {len(items)} features to {out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toxspans", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare", help="clean and/or merge span CSVs")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--clean", action="store_true", help="trim spans and snap partial words")
    s.add_argument("--merge-trial", metavar="CSV", help="append this split (train+trial)")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("synth", help="generate a planted-lexicon corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--size", type=int, default=2000, help="train size")
    s.add_argument("--dev-size", type=int)
    s.add_argument("--test-size", type=int)
    s.add_argument("--lexicon-size", type=int, default=20)
    s.add_argument("--seed", type=int, default=7)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one system, one checkpoint per epoch")
    s.add_argument("--train", required=True)
    s.add_argument("--dev", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--head", choices=["TC", "SP", "MSP", "SPTC", "CRF", "WORD"])
    s.add_argument("--preset")
    s.add_argument("--config", help="JSON run config")
    s.add_argument("--seed", type=int)
    s.add_argument("--merge-trial", metavar="CSV")
    s.add_argument("--subword", action="store_true", help="greedy longest-match subword tokens")
    for flag, typ in (("--epochs", int), ("--batch-size", int), ("--lr", float), ("--weight-decay", float),
                      ("--embedding-dim", int), ("--hidden-dim", int), ("--max-len", int), ("--stride", int),
                      ("--dropout", float), ("--num-layers", int)):
        s.add_argument(flag, type=typ)
    s.add_argument("--encoder", choices=["bilstm", "tiny_transformer"])
    s.set_defaults(func=cmd_train)

    def decode_flags(s):
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--threshold", type=float, help="override the checkpoint's tuned threshold")
        s.add_argument("--top-k", type=int, default=20)
        s.add_argument("--max-span-len", type=int, default=30)
        s.add_argument("--strict-spans", action="store_true", help="forbid single-token spans")
        s.add_argument("--decoder", choices=["TC", "SP", "MSP", "SPTC", "CRF", "WORD"],
                       help="assert the checkpoint's head")

    s = sub.add_parser("predict", help="write <id>\\t[offsets] predictions")
    decode_flags(s)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mode", default="default", choices=["default", "combined", "token_only", "span_only"])
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("tune-threshold", help="pick the span-score threshold maximising dev F1")
    decode_flags(s)
    s.add_argument("--dev", required=True)
    s.add_argument("--mode", default="default", choices=["default", "combined", "span_only"])
    s.add_argument("--out", help="JSON result file")
    s.add_argument("--write-back", action="store_true", help="store the threshold in the checkpoint")
    s.set_defaults(func=cmd_tune_threshold)

    s = sub.add_parser("evaluate", help="character-offset F1 of a prediction file")
    s.add_argument("--predictions", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--out-json")
    s.add_argument("--out-text")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ensemble", help="union/intersection of predictions")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--data", help="split to predict on for checkpoint operands")
    s.add_argument("--gold", help="evaluate the combination against this CSV")
    s.add_argument("--report", help="JSON report path (with --gold)")
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("attribute", help="Integrated Gradients token attributions")
    decode_flags(s)
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--sample-ids", type=int, nargs="*")
    s.add_argument("--n-steps", type=int, default=50)
    s.add_argument("--baseline", default="zero_embeddings", choices=["zero_embeddings", "pad_embeddings"])
    s.add_argument("--target-rule", choices=["tc_toxic_over_half", "sp_predicted_spans"])
    s.set_defaults(func=cmd_attribute)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # reported as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

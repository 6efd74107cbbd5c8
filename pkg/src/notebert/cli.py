"""Command-line entry point: ``notebert <command> ...`` or ``python -m notebert``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .checkpoint import load_checkpoint
from .config import default_config_dict, load_config
from .encoder import term_embedding
from .interpret import attention_maps, export_heatmap
from .metrics import auprc, auroc, concept_benchmark, read_concept_pairs, read_scored_labels, rp80
from .preprocess import preprocess_note
from .readmission import read_predictions
from .records import read_labels, read_notes, write_admissions, write_labels, write_notes, write_segmented
from .synth import gen_synthetic_corpus
from .tokenizer import build_vocab

log = logging.getLogger("notebert")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _config(args):
    return load_config(args.config, args.set)


def cmd_preprocess(args) -> None:
    notes = read_notes(args.input)
    write_segmented(((n, preprocess_note(n)) for n in notes), args.output)
    print(f"preprocessed {len(notes)} notes -> {args.output}")


def cmd_build_vocab(args) -> None:
    if args.config:
        cfg = _config(args)
        vocab = pipeline.build_fold_vocab(cfg)
        out = cfg.paths.vocab
    else:
        if not (args.notes and args.output):
            raise ValueError("build-vocab needs --config, or --notes and --output")
        sentences = [s for n in read_notes(args.notes) for s in preprocess_note(n).sentences]
        vocab = build_vocab(sentences, args.size)
        vocab.save(args.output)
        out = args.output
    print(f"vocabulary of {len(vocab)} tokens -> {out} (digest {vocab.digest()[:12]})")


def cmd_pretrain(args) -> None:
    cfg = _config(args)
    final = pipeline.pretrain(cfg)
    print(f"step {final['step']} loss {_fmt(final['loss'])} mlm_accuracy {_fmt(final['mlm_accuracy'])} "
          f"nsp_accuracy {_fmt(final['nsp_accuracy'])}")
    print(f"checkpoint -> {cfg.paths.pretrained}")


def cmd_finetune(args) -> None:
    cfg = _config(args)
    result = pipeline.finetune(cfg)
    for row in result.history:
        print(f"epoch {row['epoch']} train_loss {_fmt(row['train_loss'])} "
              f"validation_loss {_fmt(row['validation_loss'])}")
    print(f"best epoch {result.best_epoch}; checkpoint -> {cfg.paths.finetuned}")


def _mode(value: str):
    return value if value == "discharge" else int(value)


def cmd_predict(args) -> None:
    cfg = _config(args)
    preds = pipeline.predict(cfg, None if args.mode is None else _mode(args.mode), args.split)
    scorable = sum(p.scorable for p in preds)
    print(f"{scorable} scorable of {len(preds)} admissions -> {cfg.paths.predictions}")


def cmd_eval(args) -> None:
    path = Path(args.predictions)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if {"score", "label"} <= set(header):
        data = read_scored_labels(path)
    else:
        if not args.labels:
            raise ValueError("predictions without a label column need --labels")
        data = pipeline.join_predictions(read_predictions(path), read_labels(args.labels))
    print(f"n {len(data.scores)}")
    if 0 < sum(data.labels) < len(data.labels):
        print(f"auroc {_fmt(auroc(data.scores, data.labels))}")
    print(f"auprc {_fmt(auprc(data.scores, data.labels, args.interpolation))}")
    print(f"rp80 {_fmt(rp80(data.scores, data.labels))}")


def cmd_similarity(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    vocab = pipeline.load_vocab_for(ckpt.vocab_digest, args.vocab)
    last = args.last_layers or min(4, ckpt.config.num_layers)

    def embed(term):
        return term_embedding(term.lower(), vocab, ckpt.params, ckpt.config, last)

    res = concept_benchmark(read_concept_pairs(args.pairs), embed)
    print(f"pearson {_fmt(res.correlation)}")
    print(f"pairs_used {res.evaluated} pairs_dropped {res.dropped} last_layers {last}")


def cmd_attention(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    vocab = pipeline.load_vocab_for(ckpt.vocab_digest, args.vocab)
    cfg = ckpt.config
    if not (0 <= args.layer < cfg.num_layers and 0 <= args.head < cfg.num_heads):
        raise ValueError(f"layer/head ({args.layer}, {args.head}) outside the encoder's "
                         f"{cfg.num_layers} layers x {cfg.num_heads} heads")
    maps = attention_maps(args.sentence.lower(), vocab, ckpt.params, cfg)
    amap = maps[args.layer * cfg.num_heads + args.head]
    export_heatmap(amap, args.output, args.svg)
    print(f"{len(amap.tokens)}x{len(amap.tokens)} map (layer {args.layer}, head {args.head}) -> {args.output}")


def cmd_gen_synth(args) -> None:
    co = gen_synthetic_corpus(args.seed, args.patients, signal_rate=args.signal_rate, typo_rate=args.typo_rate,
                              slots_per_note=args.slots)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_notes(co.notes, out / "notes.jsonl")
    write_admissions(co.admissions, out / "admissions.jsonl")
    write_labels(co.labels, out / "labels.csv")
    pos = sum(co.labels.values())
    print(f"{len(co.admissions)} admissions ({pos} readmitted of {len(co.labels)} labeled), "
          f"{len(co.notes)} notes -> {out}")


def cmd_baseline_bow(args) -> None:
    cfg = _config(args)
    res = pipeline.baseline_bow(cfg, args.max_features)
    print(" ".join(f"{k} {_fmt(v)}" for k, v in res.items() if k != "l2") + f" l2 {res['l2']:g}")
    print(f"scores -> {cfg.paths.baseline_predictions}")


def cmd_init_config(args) -> None:
    text = json.dumps(default_config_dict(args.seed), indent=2) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="notebert", description="Clinical-note encoder: pretraining, "
                                "readmission fine-tuning and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("--config", required=required, help="JSON run configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. finetune.epochs=3 (repeatable)")
        return sp

    sp = sub.add_parser("preprocess", help="clean and segment a notes JSONL file")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_preprocess)

    sp = with_config(sub.add_parser("build-vocab", help="learn a subword vocabulary"), required=False)
    sp.add_argument("--notes", help="notes JSONL (without --config)")
    sp.add_argument("--size", type=int, default=600)
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_build_vocab)

    with_config(sub.add_parser("pretrain", help="masked-token + next-segment pretraining")).set_defaults(
        func=cmd_pretrain)
    with_config(sub.add_parser("finetune", help="readmission fine-tuning")).set_defaults(func=cmd_finetune)

    sp = with_config(sub.add_parser("predict", help="patient-level readmission risk"))
    sp.add_argument("--mode", help="discharge, 48 or 72 (default: finetune.mode)")
    sp.add_argument("--split", choices=["test", "validation", "train", "all"], default="test")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="AUROC, AUPRC and RP80 of scored labels")
    sp.add_argument("predictions", help="CSV with score,label columns or a predictions CSV")
    sp.add_argument("--labels", help="admission_id,label CSV or admissions JSONL")
    sp.add_argument("--interpolation", choices=["step", "trapezoid"], default="step")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("similarity", help="Pearson correlation with rated concept pairs")
    sp.add_argument("pairs")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--last-layers", type=int, help="layer outputs to sum (default: min(4, layers))")
    sp.set_defaults(func=cmd_similarity)

    sp = sub.add_parser("attention", help="export one head's attention map")
    sp.add_argument("sentence")
    sp.add_argument("--layer", type=int, required=True)
    sp.add_argument("--head", type=int, required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--output", required=True, help="CSV path")
    sp.add_argument("--svg", help="optional SVG path")
    sp.set_defaults(func=cmd_attention)

    sp = sub.add_parser("gen-synth", help="write a synthetic notes/admissions cohort")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--patients", type=int, default=500)
    sp.add_argument("--signal-rate", type=float, default=0.8)
    sp.add_argument("--typo-rate", type=float, default=0.5)
    sp.add_argument("--slots", type=int, default=3)
    sp.add_argument("--output-dir", required=True)
    sp.set_defaults(func=cmd_gen_synth)

    sp = with_config(sub.add_parser("baseline-bow", help="bag-of-words logistic regression baseline"))
    sp.add_argument("--max-features", type=int, default=5000)
    sp.set_defaults(func=cmd_baseline_bow)

    sp = sub.add_parser("init-config", help="print a configuration with desk defaults")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output")
    sp.set_defaults(func=cmd_init_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # surfaced with command context, never a traceback
        print(f"notebert {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``snelsd train | eval | inspect-chunks``.

Errors end the process with exit status 2 and a single JSON line on
stderr, e.g. ``{"error": "config", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import report
from .checkpoint import load_checkpoint
from .config import RunConfig, parse_value, read_config_file
from .data import NLI_LABELS, SA_LABELS, SequenceBatch, corpus_format, load_snli, load_sst, sst_examples, write_snli, write_sst
from .errors import CapabilityError, ConfigError, SnelsdError
from .synthetic import synthetic_nli, synthetic_sa
from .training import evaluate, prepare, restore

log = logging.getLogger("snelsd")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=argparse.SUPPRESS, metavar=f.name.upper())


def build_config(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        if hasattr(args, f.name):
            values[f.name] = parse_value(f.name, getattr(args, f.name))
    try:
        return RunConfig(**values).resolved()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def write_config(path: Path, config: RunConfig) -> None:
    lines = [f"{k} = {'none' if v is None else v}" for k, v in config.to_dict().items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    config = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(json.dumps({"config": config.to_dict()}, sort_keys=True))
    summaries = []
    for trial in range(args.trials):
        cfg = config if args.trials == 1 else RunConfig(**(config.to_dict() | {"seed": trial})).resolved()
        run_dir = out if args.trials == 1 else out / f"trial-{trial:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_config(run_dir / "config.txt", cfg)
        trainer, dev, test = prepare(cfg)
        history = trainer.fit(
            dev_examples=dev,
            log_path=run_dir / "metrics.jsonl",
            checkpoint_path=run_dir / "checkpoint.bin",
            on_epoch=lambda rec: print(json.dumps(rec, sort_keys=True), flush=True),
        )
        if history and args.plot:
            report.plot_training_curves(history, run_dir / "curves.png")
        summary = {"trial": trial, "seed": cfg.seed, "epochs": len(history)}
        if test:
            model, vocab = restore(load_checkpoint(run_dir / "checkpoint.bin"))
            summary["test_acc"] = evaluate(model, test, vocab).accuracy
        if dev:
            summary["best_dev_acc"] = max(h["dev_acc"] for h in history) if history else None
        summaries.append(summary)
    if args.trials > 1:
        accs = [s["test_acc"] for s in summaries if "test_acc" in s]
        agg = {"trials": summaries}
        if accs:
            agg["test_acc_mean"] = float(np.mean(accs))
            agg["test_acc_std"] = float(np.std(accs))
        (out / "trials.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
        print(json.dumps({k: v for k, v in agg.items() if k != "trials"}, sort_keys=True))
    return 0


def _eval_examples(config: RunConfig, path: Path):
    fmt = corpus_format(path)
    if fmt != config.task:
        raise ConfigError(f"checkpoint task is {config.task} but {path.name} holds {fmt} data")
    if fmt == "nli":
        return load_snli(path, lowercase=config.lowercase)
    return sst_examples(load_sst(path, lowercase=config.lowercase))


def format_confusion(confusion: np.ndarray, labels) -> str:
    width = max(8, max(len(s) for s in labels) + 1)
    head = " " * width + "".join(f"{s[:width - 1]:>{width}}" for s in labels)
    rows = [f"{g[:width - 1]:<{width}}" + "".join(f"{v:>{width}}" for v in row) for g, row in zip(labels, confusion)]
    return "\n".join(["gold \\ predicted", head] + rows)


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    path = Path(args.data) if args.data else ckpt.config.data_path(args.split)
    if path is None:
        raise ConfigError(f"no {args.split} path in the checkpoint config; pass --data")
    examples = _eval_examples(ckpt.config, path)
    model, vocab = restore(ckpt)
    result = evaluate(model, examples, vocab)
    labels = NLI_LABELS if ckpt.config.task == "nli" else SA_LABELS
    if args.json:
        print(json.dumps({"accuracy": result.accuracy, "n": int(result.confusion.sum()),
                          "confusion": result.confusion.tolist()}, sort_keys=True))
    else:
        print(f"accuracy: {100 * result.accuracy:.1f}% ({int(np.trace(result.confusion))}/{int(result.confusion.sum())})")
        print(format_confusion(result.confusion, labels))
    return 0


def chunk_traces(model, vocab, sentences):
    if not model.encoder.has_chunks:
        raise CapabilityError(f"encoder {model.config.encoder!r} has no detection layer")
    batch = SequenceBatch.from_tokens(sentences, vocab)
    out = model.encode(batch)
    return [t.r for t in out.chunk_traces()]


def cmd_inspect_chunks(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model, vocab = restore(ckpt)
    lines = Path(args.sentences).read_text(encoding="utf-8").splitlines()
    sentences = [ln.lower().split() if ckpt.config.lowercase else ln.split() for ln in lines if ln.strip()]
    if not sentences:
        raise ConfigError("no sentences to inspect")
    traces = chunk_traces(model, vocab, sentences)
    if args.format == "png":
        if not args.out:
            raise ConfigError("--format png needs --out")
        report.plot_chunk_heatmap(sentences, traces, args.out)
        return 0
    text = report.render_ansi(sentences, traces) if args.format == "ansi" else report.render_html(sentences, traces)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.figure:
        report.plot_chunk_heatmap(sentences, traces, args.figure)
    return 0


def cmd_make_synthetic(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.task == "nli":
        write_snli(out / "train.jsonl", synthetic_nli(args.n or 64, seed=args.seed, trees=True))
        write_snli(out / "dev.jsonl", synthetic_nli(max(9, (args.n or 64) // 4), seed=args.seed + 1, trees=True))
    else:
        write_sst(out / "train.txt", synthetic_sa(args.n or 40, seed=args.seed))
        write_sst(out / "dev.txt", synthetic_sa(max(10, (args.n or 40) // 4), seed=args.seed + 1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snelsd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model; writes metrics.jsonl and checkpoint.bin")
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--trials", type=int, default=1, help="repeat with seeds 0..N-1")
    p.add_argument("--plot", action="store_true", help="also render curves.png")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    p.add_argument("--data", help="evaluate this file instead of the configured split")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-chunks", help="render chunk-boundary heatmaps")
    p.add_argument("checkpoint")
    p.add_argument("sentences", help="one whitespace-tokenised sentence per line")
    p.add_argument("--format", default="ansi", choices=("ansi", "html", "png"))
    p.add_argument("--out", help="write here instead of stdout")
    p.add_argument("--figure", help="additionally render a PNG heatmap here")
    p.set_defaults(func=cmd_inspect_chunks)

    p = sub.add_parser("make-synthetic", help="write a small synthetic corpus")
    p.add_argument("--task", choices=("nli", "sa"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except SnelsdError as exc:
        reason = {"error": exc.kind, "message": str(exc)}
    except OSError as exc:
        reason = {"error": "io", "message": str(exc)}
    sys.stderr.write(json.dumps(reason) + "\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())

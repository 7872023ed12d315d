"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
Relative input paths that do not exist are also looked up under the
directory named by ``$E2E_STANCE_DATA``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import torch

from . import analysis
from .corpus import CorpusError, StanceTriplet, chronological_split, load_corpus, load_splits
from .evaluator import evaluate_files, load_predictions, taskb_metrics
from .model import TASKB_LABELS, ModelConfig, StanceModel, load_checkpoint, predict, rank_taskb, save_checkpoint
from .model.backbone import load_bart
from .pipeline import build_vocab, document_graphs, make_examples, samples_from_corpus
from .semgraph import GraphError, Sidecar, load_sidecars, load_wiki_index
from .trainer import TrainConfig, train

DATA_ENV = "E2E_STANCE_DATA"
PATH_KEYS = ("corpus", "sidecars", "splits", "wiki")
# shape keys come from the checkpoint when the backbone is pretrained
BART_SHAPE_KEYS = {"hidden_dim", "encoder_layers", "decoder_layers", "attention_heads", "ffn_dim",
                   "graph_ffn_dim", "dropout", "max_positions", "backbone"}

logger = logging.getLogger("e2e_stance")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def resolve_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(DATA_ENV):
        alt = Path(os.environ[DATA_ENV]) / p
        if alt.exists():
            return alt
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return p


def write_json(obj, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(records, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def _load_sidecars(path) -> dict[str, Sidecar]:
    return load_sidecars(resolve_path(path)) if path else {}


# -- run config ------------------------------------------------------------------


def resolve_run_config(raw: dict, seed: int | None = None) -> tuple[ModelConfig, TrainConfig, dict]:
    """Split a flat config into model, training and path settings; unknown keys raise."""
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - model_keys - train_keys - set(PATH_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    train_cfg = TrainConfig.from_dict({k: v for k, v in raw.items() if k in train_keys})
    if seed is not None:
        train_cfg.seed = seed
    model_cfg = ModelConfig.from_dict({k: v for k, v in raw.items() if k in model_keys})
    paths = {k: raw.get(k) for k in PATH_KEYS}
    return model_cfg, train_cfg, paths


def _resolved_dict(model_cfg: ModelConfig, train_cfg: TrainConfig, paths: dict) -> dict:
    return {**model_cfg.to_dict(), **{f.name: getattr(train_cfg, f.name) for f in fields(TrainConfig)}, **paths}


# -- commands --------------------------------------------------------------------


def cmd_build_graphs(args) -> None:
    articles = load_corpus(resolve_path(args.corpus))
    sidecars = _load_sidecars(args.sidecars)
    index = load_wiki_index(resolve_path(args.wiki)) if args.wiki else None
    graphs = document_graphs(articles, sidecars, index, workers=args.workers)
    write_jsonl(({"article_id": doc, "graph": g.to_dict()} for doc, g in sorted(graphs.items())), args.out)


def cmd_train(args) -> None:
    raw = json.loads(resolve_path(args.config).read_text(encoding="utf-8")) if args.config else {}
    for key in PATH_KEYS:
        if getattr(args, key, None):
            raw[key] = getattr(args, key)
    model_cfg, train_cfg, paths = resolve_run_config(raw, args.seed)
    if not paths["corpus"]:
        raise ValueError("a corpus path is required (--corpus or 'corpus' in the config)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(_resolved_dict(model_cfg, train_cfg, paths), out / "resolved_config.json")

    torch.manual_seed(train_cfg.seed)
    np.random.seed(train_cfg.seed)
    articles = load_corpus(resolve_path(paths["corpus"]))
    sidecars = _load_sidecars(paths["sidecars"])
    index = None
    if model_cfg.use_wiki:
        if not paths["wiki"]:
            raise ValueError("use_wiki needs a wiki vectors file ('wiki')")
        index = load_wiki_index(resolve_path(paths["wiki"]), model_cfg.wiki_dim)
    samples = samples_from_corpus(articles, sidecars, model_cfg.context_window, model_cfg.include_entities)
    splits = load_splits(resolve_path(paths["splits"]), samples) if paths["splits"] else chronological_split(samples)
    graphs = document_graphs(articles, sidecars, index, args.workers) if model_cfg.use_graph else {}

    if model_cfg.backbone == "bart":
        if not model_cfg.backbone_path:
            raise ValueError("backbone 'bart' needs backbone_path")
        overrides = {k: v for k, v in model_cfg.to_dict().items() if k not in BART_SHAPE_KEYS}
        backbone, model_cfg, tokenizer = load_bart(model_cfg.backbone_path, **overrides)
        model = StanceModel(model_cfg, len(tokenizer), tokenizer.pad_id, backbone)
    else:
        tokenizer = build_vocab(splits.train + splits.valid + splits.test)
        model = StanceModel(model_cfg, len(tokenizer), tokenizer.pad_id)

    train_set = make_examples(splits.train, tokenizer, model_cfg, graphs, index)
    dev_set = make_examples(splits.valid, tokenizer, model_cfg, graphs, index)
    _, log = train(train_set, dev_set, model, train_cfg)
    log.write_jsonl(out / "train_log.jsonl")
    save_checkpoint(out / "model.pt", model, tokenizer,
                    {"train_config": _resolved_dict(model_cfg, train_cfg, paths),
                     "best_step": log.best_step, "best_dev_loss": log.best_dev_loss})
    print(json.dumps({"best_step": log.best_step, "best_dev_loss": log.best_dev_loss,
                      "stop_reason": log.stop_reason}, sort_keys=True))


def cmd_predict(args) -> None:
    model, tokenizer, _ = load_checkpoint(resolve_path(args.checkpoint))
    cfg = model.cfg
    if args.strategy:
        cfg.decode.strategy = args.strategy
    if args.beam_size:
        cfg.decode.beam_size = args.beam_size
    cfg.validate()
    articles = load_corpus(resolve_path(args.corpus))
    sidecars = _load_sidecars(args.sidecars)
    index = None
    if cfg.use_wiki:
        if not args.wiki:
            raise ValueError("the checkpoint uses wiki nodes; pass --wiki")
        index = load_wiki_index(resolve_path(args.wiki), cfg.wiki_dim)
    samples = samples_from_corpus(articles, sidecars, cfg.context_window, cfg.include_entities,
                                  include_unannotated=args.all_sentences)
    if args.splits:
        samples = getattr(load_splits(resolve_path(args.splits), samples), args.split)
    graphs = document_graphs(articles, sidecars, index, args.workers) if cfg.use_graph else {}
    examples = make_examples(samples, tokenizer, cfg, graphs, index)
    model.eval()
    write_jsonl((p.to_dict() for p in predict(model, examples, tokenizer, cfg.decode)), args.out)


def cmd_evaluate(args) -> None:
    report = evaluate_files(resolve_path(args.pred), resolve_path(args.ref))
    write_json(report.to_dict(), args.out)


def cmd_taskb(args) -> None:
    model, tokenizer, _ = load_checkpoint(resolve_path(args.checkpoint))
    records, preds, golds = [], [], []
    with open(resolve_path(args.data), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = [k for k in ("sentence", "e1", "e2") if k not in rec]
            if missing:
                raise ValueError(f"line {lineno}: missing field(s) {missing}")
            label, scores = rank_taskb(model, rec["sentence"], rec["e1"], rec["e2"], tokenizer)
            records.append({"id": rec.get("id", lineno), "label": label, "scores": scores})
            preds.append(label)
            golds.append(rec.get("label"))
    report: dict = {"predictions": records}
    if golds and all(g is not None for g in golds):
        acc, macro = taskb_metrics(preds, golds, TASKB_LABELS)
        report.update(accuracy=acc, macro_f1=macro)
    write_json(report, args.out)


def _triplets_for_analysis(args) -> list[StanceTriplet]:
    if args.pred:
        preds, _ = load_predictions(resolve_path(args.pred))
        return [t for sid in sorted(preds) for t in preds[sid]]
    return [t for a in load_corpus(resolve_path(args.corpus)) for t in a.triplets]


def cmd_analyze(args) -> None:
    party_map = analysis.load_party_map(resolve_path(args.party_map))
    if args.kind in ("quotes", "landscape"):
        if args.pred:
            raise ValueError(f"analyze {args.kind} works on an annotated corpus, not predictions")
        articles = load_corpus(resolve_path(args.corpus))
        fn = analysis.quote_counts if args.kind == "quotes" else analysis.stance_landscape
        table = fn(articles, party_map, args.grouping)
        write_json(table, args.out)
        if args.plot:
            analysis.plot_bars(table, args.plot, "avg. quoted" if args.kind == "quotes" else "% of triplets")
        return
    graph = analysis.SignedGraph.from_triplets(_triplets_for_analysis(args))
    if args.kind == "groups":
        write_json(analysis.group_sentiment_stats(graph, party_map), args.out)
        return
    if args.mask is not None:
        write_json(analysis.propagate_ideology(graph, party_map, args.mask, args.seed).to_dict(), args.out)
        return
    # sweep
    curve = {}
    for ratio in args.sweep:
        runs = [analysis.propagate_ideology(graph, party_map, ratio, args.seed + r) for r in range(args.repeats)]
        accs = [r.accuracy for r in runs if r.accuracy is not None]
        curve[f"{ratio:g}"] = {
            "accuracy": float(np.mean(accs)) if accs else None,
            "strict_accuracy": float(np.mean([r.strict_accuracy for r in runs])),
            "coverage": float(np.mean([r.coverage for r in runs])),
        }
    write_json(curve, args.out)
    if args.plot:
        pts = [(float(k), v["accuracy"]) for k, v in curve.items() if v["accuracy"] is not None]
        analysis.plot_mask_curve([p[0] for p in pts], [p[1] for p in pts], args.plot)


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="e2e-stance", description="Entity-to-entity stance detection toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("build-graphs", help="build per-document semantic graphs")
    g.add_argument("--corpus", required=True)
    g.add_argument("--sidecars")
    g.add_argument("--wiki")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_build_graphs)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="flat JSON of model/training keys and data paths")
    for key in PATH_KEYS:
        t.add_argument(f"--{key}")
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(fn=cmd_train)

    pr = sub.add_parser("predict", help="generate stance triplets")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--corpus", required=True)
    pr.add_argument("--sidecars")
    pr.add_argument("--wiki")
    pr.add_argument("--splits")
    pr.add_argument("--split", choices=("train", "valid", "test"), default="test")
    pr.add_argument("--all-sentences", action="store_true", help="also predict on unannotated sentences")
    pr.add_argument("--strategy", choices=("greedy", "beam"))
    pr.add_argument("--beam-size", type=int)
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--out", required=True)
    pr.set_defaults(fn=cmd_predict)

    e = sub.add_parser("evaluate", help="score predictions against a corpus")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_evaluate)

    b = sub.add_parser("taskb", help="pairwise stance classification by likelihood ranking")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--data", required=True, help="JSONL with sentence, e1, e2 and optional label")
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_taskb)

    a = sub.add_parser("analyze", help="media and ideology analyses")
    a.add_argument("kind", choices=("quotes", "landscape", "propagate", "groups"))
    src = a.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus")
    src.add_argument("--pred", help="prediction JSONL (propagate / groups)")
    a.add_argument("--party-map", required=True)
    a.add_argument("--grouping", choices=("side", "leaning"), default="side")
    a.add_argument("--mask", type=float, help="single mask ratio; omit to sweep")
    a.add_argument("--sweep", type=float, nargs="+", default=[0.1, 0.3, 0.5, 0.7, 0.9])
    a.add_argument("--repeats", type=int, default=20)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--plot", help="optional image path")
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_analyze)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.fn(args)
    except (ValueError, CorpusError, GraphError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

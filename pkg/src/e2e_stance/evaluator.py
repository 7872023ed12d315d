"""Task A (triplet generation) and Task B (pairwise label) metrics.

Triplets match by exact string equality after name normalization; per-sample
comparisons use multisets, so prediction order never matters.
"""

from __future__ import annotations

import json
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import StanceTriplet, build_samples, load_corpus, parse_with_dropped

ASPECTS = ("src_s", "s_tgt", "src_tgt")


def _multiset(triplets: Iterable[StanceTriplet], aspect: str | None = None) -> Counter:
    if aspect is None:
        return Counter(t.as_tuple() for t in triplets)
    if aspect == "src_s":
        return Counter((t.source, t.sentiment.value) for t in triplets)
    if aspect == "s_tgt":
        return Counter((t.sentiment.value, t.target) for t in triplets)
    if aspect == "src_tgt":
        return Counter((t.source, t.target) for t in triplets)
    raise ValueError(f"unknown aspect {aspect!r}")


def _check(preds, refs):
    if len(preds) != len(refs):
        raise ValueError(f"{len(preds)} predictions for {len(refs)} references")


def exact_accuracy(preds: Sequence[Sequence[StanceTriplet]], refs: Sequence[Sequence[StanceTriplet]]) -> float:
    _check(preds, refs)
    if not refs:
        return 0.0
    return sum(_multiset(p) == _multiset(r) for p, r in zip(preds, refs)) / len(refs)


def triplet_f1(preds, refs) -> tuple[float, float, float]:
    """Micro precision, recall and F1 with per-sample multiset matching."""
    _check(preds, refs)
    matched = sum(sum((_multiset(p) & _multiset(r)).values()) for p, r in zip(preds, refs))
    n_pred = sum(len(p) for p in preds)
    n_ref = sum(len(r) for r in refs)
    precision = matched / n_pred if n_pred else 0.0
    recall = matched / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def accuracy_any(preds, refs, aspect: str | None = None) -> float:
    _check(preds, refs)
    if not refs:
        return 0.0
    return sum(bool(_multiset(p, aspect) & _multiset(r, aspect)) for p, r in zip(preds, refs)) / len(refs)


def aspect_accuracy(preds, refs, aspect: str) -> float:
    if aspect not in ASPECTS:
        raise ValueError(f"aspect must be one of {ASPECTS}")
    return accuracy_any(preds, refs, aspect)


@dataclass
class EvalReport:
    acc: float
    precision: float
    recall: float
    f1: float
    acc_any: float
    src_s: float
    s_tgt: float
    src_tgt: float
    samples: int
    predicted_triplets: int
    reference_triplets: int
    dropped_blocks: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(preds, refs, dropped_blocks: int = 0) -> EvalReport:
    p, r, f1 = triplet_f1(preds, refs)
    return EvalReport(
        acc=exact_accuracy(preds, refs), precision=p, recall=r, f1=f1,
        acc_any=accuracy_any(preds, refs),
        **{a: aspect_accuracy(preds, refs, a) for a in ASPECTS},
        samples=len(refs),
        predicted_triplets=sum(len(x) for x in preds),
        reference_triplets=sum(len(x) for x in refs),
        dropped_blocks=dropped_blocks,
    )


def taskb_metrics(preds: Sequence[str], golds: Sequence[str], labels: Sequence[str]) -> tuple[float, float]:
    """Accuracy and macro F1 over ``labels``; classes never seen score F1 = 0."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions for {len(golds)} gold labels")
    if not golds:
        raise ValueError("no labels to score")
    acc = sum(p == g for p, g in zip(preds, golds)) / len(golds)
    f1s = []
    for c in labels:
        tp = sum(p == c and g == c for p, g in zip(preds, golds))
        n_pred = sum(p == c for p in preds)
        n_gold = sum(g == c for g in golds)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_gold if n_gold else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return acc, sum(f1s) / len(labels)


# -- files -------------------------------------------------------------------


def load_predictions(path: str | Path) -> tuple[dict[str, list[StanceTriplet]], int]:
    """Prediction JSONL -> ({sample_id: triplets}, dropped-block tally)."""
    out, dropped = {}, 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            out[rec["sample_id"]] = [StanceTriplet.from_dict(t) for t in rec.get("triplets", [])]
            if rec.get("raw_decode"):
                dropped += parse_with_dropped(rec["raw_decode"])[1]
    return out, dropped


def evaluate_files(pred_path: str | Path, corpus_path: str | Path) -> EvalReport:
    preds, dropped = load_predictions(pred_path)
    refs = {s.sample_id: list(s.gold_triplets)
            for s in build_samples(load_corpus(corpus_path), k=0, include_entities=False,
                                   include_unannotated=True)}
    unknown = [sid for sid in preds if sid not in refs]
    if unknown:
        raise ValueError(f"predictions for unknown sample ids: {unknown[:5]}")
    ids = sorted(preds)
    return evaluate([preds[i] for i in ids], [refs[i] for i in ids], dropped)

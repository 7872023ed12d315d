"""Media quotation / stance landscape tables and signed-graph ideology propagation."""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import RESERVED_NAMES, Article, Sentiment, StanceTriplet, normalize_name

PARTIES = ("D", "R")


def load_party_map(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    bad = {k: v for k, v in raw.items() if v not in PARTIES}
    if bad:
        raise ValueError(f"party map values must be 'D' or 'R': {list(bad.items())[:3]}")
    return {normalize_name(k): v for k, v in raw.items()}


def _bucket(article: Article, grouping: str) -> str:
    if grouping == "side":
        return article.media_leaning.side
    if grouping == "leaning":
        return article.media_leaning.value
    raise ValueError("grouping must be 'side' or 'leaning'")


def quote_counts(articles: Sequence[Article], party_map: Mapping[str, str],
                 grouping: str = "side") -> dict[str, dict[str, float]]:
    """Average number of D / R source entities quoted per article, by media bucket."""
    totals: dict[str, dict[str, int]] = defaultdict(lambda: {"D": 0, "R": 0})
    n_articles: dict[str, int] = defaultdict(int)
    for a in articles:
        bucket = _bucket(a, grouping)
        n_articles[bucket] += 1
        counts = totals[bucket]
        for t in a.triplets:
            party = party_map.get(t.source)
            if party:
                counts[party] += 1
    return {b: {p: totals[b][p] / n_articles[b] for p in PARTIES} for b in sorted(n_articles)}


def stance_landscape(articles: Sequence[Article], party_map: Mapping[str, str],
                     grouping: str = "side") -> dict[str, dict[str, float]]:
    """Percent of party-mapped-target triplets per (target party, sentiment), by media bucket.

    Keys inside a bucket look like ``"D_POS"``.
    """
    counts: dict[str, dict[str, int]] = {}
    for a in articles:
        bucket = counts.setdefault(_bucket(a, grouping), {f"{p}_{s.value}": 0 for p in PARTIES for s in Sentiment})
        for t in a.triplets:
            party = party_map.get(t.target)
            if party:
                bucket[f"{party}_{t.sentiment.value}"] += 1
    out = {}
    for b in sorted(counts):
        total = sum(counts[b].values())
        out[b] = {k: (100.0 * v / total if total else 0.0) for k, v in counts[b].items()}
    return out


@dataclass
class SignedGraph:
    """Directed entity graph; parallel edges merge into counts per sign."""

    nodes: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str, Sentiment], int] = field(default_factory=dict)

    def add(self, src: str, dst: str, sign: Sentiment, count: int = 1) -> None:
        self.nodes.update((src, dst))
        key = (src, dst, Sentiment(sign))
        self.edges[key] = self.edges.get(key, 0) + count

    @classmethod
    def from_triplets(cls, triplets: Iterable[StanceTriplet], restrict_to: Iterable[str] | None = None) -> SignedGraph:
        """Build from triplets, skipping reserved pseudo-entities and self-stances."""
        keep = None if restrict_to is None else set(restrict_to)
        g = cls()
        for t in triplets:
            if t.source in RESERVED_NAMES or t.target in RESERVED_NAMES or t.source == t.target:
                continue
            if keep is not None and (t.source not in keep or t.target not in keep):
                continue
            g.add(t.source, t.target, t.sentiment)
        return g

    def signs_between(self, a: str, b: str) -> set[Sentiment]:
        return {s for (x, y, s), c in self.edges.items() if c > 0 and {x, y} == {a, b} and x != y}

    def neighbors(self) -> dict[str, set[str]]:
        nb: dict[str, set[str]] = defaultdict(set)
        for (x, y, _), c in self.edges.items():
            if c > 0 and x != y:
                nb[x].add(y)
                nb[y].add(x)
        return nb

    def to_dict(self) -> dict:
        return {"nodes": sorted(self.nodes),
                "edges": [[s, d, sign.value, c] for (s, d, sign), c in sorted(self.edges.items())]}


@dataclass
class PropagationResult:
    accuracy: float | None  # over decided nodes
    coverage: float  # decided / masked
    strict_accuracy: float  # abstentions count as wrong
    assignments: dict[str, str | None]
    masked: list[str]

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "coverage": self.coverage, "strict_accuracy": self.strict_accuracy,
                "assignments": dict(sorted(self.assignments.items())), "masked": sorted(self.masked)}


def infer_masked(graph: SignedGraph, party_map: Mapping[str, str], masked: Iterable[str]) -> dict[str, str | None]:
    """Single-pass counter vote for each masked node.

    For every unmasked neighbour with a known party, the neighbour's own
    party counter gains 1 if any POS edge joins them (either direction) and
    the other party's counter gains 1 if any NEG edge does. The larger
    counter wins; ties (including 0-0) abstain with None.
    """
    masked = set(masked)
    nb = graph.neighbors()
    out: dict[str, str | None] = {}
    for node in sorted(masked):
        counter = {"D": 0, "R": 0}
        for other in nb.get(node, ()):
            if other in masked or other not in party_map:
                continue
            party = party_map[other]
            opposite = "R" if party == "D" else "D"
            signs = graph.signs_between(node, other)
            counter[party] += Sentiment.POS in signs
            counter[opposite] += Sentiment.NEG in signs
        out[node] = None if counter["D"] == counter["R"] else max(counter, key=counter.get)
    return out


def score_assignments(assignments: Mapping[str, str | None], party_map: Mapping[str, str]) -> PropagationResult:
    masked = list(assignments)
    decided = {n: p for n, p in assignments.items() if p is not None}
    correct = sum(party_map[n] == p for n, p in decided.items())
    return PropagationResult(
        accuracy=correct / len(decided) if decided else None,
        coverage=len(decided) / len(masked) if masked else 0.0,
        strict_accuracy=correct / len(masked) if masked else 0.0,
        assignments=dict(assignments),
        masked=masked,
    )


def propagate_ideology(graph: SignedGraph, party_map: Mapping[str, str], mask_ratio: float,
                       seed: int = 0) -> PropagationResult:
    """Mask a seeded random share of party-labelled nodes and infer them from neighbours."""
    if not 0 < mask_ratio <= 1:
        raise ValueError("mask_ratio must be in (0, 1]")
    labelled = sorted(n for n in graph.nodes if n in party_map)
    n_mask = int(round(mask_ratio * len(labelled)))
    if n_mask >= len(labelled):
        raise ValueError("no unmasked labelled nodes remain")
    rng = np.random.default_rng(seed)
    masked = [labelled[i] for i in sorted(rng.choice(len(labelled), size=n_mask, replace=False))]
    return score_assignments(infer_masked(graph, party_map, masked), party_map)


def group_sentiment_stats(graph: SignedGraph, party_map: Mapping[str, str]) -> dict[str, float | None]:
    """Percent NEG among count-weighted edges per (source party -> target party)."""
    neg = {f"{a}->{b}": 0 for a in PARTIES for b in PARTIES}
    total = dict(neg)
    for (s, d, sign), c in graph.edges.items():
        if s in party_map and d in party_map:
            key = f"{party_map[s]}->{party_map[d]}"
            total[key] += c
            if sign == Sentiment.NEG:
                neg[key] += c
    return {k: (100.0 * neg[k] / total[k] if total[k] else None) for k in total}


# -- plots -------------------------------------------------------------------


def plot_bars(table: Mapping[str, Mapping[str, float]], path: str | Path, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    buckets = list(table)
    keys = sorted({k for row in table.values() for k in row})
    x = np.arange(len(buckets))
    width = 0.8 / max(len(keys), 1)
    fig, ax = plt.subplots(figsize=(5, 3))
    for i, k in enumerate(keys):
        ax.bar(x + i * width, [table[b].get(k, 0.0) for b in buckets], width, label=k)
    ax.set_xticks(x + width * (len(keys) - 1) / 2, buckets)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_mask_curve(ratios: Sequence[float], accuracies: Sequence[float], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(ratios, accuracies, marker="o")
    ax.set_xlabel("masked ratio")
    ax.set_ylabel("accuracy")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)

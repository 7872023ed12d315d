"""Tensorization of (sample, graph) pairs and batch collation."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import torch

from ..corpus import BOS, EOS, Sample, Segment, linearize
from ..semgraph import EdgeKind, NodeKind, SemanticGraph, WikiIndex, attach_global, oracle_entities

logger = logging.getLogger(__name__)

IGNORE = -100
NODE_KINDS = {NodeKind.ENTITY: 0, NodeKind.PREDICATE: 1, NodeKind.GLOBAL: 2, NodeKind.WIKI: 3}


@dataclass
class Example:
    sample: Sample
    input_ids: list[int]
    segment_ids: list[int]
    target_ids: list[int]
    # graph side; empty when the model runs without a graph
    node_pool: list[list[int]] = field(default_factory=list)
    node_kind: list[int] = field(default_factory=list)
    wiki_rows: dict[int, np.ndarray] = field(default_factory=dict)
    adjacency: np.ndarray | None = None
    salience_target: list[float] = field(default_factory=list)
    salience_mask: list[bool] = field(default_factory=list)
    graph: SemanticGraph | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.node_kind)


def _truncate(sample: Sample, word_lengths: list[int], limit: int) -> list[int]:
    """Indices of words kept so that the subword length fits ``limit``.

    Context words are dropped symmetrically (preceding from its start,
    succeeding from its end), then the entity list from its end. Target
    words and separators are never dropped.
    """
    keep = list(range(len(sample.tokens)))
    total = sum(word_lengths)
    if total <= limit:
        return keep
    content = [i for i in keep if sample.doc_offsets[i] >= 0]
    pre = [i for i in content if sample.segment_tags[i] == Segment.PRECEDING]
    suc = [i for i in content if sample.segment_tags[i] == Segment.SUCCEEDING][::-1]
    ent = [i for i in keep if sample.segment_tags[i] == Segment.ENTITY and sample.tokens[i] != BOS][::-1]
    dropped: set[int] = set()
    turn = 0
    while total > limit and (pre or suc):
        queue = pre if (turn % 2 == 0 and pre) or not suc else suc
        i = queue.pop(0)
        dropped.add(i)
        total -= word_lengths[i]
        turn += 1
    while total > limit and ent:
        i = ent.pop(0)
        dropped.add(i)
        total -= word_lengths[i]
    if total > limit:
        raise ValueError(f"sample {sample.sample_id} target sentence alone exceeds {limit} positions")
    logger.warning("sample %s truncated by %d words to fit %d positions", sample.sample_id, len(dropped), limit)
    return [i for i in keep if i not in dropped]


def target_words(sample: Sample) -> list[str]:
    return linearize(sample.gold_triplets).split()


def encode_target(tokenizer, words: Sequence[str]) -> list[int]:
    return [tokenizer.bos_id, *tokenizer.encode_words(words), tokenizer.eos_id]


def prepare_graph(sample: Sample, doc_graph: SemanticGraph | None, oracle: bool = False) -> SemanticGraph:
    graph = doc_graph if doc_graph is not None else SemanticGraph(doc_id=sample.article_id)
    if oracle:
        names = [n for t in sample.gold_triplets for n in (t.source, t.target)]
        graph = oracle_entities(graph, names)
    return attach_global(graph, sample)


def make_example(
    sample: Sample,
    tokenizer,
    max_positions: int,
    graph: SemanticGraph | None = None,
    wiki_index: WikiIndex | None = None,
) -> Example:
    """Build an example; ``graph`` must already carry its global node."""
    per_word = [tokenizer.encode_word(w, n == 0) for n, w in enumerate(sample.tokens)]
    kept = _truncate(sample, [len(p) for p in per_word], max_positions)
    input_ids, segment_ids, word_pos = [], [], {}
    for i in kept:
        word_pos[i] = list(range(len(input_ids), len(input_ids) + len(per_word[i])))
        input_ids.extend(per_word[i])
        segment_ids.extend([int(sample.segment_tags[i])] * len(per_word[i]))
    ex = Example(sample, input_ids, segment_ids, encode_target(tokenizer, target_words(sample)))
    if graph is None:
        return ex

    doc_pos: dict[int, list[int]] = {}
    for i in kept:
        if sample.doc_offsets[i] >= 0:
            doc_pos[sample.doc_offsets[i]] = word_pos[i]
    target = [p for i in kept if sample.segment_tags[i] == Segment.TARGET and sample.doc_offsets[i] >= 0
              for p in word_pos[i]]
    gold_names = {n for t in sample.gold_triplets for n in (t.source, t.target)}
    wiki_of = {e.src: graph.nodes[e.dst].wiki_ref for e in graph.edges
               if e.kind == EdgeKind.WIKI and graph.nodes[e.dst].kind == NodeKind.WIKI}

    missing = 0
    for node in graph.nodes:
        pool: list[int] = []
        if node.kind == NodeKind.GLOBAL:
            pool = target
        elif node.kind in (NodeKind.ENTITY, NodeKind.PREDICATE):
            for span in node.mention_spans:
                for off in range(span.start, span.end):
                    pool.extend(doc_pos.get(off, ()))
            if node.kind == NodeKind.ENTITY and node.name in sample.entity_spans:
                s, e = sample.entity_spans[node.name]
                pool.extend(p for i in range(s, e) if i in word_pos for p in word_pos[i])
        if node.kind == NodeKind.WIKI:
            if wiki_index is None:
                raise ValueError(f"sample {sample.sample_id}: graph has wiki nodes but no wiki index was given")
            ex.wiki_rows[node.id] = wiki_index[node.wiki_ref]
        elif not pool and node.kind == NodeKind.ENTITY:
            if node.id in wiki_of and wiki_index is not None:
                ex.wiki_rows[node.id] = wiki_index[wiki_of[node.id]]
            else:
                missing += 1
        ex.node_pool.append(sorted(set(pool)))
        ex.node_kind.append(NODE_KINDS[node.kind])
        is_entity = node.kind == NodeKind.ENTITY
        ex.salience_mask.append(is_entity and node.linked)
        ex.salience_target.append(float(is_entity and node.name in gold_names))
    if missing:
        logger.warning("sample %s: %d entity node(s) have no in-text mention or wiki vector; using zeros",
                       sample.sample_id, missing)
    ex.adjacency = graph.adjacency()
    ex.graph = graph
    return ex


@dataclass
class Batch:
    input_ids: torch.Tensor
    segment_ids: torch.Tensor
    text_mask: torch.Tensor
    dec_in: torch.Tensor
    labels: torch.Tensor
    # graph side (None without graph)
    pool: torch.Tensor | None = None
    node_mask: torch.Tensor | None = None
    adjacency: torch.Tensor | None = None
    wiki_vectors: torch.Tensor | None = None
    wiki_rows: torch.Tensor | None = None
    entity_mask: torch.Tensor | None = None
    salience_target: torch.Tensor | None = None
    salience_mask: torch.Tensor | None = None
    sample_ids: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.input_ids.shape[0]


def _pad(seqs, value, dtype=torch.long):
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), value, dtype=dtype)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = torch.tensor(s, dtype=dtype)
    return out


def collate(examples: Sequence[Example], pad_id: int, wiki_dim: int = 500,
            dtype: torch.dtype = torch.float32) -> Batch:
    input_ids = _pad([e.input_ids for e in examples], pad_id)
    batch = Batch(
        input_ids=input_ids,
        segment_ids=_pad([e.segment_ids for e in examples], 0),
        text_mask=_pad([[1] * len(e.input_ids) for e in examples], 0).bool(),
        dec_in=_pad([e.target_ids[:-1] for e in examples], pad_id),
        labels=_pad([e.target_ids[1:] for e in examples], IGNORE),
        sample_ids=[e.sample.sample_id for e in examples],
    )
    if any(e.adjacency is None for e in examples):
        return batch

    b, length = input_ids.shape
    n = max(e.num_nodes for e in examples)
    pool = torch.zeros(b, n, length, dtype=dtype)
    adjacency = torch.zeros(b, n, n, dtype=torch.bool)
    adjacency[:, range(n), range(n)] = True  # padded nodes keep a self-loop
    wiki_vectors = torch.zeros(b, n, wiki_dim, dtype=dtype)
    wiki_rows = torch.zeros(b, n, dtype=torch.bool)
    node_mask = torch.zeros(b, n, dtype=torch.bool)
    entity_mask = torch.zeros(b, n, dtype=torch.bool)
    sal_t = torch.zeros(b, n, dtype=dtype)
    sal_m = torch.zeros(b, n, dtype=torch.bool)
    for i, e in enumerate(examples):
        k = e.num_nodes
        node_mask[i, :k] = True
        adjacency[i, :k, :k] = torch.from_numpy(e.adjacency)
        for j, positions in enumerate(e.node_pool):
            if positions:
                pool[i, j, positions] = 1.0 / len(positions)
        for j, vec in e.wiki_rows.items():
            wiki_vectors[i, j] = torch.as_tensor(vec, dtype=dtype)
            wiki_rows[i, j] = True
        entity_mask[i, :k] = torch.tensor([kind == 0 for kind in e.node_kind])
        sal_t[i, :k] = torch.tensor(e.salience_target, dtype=dtype)
        sal_m[i, :k] = torch.tensor(e.salience_mask)
    batch.pool, batch.node_mask, batch.adjacency = pool, node_mask, adjacency
    batch.wiki_vectors, batch.wiki_rows, batch.entity_mask = wiki_vectors, wiki_rows, entity_mask
    batch.salience_target, batch.salience_mask = sal_t, sal_m
    return batch

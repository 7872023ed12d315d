"""Glue from articles + sidecars to model-ready examples."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from .corpus import BOS, ENT, Article, Sample, Segment, build_samples, linearize
from .model.config import ModelConfig
from .model.features import Example, make_example, prepare_graph
from .model.tokenizer import WordVocab
from .semgraph import SemanticGraph, Sidecar, WikiIndex, document_graph, extracted_entities, resolve_mentions


def samples_from_corpus(
    articles: Sequence[Article],
    sidecars: Mapping[str, Sidecar],
    k: int = 3,
    include_entities: bool = True,
    include_unannotated: bool = False,
) -> list[Sample]:
    entity_lists = {doc: extracted_entities(sc) for doc, sc in sidecars.items()}
    linked = {doc: resolve_mentions(sc.entity_links, sc.coref_chains) for doc, sc in sidecars.items()}
    return build_samples(articles, k, include_entities, entity_lists=entity_lists,
                         linked_mentions=linked, include_unannotated=include_unannotated)


def _graph_job(args):
    article, sidecar, index = args
    return article.article_id, document_graph(article, sidecar, index)


def document_graphs(
    articles: Sequence[Article],
    sidecars: Mapping[str, Sidecar],
    wiki_index: WikiIndex | None = None,
    workers: int = 1,
) -> dict[str, SemanticGraph]:
    """One graph per document; documents without a sidecar get an empty sidecar."""
    jobs = [(a, sidecars.get(a.article_id, Sidecar(a.article_id)), wiki_index) for a in articles]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return dict(pool.map(_graph_job, jobs))
    return dict(map(_graph_job, jobs))


def build_vocab(samples: Sequence[Sample]) -> WordVocab:
    return WordVocab.build([s.tokens for s in samples] + [linearize(s.gold_triplets).split() for s in samples])


def make_examples(
    samples: Sequence[Sample],
    tokenizer,
    cfg: ModelConfig,
    graphs: Mapping[str, SemanticGraph] | None = None,
    wiki_index: WikiIndex | None = None,
) -> list[Example]:
    out = []
    for s in samples:
        graph = None
        if cfg.use_graph:
            graph = prepare_graph(s, (graphs or {}).get(s.article_id), cfg.oracle_entities)
        out.append(make_example(_with_oracle(s) if cfg.oracle_entities else s, tokenizer,
                                cfg.max_positions, graph, wiki_index if cfg.use_wiki else None))
    return out


def _with_oracle(sample: Sample) -> Sample:
    """Rebuild the input so its entity list is the gold entities."""
    gold = list(dict.fromkeys(n for t in sample.gold_triplets for n in (t.source, t.target)))
    keep = [i for i, seg in enumerate(sample.segment_tags) if seg != Segment.ENTITY]
    tokens = [sample.tokens[i] for i in keep]
    tags = [sample.segment_tags[i] for i in keep]
    offsets = [sample.doc_offsets[i] for i in keep]
    spans = {}
    if gold:
        tokens.append(BOS)
        tags.append(Segment.ENTITY)
        offsets.append(-1)
        for name in gold:
            tokens.append(ENT)
            tags.append(Segment.ENTITY)
            offsets.append(-1)
            start = len(tokens)
            for w in name.split():
                tokens.append(w)
                tags.append(Segment.ENTITY)
                offsets.append(-1)
            spans[name] = (start, len(tokens))
    return replace(sample, entity_list=tuple(gold), tokens=tuple(tokens), segment_tags=tuple(tags),
                   doc_offsets=tuple(offsets), entity_spans=spans)

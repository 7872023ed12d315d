"""Document-level semantic graphs built from extractor output (OpenIE relations plus entity links).

Extractors are not run here. Their outputs arrive as sidecar records, one
JSON object per document::

    {"doc_id": ..., "relations": [{"subj": span, "pred": span, "obj": span}],
     "entity_links": [{"span": span, "canonical": ..., "wiki_title": ...}],
     "coref_chains": [[span, ...], ...]}

with ``span = {"start": int, "end": int}`` (document token offsets, end
exclusive). :func:`stub_sidecar` produces such records from a gazetteer so
tests and demos need no external service.
"""

from __future__ import annotations

import enum
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .corpus import Article, CorpusError, normalize_name

logger = logging.getLogger(__name__)

MAX_RELATION_TOKENS = 15
WIKI_DIM = 500


class GraphError(ValueError):
    pass


class Span(NamedTuple):
    start: int
    end: int

    def __len__(self) -> int:  # type: ignore[override]
        return self.end - self.start

    def contains(self, other: Span) -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: Span) -> bool:
        return self.start < other.end and other.start < self.end

    @classmethod
    def from_dict(cls, d: Mapping) -> Span:
        return cls(int(d["start"]), int(d["end"]))


@dataclass(frozen=True)
class Relation:
    subject: Span
    predicate: Span
    object: Span
    subject_text: str = ""
    predicate_text: str = ""
    object_text: str = ""

    @property
    def length(self) -> int:
        return len(self.subject) + len(self.predicate) + len(self.object)


@dataclass(frozen=True)
class EntityLink:
    span: Span
    canonical: str
    wiki_title: str | None = None


@dataclass(frozen=True)
class Sidecar:
    doc_id: str
    relations: tuple[Mapping, ...] = ()
    entity_links: tuple[EntityLink, ...] = ()
    coref_chains: tuple[tuple[Span, ...], ...] = ()

    @classmethod
    def from_dict(cls, d: Mapping) -> Sidecar:
        return cls(
            doc_id=str(d["doc_id"]),
            relations=tuple(d.get("relations", ())),
            entity_links=tuple(
                EntityLink(Span.from_dict(l["span"]), normalize_name(l["canonical"]), l.get("wiki_title"))
                for l in d.get("entity_links", ())
            ),
            coref_chains=tuple(
                tuple(Span.from_dict(s) for s in chain) for chain in d.get("coref_chains", ())
            ),
        )

    def to_dict(self) -> dict:
        def sp(s):
            return {"start": s.start, "end": s.end}

        return {
            "doc_id": self.doc_id,
            "relations": [dict(r) for r in self.relations],
            "entity_links": [
                {"span": sp(l.span), "canonical": l.canonical, "wiki_title": l.wiki_title}
                for l in self.entity_links
            ],
            "coref_chains": [[sp(s) for s in chain] for chain in self.coref_chains],
        }


def load_sidecars(path: str | Path) -> dict[str, Sidecar]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                sc = Sidecar.from_dict(json.loads(line))
            except (KeyError, TypeError, ValueError) as err:
                raise CorpusError(f"sidecar line {lineno}: {err!r}") from None
            out[sc.doc_id] = sc
    return out


def save_sidecars(sidecars: Iterable[Sidecar], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sc in sidecars:
            f.write(json.dumps(sc.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def ingest_relations(doc_tokens: Sequence[str], records: Iterable[Mapping]) -> list[Relation]:
    """Turn raw relation records into relations, dropping ones over 15 tokens.

    The length limit applies to the summed subject + predicate + object span.
    """
    n = len(doc_tokens)
    out = []
    for i, rec in enumerate(records):
        try:
            spans = [Span.from_dict(rec[key]) for key in ("subj", "pred", "obj")]
        except (KeyError, TypeError, ValueError):
            raise GraphError(f"relation record {i} is malformed: {rec!r}") from None
        for s in spans:
            if not (0 <= s.start < s.end <= n):
                raise GraphError(f"relation record {i} has span {tuple(s)} outside document of {n} tokens")
        rel = Relation(*spans, *(" ".join(doc_tokens[s.start:s.end]) for s in spans))
        if rel.length <= MAX_RELATION_TOKENS:
            out.append(rel)
    return out


def resolve_mentions(
    entity_links: Iterable[EntityLink], coref_chains: Iterable[Sequence[Span]] = ()
) -> list[tuple[str, int, int]]:
    """All (canonical, start, end) mentions: links plus coreferent spans.

    A chain takes the canonical name of the first linked mention overlapping
    any of its spans; chains without a linked mention are ignored.
    """
    links = sorted(entity_links, key=lambda l: (l.span.start, l.span.end, l.canonical))
    mentions = {(l.canonical, l.span.start, l.span.end) for l in links}
    for chain in coref_chains:
        canonical = None
        for s in sorted(chain):
            for l in links:
                if l.span.overlaps(s):
                    canonical = l.canonical
                    break
            if canonical:
                break
        if canonical is None:
            continue
        mentions.update((canonical, s.start, s.end) for s in chain)
    return sorted(mentions, key=lambda m: (m[1], m[2], m[0]))


def extracted_entities(sidecar: Sidecar) -> list[str]:
    """Canonical names linked in the document, in order of first mention."""
    seen: dict[str, None] = {}
    for l in sorted(sidecar.entity_links, key=lambda l: (l.span.start, l.span.end)):
        seen.setdefault(l.canonical, None)
    return list(seen)


# -- graph -------------------------------------------------------------------


class NodeKind(str, enum.Enum):
    ENTITY = "entity"
    PREDICATE = "predicate"
    GLOBAL = "global"
    WIKI = "wiki"


class EdgeKind(str, enum.Enum):
    FORWARD = "forward"
    REVERSE = "reverse"
    SELF = "self"
    GLOBAL = "global"
    WIKI = "wiki"


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    name: str = ""
    mention_spans: tuple[Span, ...] = ()
    linked: bool = True
    wiki_ref: str | None = None


class Edge(NamedTuple):
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class SemanticGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    doc_id: str = ""

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def add_node(self, kind: NodeKind, **kw) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, kind, **kw))
        self.edges.append(Edge(nid, nid, EdgeKind.SELF))
        return nid

    def connect(self, a: int, b: int, kind: EdgeKind, back: EdgeKind | None = None) -> None:
        self.edges.append(Edge(a, b, kind))
        self.edges.append(Edge(b, a, back or kind))

    def ids(self, kind: NodeKind) -> list[int]:
        return [n.id for n in self.nodes if n.kind == kind]

    @property
    def entity_ids(self) -> list[int]:
        return self.ids(NodeKind.ENTITY)

    def entity_by_name(self, name: str) -> int | None:
        for n in self.nodes:
            if n.kind == NodeKind.ENTITY and n.name == name:
                return n.id
        return None

    def copy(self) -> SemanticGraph:
        return SemanticGraph(list(self.nodes), list(self.edges), self.doc_id)

    def adjacency(self) -> np.ndarray:
        """Boolean (N, N) matrix with ``adj[dst, src]`` set for each edge."""
        adj = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        for e in self.edges:
            adj[e.dst, e.src] = True
        return adj

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "name": n.name,
                 "mention_spans": [list(s) for s in n.mention_spans],
                 "linked": n.linked, "wiki_ref": n.wiki_ref}
                for n in self.nodes
            ],
            "edges": [[e.src, e.dst, e.kind.value] for e in self.edges],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> SemanticGraph:
        nodes = [
            Node(n["id"], NodeKind(n["kind"]), n["name"], tuple(Span(*s) for s in n["mention_spans"]),
                 n["linked"], n["wiki_ref"])
            for n in d["nodes"]
        ]
        edges = [Edge(s, t, EdgeKind(k)) for s, t, k in d["edges"]]
        return cls(nodes, edges, d.get("doc_id", ""))


def _resolve_argument(span: Span, mentions: Sequence[tuple[str, int, int]]) -> str | None:
    inside = [m for m in mentions if span.contains(Span(m[1], m[2]))]
    if not inside:
        inside = [m for m in mentions if span.overlaps(Span(m[1], m[2]))]
    if not inside:
        return None
    return min(inside, key=lambda m: (m[1], -(m[2] - m[1]), m[0]))[0]


def build_graph(
    relations: Sequence[Relation],
    entity_links: Iterable[EntityLink],
    coref_chains: Iterable[Sequence[Span]] = (),
    doc_id: str = "",
) -> SemanticGraph:
    """Entity and predicate nodes with forward, reverse and self-loop edges.

    Coreferent mentions of one canonical entity share a node. Relation
    arguments with no linked mention become unlinked entity nodes keyed by
    their surface string.
    """
    entity_links = list(entity_links)
    mentions = resolve_mentions(entity_links, coref_chains)
    wiki_titles = {l.canonical: l.wiki_title for l in entity_links}
    graph = SemanticGraph(doc_id=doc_id)

    spans_by_name: dict[str, list[Span]] = {}
    for name, s, e in mentions:
        spans_by_name.setdefault(name, []).append(Span(s, e))
    node_of: dict[str, int] = {}
    for name, spans in spans_by_name.items():
        node_of[name] = graph.add_node(
            NodeKind.ENTITY, name=name, mention_spans=tuple(sorted(set(spans))),
            wiki_ref=wiki_titles.get(name),
        )

    unlinked: dict[str, list[Span]] = {}
    unlinked_ids: dict[str, int] = {}

    def argument_node(span: Span, text: str) -> int:
        name = _resolve_argument(span, mentions)
        if name is not None:
            return node_of[name]
        key = normalize_name(text) or f"span:{span.start}-{span.end}"
        if key in node_of:
            return node_of[key]
        if key not in unlinked_ids:
            unlinked_ids[key] = graph.add_node(NodeKind.ENTITY, name=key, linked=False)
        unlinked.setdefault(key, []).append(span)
        return unlinked_ids[key]

    for rel in relations:
        subj = argument_node(rel.subject, rel.subject_text)
        obj = argument_node(rel.object, rel.object_text)
        pred = graph.add_node(NodeKind.PREDICATE, name=rel.predicate_text, mention_spans=(rel.predicate,))
        graph.connect(subj, pred, EdgeKind.FORWARD, EdgeKind.REVERSE)
        graph.connect(pred, obj, EdgeKind.FORWARD, EdgeKind.REVERSE)

    for key, nid in unlinked_ids.items():
        graph.nodes[nid] = replace(graph.nodes[nid], mention_spans=tuple(sorted(set(unlinked[key]))))
    return graph


def attach_global(graph: SemanticGraph, sample=None) -> SemanticGraph:
    """Return a copy with one global node linked both ways to every entity node."""
    if graph.ids(NodeKind.GLOBAL):
        raise GraphError("graph already has a global node")
    out = graph.copy()
    name = f"global:{sample.sample_id}" if sample is not None else "global"
    gid = out.add_node(NodeKind.GLOBAL, name=name)
    for eid in graph.entity_ids:
        out.connect(gid, eid, EdgeKind.GLOBAL)
    return out


def expand_wiki(graph: SemanticGraph, index: WikiIndex) -> SemanticGraph:
    """Return a copy with a wiki node attached to each entity found in ``index``."""
    out = graph.copy()
    for node in graph.nodes:
        if node.kind != NodeKind.ENTITY or not node.linked:
            continue
        key = index.lookup(node.name, node.wiki_ref)
        if key is None:
            continue
        wid = out.add_node(NodeKind.WIKI, name=node.name, wiki_ref=key)
        out.connect(node.id, wid, EdgeKind.WIKI)
    return out


def oracle_entities(graph: SemanticGraph, gold_names: Sequence[str]) -> SemanticGraph:
    """Swap the graph's entity nodes for the gold entities.

    Non-gold entity nodes, their wiki nodes and every edge touching them are
    removed; gold entities missing from the graph are added as isolated nodes.
    """
    gold = list(dict.fromkeys(gold_names))
    drop = {n.id for n in graph.nodes if n.kind == NodeKind.ENTITY and n.name not in gold}
    for e in graph.edges:
        if e.kind == EdgeKind.WIKI and e.src in drop:
            drop.add(e.dst)
    keep = [n for n in graph.nodes if n.id not in drop]
    remap = {n.id: i for i, n in enumerate(keep)}
    out = SemanticGraph(
        [replace(n, id=remap[n.id]) for n in keep],
        [Edge(remap[e.src], remap[e.dst], e.kind) for e in graph.edges
         if e.src in remap and e.dst in remap],
        graph.doc_id,
    )
    present = {n.name for n in out.nodes if n.kind == NodeKind.ENTITY}
    for name in gold:
        if name not in present:
            out.add_node(NodeKind.ENTITY, name=name)
    return out


def check_graph(graph: SemanticGraph, require_global: bool = True) -> list[str]:
    """Structural invariants; returns a list of violations (empty when valid)."""
    problems = []
    n = graph.num_nodes
    selfloops = {e.src for e in graph.edges if e.kind == EdgeKind.SELF and e.src == e.dst}
    if len(selfloops) != n or sum(e.kind == EdgeKind.SELF for e in graph.edges) != n:
        problems.append(f"self-loop count differs from node count {n}")
    pairs = {(e.src, e.dst) for e in graph.edges}
    if any((d, s) not in pairs for s, d in pairs):
        problems.append("edge set is not closed under reversal")
    globals_ = graph.ids(NodeKind.GLOBAL)
    if require_global and len(globals_) != 1:
        problems.append(f"expected one global node, found {len(globals_)}")
    kinds = {nd.id: nd.kind for nd in graph.nodes}
    wiki_partner: dict[int, set[int]] = {}
    per_entity: dict[int, int] = {}
    for e in graph.edges:
        if e.src == e.dst:
            continue
        ks = {kinds[e.src], kinds[e.dst]}
        if NodeKind.PREDICATE in ks and ks & {NodeKind.GLOBAL, NodeKind.WIKI}:
            problems.append(f"predicate node adjacent to global/wiki node: {e}")
        if kinds[e.dst] == NodeKind.WIKI:
            if e.kind != EdgeKind.WIKI or kinds[e.src] != NodeKind.ENTITY:
                problems.append(f"wiki node {e.dst} has a non-wiki edge {e}")
            wiki_partner.setdefault(e.dst, set()).add(e.src)
    for w, partners in wiki_partner.items():
        if len(partners) != 1:
            problems.append(f"wiki node {w} attached to {len(partners)} entities")
        for p in partners:
            per_entity[p] = per_entity.get(p, 0) + 1
    for w in graph.ids(NodeKind.WIKI):
        if w not in wiki_partner:
            problems.append(f"wiki node {w} is isolated")
    if any(c > 1 for c in per_entity.values()):
        problems.append("an entity has more than one wiki node")
    names = [nd.name for nd in graph.nodes if nd.kind == NodeKind.ENTITY]
    if len(names) != len(set(names)):
        problems.append("entity node names are not unique")
    return problems


def document_graph(article: Article, sidecar: Sidecar, index: WikiIndex | None = None) -> SemanticGraph:
    """Build one document's graph, expanding wiki nodes when an index is given."""
    tokens = [t for i in range(len(article.sentences)) for t in article.sentence_tokens(i)]
    relations = ingest_relations(tokens, sidecar.relations)
    graph = build_graph(relations, sidecar.entity_links, sidecar.coref_chains, doc_id=article.article_id)
    if index is not None:
        graph = expand_wiki(graph, index)
    return graph


# -- wiki vectors --------------------------------------------------------------


class WikiIndex:
    """Canonical name -> fixed-width entity vector (read-only after load)."""

    def __init__(self, vectors: Mapping[str, Sequence[float]], dim: int = WIKI_DIM):
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        for name, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (dim,):
                raise CorpusError(f"wiki vector for {name!r} has shape {arr.shape}, expected ({dim},)")
            self._vectors[normalize_name(name)] = arr

    def __contains__(self, name: str) -> bool:
        return name in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._vectors[name]

    def lookup(self, name: str, wiki_title: str | None = None) -> str | None:
        if name in self._vectors:
            return name
        if wiki_title and normalize_name(wiki_title) in self._vectors:
            return normalize_name(wiki_title)
        return None

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for name in sorted(self._vectors):
                f.write(name + "\t" + " ".join(f"{x:.6g}" for x in self._vectors[name]) + "\n")


def load_wiki_index(path: str | Path, dim: int = WIKI_DIM) -> WikiIndex:
    """Load ``name<TAB>floats`` text tables or ``.npz`` files (names, vectors)."""
    path = Path(path)
    if path.suffix == ".npz":
        data = np.load(path, allow_pickle=False)
        return WikiIndex(dict(zip(data["names"].tolist(), data["vectors"])), dim)
    vectors = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            name, _, rest = line.rstrip("\n").partition("\t")
            try:
                vectors[name] = [float(x) for x in rest.split()]
            except ValueError:
                raise CorpusError(f"wiki vectors line {lineno}: non-numeric value") from None
            if len(vectors[name]) != dim:
                raise CorpusError(f"wiki vectors line {lineno}: {len(vectors[name])} values, expected {dim}")
    return WikiIndex(vectors, dim)


# -- stub extractor ------------------------------------------------------------

PRONOUNS = frozenset({"he", "she", "him", "her", "his", "He", "She", "His", "Her", "they", "They"})


def stub_sidecar(article: Article, gazetteer: Mapping[str, str], max_gap: int = 6) -> Sidecar:
    """Deterministic stand-in for the external extractors.

    ``gazetteer`` maps surface strings (possibly multi-token) to canonical
    names. Pronouns corefer with the closest preceding linked mention, and
    each pair of consecutive mentions within a sentence separated by 1 to
    ``max_gap`` tokens yields one relation with the gap as predicate.
    """
    surfaces = sorted(((s.split(), normalize_name(c)) for s, c in gazetteer.items()),
                      key=lambda x: -len(x[0]))
    starts = article.sentence_starts()
    links: list[EntityLink] = []
    chains: list[list[Span]] = []
    relations = []
    last_link: EntityLink | None = None
    for i in range(len(article.sentences)):
        toks = article.sentence_tokens(i)
        mentions: list[Span] = []
        j = 0
        while j < len(toks):
            for parts, canonical in surfaces:
                if toks[j:j + len(parts)] == parts:
                    span = Span(starts[i] + j, starts[i] + j + len(parts))
                    last_link = EntityLink(span, canonical, canonical)
                    links.append(last_link)
                    mentions.append(span)
                    j += len(parts)
                    break
            else:
                if toks[j] in PRONOUNS and last_link is not None:
                    span = Span(starts[i] + j, starts[i] + j + 1)
                    chains.append([last_link.span, span])
                    mentions.append(span)
                j += 1
        for a, b in zip(mentions, mentions[1:]):
            if 1 <= b.start - a.end <= max_gap:
                relations.append({
                    "subj": {"start": a.start, "end": a.end},
                    "pred": {"start": a.end, "end": b.start},
                    "obj": {"start": b.start, "end": b.end},
                })
    return Sidecar(article.article_id, tuple(relations), tuple(links), tuple(tuple(c) for c in chains))

"""Seeded synthetic corpora, sidecars, wiki vectors and signed graphs.

Names are fictional. Stance is lexically determined by the verb, so the
data is learnable by a small model; it exists for overfitting harnesses,
demos and property tests, not as a benchmark.
"""

from __future__ import annotations

import numpy as np

from .corpus import Article, MediaLeaning, Sentiment, StanceTriplet
from .semgraph import WIKI_DIM, Sidecar, WikiIndex, stub_sidecar

PEOPLE = [
    ("Alice Ward", "Ward", "D"), ("Brian Cole", "Cole", "R"), ("Carla Diaz", "Diaz", "D"),
    ("Derek Hall", "Hall", "R"), ("Elena Ruiz", "Ruiz", "D"), ("Frank Moss", "Moss", "R"),
    ("Grace Lin", "Lin", "D"), ("Henry Park", "Park", "R"),
]
TOPICS = ["tax reform", "border policy", "climate bill", "health law"]
POS_VERBS = ["praised", "backed", "defended", "thanked"]
NEG_VERBS = ["criticized", "attacked", "blamed", "mocked"]
CITIES = ["Denver", "Austin", "Boston", "Tampa", "Reno"]
DAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"]


def gazetteer() -> dict[str, str]:
    g = {full: full for full, _, _ in PEOPLE}
    g.update({short: full for full, short, _ in PEOPLE})
    g.update({t: t for t in TOPICS})
    return g


def party_map() -> dict[str, str]:
    return {full: party for full, _, party in PEOPLE}


def _stance_sentence(rng: np.random.Generator):
    people = rng.permutation(len(PEOPLE))
    a, b, c = (PEOPLE[i] for i in people[:3])
    template = int(rng.integers(3))

    def verb():
        s = Sentiment.POS if rng.random() < 0.5 else Sentiment.NEG
        pool = POS_VERBS if s == Sentiment.POS else NEG_VERBS
        return pool[int(rng.integers(len(pool)))], s

    v1, s1 = verb()
    if template == 0:
        day = DAYS[int(rng.integers(len(DAYS)))]
        return f"{a[1]} {v1} {b[1]} on {day} .", [StanceTriplet(a[0], s1, b[0])]
    if template == 1:
        topic = TOPICS[int(rng.integers(len(TOPICS)))]
        v2, s2 = verb()
        return (f"{a[1]} {v1} {b[1]} and {v2} the {topic} .",
                [StanceTriplet(a[0], s1, b[0]), StanceTriplet(a[0], s2, topic)])
    return f"According to {a[1]} , {b[1]} {v1} {c[1]} .", [StanceTriplet(b[0], s1, c[0])]


def _filler_sentence(rng: np.random.Generator) -> str:
    kind = int(rng.integers(3))
    city = CITIES[int(rng.integers(len(CITIES)))]
    if kind == 0:
        return f"Officials met in {city} on {DAYS[int(rng.integers(len(DAYS)))]} ."
    if kind == 1:
        return f"The session lasted {int(rng.integers(2, 9))} hours ."
    person = PEOPLE[int(rng.integers(len(PEOPLE)))]
    return f"{person[0]} arrived in {city} ."


def synthetic_corpus(n_articles: int = 25, seed: int = 0, sentences: int = 6,
                     annotated: int = 2) -> tuple[list[Article], dict[str, Sidecar]]:
    """Articles with ``annotated`` stance sentences each, plus stub sidecars."""
    rng = np.random.default_rng(seed)
    leanings = list(MediaLeaning)
    articles, sidecars = [], {}
    gaz = gazetteer()
    for n in range(n_articles):
        slots = sorted(rng.choice(sentences, size=annotated, replace=False).tolist())
        sents, anns = [], []
        for i in range(sentences):
            if i in slots:
                text, triplets = _stance_sentence(rng)
                sents.append(text)
                anns.extend((i, t) for t in triplets)
            else:
                sents.append(_filler_sentence(rng))
        leaning = leanings[int(rng.integers(len(leanings)))]
        article = Article(story_id=f"story{n // 3}", article_id=f"doc{n:03d}", media=f"outlet{n % 6}",
                          media_leaning=leaning, sentences=tuple(sents), annotations=tuple(anns),
                          topic="politics")
        articles.append(article)
        sidecars[article.article_id] = stub_sidecar(article, gaz)
    return articles, sidecars


def synthetic_wiki_index(seed: int = 0, dim: int = WIKI_DIM, skip: tuple[str, ...] = ()) -> WikiIndex:
    rng = np.random.default_rng(seed)
    names = [p[0] for p in PEOPLE] + TOPICS
    return WikiIndex({n: rng.normal(size=dim) for n in names if n not in skip}, dim)


def homophilous_graph(n_nodes: int = 60, n_edges: int = 240, noise: float = 0.1, seed: int = 0):
    """Signed graph where copartisan edges are POS and cross-party edges NEG.

    Each edge sign is flipped with probability ``noise``. Returns
    (SignedGraph, party_map).
    """
    from .analysis import SignedGraph

    rng = np.random.default_rng(seed)
    names = [f"node{i:03d}" for i in range(n_nodes)]
    parties = {n: ("D" if i % 2 == 0 else "R") for i, n in enumerate(names)}
    graph = SignedGraph()
    for _ in range(n_edges):
        i, j = rng.choice(n_nodes, size=2, replace=False)
        a, b = names[i], names[j]
        positive = parties[a] == parties[b]
        if rng.random() < noise:
            positive = not positive
        graph.add(a, b, Sentiment.POS if positive else Sentiment.NEG)
    for n in names:
        graph.nodes.add(n)
    return graph, parties

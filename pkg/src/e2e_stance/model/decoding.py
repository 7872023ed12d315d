"""Greedy / beam decoding and Task B candidate ranking."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..corpus import Article, MediaLeaning, Sentiment, StanceTriplet, build_samples, linearize, parse_with_dropped
from ..semgraph import document_graph, stub_sidecar
from .config import DecodeConfig
from .features import Batch, Example, collate, encode_target, make_example, prepare_graph


@dataclass
class Prediction:
    sample_id: str
    triplets: list[StanceTriplet]
    raw_decode: str
    dropped: int = 0

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "triplets": [t.to_dict() for t in self.triplets],
                "raw_decode": self.raw_decode}


def _expand(t, n):
    return None if t is None else t.expand(n, *t.shape[1:])


@torch.no_grad()
def decode_ids(model, batch: Batch, tokenizer, decode: DecodeConfig) -> list[int]:
    """Decode one example (batch of size 1); returns output ids without BOS/EOS."""
    if batch.size != 1:
        raise ValueError("decoding runs one sample at a time")
    model.eval()
    text_states, nodes, _ = model.encode(batch)
    beam = 1 if decode.strategy == "greedy" else decode.beam_size
    bos, eos = tokenizer.bos_id, tokenizer.eos_id

    def step_logp(prefixes):
        n = prefixes.shape[0]
        logits = model.decode(prefixes, _expand(text_states, n), _expand(batch.text_mask, n),
                              _expand(nodes, n), _expand(batch.node_mask, n))
        return F.log_softmax(logits[:, -1], -1)

    if decode.strategy == "greedy":
        seq = [bos]
        for _ in range(decode.max_len):
            nxt = int(step_logp(torch.tensor([seq])).argmax(-1))
            if nxt == eos:
                break
            seq.append(nxt)
        return seq[1:]

    alive = torch.tensor([[bos]])
    alive_scores = torch.zeros(1, dtype=text_states.dtype)
    finished: list[tuple[float, list[int]]] = []
    for _ in range(decode.max_len):
        logp = step_logp(alive) + alive_scores[:, None]
        flat = logp.reshape(-1)
        order = torch.sort(flat, descending=True, stable=True).indices[: 2 * beam]
        vocab = logp.shape[-1]
        next_alive, next_scores = [], []
        for idx in order.tolist():
            row, tok = divmod(idx, vocab)
            score = float(flat[idx])
            if tok == eos:
                finished.append((score, alive[row, 1:].tolist()))
            else:
                next_alive.append(alive[row].tolist() + [tok])
                next_scores.append(score)
            if len(next_alive) == beam:
                break
        finished.sort(key=lambda x: -x[0])
        finished = finished[:beam]
        if not next_alive:
            break
        # scores only fall as sequences grow, so a full set of finished
        # hypotheses that beats every live one is final
        if len(finished) == beam and finished[-1][0] >= max(next_scores):
            break
        alive = torch.tensor(next_alive)
        alive_scores = torch.tensor(next_scores, dtype=text_states.dtype)
    if finished:
        return finished[0][1]
    return alive[0, 1:].tolist()


def generate(model, example: Example, tokenizer, decode: DecodeConfig | None = None) -> Prediction:
    decode = decode or model.cfg.decode
    batch = collate([example], tokenizer.pad_id, model.cfg.wiki_dim)
    ids = decode_ids(model, batch, tokenizer, decode)
    raw = tokenizer.decode(ids) if ids else ""
    triplets, dropped = parse_with_dropped(raw)
    return Prediction(example.sample.sample_id, triplets, raw, dropped)


def predict(model, examples: Sequence[Example], tokenizer, decode: DecodeConfig | None = None) -> list[Prediction]:
    return [generate(model, ex, tokenizer, decode) for ex in examples]


# -- Task B ----------------------------------------------------------------------

TASKB_LABELS = ("e1->e2 POS", "e1->e2 NEG", "e2->e1 POS", "e2->e1 NEG")


def taskb_triplet(label: str, e1: str, e2: str) -> StanceTriplet:
    direction, sentiment = label.split()
    src, tgt = (e1, e2) if direction == "e1->e2" else (e2, e1)
    return StanceTriplet(src, Sentiment(sentiment), tgt)


def taskb_example(sentence: str, e1: str, e2: str, tokenizer, model_cfg, label: str | None = None,
                  sample_id: str = "taskb") -> Example:
    """One-sentence sample whose graph is built from the sentence alone."""
    annotations = ((0, taskb_triplet(label, e1, e2)),) if label else ()
    article = Article(story_id=sample_id, article_id=sample_id, media="", media_leaning=MediaLeaning.CENTER,
                      sentences=(" ".join(sentence.split()),), annotations=annotations)
    sidecar = stub_sidecar(article, {e1: e1, e2: e2})
    [sample] = build_samples([article], k=0, include_entities=model_cfg.include_entities,
                             entity_lists={sample_id: [e1, e2]}, include_unannotated=not label)
    graph = None
    if model_cfg.use_graph:
        graph = prepare_graph(sample, document_graph(article, sidecar))
    return make_example(sample, tokenizer, model_cfg.max_positions, graph)


@torch.no_grad()
def rank_taskb(model, sentence: str, e1: str, e2: str, tokenizer) -> tuple[str, list[float]]:
    """Pick the label whose linearized triplet has the highest log-likelihood.

    Ties go to the earliest label in ``TASKB_LABELS``.
    """
    model.eval()
    base = taskb_example(sentence, e1, e2, tokenizer, model.cfg)
    candidates = []
    for label in TASKB_LABELS:
        t = taskb_triplet(label, e1, e2)
        ex = Example(**base.__dict__)
        ex.target_ids = encode_target(tokenizer, linearize([t]).split())
        candidates.append(ex)
    scores = model.sequence_log_prob(collate(candidates, tokenizer.pad_id, model.cfg.wiki_dim)).tolist()
    return TASKB_LABELS[argmax_first(scores)], scores


def argmax_first(scores: Sequence[float]) -> int:
    """Index of the maximum, earliest on ties."""
    return max(range(len(scores)), key=lambda i: (scores[i], -i))

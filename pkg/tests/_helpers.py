"""Shared fixtures data and small builders for the test suite."""

from __future__ import annotations

import logging

import torch

from e2e_stance.corpus import Article, MediaLeaning, Sentiment, StanceTriplet
from e2e_stance.model import ModelConfig, StanceModel
from e2e_stance.pipeline import build_vocab, document_graphs, make_examples, samples_from_corpus
from e2e_stance.synthetic import synthetic_corpus

logging.getLogger("e2e_stance").setLevel(logging.ERROR)

POS, NEG = Sentiment.POS, Sentiment.NEG

SPEECH_CONTEXT = (
    "Trump 's rhetoric , including calling Central Americans trying to enter the United States "
    "\" an invasion , \" and his hard-line immigration policies have exposed him to condemnation "
    "since the El Paso shooting .",
    "\" How far is it from Trump 's saying this ' is an invasion ' to the shooter in El Paso declaring "
    "' his attack is a response to the Hispanic invasion of Texas ? ' Not far at all , \" Biden was due "
    "to say , according to an advance copy of his speech .",
)
# the underlined sentence, with the speaker attribution moved in front so the
# source entity is mentioned before "this president"
SPEECH_TARGET = ("Biden was due to say : \" In both clear language and in code , this president has fanned "
               "the flames of white supremacy in this nation . \"")
SPEECH_TRIPLETS = (
    StanceTriplet("Joe Biden", NEG, "Donald Trump"),
    StanceTriplet("Joe Biden", NEG, "white supremacy"),
    StanceTriplet("Donald Trump", POS, "white supremacy"),
)


def speech_article(annotation_order=(2, 0, 1)) -> Article:
    return Article(
        story_id="s1", article_id="speech", media="example", media_leaning=MediaLeaning.LEAN_LEFT,
        sentences=SPEECH_CONTEXT + (SPEECH_TARGET,),
        annotations=tuple((2, SPEECH_TRIPLETS[i]) for i in annotation_order),
        topic="elections",
    )


def speech_linked_mentions(article: Article) -> list[tuple[str, int, int]]:
    """'this president' in the target sentence linked to Donald Trump."""
    start = article.sentence_starts()[2]
    toks = article.sentence_tokens(2)
    i = toks.index("president") - 1
    return [("Donald Trump", start + i, start + i + 2)]


def tiny_setup(n_articles=25, seed=0, cfg: ModelConfig | None = None, graphs=True):
    """(model, vocab, examples, samples) on the synthetic corpus."""
    cfg = cfg or ModelConfig()
    articles, sidecars = synthetic_corpus(n_articles, seed=seed)
    samples = samples_from_corpus(articles, sidecars, cfg.context_window, cfg.include_entities)
    vocab = build_vocab(samples)
    torch.manual_seed(seed)
    model = StanceModel(cfg, len(vocab), vocab.pad_id)
    examples = make_examples(samples, vocab, cfg, document_graphs(articles, sidecars) if graphs else {})
    return model, vocab, examples, samples


def finite_difference_error(fn, tensors, step=1e-5, seed=0) -> float:
    """Worst relative error between autograd and central differences.

    ``fn`` maps the listed float64 leaf tensors to an output tensor; it is
    reduced to a scalar through a fixed random projection. The error for
    each tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||).
    """
    gen = torch.Generator().manual_seed(seed)
    out = fn()
    proj = torch.randn(out.shape, generator=gen, dtype=torch.float64)
    grads = torch.autograd.grad((out * proj).sum(), tensors)
    worst = 0.0
    with torch.no_grad():
        for t, g in zip(tensors, grads):
            numeric = torch.zeros_like(t)
            flat, nflat = t.view(-1), numeric.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                plus = (fn() * proj).sum().item()
                flat[i] = orig - step
                minus = (fn() * proj).sum().item()
                flat[i] = orig
                nflat[i] = (plus - minus) / (2 * step)
            denom = max(g.norm().item(), numeric.norm().item(), 1e-12)
            worst = max(worst, (g - numeric).norm().item() / denom)
    return worst


def random_adjacency(n: int, gen: torch.Generator, p: float = 0.3) -> torch.Tensor:
    adj = torch.rand(n, n, generator=gen) < p
    adj |= torch.eye(n, dtype=torch.bool)
    return adj

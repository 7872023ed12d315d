"""Entity-to-entity stance detection with a graph-augmented encoder-decoder.

The package also carries the corpus tooling and media analyses around it."""

from .corpus import Article, Sample, Sentiment, StanceTriplet, build_samples, linearize, load_corpus, parse_triplets
from .evaluator import EvalReport, evaluate, taskb_metrics
from .semgraph import SemanticGraph, build_graph, document_graph

__all__ = [
    "Article", "EvalReport", "Sample", "SemanticGraph", "Sentiment", "StanceTriplet", "build_graph",
    "build_samples", "document_graph", "evaluate", "linearize", "load_corpus", "parse_triplets", "taskb_metrics",
]
__version__ = "0.1.0"

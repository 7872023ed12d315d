"""Articles, stance triplets, model input samples and the output grammar.

The output grammar is shared by the model (targets and decoding) and the
evaluator, so everything that turns triplets into text and back lives here.
"""

from __future__ import annotations

import enum
import json
import logging
import re
import unicodedata
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)

AUTHOR = "<Author>"
SOMEONE = "<Someone>"
RESERVED_NAMES = frozenset({AUTHOR, SOMEONE})

BOS = "<s>"
EOS = "</s>"
PAD = "<pad>"
UNK = "<unk>"
ENT = "<ENT>"
STANCE = "<STANCE>"
SEPARATORS = frozenset({ENT, STANCE})
CONTROL_TOKENS = frozenset({BOS, EOS, PAD})


class CorpusError(ValueError):
    """Raised for malformed corpus, sidecar or split files."""


class Sentiment(str, enum.Enum):
    POS = "POS"
    NEG = "NEG"


class MediaLeaning(str, enum.Enum):
    FAR_LEFT = "far_left"
    LEAN_LEFT = "lean_left"
    CENTER = "center"
    LEAN_RIGHT = "lean_right"
    FAR_RIGHT = "far_right"

    @property
    def side(self) -> str:
        if self in (MediaLeaning.FAR_LEFT, MediaLeaning.LEAN_LEFT):
            return "left"
        if self in (MediaLeaning.FAR_RIGHT, MediaLeaning.LEAN_RIGHT):
            return "right"
        return "center"


class ArticleSentiment(str, enum.Enum):
    POS = "POS"
    NEU = "NEU"
    NEG = "NEG"


class Ideology(str, enum.Enum):
    LIB = "lib"
    MOD = "mod"
    CON = "con"
    NA = "NA"


class Segment(enum.IntEnum):
    """Token type of a serialized input position."""

    PRECEDING = 0
    TARGET = 1
    SUCCEEDING = 2
    ENTITY = 3


_WS = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """NFC-normalize and collapse internal whitespace. Case is kept."""
    return _WS.sub(" ", unicodedata.normalize("NFC", name)).strip()


@dataclass(frozen=True, order=True)
class StanceTriplet:
    source: str
    sentiment: Sentiment
    target: str

    def __post_init__(self):
        source = normalize_name(self.source)
        target = normalize_name(self.target)
        if not source:
            raise ValueError("empty source entity")
        if not target:
            raise ValueError("empty target entity")
        if target == AUTHOR:
            raise ValueError(f"{AUTHOR} is only allowed as a source entity")
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "sentiment", Sentiment(self.sentiment))

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.source, self.sentiment.value, self.target)

    def to_dict(self) -> dict:
        return {"source": self.source, "sentiment": self.sentiment.value, "target": self.target}

    @classmethod
    def from_dict(cls, d: Mapping) -> StanceTriplet:
        return cls(d["source"], Sentiment(d["sentiment"]), d["target"])


@dataclass(frozen=True)
class Article:
    story_id: str
    article_id: str
    media: str
    media_leaning: MediaLeaning
    sentences: tuple[str, ...]
    annotations: tuple[tuple[int, StanceTriplet], ...] = ()
    topic: str = ""
    article_entity_sentiments: Mapping[str, ArticleSentiment] = field(default_factory=dict)
    entity_ideologies: Mapping[str, Ideology] = field(default_factory=dict)
    article_leaning: MediaLeaning | None = None

    def __post_init__(self):
        for idx, _ in self.annotations:
            if not 0 <= idx < len(self.sentences):
                raise ValueError(
                    f"annotation sentence index {idx} out of range for article {self.article_id!r}"
                )

    def sentence_tokens(self, idx: int) -> list[str]:
        return self.sentences[idx].split()

    def sentence_starts(self) -> list[int]:
        """Document token offset of each sentence's first token."""
        starts, pos = [], 0
        for sent in self.sentences:
            starts.append(pos)
            pos += len(sent.split())
        return starts

    def triplets_for(self, idx: int) -> list[StanceTriplet]:
        return [t for i, t in self.annotations if i == idx]

    @property
    def triplets(self) -> list[StanceTriplet]:
        return [t for _, t in self.annotations]

    def to_dict(self) -> dict:
        return {
            "story_id": self.story_id,
            "article_id": self.article_id,
            "media": self.media,
            "media_leaning": self.media_leaning.value,
            "topic": self.topic,
            "sentences": list(self.sentences),
            "annotations": [{"sent_idx": i, **t.to_dict()} for i, t in self.annotations],
            "article_entity_sentiments": {k: v.value for k, v in self.article_entity_sentiments.items()},
            "entity_ideologies": {k: v.value for k, v in self.entity_ideologies.items()},
            "article_leaning": self.article_leaning.value if self.article_leaning else None,
        }


def _field(record: Mapping, name: str, lineno: int, default=...):
    if name not in record:
        if default is ...:
            raise CorpusError(f"line {lineno}: missing field {name!r}")
        return default
    return record[name]


def _enum(cls, value, lineno: int, name: str):
    try:
        return cls(value)
    except ValueError:
        raise CorpusError(f"line {lineno}: field {name!r} has unknown value {value!r}") from None


def article_from_dict(record: Mapping, lineno: int = 0) -> Article:
    sentences = _field(record, "sentences", lineno)
    if not isinstance(sentences, list):
        raise CorpusError(f"line {lineno}: field 'sentences' must be a list")
    # token lists are accepted and re-joined with single spaces
    sentences = tuple(" ".join(s) if isinstance(s, list) else " ".join(str(s).split()) for s in sentences)

    annotations = []
    for j, ann in enumerate(_field(record, "annotations", lineno, [])):
        for key in ("sent_idx", "source", "sentiment", "target"):
            if key not in ann:
                raise CorpusError(f"line {lineno}: missing field 'annotations[{j}].{key}'")
        sentiment = _enum(Sentiment, ann["sentiment"], lineno, f"annotations[{j}].sentiment")
        idx = ann["sent_idx"]
        if not isinstance(idx, int) or not 0 <= idx < len(sentences):
            raise CorpusError(f"line {lineno}: field 'annotations[{j}].sent_idx' out of range: {idx!r}")
        try:
            annotations.append((idx, StanceTriplet(ann["source"], sentiment, ann["target"])))
        except ValueError as err:
            raise CorpusError(f"line {lineno}: field 'annotations[{j}]': {err}") from None

    leaning = _field(record, "article_leaning", lineno, None)
    return Article(
        story_id=str(_field(record, "story_id", lineno)),
        article_id=str(_field(record, "article_id", lineno)),
        media=str(_field(record, "media", lineno)),
        media_leaning=_enum(MediaLeaning, _field(record, "media_leaning", lineno), lineno, "media_leaning"),
        sentences=sentences,
        annotations=tuple(annotations),
        topic=str(_field(record, "topic", lineno, "")),
        article_entity_sentiments={
            normalize_name(k): _enum(ArticleSentiment, v, lineno, f"article_entity_sentiments[{k}]")
            for k, v in _field(record, "article_entity_sentiments", lineno, {}).items()
        },
        entity_ideologies={
            normalize_name(k): _enum(Ideology, v, lineno, f"entity_ideologies[{k}]")
            for k, v in _field(record, "entity_ideologies", lineno, {}).items()
        },
        article_leaning=None if leaning is None else _enum(MediaLeaning, leaning, lineno, "article_leaning"),
    )


def load_corpus(path: str | Path) -> list[Article]:
    """Read a JSONL corpus, one article per line."""
    articles: list[Article] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"line {lineno}: invalid JSON ({err.msg})") from None
            if not isinstance(record, dict):
                raise CorpusError(f"line {lineno}: expected a JSON object")
            article = article_from_dict(record, lineno)
            if article.article_id in seen:
                raise CorpusError(f"line {lineno}: duplicate field 'article_id' {article.article_id!r}")
            seen.add(article.article_id)
            articles.append(article)
    return articles


def save_corpus(articles: Iterable[Article], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for a in articles:
            f.write(json.dumps(a.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


# -- samples -----------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    """One model input record: a target sentence with context and entities.

    ``tokens`` is the serialized encoder input. ``doc_offsets`` maps each
    position back to a document token offset (-1 for separators and the
    appended entity list) and ``entity_spans`` gives the [start, end)
    position of each name in the appended entity list.
    """

    sample_id: str
    article_id: str
    sent_idx: int
    target_sentence: tuple[str, ...]
    preceding: tuple[str, ...]
    succeeding: tuple[str, ...]
    entity_list: tuple[str, ...]
    gold_triplets: tuple[StanceTriplet, ...]
    tokens: tuple[str, ...]
    segment_tags: tuple[Segment, ...]
    doc_offsets: tuple[int, ...]
    entity_spans: Mapping[str, tuple[int, int]]
    mention_offsets: Mapping[str, int]

    @property
    def target_positions(self) -> list[int]:
        return [i for i, (tok, seg) in enumerate(zip(self.tokens, self.segment_tags))
                if seg == Segment.TARGET and self.doc_offsets[i] >= 0]

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "article_id": self.article_id,
            "sent_idx": self.sent_idx,
            "target_sentence": list(self.target_sentence),
            "preceding": list(self.preceding),
            "succeeding": list(self.succeeding),
            "entity_list": list(self.entity_list),
            "gold_triplets": [t.to_dict() for t in self.gold_triplets],
            "tokens": list(self.tokens),
            "segment_tags": [int(s) for s in self.segment_tags],
            "doc_offsets": list(self.doc_offsets),
            "entity_spans": {k: list(v) for k, v in self.entity_spans.items()},
            "mention_offsets": dict(self.mention_offsets),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


def _char_offset(tokens: Sequence[str], index: int) -> int:
    return sum(len(t) + 1 for t in tokens[:index])


def _find_subsequence(haystack: Sequence[str], needle: Sequence[str]) -> int:
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if list(haystack[i:i + n]) == list(needle):
            return i
    return -1


def find_mention_offsets(
    target: Sequence[str],
    names: Iterable[str],
    linked: Iterable[tuple[str, int, int]] = (),
    target_start: int = 0,
) -> dict[str, int]:
    """Character offset of each entity's earliest mention in the target sentence.

    Linked mentions (canonical name plus document token span) are used first.
    Names without a linked mention fall back to a token match of the full
    name, then of its last token (surname-style mentions such as "Biden").
    """
    offsets: dict[str, int] = {}
    end = target_start + len(target)
    for name, start, _ in linked:
        if target_start <= start < end:
            off = _char_offset(target, start - target_start)
            if name not in offsets or off < offsets[name]:
                offsets[name] = off
    for name in names:
        if name in offsets or name in RESERVED_NAMES:
            continue
        parts = name.split()
        i = _find_subsequence(target, parts)
        if i < 0 and len(parts) > 1:
            i = _find_subsequence(target, parts[-1:])
        if i >= 0:
            offsets[name] = _char_offset(target, i)
    return offsets


def build_samples(
    articles: Iterable[Article],
    k: int = 3,
    include_entities: bool = True,
    *,
    entity_lists: Mapping[str, Sequence[str]] | None = None,
    linked_mentions: Mapping[str, Sequence[tuple[str, int, int]]] | None = None,
    include_unannotated: bool = False,
) -> list[Sample]:
    """Create one sample per annotated sentence (or per sentence).

    ``entity_lists`` holds the document-wide extracted canonical names per
    article id; ``linked_mentions`` holds (canonical, start, end) document
    token spans per article id, used to order the gold triplets.
    """
    if k < 0:
        raise ValueError("context window k must be >= 0")
    entity_lists = entity_lists or {}
    linked_mentions = linked_mentions or {}
    samples = []
    for article in articles:
        starts = article.sentence_starts()
        annotated = sorted({i for i, _ in article.annotations})
        indices = range(len(article.sentences)) if include_unannotated else annotated
        entities = tuple(normalize_name(e) for e in entity_lists.get(article.article_id, ()))
        for idx in indices:
            samples.append(_make_sample(article, idx, k, include_entities, entities, starts,
                                        linked_mentions.get(article.article_id, ())))
    return samples


def _make_sample(article, idx, k, include_entities, entities, starts, linked) -> Sample:
    lo, hi = max(0, idx - k), min(len(article.sentences), idx + k + 1)
    tokens: list[str] = []
    tags: list[Segment] = []
    offsets: list[int] = []

    def emit(tok, seg, off=-1):
        tokens.append(tok)
        tags.append(seg)
        offsets.append(off)

    def emit_sentences(rng, seg):
        out = []
        for j in rng:
            for n, tok in enumerate(article.sentence_tokens(j)):
                emit(tok, seg, starts[j] + n)
                out.append(tok)
        return tuple(out)

    emit(BOS, Segment.PRECEDING)
    preceding = emit_sentences(range(lo, idx), Segment.PRECEDING)
    emit(BOS, Segment.TARGET)
    target = emit_sentences([idx], Segment.TARGET)
    emit(EOS, Segment.SUCCEEDING)
    succeeding = emit_sentences(range(idx + 1, hi), Segment.SUCCEEDING)
    emit(EOS, Segment.SUCCEEDING)

    entity_spans: dict[str, tuple[int, int]] = {}
    entity_list = entities if include_entities else ()
    if entity_list:
        emit(BOS, Segment.ENTITY)
        for name in entity_list:
            emit(ENT, Segment.ENTITY)
            start = len(tokens)
            for tok in name.split():
                emit(tok, Segment.ENTITY)
            entity_spans.setdefault(name, (start, len(tokens)))

    gold = article.triplets_for(idx)
    names = [n for t in gold for n in (t.source, t.target)] + list(entity_list)
    mention_offsets = find_mention_offsets(target, names, linked, starts[idx])
    ordered = tuple(order_triplets(gold, mention_offsets))
    return Sample(
        sample_id=f"{article.article_id}:{idx}",
        article_id=article.article_id,
        sent_idx=idx,
        target_sentence=target,
        preceding=preceding,
        succeeding=succeeding,
        entity_list=entity_list,
        gold_triplets=ordered,
        tokens=tuple(tokens),
        segment_tags=tuple(tags),
        doc_offsets=tuple(offsets),
        entity_spans=entity_spans,
        mention_offsets=mention_offsets,
    )


def order_triplets(
    triplets: Iterable[StanceTriplet], sample: Sample | Mapping[str, int]
) -> list[StanceTriplet]:
    """Sort by the source entity's first mention in the target sentence.

    Ties fall back to the target's mention offset, then to the names and
    sentiment. Entities with no mention sort after every mentioned one.
    """
    offsets = sample.mention_offsets if isinstance(sample, Sample) else sample
    inf = float("inf")

    def key(t: StanceTriplet):
        return (offsets.get(t.source, inf), offsets.get(t.target, inf),
                t.source, t.target, t.sentiment.value)

    return sorted(triplets, key=key)


# -- output grammar ----------------------------------------------------------


def linearize(triplets: Iterable[StanceTriplet]) -> str:
    """Render ordered triplets as ``<ENT> src <ENT> tgt <STANCE> POS|NEG`` blocks."""
    parts = []
    for t in triplets:
        for name in (t.source, t.target):
            if not name or SEPARATORS.intersection(name.split()):
                raise ValueError(f"entity name {name!r} is empty or contains a separator token")
        parts.extend([ENT, t.source, ENT, t.target, STANCE, t.sentiment.value])
    return " ".join(parts)


def parse_with_dropped(text: str) -> tuple[list[StanceTriplet], int]:
    """Lenient inverse of :func:`linearize`; also returns the dropped-block count."""
    toks = [t for t in text.split() if t not in CONTROL_TOKENS]
    # segments: (separator or None, words following it)
    segments: list[tuple[str | None, list[str]]] = []
    for tok in toks:
        if tok in SEPARATORS:
            segments.append((tok, []))
        elif segments:
            segments[-1][1].append(tok)
        else:
            segments.append((None, [tok]))

    triplets, dropped = [], 0
    failing = False
    i = 0
    while i < len(segments):
        block = segments[i:i + 3]
        if [s for s, _ in block] == [ENT, ENT, STANCE] and all(w for _, w in block):
            src, tgt, stance = (" ".join(w) for _, w in block)
            try:
                triplets.append(StanceTriplet(src, Sentiment(stance), tgt))
                failing = False
            except ValueError:
                dropped += 1
                failing = False
            i += 3
            continue
        # a run of unparseable segments counts as one dropped block
        if not failing:
            dropped += 1
            failing = True
        i += 1
        while i < len(segments) and segments[i][0] != ENT:
            i += 1
    if dropped:
        logger.debug("dropped %d malformed triplet block(s) from %r", dropped, text)
    return triplets, dropped


def parse_triplets(text: str) -> list[StanceTriplet]:
    return parse_with_dropped(text)[0]


# -- splits ------------------------------------------------------------------


@dataclass
class CorpusSplits:
    train: list[Sample]
    valid: list[Sample]
    test: list[Sample]

    def __post_init__(self):
        seen: set[str] = set()
        for part in (self.train, self.valid, self.test):
            ids = {s.sample_id for s in part}
            if len(ids) != len(part) or ids & seen:
                raise CorpusError("split sample ids are not disjoint")
            seen |= ids


def chronological_split(
    samples: Sequence[Sample], fractions: tuple[float, float, float] = (0.625, 0.18, 0.195)
) -> CorpusSplits:
    """Split samples in corpus order, keeping each article inside one split.

    Corpus order is taken to be publication order. The default fractions are
    the 4505/1313/1378 proportions of the reference corpus.
    """
    by_article: dict[str, list[Sample]] = {}
    for s in samples:
        by_article.setdefault(s.article_id, []).append(s)
    total = len(samples)
    bounds = (fractions[0] * total, (fractions[0] + fractions[1]) * total)
    parts: list[list[Sample]] = [[], [], []]
    seen = 0
    for group in by_article.values():
        part = 0 if seen < bounds[0] else 1 if seen < bounds[1] else 2
        parts[part].extend(group)
        seen += len(group)
    return CorpusSplits(*parts)


def load_splits(path: str | Path, samples: Iterable[Sample]) -> CorpusSplits:
    with open(path, encoding="utf-8") as f:
        mapping = json.load(f)
    index = {s.sample_id: s for s in samples}
    parts = []
    for name in ("train", "valid", "test"):
        ids = mapping.get(name, [])
        missing = [i for i in ids if i not in index]
        if missing:
            raise CorpusError(f"split {name!r} references unknown sample ids: {missing[:5]}")
        parts.append([index[i] for i in ids])
    return CorpusSplits(*parts)


def save_splits(splits: CorpusSplits, path: str | Path) -> None:
    payload = {name: [s.sample_id for s in getattr(splits, name)] for name in ("train", "valid", "test")}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")

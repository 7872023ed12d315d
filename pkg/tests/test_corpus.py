import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import SPEECH_TRIPLETS, NEG, POS, speech_article, speech_linked_mentions
from e2e_stance.corpus import (
    AUTHOR, BOS, ENT, EOS, SOMEONE, STANCE, Article, CorpusError, CorpusSplits, MediaLeaning, Segment,
    StanceTriplet, build_samples, chronological_split, linearize, load_corpus, load_splits, normalize_name,
    order_triplets, parse_triplets, parse_with_dropped, save_corpus, save_splits,
)


def _record(**over):
    rec = {
        "story_id": "s", "article_id": "a1", "media": "m", "media_leaning": "center", "topic": "t",
        "sentences": ["Alice met Bob .", "Bob left ."],
        "annotations": [{"sent_idx": 0, "source": "Alice", "sentiment": "POS", "target": "Bob"}],
    }
    rec.update(over)
    return rec


def _write(tmp_path, *records):
    p = tmp_path / "corpus.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in records))
    return p


def _article(n_sent, annotated, aid="a"):
    sents = tuple(f"w{i}a w{i}b ." for i in range(n_sent))
    anns = tuple((i, StanceTriplet(f"S{i}", POS, f"T{i}")) for i in annotated)
    return Article("s", aid, "m", MediaLeaning.CENTER, sents, anns)


# -- triplets ------------------------------------------------------------------


def test_triplet_normalizes_names():
    t = StanceTriplet("  Joe   Biden ", NEG, "Donald Trump")
    assert t.as_tuple() == ("Joe Biden", "NEG", "Donald Trump")
    # NFC: a decomposed e-acute equals the composed form
    assert StanceTriplet("Jose\u0301", POS, "X") == StanceTriplet("Jos\u00e9", POS, "X")


def test_triplet_reserved_names():
    StanceTriplet(AUTHOR, NEG, SOMEONE)
    StanceTriplet(SOMEONE, POS, "X")
    with pytest.raises(ValueError):
        StanceTriplet("X", POS, AUTHOR)
    with pytest.raises(ValueError):
        StanceTriplet(" ", POS, "X")
    with pytest.raises(ValueError):
        StanceTriplet("X", "MAYBE", "Y")


def test_normalize_name_keeps_case():
    assert normalize_name("white  Supremacy") == "white Supremacy"


# -- loading -------------------------------------------------------------------


def test_load_one_article(tmp_path):
    arts = load_corpus(_write(tmp_path, _record()))
    assert len(arts) == 1
    assert arts[0].annotations == ((0, StanceTriplet("Alice", POS, "Bob")),)


def test_bad_sentiment_names_field(tmp_path):
    rec = _record(annotations=[{"sent_idx": 0, "source": "A", "sentiment": "MAYBE", "target": "B"}])
    with pytest.raises(CorpusError, match=r"line 1: .*annotations\[0\]\.sentiment"):
        load_corpus(_write(tmp_path, rec))


@pytest.mark.parametrize("over,field", [
    ({"media_leaning": "extreme"}, "media_leaning"),
    ({"annotations": [{"sent_idx": 5, "source": "A", "sentiment": "POS", "target": "B"}]}, "sent_idx"),
    ({"annotations": [{"sent_idx": 0, "sentiment": "POS", "target": "B"}]}, "source"),
])
def test_schema_errors(tmp_path, over, field):
    with pytest.raises(CorpusError, match=field):
        load_corpus(_write(tmp_path, _record(), _record(article_id="a2", **over)))


def test_missing_field_and_bad_json(tmp_path):
    rec = _record()
    del rec["media"]
    with pytest.raises(CorpusError, match="line 1: .*'media'"):
        load_corpus(_write(tmp_path, rec))
    p = tmp_path / "bad.jsonl"
    p.write_text("{not json\n")
    with pytest.raises(CorpusError, match="line 1"):
        load_corpus(p)


def test_duplicate_article_id(tmp_path):
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(_write(tmp_path, _record(), _record()))


def test_speech_fixture_loads_three_annotations(tmp_path):
    p = tmp_path / "speech.jsonl"
    save_corpus([speech_article()], p)
    [art] = load_corpus(p)
    assert len(art.annotations) == 3
    assert {i for i, _ in art.annotations} == {2}
    assert art == speech_article()


# -- samples ------------------------------------------------------------------


def test_one_sample_per_annotated_sentence():
    samples = build_samples([_article(10, [1, 3, 5, 7])])
    assert len(samples) == 4
    assert len(build_samples([_article(10, [1, 3, 5, 7])], include_unannotated=True)) == 10


def test_k0_target_only():
    [s] = build_samples([_article(5, [2])], k=0, include_entities=False)
    assert s.preceding == () and s.succeeding == ()
    assert s.tokens == (BOS, BOS, "w2a", "w2b", ".", EOS, EOS)


def test_window_at_sentence_one():
    [s] = build_samples([_article(10, [1])], k=3)
    assert s.preceding == ("w0a", "w0b", ".")
    assert s.succeeding == tuple(t for i in (2, 3, 4) for t in (f"w{i}a", f"w{i}b", "."))


def test_layout_and_segment_tags():
    [s] = build_samples([_article(3, [1])], k=1, entity_lists={"a": ["S1", "Big Name"]})
    P, T, S, E = Segment.PRECEDING, Segment.TARGET, Segment.SUCCEEDING, Segment.ENTITY
    assert s.tokens == (BOS, "w0a", "w0b", ".", BOS, "w1a", "w1b", ".", EOS, "w2a", "w2b", ".", EOS,
                        BOS, ENT, "S1", ENT, "Big", "Name")
    assert s.segment_tags == (P, P, P, P, T, T, T, T, S, S, S, S, S, E, E, E, E, E, E)
    assert len(s.segment_tags) == len(s.tokens)
    assert s.entity_spans == {"S1": (15, 16), "Big Name": (17, 19)}
    assert [s.tokens[i] for i in s.target_positions] == ["w1a", "w1b", "."]


def test_build_samples_deterministic():
    a = [speech_article()]
    links = {"speech": speech_linked_mentions(a[0])}
    one = [s.dumps() for s in build_samples(a, linked_mentions=links)]
    two = [s.dumps() for s in build_samples(a, linked_mentions=links)]
    assert one == two


def test_negative_k_rejected():
    with pytest.raises(ValueError):
        build_samples([_article(3, [0])], k=-1)


# -- ordering ------------------------------------------------------------------


def test_speech_example_order():
    art = speech_article()
    [s] = build_samples([art], linked_mentions={"speech": speech_linked_mentions(art)},
                        entity_lists={"speech": ["Joe Biden", "Donald Trump", "white supremacy"]})
    assert s.gold_triplets == SPEECH_TRIPLETS
    assert s.mention_offsets["Joe Biden"] == 0


def test_order_single_and_target_tiebreak():
    t = StanceTriplet("A", POS, "B")
    assert order_triplets([t], {}) == [t]
    far, near = StanceTriplet("A", POS, "Far"), StanceTriplet("A", NEG, "Near")
    assert order_triplets([far, near], {"A": 0, "Near": 5, "Far": 12}) == [near, far]


def test_unmentioned_sort_last():
    a, b = StanceTriplet("Zed", POS, "X"), StanceTriplet("Missing", POS, "X")
    assert order_triplets([b, a], {"Zed": 3}) == [a, b]


names = st.text(alphabet="abcXYZ ", min_size=1, max_size=6).filter(lambda s: s.strip())
triplets = st.builds(StanceTriplet, names, st.sampled_from([POS, NEG]), names)
offset_maps = st.dictionaries(st.text(alphabet="abcXYZ", min_size=1, max_size=3), st.integers(0, 20))


@settings(max_examples=200, deadline=None)
@given(st.lists(triplets, max_size=6), offset_maps)
def test_order_idempotent_and_total(ts, offsets):
    once = order_triplets(ts, offsets)
    assert order_triplets(once, offsets) == once
    assert order_triplets(list(reversed(ts)), offsets) == once


# -- grammar -------------------------------------------------------------------


def test_linearize_examples():
    assert linearize([StanceTriplet("Joe Biden", NEG, "Donald Trump")]) == \
        "<ENT> Joe Biden <ENT> Donald Trump <STANCE> NEG"
    assert linearize([]) == ""
    text = linearize(SPEECH_TRIPLETS).split()
    assert sum(t in (ENT, STANCE) for t in text) == 9


def test_linearize_rejects_separator_in_name():
    with pytest.raises(ValueError):
        linearize([StanceTriplet("A <ENT> B", POS, "C")])


def test_parse_lenient():
    assert parse_with_dropped("<ENT> A <ENT> B <STANCE> NEG <ENT> C") == ([StanceTriplet("A", NEG, "B")], 1)
    assert parse_with_dropped("<ENT> A <ENT> B <STANCE> GOOD") == ([], 1)
    assert parse_with_dropped("") == ([], 0)


def test_parse_skips_control_tokens_and_resyncs():
    text = "<s> junk <ENT> A <STANCE> POS <ENT> B <ENT> C <STANCE> POS </s> <pad>"
    got, dropped = parse_with_dropped(text)
    assert got == [StanceTriplet("B", POS, "C")]
    assert dropped == 1


def test_parse_invalid_stance_then_incomplete_counts_two():
    assert parse_with_dropped("<ENT> A <ENT> B <STANCE> GOOD <ENT> C")[1] == 2


@settings(max_examples=300, deadline=None)
@given(st.lists(triplets, max_size=5))
def test_round_trip_property(ts):
    assert parse_triplets(linearize(ts)) == ts


# -- splits ------------------------------------------------------------------


def test_chronological_split_keeps_articles_whole():
    arts = [_article(4, [0, 1, 2, 3], aid=f"a{i}") for i in range(10)]
    splits = chronological_split(build_samples(arts))
    parts = [{s.article_id for s in p} for p in (splits.train, splits.valid, splits.test)]
    assert not (parts[0] & parts[1] or parts[1] & parts[2] or parts[0] & parts[2])
    order = [s.article_id for p in (splits.train, splits.valid, splits.test) for s in p]
    assert order == sorted(order, key=lambda a: int(a[1:]))
    assert len(splits.train) > len(splits.valid) > 0 and len(splits.test) > 0


def test_splits_round_trip_and_disjoint(tmp_path):
    samples = build_samples([_article(4, [0, 1, 2, 3])])
    splits = CorpusSplits(samples[:2], samples[2:3], samples[3:])
    save_splits(splits, tmp_path / "splits.json")
    again = load_splits(tmp_path / "splits.json", samples)
    assert [s.sample_id for s in again.train] == ["a:0", "a:1"]
    with pytest.raises(CorpusError):
        CorpusSplits(samples[:2], samples[1:3], [])
    (tmp_path / "bad.json").write_text(json.dumps({"train": ["nope"]}))
    with pytest.raises(CorpusError, match="unknown sample"):
        load_splits(tmp_path / "bad.json", samples)

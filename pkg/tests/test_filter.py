"""Phrase matching and document filtering against naive oracles."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from assocmine.corpus import Article, token_norms
from assocmine.embed import HashedTfProvider, cosine
from assocmine.filter import (
    PhraseMatcher,
    Strategy,
    compile_phrases,
    lexical_filter,
    semantic_filter,
    semantic_score,
)

from conftest import make_doc


def naive_find_all(norms, phrases):
    """Oracle: scan every start position for every phrase."""
    found = []
    for p_idx, phrase in enumerate(phrases):
        n = len(phrase)
        for i in range(len(norms) - n + 1):
            if norms[i:i + n] == phrase:
                found.append((i, i + n, p_idx))
    return sorted(found)


def naive_nonoverlapping_count(norms, phrase):
    """Oracle: greedy left-to-right non-overlapping occurrence count."""
    count = 0
    i = 0
    n = len(phrase)
    while i + n <= len(norms):
        if norms[i:i + n] == phrase:
            count += 1
            i += n
        else:
            i += 1
    return count


class TestPhraseMatcher:
    def test_single_phrase(self):
        matcher = compile_phrases(["bond fund"])
        norms = token_norms("a bond fund and a bond fund")
        got = [(m.start, m.end, m.phrase_index) for m in matcher.find_all(norms)]
        assert got == naive_find_all(norms, [["bond", "fund"]])

    def test_overlapping_phrases_all_reported(self):
        matcher = compile_phrases(["a b", "b c", "a b c"])
        norms = ["a", "b", "c"]
        spans = {(m.start, m.end) for m in matcher.find_all(norms)}
        assert spans == {(0, 2), (1, 3), (0, 3)}

    def test_phrase_inside_phrase(self):
        matcher = compile_phrases(["etf", "bitcoin etf"])
        norms = ["spot", "bitcoin", "etf"]
        got = sorted((m.start, m.end) for m in matcher.find_all(norms))
        assert got == [(1, 3), (2, 3)]

    def test_case_and_whitespace_normalization(self):
        matcher = compile_phrases(["  Spot   Bitcoin ETF "])
        assert matcher.phrase_keys == ["spot bitcoin etf"]

    def test_duplicate_phrases_collapse(self):
        matcher = compile_phrases(["fund", "Fund", "FUND"])
        assert matcher.phrase_keys == ["fund"]

    def test_empty_phrase_list_rejected(self):
        with pytest.raises(ValueError):
            compile_phrases([])

    def test_all_blank_rejected(self):
        with pytest.raises(ValueError):
            compile_phrases(["", "   "])

    @given(
        norms=st.lists(st.sampled_from("abcde"), max_size=40),
        phrases=st.lists(
            st.lists(st.sampled_from("abcde"), min_size=1, max_size=3),
            min_size=1, max_size=5, unique_by=tuple),
    )
    @settings(max_examples=300, deadline=None)
    def test_matches_naive_oracle(self, norms, phrases):
        matcher = PhraseMatcher(phrases)
        got = sorted((m.start, m.end, m.phrase_index)
                     for m in matcher.find_all(norms))
        assert got == naive_find_all(norms, phrases)


class TestLexicalFilter:
    def test_counts_and_decision(self):
        doc = make_doc("The fund launched. Another fund launched today.")
        matcher = compile_phrases(["fund launched"])
        result, decision = lexical_filter(doc, matcher)
        assert result.total == 2
        assert result.hits["fund launched"].count == 2
        assert decision.kept is True
        assert decision.strategy is Strategy.LEXICAL

    def test_below_min_hits_dropped(self):
        doc = make_doc("The fund launched.")
        matcher = compile_phrases(["fund launched"])
        _, decision = lexical_filter(doc, matcher, min_hits=2)
        assert decision.kept is False
        assert decision.score == 1.0

    def test_same_phrase_counts_nonoverlapping(self):
        # "a a a" contains "a a" twice when overlapping, once when not.
        doc = make_doc("a a a")
        matcher = compile_phrases(["a a"])
        result, _ = lexical_filter(doc, matcher)
        assert result.total == 1

    def test_offsets_are_byte_spans(self):
        doc = make_doc("One bond fund here.")
        matcher = compile_phrases(["bond fund"])
        result, _ = lexical_filter(doc, matcher)
        (start, end), = result.hits["bond fund"].offsets
        assert doc.text_at(start, end) == "bond fund"

    def test_no_hits(self):
        doc = make_doc("Nothing matches here.")
        matcher = compile_phrases(["bond fund"])
        result, decision = lexical_filter(doc, matcher)
        assert result.total == 0
        assert result.hits == {}
        assert decision.kept is False

    def test_min_hits_validated(self):
        doc = make_doc("x")
        matcher = compile_phrases(["x"])
        with pytest.raises(ValueError):
            lexical_filter(doc, matcher, min_hits=0)

    @given(
        words=st.lists(st.sampled_from(["fund", "bond", "etf", "the"]),
                       max_size=30),
        phrase=st.lists(st.sampled_from(["fund", "bond", "etf"]),
                        min_size=1, max_size=3),
    )
    @settings(max_examples=200, deadline=None)
    def test_count_matches_naive_oracle(self, words, phrase):
        doc = make_doc(" ".join(words))
        matcher = PhraseMatcher([phrase])
        result, _ = lexical_filter(doc, matcher)
        norms = [t.norm for t in doc.tokens]
        expected = naive_nonoverlapping_count(norms, phrase)
        got = result.hits.get(" ".join(phrase))
        assert (got.count if got else 0) == expected


class TestSemanticFilter:
    def test_score_is_cosine_of_title_and_body(self, provider):
        article = Article(id="a", title="bond fund",
                          body="The bond fund launched today.")
        query = provider.embed_text("bond fund launch")
        expected = cosine(
            provider.embed_text(article.title + " " + article.body), query)
        assert semantic_score(article, query, provider) == pytest.approx(expected)

    def test_threshold_decision(self, provider):
        on_topic = Article(id="a", body="The bond fund launched a bond etf.")
        off_topic = Article(id="b", body="Rain fell over the coastal hills.")
        query = "bond fund etf launch"
        keep = semantic_filter(on_topic, query, provider, threshold=0.3)
        drop = semantic_filter(off_topic, query, provider, threshold=0.3)
        assert keep.kept is True
        assert keep.strategy is Strategy.SEMANTIC
        assert drop.kept is False
        assert drop.score == pytest.approx(0.0)

    def test_boundary_is_inclusive(self, provider):
        article = Article(id="a", body="growth fund")
        decision = semantic_filter(article, "growth fund", provider,
                                   threshold=1.0)
        assert decision.score == pytest.approx(1.0)
        assert decision.kept is True

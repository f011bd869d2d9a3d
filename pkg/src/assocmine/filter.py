"""Document filtering: lexical phrase matching and semantic relevance.

The lexical side is built around a token-level Aho-Corasick automaton so
that large terminology lists are matched in one pass over a document's
normalized token sequence. Token boundaries come from the corpus
tokenizer, which makes matching case-insensitive and immune to substring
false positives ("bitcoins" never matches "bitcoin").
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .corpus import AnnotatedDoc, Article, token_norms
from .embed import EmbeddingProvider, cosine

logger = logging.getLogger(__name__)

DEFAULT_SEMANTIC_THRESHOLD = 0.35
DEFAULT_MIN_HITS = 1


class Strategy(str, Enum):
    LEXICAL = "LEXICAL"
    SEMANTIC = "SEMANTIC"


@dataclass
class TokenMatch:
    """One automaton hit over a token sequence (token indices, half-open)."""

    start: int
    end: int
    phrase_index: int


class PhraseMatcher:
    """Multi-phrase matcher over normalized token sequences.

    Phrases are stored as tuples of token norms; matching walks the token
    stream once through an Aho-Corasick automaton and reports every
    occurrence of every phrase, including overlapping ones.
    """

    def __init__(self, phrases: list[tuple[str, ...]]):
        if not phrases:
            raise ValueError("PhraseMatcher needs at least one phrase")
        self.phrases = phrases
        self.phrase_keys = [" ".join(p) for p in phrases]
        # goto is a list of dicts token -> state; output holds phrase indexes
        # whose last token ends at that state.
        self._goto: list[dict[str, int]] = [{}]
        self._fail: list[int] = [0]
        self._output: list[list[int]] = [[]]
        for idx, phrase in enumerate(phrases):
            state = 0
            for tok in phrase:
                nxt = self._goto[state].get(tok)
                if nxt is None:
                    self._goto.append({})
                    self._fail.append(0)
                    self._output.append([])
                    nxt = len(self._goto) - 1
                    self._goto[state][tok] = nxt
                state = nxt
            self._output[state].append(idx)
        self._build_failure_links()

    def _build_failure_links(self) -> None:
        queue: deque[int] = deque()
        for state in self._goto[0].values():
            self._fail[state] = 0
            queue.append(state)
        while queue:
            current = queue.popleft()
            for tok, nxt in self._goto[current].items():
                queue.append(nxt)
                fallback = self._fail[current]
                while fallback and tok not in self._goto[fallback]:
                    fallback = self._fail[fallback]
                self._fail[nxt] = self._goto[fallback].get(tok, 0)
                if self._fail[nxt] == nxt:
                    self._fail[nxt] = 0
                self._output[nxt] = self._output[nxt] + self._output[self._fail[nxt]]

    def find_all(self, norms: list[str]) -> list[TokenMatch]:
        """Every phrase occurrence over a token norm sequence."""
        matches: list[TokenMatch] = []
        state = 0
        for pos, tok in enumerate(norms):
            while state and tok not in self._goto[state]:
                state = self._fail[state]
            state = self._goto[state].get(tok, 0)
            for phrase_idx in self._output[state]:
                length = len(self.phrases[phrase_idx])
                matches.append(TokenMatch(pos - length + 1, pos + 1, phrase_idx))
        return matches


def compile_phrases(phrases: list[str]) -> PhraseMatcher:
    """Tokenize, casefold and deduplicate phrases into a matcher.

    Entries that normalize to nothing are dropped with a warning; an empty
    or all-empty input is an error.
    """
    if not phrases:
        raise ValueError("phrase list is empty")
    seen: dict[tuple[str, ...], None] = {}
    for raw in phrases:
        tokens = tuple(token_norms(raw))
        if not tokens:
            logger.warning("dropping phrase %r: no tokens after normalization", raw)
            continue
        seen.setdefault(tokens, None)
    if not seen:
        raise ValueError("no usable phrases after normalization")
    return PhraseMatcher(list(seen.keys()))


@dataclass
class PhraseHits:
    count: int
    offsets: list[tuple[int, int]]


@dataclass
class LexicalResult:
    article_id: str
    hits: dict[str, PhraseHits] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(h.count for h in self.hits.values())

    @property
    def matched_phrases(self) -> set[str]:
        return {p for p, h in self.hits.items() if h.count > 0}


@dataclass
class FilterDecision:
    article_id: str
    kept: bool
    score: float
    strategy: Strategy


def lexical_filter(doc: AnnotatedDoc, matcher: PhraseMatcher,
                   min_hits: int = DEFAULT_MIN_HITS) -> tuple[LexicalResult, FilterDecision]:
    """Count phrase hits in a document and decide keep/drop.

    Different phrases may overlap freely; occurrences of the *same* phrase
    are counted non-overlapping, left to right, so counts are deterministic.
    """
    if min_hits < 1:
        raise ValueError("min_hits must be >= 1")
    norms = [t.norm for t in doc.tokens]
    per_phrase: dict[int, list[TokenMatch]] = {}
    for match in matcher.find_all(norms):
        per_phrase.setdefault(match.phrase_index, []).append(match)

    result = LexicalResult(article_id=doc.article_id)
    for phrase_idx in sorted(per_phrase):
        occurrences = sorted(per_phrase[phrase_idx], key=lambda m: m.start)
        taken: list[TokenMatch] = []
        next_free = 0
        for occ in occurrences:
            if occ.start >= next_free:
                taken.append(occ)
                next_free = occ.end
        if taken:
            offsets = [(doc.tokens[m.start].start, doc.tokens[m.end - 1].end) for m in taken]
            result.hits[matcher.phrase_keys[phrase_idx]] = PhraseHits(len(taken), offsets)

    total = result.total
    decision = FilterDecision(article_id=doc.article_id, kept=total >= min_hits,
                              score=float(total), strategy=Strategy.LEXICAL)
    return result, decision


def semantic_score(article: Article, query_vector, provider: EmbeddingProvider) -> float:
    """Cosine relevance of an article (title + body) to a query vector."""
    return cosine(provider.embed_text(article.title + " " + article.body), query_vector)


def semantic_filter(article: Article, query: str, provider: EmbeddingProvider,
                    threshold: float = DEFAULT_SEMANTIC_THRESHOLD) -> FilterDecision:
    """Keep an article when its cosine relevance to the query reaches the threshold."""
    score = semantic_score(article, provider.embed_text(query), provider)
    return FilterDecision(article_id=article.id, kept=score >= threshold,
                          score=score, strategy=Strategy.SEMANTIC)

"""Windowed entity co-occurrence counting, trend matrices, and ranking.

Counting uses set semantics per window unit: a sentence (or paragraph,
or article) contributes each unordered entity pair at most once, no
matter how often either entity is mentioned inside it. Counters are
mergeable so documents can be counted in parallel shards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np

from .corpus import AnnotatedDoc, Article
from .errors import CorpusError
from .extract import EntityType, Mention

logger = logging.getLogger(__name__)

DEFAULT_EXAMPLE_CAP = 5
UNKNOWN_BUCKET = "unknown"


class WindowLevel(str, Enum):
    SENTENCE = "SENTENCE"
    PARAGRAPH = "PARAGRAPH"
    ARTICLE = "ARTICLE"


class Granularity(str, Enum):
    YEAR = "YEAR"
    MONTH = "MONTH"

    def bucket(self, published_at: date | None) -> str:
        if published_at is None:
            return UNKNOWN_BUCKET
        if self is Granularity.YEAR:
            return "%04d" % published_at.year
        return "%04d-%02d" % (published_at.year, published_at.month)


def bucket_sort_key(label: str) -> tuple[bool, str]:
    """Ascending chronological order with "unknown" last."""
    return (label == UNKNOWN_BUCKET, label)


@dataclass
class DocumentMentions:
    """Everything counting needs to know about one article."""

    article_id: str
    published_at: date | None
    n_sentences: int
    n_paragraphs: int
    mentions: list[Mention]
    keywords: set[str] = field(default_factory=set)

    @classmethod
    def from_doc(cls, article: Article, doc: AnnotatedDoc,
                 mentions: list[Mention],
                 keywords: set[str] | None = None) -> DocumentMentions:
        return cls(article_id=article.id, published_at=article.published_at,
                   n_sentences=doc.n_sentences, n_paragraphs=doc.n_paragraphs,
                   mentions=list(mentions), keywords=set(keywords or ()))


@dataclass
class CoocRecord:
    a: str
    b: str
    window: WindowLevel
    bucket: str
    count: int
    keywords: set[str] = field(default_factory=set)
    example_refs: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.a >= self.b:
            raise ValueError("pair must satisfy a < b, got (%r, %r)"
                             % (self.a, self.b))
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def to_json_obj(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "window": self.window.value,
            "bucket": self.bucket,
            "count": self.count,
            "keywords": sorted(self.keywords),
            "examples": [[article_id, idx] for article_id, idx in self.example_refs],
        }


def record_from_json_obj(obj: dict) -> CoocRecord:
    return CoocRecord(
        a=obj["a"],
        b=obj["b"],
        window=WindowLevel(obj["window"]),
        bucket=obj["bucket"],
        count=obj["count"],
        keywords=set(obj.get("keywords", [])),
        example_refs=[(ref[0], ref[1]) for ref in obj.get("examples", [])],
    )


def _window_sets(bundle: DocumentMentions,
                 level: WindowLevel) -> dict[int, set[str]]:
    """Distinct canonical ids per window unit, validating window indices."""
    sets: dict[int, set[str]] = {}
    for mention in bundle.mentions:
        if level is WindowLevel.SENTENCE:
            idx, bound = mention.sentence_index, bundle.n_sentences
        elif level is WindowLevel.PARAGRAPH:
            idx, bound = mention.paragraph_index, bundle.n_paragraphs
        else:
            idx, bound = 0, 1
        if idx < 0 or idx >= bound:
            raise CorpusError(
                "mention %r in %s references %s window %d outside [0, %d)"
                % (mention.surface, bundle.article_id, level.value, idx, bound))
        sets.setdefault(idx, set()).add(mention.canonical_id)
    return sets


class PairCounter:
    """Mergeable co-occurrence counter for one window level and bucketing."""

    def __init__(self, window: WindowLevel,
                 granularity: Granularity = Granularity.YEAR,
                 example_cap: int = DEFAULT_EXAMPLE_CAP):
        self.window = window
        self.granularity = granularity
        self.example_cap = example_cap
        # (a, b, bucket) -> [count, keywords, example refs]
        self._cells: dict[tuple[str, str, str], list] = {}

    def add_document(self, bundle: DocumentMentions) -> None:
        bucket = self.granularity.bucket(bundle.published_at)
        for idx, ids in sorted(_window_sets(bundle, self.window).items()):
            for a, b in combinations(sorted(ids), 2):
                cell = self._cells.get((a, b, bucket))
                if cell is None:
                    cell = [0, set(), []]
                    self._cells[(a, b, bucket)] = cell
                cell[0] += 1
                cell[1] |= bundle.keywords
                self._note_example(cell, (bundle.article_id, idx))

    def _note_example(self, cell: list, ref: tuple[str, int]) -> None:
        refs = cell[2]
        if ref in refs:
            return
        refs.append(ref)
        refs.sort()
        del refs[self.example_cap:]

    def merge(self, other: PairCounter) -> PairCounter:
        if (other.window, other.granularity) != (self.window, self.granularity):
            raise ValueError("cannot merge counters with different settings")
        for key, cell in other._cells.items():
            mine = self._cells.get(key)
            if mine is None:
                self._cells[key] = [cell[0], set(cell[1]), list(cell[2])]
                continue
            mine[0] += cell[0]
            mine[1] |= cell[1]
            merged = sorted(set(mine[2]) | set(cell[2]))
            mine[2] = merged[:self.example_cap]
        return self

    def records(self) -> list[CoocRecord]:
        out = []
        for (a, b, bucket) in sorted(self._cells,
                                     key=lambda k: (k[0], k[1],
                                                    bucket_sort_key(k[2]))):
            count, keywords, refs = self._cells[(a, b, bucket)]
            out.append(CoocRecord(a=a, b=b, window=self.window, bucket=bucket,
                                  count=count, keywords=set(keywords),
                                  example_refs=list(refs)))
        return out


def count_pairs(bundles: Iterable[DocumentMentions], level: WindowLevel,
                granularity: Granularity = Granularity.YEAR,
                example_cap: int = DEFAULT_EXAMPLE_CAP) -> list[CoocRecord]:
    """Count all pairs over a corpus in one shard."""
    counter = PairCounter(level, granularity, example_cap)
    for bundle in bundles:
        counter.add_document(bundle)
    return counter.records()


@dataclass
class TrendMatrix:
    entities: list[str]
    buckets: list[str]
    cells: np.ndarray

    @property
    def totals(self) -> list[int]:
        if not self.entities:
            return []
        return [int(x) for x in self.cells.sum(axis=1)]

    def to_json_obj(self) -> dict:
        return {
            "entities": self.entities,
            "buckets": self.buckets,
            "cells": [[int(c) for c in row] for row in self.cells],
            "totals": self.totals,
        }

    @classmethod
    def from_counts(cls, counts: Mapping[tuple[str, str], int]) -> TrendMatrix:
        """Build from (entity, bucket) -> count, ranked and bucket-ordered."""
        entities = sorted({entity for entity, _ in counts})
        buckets = sorted({bucket for _, bucket in counts}, key=bucket_sort_key)
        cells = np.zeros((len(entities), len(buckets)), dtype=np.int64)
        entity_pos = {e: i for i, e in enumerate(entities)}
        bucket_pos = {b: j for j, b in enumerate(buckets)}
        for (entity, bucket), count in counts.items():
            cells[entity_pos[entity], bucket_pos[bucket]] += count
        order = sorted(range(len(entities)),
                       key=lambda i: (-int(cells[i].sum()), entities[i]))
        return cls(entities=[entities[i] for i in order],
                   buckets=buckets, cells=cells[order])


class TrendMode(str, Enum):
    PAIR_WITH = "PAIR_WITH"
    ENTITY_FREQ = "ENTITY_FREQ"


def _bucket_in_range(bucket: str,
                     bucket_range: tuple[str | None, str | None] | None) -> bool:
    if bucket_range is None:
        return True
    if bucket == UNKNOWN_BUCKET:
        return False
    lo, hi = bucket_range
    if lo is not None and bucket < lo:
        return False
    if hi is not None and bucket > hi:
        return False
    return True


def _type_allows(entity: str, entity_type: EntityType | None,
                 types: Mapping[str, EntityType] | None) -> bool:
    if entity_type is None:
        return True
    if types is None:
        raise ValueError("entity_type filter requires an id -> type mapping")
    return types.get(entity) == entity_type


def pair_trend_matrix(records: Iterable[CoocRecord], target: str,
                      entity_type: EntityType | None = None,
                      types: Mapping[str, EntityType] | None = None,
                      bucket_range: tuple[str | None, str | None] | None = None,
                      ) -> TrendMatrix:
    """Partners-of-target matrix: one row per co-occurring entity."""
    counts: dict[tuple[str, str], int] = {}
    seen_target = False
    for record in records:
        if target == record.a:
            partner = record.b
        elif target == record.b:
            partner = record.a
        else:
            continue
        seen_target = True
        if not _bucket_in_range(record.bucket, bucket_range):
            continue
        if not _type_allows(partner, entity_type, types):
            continue
        key = (partner, record.bucket)
        counts[key] = counts.get(key, 0) + record.count
    if not seen_target:
        logger.warning("target %r appears in no co-occurrence record", target)
    return TrendMatrix.from_counts(counts)


def entity_freq_matrix(bundles: Iterable[DocumentMentions], level: WindowLevel,
                       granularity: Granularity = Granularity.YEAR,
                       entity_type: EntityType | None = None,
                       types: Mapping[str, EntityType] | None = None,
                       bucket_range: tuple[str | None, str | None] | None = None,
                       ) -> TrendMatrix:
    """Entity-frequency matrix: window units containing each entity."""
    counts: dict[tuple[str, str], int] = {}
    for bundle in bundles:
        bucket = granularity.bucket(bundle.published_at)
        if not _bucket_in_range(bucket, bucket_range):
            continue
        for _, ids in _window_sets(bundle, level).items():
            for entity in ids:
                if not _type_allows(entity, entity_type, types):
                    continue
                key = (entity, bucket)
                counts[key] = counts.get(key, 0) + 1
    return TrendMatrix.from_counts(counts)


def trend_matrix(mode: TrendMode, *,
                 records: Iterable[CoocRecord] | None = None,
                 bundles: Iterable[DocumentMentions] | None = None,
                 target: str | None = None,
                 level: WindowLevel = WindowLevel.SENTENCE,
                 granularity: Granularity = Granularity.YEAR,
                 entity_type: EntityType | None = None,
                 types: Mapping[str, EntityType] | None = None,
                 bucket_range: tuple[str | None, str | None] | None = None,
                 ) -> TrendMatrix:
    if mode is TrendMode.PAIR_WITH:
        if records is None or target is None:
            raise ValueError("PAIR_WITH needs records and a target")
        return pair_trend_matrix(records, target, entity_type, types, bucket_range)
    if bundles is None:
        raise ValueError("ENTITY_FREQ needs document bundles")
    return entity_freq_matrix(bundles, level, granularity, entity_type, types,
                              bucket_range)


def rank_rows(matrix: TrendMatrix, k: int | None = None) -> list[tuple[str, int]]:
    """Top-k rows by total; the matrix rows are already ranked."""
    ranked = list(zip(matrix.entities, matrix.totals))
    if k is None:
        return ranked
    return ranked[:max(k, 0)]


@dataclass
class AssociationRow:
    partner: str
    buckets: dict[str, int]
    total: int
    keywords: list[str]

    def to_json_obj(self) -> dict:
        return {"partner": self.partner, "buckets": self.buckets,
                "total": self.total, "keywords": self.keywords}


def associations_for(target: str, records: Iterable[CoocRecord],
                     entity_type: EntityType | None = None,
                     types: Mapping[str, EntityType] | None = None,
                     window: WindowLevel | None = None,
                     bucket_range: tuple[str | None, str | None] | None = None,
                     min_count: int = 1) -> list[AssociationRow]:
    """Ranked partners of a target entity with per-bucket counts."""
    per_partner: dict[str, dict[str, int]] = {}
    keywords: dict[str, set[str]] = {}
    for record in records:
        if window is not None and record.window is not window:
            continue
        if target == record.a:
            partner = record.b
        elif target == record.b:
            partner = record.a
        else:
            continue
        if not _bucket_in_range(record.bucket, bucket_range):
            continue
        if not _type_allows(partner, entity_type, types):
            continue
        buckets = per_partner.setdefault(partner, {})
        buckets[record.bucket] = buckets.get(record.bucket, 0) + record.count
        keywords.setdefault(partner, set()).update(record.keywords)
    rows = []
    for partner, buckets in per_partner.items():
        total = sum(buckets.values())
        if total < min_count:
            continue
        ordered = {b: buckets[b] for b in sorted(buckets, key=bucket_sort_key)}
        rows.append(AssociationRow(partner=partner, buckets=ordered, total=total,
                                   keywords=sorted(keywords[partner])))
    rows.sort(key=lambda r: (-r.total, r.partner))
    return rows

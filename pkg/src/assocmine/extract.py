"""Entity extraction: gazetteer, product-pattern, and event-trigger extractors.

Each extractor turns an annotated document into Mentions; merge_mentions
reconciles overlaps between extractors. Canonicalization maps surface
forms to stable entity ids, via an alias registry with an identity
fallback.
"""

from __future__ import annotations

import json
import logging
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

from .corpus import AnnotatedDoc, PosHint, token_norms
from .errors import RegistryError
from .filter import PhraseMatcher, TokenMatch

logger = logging.getLogger(__name__)

PATTERN_MODIFIER_CAP = 4
GAZETTEER_CONFIDENCE = 1.0
PATTERN_CONFIDENCE = 0.8
EVENT_CONFIDENCE = 0.6


class EntityType(str, Enum):
    ORG = "ORG"
    PRODUCT = "PRODUCT"
    RISK = "RISK"
    EVENT = "EVENT"
    PERSON = "PERSON"
    LOC = "LOC"
    OTHER = "OTHER"


class ExtractorId(str, Enum):
    GAZETTEER = "GAZETTEER"
    PATTERN = "PATTERN"
    EXTERNAL = "EXTERNAL"
    EVENT = "EVENT"


class EventType(str, Enum):
    BANKRUPTCY = "BANKRUPTCY"
    EMPLOYMENT = "EMPLOYMENT"
    CORPORATE_ACQUISITION = "CORPORATE_ACQUISITION"
    INVESTMENT_GENERAL = "INVESTMENT_GENERAL"
    CORPORATE_MERGER = "CORPORATE_MERGER"
    IPO = "IPO"


def normalize_surface(surface: str) -> str:
    """Casefold and collapse whitespace — the identity-fallback id rule."""
    return " ".join(surface.casefold().split())


@dataclass
class EntityRecord:
    canonical_id: str
    canonical_name: str
    entity_type: EntityType
    aliases: list[str] = field(default_factory=list)
    uri: str | None = None

    def __post_init__(self):
        if not self.canonical_id:
            raise RegistryError("entity record with empty canonical_id")
        if self.canonical_name and self.canonical_name not in self.aliases:
            self.aliases = [self.canonical_name] + list(self.aliases)
        if not self.aliases:
            raise RegistryError(
                "entity record %r has no usable aliases" % self.canonical_id)


class Registry:
    """Canonical entity catalogue with alias and URI lookup."""

    def __init__(self, records: list[EntityRecord] | None = None):
        self._records: dict[str, EntityRecord] = {}
        self._alias_to_id: dict[str, str] = {}
        self._uri_to_id: dict[str, str] = {}
        self._lock = threading.Lock()
        for record in records or []:
            self.add(record)

    def add(self, record: EntityRecord) -> None:
        if record.canonical_id in self._records:
            raise RegistryError("duplicate canonical_id %r" % record.canonical_id)
        for alias in record.aliases:
            key = normalize_surface(alias)
            if not key:
                raise RegistryError(
                    "empty alias on record %r" % record.canonical_id)
            owner = self._alias_to_id.get(key)
            if owner is not None and owner != record.canonical_id:
                raise RegistryError(
                    "alias %r maps to both %r and %r" % (alias, owner,
                                                         record.canonical_id))
        if record.uri is not None:
            owner = self._uri_to_id.get(record.uri)
            if owner is not None and owner != record.canonical_id:
                raise RegistryError(
                    "uri %r shared by %r and %r" % (record.uri, owner,
                                                    record.canonical_id))
        self._records[record.canonical_id] = record
        for alias in record.aliases:
            self._alias_to_id[normalize_surface(alias)] = record.canonical_id
        if record.uri is not None:
            self._uri_to_id[record.uri] = record.canonical_id

    def __len__(self) -> int:
        return len(self._records)

    def record(self, canonical_id: str) -> EntityRecord | None:
        return self._records.get(canonical_id)

    def records(self) -> list[EntityRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def lookup_alias(self, surface: str) -> str | None:
        return self._alias_to_id.get(normalize_surface(surface))

    def lookup_uri(self, uri: str) -> str | None:
        return self._uri_to_id.get(uri)

    def alias_phrases(self) -> dict[str, tuple[str, EntityType]]:
        """Normalized alias key -> (canonical_id, entity_type) for the matcher."""
        table: dict[str, tuple[str, EntityType]] = {}
        for record in self._records.values():
            for alias in record.aliases:
                key = " ".join(token_norms(alias))
                if not key:
                    logger.warning("alias %r of %r has no tokens; ignored",
                                   alias, record.canonical_id)
                    continue
                held = table.get(key)
                if held is not None and held[0] != record.canonical_id:
                    raise RegistryError(
                        "alias %r maps to both %r and %r" % (alias, held[0],
                                                             record.canonical_id))
                table[key] = (record.canonical_id, record.entity_type)
        return table

    def ensure_external(self, uri: str, surface: str,
                        entity_type: EntityType = EntityType.OTHER) -> str:
        """Canonical id for an annotator URI, creating the row on first sight.

        The row is keyed by the URI itself. The displayed name is the
        lexicographically smallest surface seen, so concurrent extraction
        order cannot change it.
        """
        with self._lock:
            existing = self._uri_to_id.get(uri)
            if existing is not None:
                record = self._records[existing]
                if surface not in record.aliases:
                    record.aliases = sorted(set(record.aliases) | {surface})
                if surface < record.canonical_name:
                    record.canonical_name = surface
                return existing
            record = EntityRecord(canonical_id=uri, canonical_name=surface,
                                  entity_type=entity_type, aliases=[surface],
                                  uri=uri)
            self._records[uri] = record
            self._uri_to_id[uri] = uri
            return uri


def load_registry(path: str) -> Registry:
    """Read a registry from JSONL, one entity record per line."""
    registry = Registry()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                record = EntityRecord(
                    canonical_id=obj["canonical_id"],
                    canonical_name=obj.get("canonical_name", obj["canonical_id"]),
                    entity_type=EntityType(obj.get("entity_type", "OTHER")),
                    aliases=list(obj.get("aliases", [])),
                    uri=obj.get("uri"),
                )
            except RegistryError:
                raise
            except (KeyError, ValueError, TypeError) as exc:
                raise RegistryError(
                    "%s line %d: bad entity record (%s)" % (path, lineno, exc))
            registry.add(record)
    return registry


@dataclass
class Mention:
    article_id: str
    start: int
    end: int
    surface: str
    canonical_id: str
    entity_type: EntityType
    extractor: ExtractorId
    confidence: float
    sentence_index: int
    paragraph_index: int

    @property
    def length(self) -> int:
        return self.end - self.start

    def to_json_obj(self) -> dict:
        return {
            "article_id": self.article_id,
            "start": self.start,
            "end": self.end,
            "surface": self.surface,
            "canonical_id": self.canonical_id,
            "entity_type": self.entity_type.value,
            "extractor": self.extractor.value,
            "confidence": self.confidence,
            "sentence_index": self.sentence_index,
            "paragraph_index": self.paragraph_index,
        }


def mention_from_json_obj(obj: dict) -> Mention:
    return Mention(
        article_id=obj["article_id"],
        start=obj["start"],
        end=obj["end"],
        surface=obj["surface"],
        canonical_id=obj["canonical_id"],
        entity_type=EntityType(obj["entity_type"]),
        extractor=ExtractorId(obj["extractor"]),
        confidence=obj["confidence"],
        sentence_index=obj["sentence_index"],
        paragraph_index=obj["paragraph_index"],
    )


def locate_span(doc: AnnotatedDoc, start: int, end: int) -> tuple[int, int] | None:
    """(sentence_index, paragraph_index) of the sentence containing a span.

    None when the span crosses sentence boundaries or falls outside every
    sentence — callers drop such mentions with a warning.
    """
    starts = [s.start for s in doc.sentences]
    idx = bisect_right(starts, start) - 1
    if idx < 0:
        return None
    sentence = doc.sentences[idx]
    if start >= sentence.start and end <= sentence.end:
        return idx, sentence.paragraph_index
    return None


def _token_run_mention(doc: AnnotatedDoc, start_tok: int, end_tok: int,
                       canonical_id: str, entity_type: EntityType,
                       extractor: ExtractorId, confidence: float) -> Mention | None:
    first = doc.tokens[start_tok]
    last = doc.tokens[end_tok - 1]
    if first.sentence_index != last.sentence_index:
        logger.warning("dropping %s mention crossing sentences in %s @%d",
                       extractor.value, doc.article_id, first.start)
        return None
    sentence = doc.sentences[first.sentence_index]
    return Mention(
        article_id=doc.article_id,
        start=first.start,
        end=last.end,
        surface=doc.text_at(first.start, last.end),
        canonical_id=canonical_id,
        entity_type=entity_type,
        extractor=extractor,
        confidence=confidence,
        sentence_index=first.sentence_index,
        paragraph_index=sentence.paragraph_index,
    )


class GazetteerExtractor:
    """Dictionary extraction: alias phrase matching, longest match wins."""

    def __init__(self, registry: Registry):
        self.registry = registry
        table = registry.alias_phrases()
        if not table:
            raise RegistryError("registry has no matchable aliases")
        self._keys = sorted(table)
        self._targets = [table[k] for k in self._keys]
        self._matcher = PhraseMatcher([tuple(k.split(" ")) for k in self._keys])

    def extract(self, doc: AnnotatedDoc) -> list[Mention]:
        norms = [t.norm for t in doc.tokens]
        raw = self._matcher.find_all(norms)
        raw.sort(key=lambda m: (-(m.end - m.start), m.start, m.phrase_index))
        taken: list[TokenMatch] = []
        covered = [False] * len(norms)
        for match in raw:
            if any(covered[i] for i in range(match.start, match.end)):
                continue
            taken.append(match)
            for i in range(match.start, match.end):
                covered[i] = True
        mentions = []
        for match in taken:
            canonical_id, entity_type = self._targets[match.phrase_index]
            mention = _token_run_mention(doc, match.start, match.end,
                                         canonical_id, entity_type,
                                         ExtractorId.GAZETTEER,
                                         GAZETTEER_CONFIDENCE)
            if mention is not None:
                mentions.append(mention)
        mentions.sort(key=lambda m: (m.start, m.end))
        return mentions


def gazetteer_extract(doc: AnnotatedDoc, registry: Registry) -> list[Mention]:
    return GazetteerExtractor(registry).extract(doc)


@dataclass
class ProductCategory:
    name: str
    triggers: list[str]

    def __post_init__(self):
        if not self.triggers:
            raise ValueError("category %r has no triggers" % self.name)


def load_categories(path: str) -> list[ProductCategory]:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if not isinstance(data, list) or not data:
        raise ValueError("%s: expected a non-empty list of categories" % path)
    return [ProductCategory(name=entry["name"], triggers=list(entry["triggers"]))
            for entry in data]


def pattern_extract(doc: AnnotatedDoc,
                    categories: list[ProductCategory]) -> list[Mention]:
    """Product mentions: content-token modifiers followed by a trigger token.

    Within a sentence, a trigger (e.g. "fund", "etf") preceded by one or
    more consecutive content tokens yields a PRODUCT mention covering the
    modifiers plus the trigger; at most 4 modifiers are taken. The id
    normalizes the trigger to its category name, so "bitcoin funds" and
    "bitcoin fund" share an id.
    """
    trigger_map: dict[str, str] = {}
    for category in categories:
        for trigger in category.triggers:
            norm = trigger.casefold()
            held = trigger_map.get(norm)
            if held is not None and held != category.name:
                logger.warning("trigger %r in categories %r and %r; keeping %r",
                               trigger, held, category.name, held)
                continue
            trigger_map[norm] = category.name

    mentions = []
    for i, token in enumerate(doc.tokens):
        category_name = trigger_map.get(token.norm)
        if category_name is None:
            continue
        j = i
        while (j > 0
               and i - j < PATTERN_MODIFIER_CAP
               and doc.tokens[j - 1].pos_hint == PosHint.CONTENT
               and doc.tokens[j - 1].sentence_index == token.sentence_index):
            j -= 1
        if j == i:
            continue
        modifiers = [doc.tokens[k].norm for k in range(j, i)]
        canonical_id = " ".join(modifiers + [category_name.casefold()])
        mention = _token_run_mention(doc, j, i + 1, canonical_id,
                                     EntityType.PRODUCT, ExtractorId.PATTERN,
                                     PATTERN_CONFIDENCE)
        if mention is not None:
            mentions.append(mention)
    mentions.sort(key=lambda m: (m.start, m.end))
    return mentions


DEFAULT_EVENT_TRIGGERS: dict[str, str] = {
    "bankruptcy": "BANKRUPTCY",
    "bankrupt": "BANKRUPTCY",
    "chapter 11": "BANKRUPTCY",
    "insolvency": "BANKRUPTCY",
    "liquidation": "BANKRUPTCY",
    "hired": "EMPLOYMENT",
    "hires": "EMPLOYMENT",
    "hiring": "EMPLOYMENT",
    "layoff": "EMPLOYMENT",
    "layoffs": "EMPLOYMENT",
    "laid off": "EMPLOYMENT",
    "resigned": "EMPLOYMENT",
    "resignation": "EMPLOYMENT",
    "appointed": "EMPLOYMENT",
    "departure": "EMPLOYMENT",
    "departures": "EMPLOYMENT",
    "steps down": "EMPLOYMENT",
    "acquired": "CORPORATE_ACQUISITION",
    "acquires": "CORPORATE_ACQUISITION",
    "acquisition": "CORPORATE_ACQUISITION",
    "takeover": "CORPORATE_ACQUISITION",
    "buyout": "CORPORATE_ACQUISITION",
    "invested": "INVESTMENT_GENERAL",
    "invests": "INVESTMENT_GENERAL",
    "funding round": "INVESTMENT_GENERAL",
    "investment round": "INVESTMENT_GENERAL",
    "merger": "CORPORATE_MERGER",
    "merged": "CORPORATE_MERGER",
    "merges": "CORPORATE_MERGER",
    "ipo": "IPO",
    "initial public offering": "IPO",
    "went public": "IPO",
    "goes public": "IPO",
}


class EventLexicon:
    """Trigger phrases mapped to the fixed financial event types."""

    def __init__(self, triggers: dict[str, str | EventType]):
        if not triggers:
            raise ValueError("event lexicon is empty")
        self.triggers: dict[str, EventType] = {}
        for phrase, event in triggers.items():
            key = " ".join(token_norms(phrase))
            if not key:
                raise ValueError("event trigger %r has no tokens" % phrase)
            event_type = EventType(event)
            held = self.triggers.get(key)
            if held is not None and held != event_type:
                raise ValueError("trigger %r maps to both %s and %s"
                                 % (phrase, held.value, event_type.value))
            self.triggers[key] = event_type
        self._keys = sorted(self.triggers)
        self._matcher = PhraseMatcher([tuple(k.split(" ")) for k in self._keys])

    @classmethod
    def default(cls) -> EventLexicon:
        return cls(DEFAULT_EVENT_TRIGGERS)

    @classmethod
    def from_json_file(cls, path: str) -> EventLexicon:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        if not isinstance(data, dict):
            raise ValueError("%s: expected an object of trigger -> event type"
                             % path)
        return cls(data)

    def find(self, norms: list[str]) -> list[tuple[TokenMatch, EventType]]:
        return [(m, self.triggers[self._keys[m.phrase_index]])
                for m in self._matcher.find_all(norms)]


def event_tag(doc: AnnotatedDoc, lexicon: EventLexicon) -> list[Mention]:
    """Tag event-trigger phrases; the event type is the mention's id."""
    norms = [t.norm for t in doc.tokens]
    mentions = []
    for match, event_type in lexicon.find(norms):
        mention = _token_run_mention(doc, match.start, match.end,
                                     event_type.value, EntityType.EVENT,
                                     ExtractorId.EVENT, EVENT_CONFIDENCE)
        if mention is not None:
            mentions.append(mention)
    mentions.sort(key=lambda m: (m.start, m.end, m.canonical_id))
    return mentions


_PRIORITY = {ExtractorId.GAZETTEER: 0, ExtractorId.EXTERNAL: 1,
             ExtractorId.PATTERN: 2}


def merge_mentions(per_extractor: list[list[Mention]]) -> list[Mention]:
    """Reconcile overlapping mentions from several extractors.

    Non-event mentions compete: gazetteer beats external beats pattern;
    within a priority the longer span wins, then the lower start. Event
    mentions never conflict with anything and always survive. The result
    is independent of the order extractors ran in.
    """
    pooled = [m for mentions in per_extractor for m in mentions]
    events = [m for m in pooled if m.extractor == ExtractorId.EVENT]
    rivals = [m for m in pooled if m.extractor != ExtractorId.EVENT]
    rivals.sort(key=lambda m: (_PRIORITY[m.extractor], -m.length, m.start,
                               m.canonical_id, -m.confidence))
    kept: list[Mention] = []
    for mention in rivals:
        if all(mention.end <= other.start or mention.start >= other.end
               for other in kept):
            kept.append(mention)
    seen = set()
    for mention in events:
        key = (mention.start, mention.end, mention.canonical_id)
        if key not in seen:
            seen.add(key)
            kept.append(mention)
    kept.sort(key=lambda m: (m.start, m.end, m.extractor.value, m.canonical_id))
    return kept


def canonicalize(surface: str, registry: Registry | None) -> str:
    """Alias lookup with identity fallback on the normalized surface."""
    if registry is not None:
        found = registry.lookup_alias(surface)
        if found is not None:
            return found
    return normalize_surface(surface)

"""Client for an external entity-annotation HTTP service.

The server receives the document text and a confidence parameter as a
form-encoded POST and answers with a JSON object whose ``Resources``
array carries ``@URI``, ``@surfaceForm``, ``@offset`` and
``@similarityScore`` per spotted entity. Spotting, candidate selection,
disambiguation and filtering all happen server-side; this client turns
the response into Mentions and keys canonical ids by URI.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field

import httpx

from .corpus import AnnotatedDoc, _char_to_byte
from .extract import (EntityType, ExtractorId, Mention, Registry, locate_span)

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE = 0.5
DEFAULT_TIMEOUT = 10.0
DEFAULT_MAX_RETRIES = 2
DEFAULT_MAX_CONCURRENCY = 4


@dataclass
class AnnotatorConfig:
    url: str
    confidence: float = DEFAULT_CONFIDENCE
    timeout: float = DEFAULT_TIMEOUT
    max_retries: int = DEFAULT_MAX_RETRIES
    max_concurrency: int = DEFAULT_MAX_CONCURRENCY
    type_map: dict[str, str] = field(default_factory=dict)


class ExternalAnnotator:
    """Thread-safe annotator client with bounded retries and concurrency."""

    def __init__(self, config: AnnotatorConfig, registry: Registry,
                 client: httpx.Client | None = None):
        if config.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if config.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.config = config
        self.registry = registry
        self._client = client or httpx.Client(timeout=config.timeout)
        self._gate = threading.Semaphore(config.max_concurrency)

    def close(self) -> None:
        self._client.close()

    def _post(self, text: str) -> dict:
        response = self._client.post(
            self.config.url,
            data={"text": text, "confidence": str(self.config.confidence)},
            headers={"Accept": "application/json"},
        )
        response.raise_for_status()
        return response.json()

    def _request(self, doc: AnnotatedDoc) -> dict | None:
        attempts = 1 + self.config.max_retries
        for attempt in range(1, attempts + 1):
            try:
                with self._gate:
                    return self._post(doc.body)
            except (httpx.HTTPError, json.JSONDecodeError, ValueError) as exc:
                logger.warning("annotator attempt %d/%d failed for %s: %s",
                               attempt, attempts, doc.article_id, exc)
        logger.warning("skipping %s: annotator unreachable after %d attempts",
                       doc.article_id, attempts)
        return None

    def _entity_type(self, uri: str) -> EntityType:
        mapped = self.config.type_map.get(uri)
        if mapped is None:
            # fall back to the longest matching prefix, if any
            best = ""
            for prefix, value in self.config.type_map.items():
                if uri.startswith(prefix) and len(prefix) > len(best):
                    best, mapped = prefix, value
        if mapped is None:
            return EntityType.OTHER
        return EntityType(mapped)

    def annotate(self, doc: AnnotatedDoc) -> list[Mention]:
        """Mentions for one document; empty on empty body or after retries."""
        if not doc.body.strip():
            return []
        payload = self._request(doc)
        if payload is None:
            return []
        resources = payload.get("Resources") or []
        to_byte = _char_to_byte(doc.body)
        mentions = []
        for resource in resources:
            mention = self._resource_mention(doc, resource, to_byte)
            if mention is not None:
                mentions.append(mention)
        mentions.sort(key=lambda m: (m.start, m.end, m.canonical_id))
        return mentions

    def _resource_mention(self, doc: AnnotatedDoc, resource: dict,
                          to_byte) -> Mention | None:
        try:
            uri = str(resource["@URI"])
            surface = str(resource["@surfaceForm"])
            offset = int(resource["@offset"])
            score = float(resource["@similarityScore"])
        except (KeyError, TypeError, ValueError) as exc:
            logger.warning("dropping malformed resource in %s: %s",
                           doc.article_id, exc)
            return None
        if score < self.config.confidence:
            logger.debug("dropping %r in %s: score %s below %s",
                         surface, doc.article_id, score, self.config.confidence)
            return None
        if not surface or offset < 0 or offset + len(surface) > len(doc.body):
            logger.warning("dropping %r in %s: offset %d out of bounds",
                           surface, doc.article_id, offset)
            return None
        if doc.body[offset:offset + len(surface)] != surface:
            logger.warning("dropping %r in %s: text at offset %d differs",
                           surface, doc.article_id, offset)
            return None
        start = to_byte(offset)
        end = to_byte(offset + len(surface))
        located = locate_span(doc, start, end)
        if located is None:
            logger.warning("dropping %r in %s: span crosses sentences",
                           surface, doc.article_id)
            return None
        existing = self.registry.lookup_uri(uri)
        if existing is not None:
            canonical_id = existing
            entity_type = self.registry.record(existing).entity_type
        else:
            entity_type = self._entity_type(uri)
            canonical_id = self.registry.ensure_external(uri, surface, entity_type)
        sentence_index, paragraph_index = located
        return Mention(
            article_id=doc.article_id,
            start=start,
            end=end,
            surface=surface,
            canonical_id=canonical_id,
            entity_type=entity_type,
            extractor=ExtractorId.EXTERNAL,
            confidence=score,
            sentence_index=sentence_index,
            paragraph_index=paragraph_index,
        )


def annotate_external(client: ExternalAnnotator, doc: AnnotatedDoc) -> list[Mention]:
    return client.annotate(doc)

"""Shared fixtures: tiny corpora, registries, and segmentation helpers."""

from __future__ import annotations

from pathlib import Path

import pytest

from assocmine.corpus import Article, segment
from assocmine.embed import HashedTfProvider
from assocmine.extract import EntityRecord, EntityType, Registry

REPO_ROOT = Path(__file__).resolve().parent.parent
DEMO_DIR = REPO_ROOT / "demo"
GOLDEN_DIR = Path(__file__).resolve().parent / "golden"


def make_doc(text: str, article_id: str = "doc"):
    """Segment a bare body string into an annotated document."""
    return segment(Article(id=article_id, body=text))


@pytest.fixture
def provider():
    return HashedTfProvider()


@pytest.fixture
def org_registry():
    """A small organization registry with aliases and one URI."""
    registry = Registry()
    registry.add(EntityRecord(
        canonical_id="fidelity", canonical_name="Fidelity",
        entity_type=EntityType.ORG,
        aliases=["Fidelity Investments"],
        uri="http://dbpedia.org/resource/Fidelity_Investments"))
    registry.add(EntityRecord(
        canonical_id="sec", canonical_name="SEC",
        entity_type=EntityType.ORG,
        aliases=["Securities and Exchange Commission",
                 "U.S. Securities and Exchange Commission"],
        uri="http://dbpedia.org/resource/U.S._Securities_and_Exchange_Commission"))
    registry.add(EntityRecord(
        canonical_id="schwab", canonical_name="Charles Schwab",
        entity_type=EntityType.ORG, aliases=["Schwab"]))
    return registry

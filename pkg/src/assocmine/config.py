"""Pipeline configuration: flat key/value files with dotted keys.

Syntax: one ``section.key = value`` per line; blank lines and lines
starting with ``#`` are ignored. Unknown keys are rejected so typos
fail loudly. Path values resolve relative to the config file.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

logger = logging.getLogger(__name__)

_STR, _INT, _FLOAT, _PATH, _LIST = "str", "int", "float", "path", "list"

# key -> (attribute, kind, default)
KEY_TABLE: dict[str, tuple[str, str, object]] = {
    "corpus.path": ("corpus_path", _PATH, None),
    "output.dir": ("output_dir", _PATH, None),
    "filter.strategy": ("filter_strategy", _STR, "lexical"),
    "filter.query_file": ("filter_query_file", _PATH, None),
    "filter.min_hits": ("filter_min_hits", _INT, 1),
    "filter.threshold": ("filter_threshold", _FLOAT, 0.35),
    "embedding.provider": ("embedding_provider", _STR, "hashed-tf"),
    "embedding.dim": ("embedding_dim", _INT, 256),
    "embedding.url": ("embedding_url", _STR, None),
    "dedup.grid_start": ("dedup_grid_start", _FLOAT, 0.05),
    "dedup.grid_end": ("dedup_grid_end", _FLOAT, 0.95),
    "dedup.grid_step": ("dedup_grid_step", _FLOAT, 0.05),
    "dedup.max_batch": ("dedup_max_batch", _INT, 2000),
    "extract.extractors": ("extract_extractors", _LIST,
                           ("gazetteer", "pattern", "event")),
    "extract.registry": ("extract_registry", _PATH, None),
    "extract.categories": ("extract_categories", _PATH, None),
    "extract.events": ("extract_events", _PATH, None),
    "external.url": ("external_url", _STR, None),
    "external.confidence": ("external_confidence", _FLOAT, 0.5),
    "external.timeout": ("external_timeout", _FLOAT, 10.0),
    "external.max_retries": ("external_max_retries", _INT, 2),
    "external.max_concurrency": ("external_max_concurrency", _INT, 4),
    "external.type_map": ("external_type_map", _PATH, None),
    "associate.level": ("associate_level", _STR, "sentence"),
    "associate.bucket": ("associate_bucket", _STR, "year"),
    "associate.example_cap": ("associate_example_cap", _INT, 5),
    "graph.min_count": ("graph_min_count", _INT, 1),
    "heatmap.target": ("heatmap_target", _STR, None),
    "heatmap.entity_type": ("heatmap_entity_type", _STR, None),
}

_VALID_CHOICES = {
    "filter.strategy": {"lexical", "semantic"},
    "embedding.provider": {"hashed-tf", "http"},
    "associate.level": {"sentence", "paragraph", "article"},
    "associate.bucket": {"year", "month"},
    "heatmap.entity_type": {"ORG", "PRODUCT", "RISK", "EVENT", "PERSON",
                            "LOC", "OTHER"},
}

# config keys whose values feed each stage's fingerprint; path values are
# fingerprinted by file content, so edits to referenced files invalidate
# downstream artifacts even when the path itself is unchanged.
STAGE_KEYS: dict[str, list[str]] = {
    "ingest": ["corpus.path"],
    "filter": ["filter.strategy", "filter.query_file", "filter.min_hits",
               "filter.threshold", "embedding.provider", "embedding.dim",
               "embedding.url"],
    "dedupe": ["dedup.grid_start", "dedup.grid_end", "dedup.grid_step",
               "dedup.max_batch", "embedding.provider", "embedding.dim",
               "embedding.url"],
    "extract": ["extract.extractors", "extract.registry", "extract.categories",
                "extract.events", "external.url", "external.confidence",
                "external.timeout", "external.max_retries",
                "external.max_concurrency", "external.type_map"],
    "associate": ["associate.level", "associate.bucket",
                  "associate.example_cap"],
    "graph": ["graph.min_count", "extract.registry"],
    "heatmap": ["heatmap.target", "heatmap.entity_type", "associate.level",
                "associate.bucket"],
}


@dataclass
class PipelineConfig:
    corpus_path: Path | None = None
    output_dir: Path | None = None
    filter_strategy: str = "lexical"
    filter_query_file: Path | None = None
    filter_min_hits: int = 1
    filter_threshold: float = 0.35
    embedding_provider: str = "hashed-tf"
    embedding_dim: int = 256
    embedding_url: str | None = None
    dedup_grid_start: float = 0.05
    dedup_grid_end: float = 0.95
    dedup_grid_step: float = 0.05
    dedup_max_batch: int = 2000
    extract_extractors: tuple[str, ...] = ("gazetteer", "pattern", "event")
    extract_registry: Path | None = None
    extract_categories: Path | None = None
    extract_events: Path | None = None
    external_url: str | None = None
    external_confidence: float = 0.5
    external_timeout: float = 10.0
    external_max_retries: int = 2
    external_max_concurrency: int = 4
    external_type_map: Path | None = None
    associate_level: str = "sentence"
    associate_bucket: str = "year"
    associate_example_cap: int = 5
    graph_min_count: int = 1
    heatmap_target: str | None = None
    heatmap_entity_type: str | None = None

    def value_for(self, key: str):
        return getattr(self, KEY_TABLE[key][0])

    def validate(self) -> None:
        if self.corpus_path is None:
            raise ConfigError("corpus.path is required")
        if self.output_dir is None:
            raise ConfigError("output.dir is required")
        for key, choices in _VALID_CHOICES.items():
            value = self.value_for(key)
            if value is not None and value not in choices:
                raise ConfigError("%s must be one of %s, got %r"
                                  % (key, sorted(choices), value))
        unknown = [x for x in self.extract_extractors
                   if x not in {"gazetteer", "pattern", "event", "external"}]
        if unknown:
            raise ConfigError("unknown extractors: %s" % ", ".join(unknown))
        for key in KEY_TABLE:
            if KEY_TABLE[key][1] == _PATH and key != "output.dir":
                value = self.value_for(key)
                if value is not None and not Path(value).is_file():
                    raise ConfigError("%s: file not found: %s" % (key, value))

    def fingerprint(self, stage: str) -> str:
        """Content-based fingerprint of the config slice a stage depends on."""
        basis = {}
        for key in STAGE_KEYS[stage]:
            attr, kind, _ = KEY_TABLE[key]
            value = getattr(self, attr)
            if value is None:
                basis[key] = None
            elif kind == _PATH:
                basis[key] = "sha256:" + file_sha256(Path(value))
            elif kind == _LIST:
                basis[key] = list(value)
            else:
                basis[key] = value
        payload = json.dumps(basis, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _coerce(key: str, raw: str, base: Path):
    _, kind, _ = KEY_TABLE[key]
    try:
        if kind == _INT:
            return int(raw)
        if kind == _FLOAT:
            return float(raw)
        if kind == _PATH:
            path = Path(raw)
            return path if path.is_absolute() else (base / path).resolve()
        if kind == _LIST:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError("bad value for %s: %r (%s)" % (key, raw, exc))


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a pipeline config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config file not found: %s" % path)
    base = path.parent.resolve()
    config = PipelineConfig()
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError("%s line %d: expected 'key = value'"
                                  % (path, lineno))
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in KEY_TABLE:
                raise ConfigError("%s line %d: unknown key %r"
                                  % (path, lineno, key))
            if key in seen:
                raise ConfigError("%s line %d: duplicate key %r"
                                  % (path, lineno, key))
            seen.add(key)
            setattr(config, KEY_TABLE[key][0], _coerce(key, raw, base))
    config.validate()
    return config


def apply_overrides(config: PipelineConfig, overrides: Mapping[str, str],
                    base: Path | None = None) -> PipelineConfig:
    """Overlay dotted-key string values on a parsed config and revalidate.

    Relative path values resolve against ``base`` (default: the current
    working directory), mirroring how load_config treats the config dir.
    """
    base = Path.cwd() if base is None else Path(base)
    updated = replace(config)
    for key, raw in overrides.items():
        if key not in KEY_TABLE:
            raise ConfigError("unknown config key %r" % key)
        setattr(updated, KEY_TABLE[key][0], _coerce(key, str(raw), base))
    updated.validate()
    return updated


def config_field_names() -> list[str]:
    return [f.name for f in fields(PipelineConfig)]

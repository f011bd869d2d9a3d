"""Staged pipeline orchestration with artifact freshness tracking.

Stages run in a fixed order; each reads its predecessor's artifact from
the output directory and writes its own, so any stage can be rerun in
isolation. A manifest records content hashes and config fingerprints,
and a stage refuses to consume inputs that are stale with respect to
the current config unless forced.
"""

from __future__ import annotations

import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Callable, Iterable

from . import annotator as annotator_mod
from . import associate as associate_mod
from . import dedup as dedup_mod
from . import extract as extract_mod
from . import filter as filter_mod
from .config import PipelineConfig, file_sha256
from .corpus import Article, read_corpus, segment
from .embed import make_provider
from .errors import ConfigError, StageDependencyError
from .graph import (GraphFormat, build_graph, export_graph, export_heatmap,
                    node_catalog)

logger = logging.getLogger(__name__)

STAGE_ORDER = ["ingest", "filter", "dedupe", "extract", "associate",
               "graph", "heatmap"]
# linear backbone; graph and heatmap both hang off associate
_CHAIN = ["ingest", "filter", "dedupe", "extract", "associate"]

ARTIFACTS = {
    "ingest": "articles.jsonl",
    "filter": "filtered.jsonl",
    "dedupe": "dedup.json",
    "extract": "mentions.jsonl",
    "associate": "pairs.jsonl",
    "graph": "graph.json",
    "heatmap": "heatmap.csv",
}

EXTRA_ARTIFACTS = {"graph": ["graph.graphml", "graph.dot"]}


def chain_for(stage: str) -> list[str]:
    """Upstream stages whose artifacts a stage consumes, oldest first."""
    if stage in ("graph", "heatmap"):
        return list(_CHAIN)
    return _CHAIN[:_CHAIN.index(stage)]


@dataclass
class StageArtifact:
    stage: str
    path: str
    sha256: str
    config_fp: str
    input_sha: str | None

    def to_json_obj(self) -> dict:
        return {"artifact": self.path, "sha256": self.sha256,
                "config": self.config_fp, "input_sha": self.input_sha}


@dataclass
class StageSummary:
    stage: str
    n_in: int
    n_out: int
    seconds: float


def load_manifest(out_dir: Path) -> dict:
    path = out_dir / "manifest.json"
    if not path.is_file():
        return {"stages": {}}
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def save_manifest(out_dir: Path, manifest: dict) -> None:
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_jsonl(path: Path, objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for obj in objs:
            handle.write(json.dumps(obj, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _pmap(fn: Callable, items: list, threads: int) -> list:
    """Order-preserving map, optionally threaded.

    Results come back in input order regardless of completion order, so
    thread count can never change downstream bytes.
    """
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class _Ctx:
    config: PipelineConfig
    out_dir: Path
    threads: int
    force: bool
    manifest: dict


def _artifact_path(ctx: _Ctx, stage: str) -> Path:
    return ctx.out_dir / ARTIFACTS[stage]


def _check_upstream(ctx: _Ctx, stage: str) -> None:
    """Verify every upstream artifact exists and is fresh."""
    stages = ctx.manifest.get("stages", {})
    for upstream in chain_for(stage):
        entry = stages.get(upstream)
        path = _artifact_path(ctx, upstream)
        if entry is None or not path.is_file():
            raise StageDependencyError(
                "stage %r needs the %r artifact; run %r first"
                % (stage, ARTIFACTS[upstream], upstream), stage=upstream)
        if ctx.force:
            continue
        on_disk = file_sha256(path)
        if on_disk != entry["sha256"]:
            raise StageDependencyError(
                "%s was modified after stage %r ran; rerun %r or pass --force"
                % (ARTIFACTS[upstream], upstream, upstream), stage=upstream)
        if entry["config"] != ctx.config.fingerprint(upstream):
            raise StageDependencyError(
                "config for stage %r changed since %s was written; rerun %r "
                "or pass --force" % (upstream, ARTIFACTS[upstream], upstream),
                stage=upstream)
        parent = chain_for(upstream)
        if parent:
            parent_entry = stages.get(parent[-1])
            if parent_entry is None or entry.get("input_sha") != parent_entry["sha256"]:
                raise StageDependencyError(
                    "%s is stale relative to %s; rerun %r or pass --force"
                    % (ARTIFACTS[upstream], ARTIFACTS[parent[-1]], upstream),
                    stage=upstream)


def _record_stage(ctx: _Ctx, stage: str, input_sha: str | None) -> None:
    path = _artifact_path(ctx, stage)
    artifact = StageArtifact(stage=stage, path=ARTIFACTS[stage],
                             sha256=file_sha256(path),
                             config_fp=ctx.config.fingerprint(stage),
                             input_sha=input_sha)
    ctx.manifest.setdefault("stages", {})[stage] = artifact.to_json_obj()
    save_manifest(ctx.out_dir, ctx.manifest)


def load_articles(out_dir: Path) -> list[Article]:
    """Articles from the ingest artifact."""
    rows = read_jsonl(Path(out_dir) / ARTIFACTS["ingest"])
    articles = []
    for row in rows:
        published = row.get("published_at")
        articles.append(Article(
            id=row["id"], source=row.get("source", ""),
            published_at=None if published is None else date.fromisoformat(published),
            title=row.get("title", ""), body=row.get("body", "")))
    return articles


def load_records(out_dir: Path) -> list[associate_mod.CoocRecord]:
    """Pair records from the associate artifact."""
    return [associate_mod.record_from_json_obj(row)
            for row in read_jsonl(Path(out_dir) / ARTIFACTS["associate"])]


def load_mentions(out_dir: Path) -> list[extract_mod.Mention]:
    """Mentions from the extract artifact."""
    return [extract_mod.mention_from_json_obj(row)
            for row in read_jsonl(Path(out_dir) / ARTIFACTS["extract"])]


def _load_articles(ctx: _Ctx) -> list[Article]:
    return load_articles(ctx.out_dir)


def _kept_ids(ctx: _Ctx) -> list[str]:
    return [row["article_id"]
            for row in read_jsonl(_artifact_path(ctx, "filter")) if row["kept"]]


def _representative_articles(ctx: _Ctx) -> list[Article]:
    with open(_artifact_path(ctx, "dedupe"), "r", encoding="utf-8") as handle:
        report = json.load(handle)
    keep = {cluster["representative"] for cluster in report["clusters"]}
    return [a for a in _load_articles(ctx) if a.id in keep]


def _article_keywords(ctx: _Ctx) -> dict[str, set[str]]:
    keywords: dict[str, set[str]] = {}
    for row in read_jsonl(_artifact_path(ctx, "filter")):
        hits = row.get("hits") or {}
        keywords[row["article_id"]] = {p for p, n in hits.items() if n > 0}
    return keywords


def _stage_ingest(ctx: _Ctx) -> tuple[int, int]:
    articles, summary = read_corpus(ctx.config.corpus_path)
    write_jsonl(_artifact_path(ctx, "ingest"),
                (a.to_json_obj() for a in articles))
    return summary.loaded + summary.skipped, summary.loaded


def _stage_filter(ctx: _Ctx) -> tuple[int, int]:
    config = ctx.config
    if config.filter_query_file is None:
        raise ConfigError("filter.query_file is required for the filter stage")
    articles = _load_articles(ctx)
    with open(config.filter_query_file, "r", encoding="utf-8") as handle:
        query_text = handle.read()

    rows = []
    if config.filter_strategy == "lexical":
        phrases = [line.strip() for line in query_text.splitlines()
                   if line.strip() and not line.strip().startswith("#")]
        matcher = filter_mod.compile_phrases(phrases)

        def decide(article: Article) -> dict:
            result, decision = filter_mod.lexical_filter(
                segment(article), matcher, config.filter_min_hits)
            return {"article_id": article.id, "kept": decision.kept,
                    "score": decision.score, "strategy": decision.strategy.value,
                    "hits": {p: h.count for p, h in sorted(result.hits.items())}}

        rows = _pmap(decide, articles, ctx.threads)
    else:
        provider = make_provider(config.embedding_provider, config.embedding_dim,
                                 config.embedding_url)
        query = " ".join(query_text.split())
        query_vec = provider.embed_text(query)

        def decide(article: Article) -> dict:
            score = filter_mod.semantic_score(article, query_vec, provider)
            return {"article_id": article.id,
                    "kept": score >= config.filter_threshold,
                    "score": score,
                    "strategy": filter_mod.Strategy.SEMANTIC.value}

        rows = _pmap(decide, articles, ctx.threads)

    write_jsonl(_artifact_path(ctx, "filter"), rows)
    return len(articles), sum(1 for r in rows if r["kept"])


def _stage_dedupe(ctx: _Ctx) -> tuple[int, int]:
    config = ctx.config
    kept = set(_kept_ids(ctx))
    articles = [a for a in _load_articles(ctx) if a.id in kept]
    provider = make_provider(config.embedding_provider, config.embedding_dim,
                             config.embedding_url)
    grid = dedup_mod.default_grid(config.dedup_grid_start, config.dedup_grid_end,
                                  config.dedup_grid_step)
    report = dedup_mod.dedup_articles(articles, provider, grid,
                                      config.dedup_max_batch)
    path = _artifact_path(ctx, "dedupe")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_json_obj(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return len(articles), len(report.clusters)


def _build_extractors(ctx: _Ctx):
    """Instantiate the configured extractors once per run."""
    config = ctx.config
    extractors: list[Callable] = []
    registry = None
    names = config.extract_extractors
    if "gazetteer" in names or config.extract_registry is not None:
        if config.extract_registry is None:
            raise ConfigError("extract.registry is required for the gazetteer")
        registry = extract_mod.load_registry(str(config.extract_registry))
    if registry is None:
        registry = extract_mod.Registry()
    if "gazetteer" in names:
        gazetteer = extract_mod.GazetteerExtractor(registry)
        extractors.append(gazetteer.extract)
    if "pattern" in names:
        if config.extract_categories is None:
            raise ConfigError("extract.categories is required for the pattern "
                              "extractor")
        categories = extract_mod.load_categories(str(config.extract_categories))
        extractors.append(lambda doc: extract_mod.pattern_extract(doc, categories))
    if "event" in names:
        if config.extract_events is not None:
            lexicon = extract_mod.EventLexicon.from_json_file(
                str(config.extract_events))
        else:
            lexicon = extract_mod.EventLexicon.default()
        extractors.append(lambda doc: extract_mod.event_tag(doc, lexicon))
    client = None
    if "external" in names:
        if config.external_url is None:
            raise ConfigError("external.url is required for the external "
                              "annotator")
        type_map = {}
        if config.external_type_map is not None:
            with open(config.external_type_map, "r", encoding="utf-8") as handle:
                type_map = json.load(handle)
        client = annotator_mod.ExternalAnnotator(
            annotator_mod.AnnotatorConfig(
                url=config.external_url,
                confidence=config.external_confidence,
                timeout=config.external_timeout,
                max_retries=config.external_max_retries,
                max_concurrency=config.external_max_concurrency,
                type_map=type_map),
            registry)
        extractors.append(client.annotate)
    return extractors, registry, client


def _stage_extract(ctx: _Ctx) -> tuple[int, int]:
    articles = _representative_articles(ctx)
    extractors, _, client = _build_extractors(ctx)
    try:
        def extract_one(article: Article) -> list[dict]:
            doc = segment(article)
            merged = extract_mod.merge_mentions([fn(doc) for fn in extractors])
            return [m.to_json_obj() for m in merged]

        per_doc = _pmap(extract_one, articles, ctx.threads)
    finally:
        if client is not None:
            client.close()
    rows = [row for rows in per_doc for row in rows]
    rows.sort(key=lambda r: (r["article_id"], r["start"], r["end"],
                             r["extractor"], r["canonical_id"]))
    write_jsonl(_artifact_path(ctx, "extract"), rows)
    return len(articles), len(rows)


def load_bundles(config: PipelineConfig, out_dir: Path,
                 threads: int = 1) -> list[associate_mod.DocumentMentions]:
    """Per-article counting bundles rebuilt from the stage artifacts."""
    ctx = _Ctx(config=config, out_dir=Path(out_dir), threads=threads,
               force=False, manifest={})
    return _bundles(ctx)


def _bundles(ctx: _Ctx) -> list[associate_mod.DocumentMentions]:
    articles = _representative_articles(ctx)
    keywords = _article_keywords(ctx)
    by_article: dict[str, list] = {}
    for mention in load_mentions(ctx.out_dir):
        by_article.setdefault(mention.article_id, []).append(mention)
    docs = _pmap(segment, articles, ctx.threads)
    bundles = []
    for article, doc in zip(articles, docs):
        bundles.append(associate_mod.DocumentMentions.from_doc(
            article, doc, by_article.get(article.id, []),
            keywords.get(article.id, set())))
    return bundles


def window_level(config: PipelineConfig) -> associate_mod.WindowLevel:
    return associate_mod.WindowLevel(config.associate_level.upper())


def bucket_granularity(config: PipelineConfig) -> associate_mod.Granularity:
    return associate_mod.Granularity(config.associate_bucket.upper())


def _stage_associate(ctx: _Ctx) -> tuple[int, int]:
    config = ctx.config
    bundles = _bundles(ctx)
    records = associate_mod.count_pairs(bundles, window_level(config),
                                        bucket_granularity(config),
                                        config.associate_example_cap)
    write_jsonl(_artifact_path(ctx, "associate"),
                (r.to_json_obj() for r in records))
    n_mentions = sum(len(b.mentions) for b in bundles)
    return n_mentions, len(records)


def _read_records(ctx: _Ctx) -> list[associate_mod.CoocRecord]:
    return load_records(ctx.out_dir)


def _read_mentions(ctx: _Ctx) -> list[extract_mod.Mention]:
    return load_mentions(ctx.out_dir)


def _registry_or_none(ctx: _Ctx) -> extract_mod.Registry | None:
    if ctx.config.extract_registry is None:
        return None
    return extract_mod.load_registry(str(ctx.config.extract_registry))


def _stage_graph(ctx: _Ctx) -> tuple[int, int]:
    config = ctx.config
    records = _read_records(ctx)
    catalog = node_catalog(_read_mentions(ctx), _registry_or_none(ctx))
    meta = {
        "window": window_level(config).value,
        "bucketing": bucket_granularity(config).value,
        "min_count": config.graph_min_count,
        "corpus": file_sha256(_artifact_path(ctx, "ingest")),
    }
    graph = build_graph(records, catalog, config.graph_min_count, meta)
    for fmt, name in ((GraphFormat.JSON, "graph.json"),
                      (GraphFormat.GRAPHML, "graph.graphml"),
                      (GraphFormat.DOT, "graph.dot")):
        with open(ctx.out_dir / name, "wb") as handle:
            handle.write(export_graph(graph, fmt))
    return len(records), graph.n_edges


def _stage_heatmap(ctx: _Ctx) -> tuple[int, int]:
    config = ctx.config
    entity_type = (extract_mod.EntityType(config.heatmap_entity_type)
                   if config.heatmap_entity_type else None)
    types = None
    if entity_type is not None:
        catalog = node_catalog(_read_mentions(ctx), _registry_or_none(ctx))
        types = {cid: info.entity_type for cid, info in catalog.items()}
    if config.heatmap_target:
        records = _read_records(ctx)
        matrix = associate_mod.pair_trend_matrix(
            records, config.heatmap_target, entity_type, types)
        n_in = len(records)
    else:
        bundles = _bundles(ctx)
        matrix = associate_mod.entity_freq_matrix(
            bundles, window_level(config), bucket_granularity(config), entity_type, types)
        n_in = sum(len(b.mentions) for b in bundles)
    with open(_artifact_path(ctx, "heatmap"), "wb") as handle:
        handle.write(export_heatmap(matrix))
    return n_in, len(matrix.entities)


_STAGE_FNS = {
    "ingest": _stage_ingest,
    "filter": _stage_filter,
    "dedupe": _stage_dedupe,
    "extract": _stage_extract,
    "associate": _stage_associate,
    "graph": _stage_graph,
    "heatmap": _stage_heatmap,
}


def _input_sha(ctx: _Ctx, stage: str) -> str | None:
    if stage == "ingest":
        return file_sha256(Path(ctx.config.corpus_path))
    upstream = chain_for(stage)
    if not upstream:
        return None
    return file_sha256(_artifact_path(ctx, upstream[-1]))


def run_pipeline(config: PipelineConfig, stages: list[str] | None = None,
                 threads: int = 1, force: bool = False) -> list[StageSummary]:
    """Run the requested stages in pipeline order.

    Raises ConfigError or StageDependencyError for validation problems;
    anything else that escapes a stage is a runtime failure the caller
    maps to its own exit code.
    """
    config.validate()
    requested = list(STAGE_ORDER) if not stages else list(stages)
    unknown = [s for s in requested if s not in STAGE_ORDER]
    if unknown:
        raise ConfigError("unknown stages: %s" % ", ".join(sorted(unknown)))
    requested = [s for s in STAGE_ORDER if s in requested]

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = _Ctx(config=config, out_dir=out_dir, threads=max(1, threads),
               force=force, manifest=load_manifest(out_dir))

    summaries = []
    for stage in requested:
        _check_upstream(ctx, stage)
        started = time.perf_counter()
        n_in, n_out = _STAGE_FNS[stage](ctx)
        elapsed = time.perf_counter() - started
        _record_stage(ctx, stage, _input_sha(ctx, stage))
        summary = StageSummary(stage=stage, n_in=n_in, n_out=n_out,
                               seconds=elapsed)
        summaries.append(summary)
        print("[assocmine] stage=%s in=%d out=%d time=%.3fs"
              % (stage, n_in, n_out, elapsed), file=sys.stderr)
    return summaries

"""FastAPI endpoints: run stages, query trends, export artifacts.

Validation problems (bad config, missing or stale artifacts) map to
HTTP 400 so clients can distinguish them from genuine runtime failures,
which surface as 500.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import Response

from .. import __version__
from ..associate import (WindowLevel, associations_for, entity_freq_matrix,
                         pair_trend_matrix, rank_rows)
from ..config import PipelineConfig, apply_overrides, load_config
from ..errors import ConfigError, StageDependencyError
from ..extract import EntityType, load_registry
from ..graph import graph_from_json_obj, node_catalog
from ..graph import neighbors as graph_neighbors
from ..pipeline import (ARTIFACTS, bucket_granularity, load_bundles,
                        load_mentions, load_records, run_pipeline,
                        window_level)
from .models import (AssociationRowModel, AssociationsResponse,
                     HealthResponse, NeighborModel, NeighborsResponse,
                     RankResponse, RankRow, RunRequest, RunResponse,
                     StageSummaryModel, TrendResponse)

logger = logging.getLogger(__name__)

app = FastAPI(title="assocmine", version=__version__)

_BUNDLE_STAGES = ["ingest", "filter", "dedupe", "extract"]


def _bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=400, detail=message)


def _load(config_path: str, out_dir: str | None) -> PipelineConfig:
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        raise _bad_request(str(exc))
    if out_dir:
        config.output_dir = Path(out_dir)
    return config


def _artifact(config: PipelineConfig, stage: str) -> Path:
    path = Path(config.output_dir) / ARTIFACTS[stage]
    if not path.is_file():
        raise _bad_request("the %r artifact is missing; run %r first"
                           % (ARTIFACTS[stage], stage))
    return path


def _bucket_range(start: str | None,
                  end: str | None) -> tuple[str | None, str | None] | None:
    if start is None and end is None:
        return None
    return (start, end)


def _entity_type(value: str | None) -> EntityType | None:
    if value is None:
        return None
    try:
        return EntityType(value)
    except ValueError:
        raise _bad_request("unknown entity type %r; expected one of %s"
                           % (value, ", ".join(t.value for t in EntityType)))


def _types_for(config: PipelineConfig) -> dict[str, EntityType]:
    """id -> type mapping for type-filtered queries."""
    _artifact(config, "extract")
    registry = None
    if config.extract_registry is not None:
        registry = load_registry(str(config.extract_registry))
    catalog = node_catalog(load_mentions(Path(config.output_dir)), registry)
    return {cid: info.entity_type for cid, info in catalog.items()}


def _freq_matrix(config: PipelineConfig, entity_type: EntityType | None,
                 bucket_range):
    for stage in _BUNDLE_STAGES:
        _artifact(config, stage)
    types = _types_for(config) if entity_type is not None else None
    bundles = load_bundles(config, Path(config.output_dir))
    return entity_freq_matrix(bundles, window_level(config),
                              bucket_granularity(config), entity_type, types,
                              bucket_range)


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    try:
        config = load_config(request.config)
        if request.overrides:
            base = Path(request.config).resolve().parent
            config = apply_overrides(config, request.overrides, base)
        if request.out_dir:
            config.output_dir = Path(request.out_dir)
        summaries = run_pipeline(config, request.stages, request.threads,
                                 request.force)
    except (ConfigError, StageDependencyError) as exc:
        raise _bad_request(str(exc))
    except Exception as exc:
        logger.exception("pipeline run failed")
        raise HTTPException(status_code=500, detail=str(exc))
    return RunResponse(summaries=[
        StageSummaryModel(stage=s.stage, n_in=s.n_in, n_out=s.n_out,
                          seconds=s.seconds) for s in summaries])


@app.get("/trend", response_model=TrendResponse)
def trend(config: str, out_dir: str | None = None,
          target: str | None = None,
          entity_type: str | None = Query(None, alias="type"),
          bucket_start: str | None = None,
          bucket_end: str | None = None) -> TrendResponse:
    cfg = _load(config, out_dir)
    etype = _entity_type(entity_type)
    bucket_range = _bucket_range(bucket_start, bucket_end)
    if target:
        _artifact(cfg, "associate")
        types = _types_for(cfg) if etype is not None else None
        matrix = pair_trend_matrix(load_records(Path(cfg.output_dir)), target,
                                   etype, types, bucket_range)
    else:
        matrix = _freq_matrix(cfg, etype, bucket_range)
    return TrendResponse(**matrix.to_json_obj())


@app.get("/rank", response_model=RankResponse)
def rank(config: str, out_dir: str | None = None, top: int | None = None,
         entity_type: str | None = Query(None, alias="type"),
         bucket_start: str | None = None,
         bucket_end: str | None = None) -> RankResponse:
    cfg = _load(config, out_dir)
    matrix = _freq_matrix(cfg, _entity_type(entity_type),
                          _bucket_range(bucket_start, bucket_end))
    return RankResponse(rows=[RankRow(entity=entity, total=total)
                              for entity, total in rank_rows(matrix, top)])


@app.get("/associations", response_model=AssociationsResponse)
def associations(config: str, target: str, out_dir: str | None = None,
                 entity_type: str | None = Query(None, alias="type"),
                 window: str | None = None,
                 bucket_start: str | None = None,
                 bucket_end: str | None = None,
                 min_count: int = 1) -> AssociationsResponse:
    cfg = _load(config, out_dir)
    etype = _entity_type(entity_type)
    level = None
    if window is not None:
        try:
            level = WindowLevel(window.upper())
        except ValueError:
            raise _bad_request("unknown window %r; expected one of %s"
                               % (window, ", ".join(w.value.lower()
                                                    for w in WindowLevel)))
    _artifact(cfg, "associate")
    types = _types_for(cfg) if etype is not None else None
    rows = associations_for(target, load_records(Path(cfg.output_dir)), etype,
                            types, level,
                            _bucket_range(bucket_start, bucket_end), min_count)
    return AssociationsResponse(target=target, rows=[
        AssociationRowModel(**row.to_json_obj()) for row in rows])


@app.get("/neighbors", response_model=NeighborsResponse)
def neighbors(config: str, entity: str, out_dir: str | None = None,
              entity_type: str | None = Query(None, alias="type"),
              bucket_start: str | None = None,
              bucket_end: str | None = None,
              min_weight: int = 1) -> NeighborsResponse:
    cfg = _load(config, out_dir)
    path = _artifact(cfg, "graph")
    with open(path, "r", encoding="utf-8") as handle:
        graph = graph_from_json_obj(json.load(handle))
    result = graph_neighbors(graph, entity, _entity_type(entity_type),
                             _bucket_range(bucket_start, bucket_end),
                             min_weight)
    return NeighborsResponse(entity=entity, neighbors=[
        NeighborModel(id=node.canonical_id, label=node.label,
                      entity_type=node.entity_type.value,
                      doc_count=node.doc_count, weight=weight,
                      keywords=keywords)
        for node, weight, keywords in result])


_GRAPH_EXPORTS = {
    "json": ("graph.json", "application/json"),
    "graphml": ("graph.graphml", "application/xml"),
    "dot": ("graph.dot", "text/vnd.graphviz"),
}


@app.get("/export/graph")
def export_graph_file(config: str, out_dir: str | None = None,
                      fmt: str = Query("json", alias="format")) -> Response:
    if fmt not in _GRAPH_EXPORTS:
        raise _bad_request("unknown graph format %r; expected one of %s"
                           % (fmt, ", ".join(sorted(_GRAPH_EXPORTS))))
    cfg = _load(config, out_dir)
    name, media_type = _GRAPH_EXPORTS[fmt]
    path = Path(cfg.output_dir) / name
    if not path.is_file():
        raise _bad_request("the %r artifact is missing; run 'graph' first"
                           % name)
    return Response(content=path.read_bytes(), media_type=media_type)


@app.get("/export/heatmap")
def export_heatmap_file(config: str,
                        out_dir: str | None = None) -> Response:
    cfg = _load(config, out_dir)
    path = _artifact(cfg, "heatmap")
    return Response(content=path.read_bytes(), media_type="text/csv")

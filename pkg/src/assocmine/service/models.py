"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class RunRequest(BaseModel):
    config: str
    threads: int = 1
    force: bool = False
    stages: list[str] | None = None
    overrides: dict[str, str] = Field(default_factory=dict)
    out_dir: str | None = None


class StageSummaryModel(BaseModel):
    stage: str
    n_in: int
    n_out: int
    seconds: float


class RunResponse(BaseModel):
    summaries: list[StageSummaryModel]


class HealthResponse(BaseModel):
    status: str
    version: str


class TrendResponse(BaseModel):
    entities: list[str]
    buckets: list[str]
    cells: list[list[int]]
    totals: list[int]


class RankRow(BaseModel):
    entity: str
    total: int


class RankResponse(BaseModel):
    rows: list[RankRow]


class AssociationRowModel(BaseModel):
    partner: str
    buckets: dict[str, int]
    total: int
    keywords: list[str]


class AssociationsResponse(BaseModel):
    target: str
    rows: list[AssociationRowModel]


class NeighborModel(BaseModel):
    id: str
    label: str
    entity_type: str
    doc_count: int
    weight: int
    keywords: list[str]


class NeighborsResponse(BaseModel):
    entity: str
    neighbors: list[NeighborModel]

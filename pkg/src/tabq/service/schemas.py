"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class QueryBody(BaseModel):
    question: str = Field(min_length=1)
    k: int = Field(default=5, ge=1)
    n: int = Field(default=5, ge=1)
    alpha: float = Field(default=0.5, ge=0.0, le=1.0)
    judge: bool = True
    dedupe: bool = False


class ScoreDetail(BaseModel):
    raw_lex: float
    raw_sem: float
    norm_lex: float
    norm_sem: float
    fused: float


class RankedItem(BaseModel):
    rank: int
    block_id: str
    table_id: str
    doc_type: str
    text: str
    scores: ScoreDetail
    judge_verdict: str


class QueryResponse(BaseModel):
    items: list[RankedItem]
    trace_id: str
    elapsed_s: float
    judge_skipped: bool


class HealthResponse(BaseModel):
    status: str
    corpus_version: int
    block_count: int


class TableInfo(BaseModel):
    table_id: str
    schema_columns: list[str]
    row_count: int
    source_uri: str


class UpsertBody(BaseModel):
    table_id: str = Field(min_length=1)


class CommitResponse(BaseModel):
    table_id: str
    removed_blocks: int
    added_blocks: int
    corpus_version: int

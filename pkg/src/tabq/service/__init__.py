"""HTTP service wrapping the retrieval pipeline.

The service serves queries from a committed index snapshot; table mutations
(upsert/delete) serialize behind the index writer and swap snapshots
atomically, so in-flight queries are never disturbed. If the index manifest
no longer matches the corpus version, queries answer 503 until the index
catches up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from ..config import Config, summarizer_config
from ..errors import StaleIndex, UnknownTable
from ..indexer.store import IndexStore
from ..provider import CompletionBackend, EmbeddingBackend
from ..registry import Corpus
from ..retriever import QueryRequest, Retriever, result_items_to_dicts
from ..summarizer import summarize_corpus
from .schemas import (
    CommitResponse,
    HealthResponse,
    QueryBody,
    QueryResponse,
    TableInfo,
    UpsertBody,
)

logger = logging.getLogger(__name__)


@dataclass
class ServiceState:
    store: IndexStore
    retriever: Retriever
    embedder: EmbeddingBackend
    llm: CompletionBackend
    config: Config
    corpus: Corpus | None = None  # required for mutations and staleness checks


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="tabq", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def invalid_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(ValueError)
    async def invalid_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UnknownTable)
    async def unknown_table(request: Request, exc: UnknownTable):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(StaleIndex)
    async def stale_index(request: Request, exc: StaleIndex):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    def check_fresh() -> None:
        if state.corpus is not None and state.store.is_stale(state.corpus):
            raise StaleIndex(
                f"index built at corpus version {state.store.corpus_version}, "
                f"corpus is at {state.corpus.version}"
            )

    @app.get("/v1/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok",
            corpus_version=state.store.corpus_version,
            block_count=len(state.store.blocks),
        )

    @app.post("/v1/query", response_model=QueryResponse)
    def query(body: QueryBody):
        check_fresh()
        result = state.retriever.query(
            QueryRequest(
                question=body.question,
                k=body.k,
                n=body.n,
                alpha=body.alpha,
                judge_enabled=body.judge,
                dedupe_tables=body.dedupe,
            )
        )
        return QueryResponse(
            items=result_items_to_dicts(result),
            trace_id=result.trace_id,
            elapsed_s=result.elapsed_s,
            judge_skipped=result.judge_skipped,
        )

    @app.get("/v1/tables/{table_id}", response_model=TableInfo)
    def get_table(table_id: str):
        if state.corpus is None:
            raise StaleIndex("service running without a corpus attachment")
        record = state.corpus.table(table_id)
        return TableInfo(
            table_id=record.table_id,
            schema_columns=record.schema,
            row_count=record.row_count,
            source_uri=record.source_uri,
        )

    @app.post("/v1/tables", response_model=CommitResponse)
    def upsert_table(body: UpsertBody):
        if state.corpus is None:
            raise StaleIndex("service running without a corpus attachment")
        state.corpus.table(body.table_id)
        state.corpus.remove_documents(body.table_id)
        summarize_corpus(state.corpus, state.llm, summarizer_config(state.config))
        report = state.store.upsert_table(state.corpus, body.table_id, state.embedder)
        return CommitResponse(
            table_id=report.table_id,
            removed_blocks=report.removed_blocks,
            added_blocks=report.added_blocks,
            corpus_version=report.corpus_version,
        )

    @app.delete("/v1/tables/{table_id}", response_model=CommitResponse)
    def delete_table(table_id: str):
        if state.corpus is None:
            raise StaleIndex("service running without a corpus attachment")
        state.corpus.table(table_id)
        indexed = any(b.table_id == table_id for b in state.store.blocks.values())
        state.corpus.remove_table(table_id)
        removed = 0
        if indexed:
            removed = state.store.remove_table(table_id).removed_blocks
        state.store.sync_version(state.corpus.version)
        return CommitResponse(
            table_id=table_id,
            removed_blocks=removed,
            added_blocks=0,
            corpus_version=state.corpus.version,
        )

    return app

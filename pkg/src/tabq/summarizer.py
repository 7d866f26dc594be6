"""Content summaries: one LLM-narrated schema summary and up to r row
summaries per table.

A table's entire searchable content collapses into at most 1 + r documents
(plus its context passages), which is what keeps index storage bounded no
matter how many rows the table has. Row summaries are pure string assembly,
no LLM involved; schema summaries narrate each column through the completion
backend, batched by the adaptive scheduler.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .provider import AdaptiveBatcher, CompletionBackend, Prompt
from .registry import Corpus, Document, TableRecord, stable_seed

logger = logging.getLogger(__name__)

NARRATION_SYSTEM = (
    "You describe columns of a data table. The full schema is: {schema}. "
    "Describe the named column in one sentence. If you are not sure what the "
    "column means, answer exactly UNKNOWN."
)
DECLINE_TOKEN = "UNKNOWN"


@dataclass
class SummarizerConfig:
    r: int = 5
    seed: int = 42
    separator: str = " | "
    cell_truncate: int = 256
    narration_system: str = NARRATION_SYSTEM
    batch: dict = field(default_factory=lambda: {"min_bs": 1, "max_bs": 32, "grow_after": 3})


def escape_cell(value: str) -> str:
    """Escape the summary separator character so summaries stay parseable."""
    return value.replace("\\", "\\\\").replace("|", "\\|")


def unescape_cell(value: str) -> str:
    out = []
    i = 0
    while i < len(value):
        if value[i] == "\\" and i + 1 < len(value):
            out.append(value[i + 1])
            i += 2
        else:
            out.append(value[i])
            i += 1
    return "".join(out)


def _clip(value: str, limit: int) -> str:
    if len(value) <= limit:
        return value
    return value[:limit] + "…"


def schema_narration_prompts(table: TableRecord, system_template: str) -> list[Prompt]:
    """One prompt per column, each carrying the full schema as context."""
    system = system_template.format(schema=", ".join(table.schema))
    return [
        Prompt.build(system, f"Column: {column}", key=f"narrate:{column}")
        for column in table.schema
    ]


def assemble_schema_summary(
    table: TableRecord, narrations: list[str], separator: str = " | "
) -> Document:
    """Format per-column narrations as ``<column>: <text>`` joined by the
    separator. Declined or empty narrations fall back to the bare column name."""
    parts = []
    for column, narration in zip(table.schema, narrations):
        narration = narration.strip()
        if not narration or narration.upper() == DECLINE_TOKEN:
            logger.info("no narration for %s.%s, using bare name", table.table_id, column)
            parts.append(column)
        else:
            parts.append(f"{column}: {escape_cell(narration)}")
    return Document(
        doc_id=f"{table.table_id}#schema_summary#0",
        table_id=table.table_id,
        doc_type="schema_summary",
        text=separator.join(parts),
    )


def narrate_schema(
    table: TableRecord,
    llm: CompletionBackend,
    config: SummarizerConfig | None = None,
) -> Document:
    """Generate the table's schema summary, one completion per column."""
    config = config or SummarizerConfig()
    prompts = schema_narration_prompts(table, config.narration_system)
    batcher = AdaptiveBatcher(llm, **config.batch)
    narrations = batcher.execute(prompts)
    return assemble_schema_summary(table, narrations, config.separator)


def make_row_summaries(
    corpus: Corpus, table_id: str, r: int, seed: int, config: SummarizerConfig | None = None
) -> list[Document]:
    """``col: value`` concatenations for min(r, row_count) sampled rows."""
    config = config or SummarizerConfig()
    table = corpus.table(table_id)
    rows = corpus.sample_rows(table_id, r, seed)
    docs = []
    for i, row in enumerate(rows):
        cells = [
            f"{col}: {escape_cell(_clip(value, config.cell_truncate))}"
            for col, value in zip(table.schema, row)
        ]
        docs.append(
            Document(
                doc_id=f"{table_id}#row_summary#{i}",
                table_id=table_id,
                doc_type="row_summary",
                text=config.separator.join(cells),
            )
        )
    return docs


def context_documents(corpus: Corpus, table_id: str) -> list[Document]:
    """Context passages pass through as documents without summarization."""
    return [
        Document(
            doc_id=f"{table_id}#context#{i}",
            table_id=table_id,
            doc_type="context",
            text=ctx.text,
        )
        for i, ctx in enumerate(corpus.contexts_for(table_id))
    ]


@dataclass
class SummarizeReport:
    written: int = 0
    skipped: int = 0
    failed: list[tuple[str, str]] = field(default_factory=list)


def summarize_corpus(
    corpus: Corpus,
    llm: CompletionBackend,
    config: SummarizerConfig | None = None,
    force: bool = False,
) -> SummarizeReport:
    """Generate summaries for every table that lacks them.

    Schema-narration prompts for all pending tables are pooled into one
    adaptive-batch run; if the pooled run fails, tables are retried one by
    one so a single bad table cannot block the rest. Idempotent: tables
    already summarized are skipped unless ``force``.
    """
    config = config or SummarizerConfig()
    report = SummarizeReport()
    pending: list[TableRecord] = []
    for table in corpus.tables():
        if not force and corpus.documents_for(table.table_id, "schema_summary"):
            report.skipped += 1
        else:
            pending.append(table)

    narrations = _narrate_pending(pending, llm, config, report)

    with corpus.deferred():
        for table in pending:
            if table.table_id not in narrations:
                continue  # narration failed; any existing summaries survive
            corpus.remove_documents(table.table_id, "schema_summary")
            corpus.remove_documents(table.table_id, "row_summary")
            docs = [assemble_schema_summary(table, narrations[table.table_id], config.separator)]
            seed = stable_seed(config.seed, table.table_id)
            docs.extend(make_row_summaries(corpus, table.table_id, config.r, seed, config))
            corpus.add_documents(docs)
            report.written += len(docs)
        # sync context passthrough documents for every table
        for table in corpus.tables():
            have = {d.doc_id for d in corpus.documents_for(table.table_id, "context")}
            new = [d for d in context_documents(corpus, table.table_id) if d.doc_id not in have]
            if new:
                corpus.add_documents(new)
                report.written += len(new)
    return report


def _narrate_pending(
    pending: list[TableRecord],
    llm: CompletionBackend,
    config: SummarizerConfig,
    report: SummarizeReport,
) -> dict[str, list[str]]:
    prompts: list[Prompt] = []
    spans: list[tuple[str, int, int]] = []
    for table in pending:
        start = len(prompts)
        prompts.extend(schema_narration_prompts(table, config.narration_system))
        spans.append((table.table_id, start, len(prompts)))
    if not prompts:
        return {}
    batcher = AdaptiveBatcher(llm, **config.batch)
    try:
        texts = batcher.execute(prompts)
        return {tid: texts[a:b] for tid, a, b in spans}
    except Exception as exc:  # pooled run failed: isolate per table
        logger.warning("pooled narration failed (%s); retrying per table", exc)
    out: dict[str, list[str]] = {}
    for table in pending:
        try:
            table_prompts = schema_narration_prompts(table, config.narration_system)
            out[table.table_id] = AdaptiveBatcher(llm, **config.batch).execute(table_prompts)
        except Exception as exc:
            report.failed.append((table.table_id, str(exc)))
    return out

"""Content-question generation: SQL to natural language, leak rephrasing,
and cycle-consistency filtering.

A generated question survives only if the LLM can translate it back into SQL
that exactly matches the query it came from; anything else (including a back
translation that fails to parse) is discarded as hallucinated.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from ..errors import BackendError, StillLeaky, TableNameLeak, TabqError
from ..provider import CompletionBackend, Prompt
from ..registry import Corpus, stable_seed
from .sqlgen import SQLQuery, annotate_content_alternatives, gen_sql, parse_sql, sql_exact_match

logger = logging.getLogger(__name__)

SAMPLE_ROWS_IN_PROMPT = 3


@dataclass
class BenchmarkItem:
    question: str
    answer_tables: list[str]
    kind: str  # content | context
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer_tables": list(self.answer_tables),
            "kind": self.kind,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkItem":
        return cls(
            question=data["question"],
            answer_tables=list(data["answer_tables"]),
            kind=data["kind"],
            provenance=dict(data.get("provenance", {})),
        )


def _table_preview(corpus: Corpus, table_id: str, seed: int) -> str:
    table = corpus.table(table_id)
    rows = corpus.sample_rows(table_id, SAMPLE_ROWS_IN_PROMPT, seed)
    lines = ["Schema: " + ", ".join(table.schema)]
    for row in rows:
        lines.append("Row: " + ", ".join(row))
    return "\n".join(lines)


def sql_to_question(
    sql: SQLQuery, corpus: Corpus, llm: CompletionBackend, seed: int = 0
) -> str:
    """Convert a template query into a natural-language question.

    The prompt shows the schema, a few sampled rows, and the rendered SQL.
    A completion naming the table is regenerated once and then rejected.
    """
    rendered = sql.render()
    preview = _table_preview(corpus, sql.table_id, seed)
    system = (
        "Convert the SQL query into a natural language question a person "
        "would ask when looking for a data table. Never mention any table name."
    )
    user = f"{preview}\nSQL: {rendered}\nQuestion:"
    name_re = re.compile(rf"\b{re.escape(sql.table_id)}\b", re.IGNORECASE)
    for attempt, key in enumerate((f"sql2q:{rendered}", f"sql2q-retry:{rendered}")):
        text = llm.complete(Prompt.build(system, user, key=key)).strip()
        if not text:
            raise BackendError("empty completion for question generation")
        if not name_re.search(text):
            return text
        logger.info("question leaked table name (attempt %d): %r", attempt + 1, text)
    raise TableNameLeak(f"question still names table {sql.table_id!r} after retry")


def find_leak(question: str, sources: list[str], leak_len: int) -> str | None:
    """First verbatim overlap of length >= leak_len between the question and
    any source text. Short sources must appear whole; long sources leak when
    any window of leak_len characters appears in the question."""
    for source in sources:
        source = source.strip()
        if len(source) < leak_len:
            continue
        if source in question:
            return source
        for i in range(len(source) - leak_len + 1):
            window = source[i : i + leak_len]
            if window in question:
                return window
    return None


def rephrase_if_leaky(
    question: str,
    sources: list[str],
    llm: CompletionBackend,
    leak_len: int = 20,
    max_attempts: int = 2,
) -> str:
    """Paraphrase away verbatim echoes of source text.

    A question with no long overlap passes through unchanged. Otherwise the
    LLM rewrites it (avoiding exact matches while keeping the meaning) up to
    ``max_attempts`` times; a still-leaky question raises ``StillLeaky`` so
    the caller can drop the item.
    """
    system = (
        "Paraphrase the question by rewording it, avoiding exact matches "
        "with the original phrasing while maintaining original meaning."
    )
    for _ in range(max_attempts):
        if find_leak(question, sources, leak_len) is None:
            return question
        question = llm.complete(
            Prompt.build(system, question, key=f"rephrase:{question}")
        ).strip()
        if not question:
            raise BackendError("empty completion for rephrase")
    leak = find_leak(question, sources, leak_len)
    if leak is not None:
        raise StillLeaky(f"question still echoes source text: {leak!r}")
    return question


def cycle_consistency_check(
    question: str,
    original_sql: SQLQuery,
    corpus: Corpus,
    llm: CompletionBackend,
    seed: int = 0,
) -> bool:
    """Back-translate the question to SQL and require an exact component
    match with the original. The back-translation prompt sees the schema and
    sampled rows but never the original SQL. Unparseable back SQL fails."""
    preview = _table_preview(corpus, original_sql.table_id, seed)
    system = (
        "Translate the question into a SQL query over the table below. "
        "Omit the FROM clause. Reply with SQL only."
    )
    user = f"{preview}\nQuestion: {question}\nSQL:"
    back_text = llm.complete(Prompt.build(system, user, key=f"q2sql:{question}")).strip()
    try:
        back_sql = parse_sql(back_text)
    except TabqError:
        logger.info("back translation did not parse: %r", back_text)
        return False
    return sql_exact_match(back_sql, original_sql)


@dataclass
class GenerationReport:
    items: list[BenchmarkItem] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (provenance, reason)


def generate_content_benchmark(
    corpus: Corpus,
    llm: CompletionBackend,
    count: int,
    seed: int = 7,
    template=None,
    leak_len: int = 20,
) -> GenerationReport:
    """End-to-end content benchmark: template SQL, question generation,
    rephrasing, cycle consistency, alternative-answer annotation. Tables are
    visited round-robin; failures drop the item with a recorded reason."""
    report = GenerationReport()
    tables = [t.table_id for t in corpus.tables() if t.row_count > 0]
    if not tables:
        return report
    for i in range(count):
        table_id = tables[i % len(tables)]
        item_seed = stable_seed(seed, "content", str(i))
        try:
            sql = gen_sql(corpus, table_id, template, item_seed)
            rendered = sql.render()
            question = sql_to_question(sql, corpus, llm, seed=item_seed)
            cell_values = [
                cell for row in corpus.rows(table_id) for cell in row
            ]
            question = rephrase_if_leaky(question, cell_values, llm, leak_len)
            if not cycle_consistency_check(question, sql, corpus, llm, seed=item_seed):
                report.dropped.append((rendered, "cycle inconsistency"))
                continue
            answers = annotate_content_alternatives(sql, corpus)
            report.items.append(
                BenchmarkItem(
                    question=question,
                    answer_tables=answers,
                    kind="content",
                    provenance={"sql": rendered, "table_id": table_id, "seed": item_seed},
                )
            )
        except (TableNameLeak, StillLeaky, BackendError) as exc:
            report.dropped.append((f"{table_id}#{i}", str(exc)))
    return report

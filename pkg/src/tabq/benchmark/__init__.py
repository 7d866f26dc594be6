"""Benchmark generation: content questions via SQL templates, context
questions via datasheet-style elicitation, alternative-answer annotation."""

import json
from pathlib import Path

from .contexts import (
    ContextBenchmarkReport,
    ContextReport,
    annotate_context_alternatives,
    gen_context_benchmark,
    gen_contexts,
    load_elicitation_questions,
)
from .questions import (
    BenchmarkItem,
    GenerationReport,
    cycle_consistency_check,
    find_leak,
    generate_content_benchmark,
    rephrase_if_leaky,
    sql_to_question,
)
from .sqlgen import (
    SQLQuery,
    annotate_content_alternatives,
    gen_sql,
    parse_sql,
    sql_exact_match,
)


def save_items(items: list[BenchmarkItem], path: str | Path) -> None:
    Path(path).write_text("".join(json.dumps(i.to_dict()) + "\n" for i in items))


def load_items(path: str | Path) -> list[BenchmarkItem]:
    return [
        BenchmarkItem.from_dict(json.loads(line))
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]


__all__ = [
    "BenchmarkItem",
    "GenerationReport",
    "ContextReport",
    "ContextBenchmarkReport",
    "SQLQuery",
    "gen_sql",
    "parse_sql",
    "sql_exact_match",
    "sql_to_question",
    "rephrase_if_leaky",
    "find_leak",
    "cycle_consistency_check",
    "annotate_content_alternatives",
    "annotate_context_alternatives",
    "generate_content_benchmark",
    "gen_contexts",
    "gen_context_benchmark",
    "load_elicitation_questions",
    "save_items",
    "load_items",
]

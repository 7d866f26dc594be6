"""Context generation and the context benchmark.

Table contexts are elicited by having the LLM role-play the data creator and
answer a fixed set of 51 dataset-documentation questions (shipped as an
editable asset, one answer becomes one context). The benchmark then samples
contexts stratified by elicitation question, turns each into a search
question, and annotates which other tables' contexts could answer it.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..errors import BackendError, ProviderError, StillLeaky
from ..provider import AdaptiveBatcher, CompletionBackend, Prompt
from ..registry import ContextDocument, Corpus, stable_seed
from ..retriever import parse_verdict
from .questions import BenchmarkItem, rephrase_if_leaky

logger = logging.getLogger(__name__)

ROLE_PLAY_SYSTEM = (
    "You are the creator of the data table below. Answer the documentation "
    "question about your dataset. Be complete: address every part of the "
    "question. Be relevant: include only the information the question asks for."
)

JUDGE_SYSTEM = (
    "You are judging whether a table description can answer a question. "
    "Answer with a single word: yes or no."
)


def load_elicitation_questions(path: str | Path | None = None) -> list[tuple[str, str]]:
    """Read the (section, question) pairs used to elicit table contexts."""
    if path is not None:
        text = Path(path).read_text()
    else:
        text = (
            resources.files("tabq.benchmark") / "assets" / "elicitation_questions.tsv"
        ).read_text()
    questions = []
    for line in text.splitlines():
        if not line.strip():
            continue
        section, question = line.split("\t", 1)
        questions.append((section.strip(), question.strip()))
    return questions


@dataclass
class ContextReport:
    contexts: list[ContextDocument] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)  # (question idx, reason)


def gen_contexts(
    corpus: Corpus,
    table_id: str,
    llm: CompletionBackend,
    questions: list[tuple[str, str]] | None = None,
) -> ContextReport:
    """Role-play one answer per elicitation question and register each
    answer as a generated context tagged with its question index. Empty
    answers are skipped; per-question provider failures are recorded and do
    not block the remaining questions."""
    questions = questions or load_elicitation_questions()
    table = corpus.table(table_id)
    preview = "Schema: " + ", ".join(table.schema)
    rows = corpus.sample_rows(table_id, 3, stable_seed(0, table_id))
    for row in rows:
        preview += "\nRow: " + ", ".join(row)
    prompts = [
        Prompt.build(
            ROLE_PLAY_SYSTEM,
            f"{preview}\nDocumentation question: {question}",
            key=f"context:{table_id}:q{idx}",
        )
        for idx, (_, question) in enumerate(questions)
    ]
    report = ContextReport()
    answers = _run_isolated(prompts, llm, report)
    for idx, answer in answers.items():
        if not answer.strip():
            report.failures.append((idx, "empty answer"))
            continue
        ctx = corpus.register_context(
            table_id, answer.strip(), source="generated", elicitation_index=idx
        )
        report.contexts.append(ctx)
    return report


def _run_isolated(
    prompts: list[Prompt], llm: CompletionBackend, report: ContextReport
) -> dict[int, str]:
    """Batched execution, falling back to per-prompt calls so one failing
    question cannot take down the rest."""
    batcher = AdaptiveBatcher(llm)
    try:
        return dict(enumerate(batcher.execute(prompts)))
    except ProviderError as exc:
        logger.warning("batched context generation failed (%s); isolating", exc)
    answers: dict[int, str] = {}
    for idx, prompt in enumerate(prompts):
        try:
            answers[idx] = llm.complete(prompt)
        except ProviderError as exc:
            report.failures.append((idx, str(exc)))
    return answers


@dataclass
class ContextBenchmarkReport:
    items: list[BenchmarkItem] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    dropped: list[tuple[str, str]] = field(default_factory=list)


def gen_context_benchmark(
    corpus: Corpus,
    llm: CompletionBackend,
    per_question: int = 20,
    seed: int = 7,
    leak_len: int = 20,
) -> ContextBenchmarkReport:
    """Stratified context benchmark: ``per_question`` generated contexts per
    elicitation-question stratum, one search question per sampled context.
    Understocked strata contribute everything they have, with a warning."""
    report = ContextBenchmarkReport()
    strata: dict[int, list[ContextDocument]] = {}
    for ctx in corpus.contexts():
        if ctx.source == "generated" and ctx.elicitation_index is not None:
            strata.setdefault(ctx.elicitation_index, []).append(ctx)
    for idx in sorted(strata):
        members = sorted(strata[idx], key=lambda c: c.context_id)
        if len(members) < per_question:
            report.warnings.append(
                f"stratum {idx} has only {len(members)} contexts (< {per_question})"
            )
            sampled = members
        else:
            rng = random.Random(stable_seed(seed, "stratum", str(idx)))
            sampled = rng.sample(members, per_question)
        for ctx in sampled:
            try:
                question = _context_to_question(ctx, llm)
                question = rephrase_if_leaky(question, [ctx.text], llm, leak_len)
            except (StillLeaky, BackendError) as exc:
                report.dropped.append((ctx.context_id, str(exc)))
                continue
            report.items.append(
                BenchmarkItem(
                    question=question,
                    answer_tables=[ctx.table_id],
                    kind="context",
                    provenance={"context_id": ctx.context_id, "elicitation_index": idx},
                )
            )
    return report


def _context_to_question(ctx: ContextDocument, llm: CompletionBackend) -> str:
    system = (
        "Write a natural language question a person would ask when searching "
        "for a data table whose documentation is given below. Do not name any "
        "table."
    )
    text = llm.complete(
        Prompt.build(system, f"Documentation: {ctx.text}\nQuestion:", key=f"ctx2q:{ctx.context_id}")
    ).strip()
    if not text:
        raise BackendError("empty completion for context question")
    return text


def annotate_context_alternatives(
    item: BenchmarkItem,
    corpus: Corpus,
    llm: CompletionBackend,
    all_strata: bool = True,
) -> list[str]:
    """Ask the judge which other contexts could answer the question and
    append their tables to the answer set (source tables are always kept).
    ``all_strata=False`` restricts the scan to the item's own stratum."""
    source_ctx = item.provenance.get("context_id")
    stratum = item.provenance.get("elicitation_index")
    others = [
        ctx
        for ctx in corpus.contexts()
        if ctx.context_id != source_ctx
        and (all_strata or ctx.elicitation_index == stratum)
    ]
    prompts = [
        Prompt.build(
            JUDGE_SYSTEM,
            f"Question: {item.question}\nDocument: {ctx.text}",
            key=f"altctx:{item.question}:{ctx.context_id}",
        )
        for ctx in others
    ]
    verdicts = AdaptiveBatcher(llm).execute(prompts)
    answers = list(item.answer_tables)
    extra = set()
    for ctx, verdict in zip(others, verdicts):
        if parse_verdict(verdict) == "relevant" and ctx.table_id not in answers:
            extra.add(ctx.table_id)
    return answers + sorted(extra)

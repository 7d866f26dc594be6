"""Hybrid retrieval: lexical and semantic candidate pools fused by weighted
min-max-normalized scores, refined by a binary LLM relevance judge.

Pipeline for a question: pull the top n*k blocks from each index, backfill
whichever raw score is missing so every candidate carries both, min-max
normalize per retriever over the full candidate set, fuse with weight alpha,
then let the judge classify the leading candidates and stably move the ones
it rejects behind the ones it accepts. All ordering ties break on block_id,
so rankings are reproducible.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass

from .errors import ProviderError
from .indexer.store import IndexStore, Snapshot
from .provider import AdaptiveBatcher, CompletionBackend, EmbeddingBackend, Prompt

logger = logging.getLogger(__name__)

JUDGE_SYSTEM = (
    "You are judging search results. Given a question and a document that "
    "describes a data table, decide whether the document is relevant to the "
    "question. Answer with a single word: yes or no."
)

_NEGATIVE_TOKENS = ("irrelevant", "no")
_POSITIVE_TOKENS = ("relevant", "yes")


@dataclass
class QueryRequest:
    question: str
    k: int = 5
    n: int = 5
    alpha: float = 0.5
    judge_enabled: bool = True
    dedupe_tables: bool = False
    judge_pool: int | None = None  # defaults to n*k

    def validate(self) -> None:
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be within [0,1]")


@dataclass
class ScoredCandidate:
    block_id: str
    table_id: str
    doc_type: str
    text: str
    raw_lex: float = 0.0
    raw_sem: float = 0.0
    norm_lex: float = 0.0
    norm_sem: float = 0.0
    fused: float = 0.0
    judge_verdict: str = "not_judged"  # relevant | irrelevant | not_judged
    final_rank: int = -1


@dataclass
class QueryResult:
    items: list[ScoredCandidate]
    trace_id: str
    elapsed_s: float
    judge_skipped: bool = False


def gather_candidates(
    question: str,
    snapshot: Snapshot,
    embedder: EmbeddingBackend,
    k: int,
    n: int,
    ef_search_min: int = 128,
) -> list[ScoredCandidate]:
    """Union of top n*k blocks from each retriever, both raw scores filled.

    The question is embedded exactly once. A block found by only one
    retriever gets its other score from a point evaluation, so the later
    normalization pools are complete.
    """
    if not snapshot.blocks:
        return []
    pool = n * k
    lex_top = snapshot.fulltext.search(question, pool)
    query_vec = embedder.embed([question])[0]
    sem_top = snapshot.vectors.search(query_vec, pool, ef_search=max(ef_search_min, 2 * pool))
    lex_scores = dict(lex_top)
    sem_scores = dict(sem_top)
    candidates = []
    for block_id in sorted(set(lex_scores) | set(sem_scores)):
        block = snapshot.blocks[block_id]
        raw_lex = lex_scores.get(block_id)
        if raw_lex is None:
            raw_lex = snapshot.fulltext.score(question, block_id)
        raw_sem = sem_scores.get(block_id)
        if raw_sem is None:
            raw_sem = snapshot.vectors.score(block_id, query_vec)
        candidates.append(
            ScoredCandidate(
                block_id=block_id,
                table_id=block.table_id,
                doc_type=block.doc_type,
                text=block.text,
                raw_lex=raw_lex,
                raw_sem=raw_sem,
            )
        )
    return candidates


def minmax_normalize(values: list[float]) -> list[float]:
    """Min-max scale to [0,1]; a constant pool maps everything to 1.0."""
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def fuse(candidates: list[ScoredCandidate], alpha: float) -> list[ScoredCandidate]:
    """Normalize both score pools, combine with weight alpha, sort descending.

    fused = alpha * norm_lex + (1 - alpha) * norm_sem, ties on block_id.
    """
    if not candidates:
        return []
    for cand, norm in zip(candidates, minmax_normalize([c.raw_lex for c in candidates])):
        cand.norm_lex = norm
    for cand, norm in zip(candidates, minmax_normalize([c.raw_sem for c in candidates])):
        cand.norm_sem = norm
    for cand in candidates:
        cand.fused = alpha * cand.norm_lex + (1.0 - alpha) * cand.norm_sem
    return sorted(candidates, key=lambda c: (-c.fused, c.block_id))


def parse_verdict(text: str) -> str | None:
    """Map a completion to relevant/irrelevant; None when undecidable."""
    first_line = text.strip().splitlines()[0].lower() if text.strip() else ""
    words = first_line.replace(".", " ").replace(",", " ").split()
    for token in _NEGATIVE_TOKENS:
        if (token == "no" and "no" in words) or (token != "no" and token in first_line):
            return "irrelevant"
    for token in _POSITIVE_TOKENS:
        if (token == "yes" and "yes" in words) or (token != "yes" and token in first_line):
            return "relevant"
    return None


def judge_prompt(question: str, candidate: ScoredCandidate) -> Prompt:
    return Prompt.build(
        JUDGE_SYSTEM,
        f"Question: {question}\nDocument: {candidate.text}",
        key=f"judge:{question}:{candidate.block_id}",
    )


def judge_reorder(
    question: str,
    ranked: list[ScoredCandidate],
    judge: CompletionBackend,
    judge_pool: int,
    batcher_args: dict | None = None,
) -> tuple[list[ScoredCandidate], bool]:
    """Stable partition of the top ``judge_pool`` candidates by LLM verdict.

    Relevant candidates keep their fused order; irrelevant ones follow in
    their own original order; anything beyond the pool keeps its position
    after the judged group. Unparseable verdicts count as relevant (fail
    open, logged). A provider failure skips the reorder entirely and the
    fused order is returned with ``skipped=True``.
    """
    pool = ranked[:judge_pool]
    tail = ranked[judge_pool:]
    if not pool:
        return ranked, False
    prompts = [judge_prompt(question, c) for c in pool]
    batcher = AdaptiveBatcher(judge, **(batcher_args or {}))
    try:
        completions = batcher.execute(prompts)
    except ProviderError as exc:
        logger.warning("judge unavailable (%s); keeping fused order", exc)
        return ranked, True
    for cand, completion in zip(pool, completions):
        verdict = parse_verdict(completion)
        if verdict is None:
            logger.info("unparseable judge verdict %r for %s", completion, cand.block_id)
            verdict = "relevant"
        cand.judge_verdict = verdict
    accepted = [c for c in pool if c.judge_verdict == "relevant"]
    rejected = [c for c in pool if c.judge_verdict == "irrelevant"]
    return accepted + rejected + tail, False


def dedupe_by_table(ranked: list[ScoredCandidate]) -> list[ScoredCandidate]:
    """Keep only each table's best-ranked block."""
    seen: set[str] = set()
    out = []
    for cand in ranked:
        if cand.table_id not in seen:
            seen.add(cand.table_id)
            out.append(cand)
    return out


def result_items_to_dicts(result: QueryResult) -> list[dict]:
    """Wire representation of ranked items, shared by the CLI and the HTTP
    service so both paths emit byte-identical payloads."""
    return [
        {
            "rank": c.final_rank,
            "block_id": c.block_id,
            "table_id": c.table_id,
            "doc_type": c.doc_type,
            "text": c.text,
            "scores": {
                "raw_lex": c.raw_lex,
                "raw_sem": c.raw_sem,
                "norm_lex": c.norm_lex,
                "norm_sem": c.norm_sem,
                "fused": c.fused,
            },
            "judge_verdict": c.judge_verdict,
        }
        for c in result.items
    ]


class Retriever:
    """Query pipeline bound to an index store and provider backends."""

    def __init__(
        self,
        store: IndexStore,
        embedder: EmbeddingBackend,
        judge: CompletionBackend | None = None,
        ef_search_min: int = 128,
        batcher_args: dict | None = None,
    ):
        self.store = store
        self.embedder = embedder
        self.judge = judge
        self.ef_search_min = ef_search_min
        self.batcher_args = batcher_args or {}

    def query(self, request: QueryRequest) -> QueryResult:
        request.validate()
        trace_id = uuid.uuid4().hex[:12]
        started = time.perf_counter()
        snapshot = self.store.snapshot()
        candidates = gather_candidates(
            request.question,
            snapshot,
            self.embedder,
            request.k,
            request.n,
            self.ef_search_min,
        )
        ranked = fuse(candidates, request.alpha)
        judge_skipped = False
        if request.judge_enabled and self.judge is not None and ranked:
            pool = request.judge_pool or request.n * request.k
            ranked, judge_skipped = judge_reorder(
                request.question, ranked, self.judge, pool, self.batcher_args
            )
        if request.dedupe_tables:
            ranked = dedupe_by_table(ranked)
        items = ranked[: request.k]
        for rank, cand in enumerate(items, start=1):
            cand.final_rank = rank
        elapsed = time.perf_counter() - started
        logger.info(
            "%s",
            json.dumps(
                {
                    "event": "query",
                    "trace_id": trace_id,
                    "candidates": len(candidates),
                    "returned": len(items),
                    "judge_skipped": judge_skipped,
                    "elapsed_s": round(elapsed, 6),
                    "top": [
                        {
                            "block_id": c.block_id,
                            "norm_lex": c.norm_lex,
                            "norm_sem": c.norm_sem,
                            "fused": c.fused,
                            "verdict": c.judge_verdict,
                        }
                        for c in items[:3]
                    ],
                }
            ),
        )
        return QueryResult(items=items, trace_id=trace_id, elapsed_s=elapsed, judge_skipped=judge_skipped)

"""Evaluation metrics: hit rate @ k, query throughput, storage footprint.

Hit rate is the fraction of benchmark questions whose top-k retrieved
results include at least one table from the question's answer set. The
metric reads only ranked table ids and answer sets, never scores, so it is
non-decreasing in k for a fixed ranking.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from .benchmark import BenchmarkItem
from .errors import InvalidBenchmark
from .retriever import QueryRequest, Retriever

REPORT_SCHEMA_VERSION = 1
DIAGNOSTIC_DEPTH_FACTOR = 10  # misses are re-ranked down to 10k for rank_of_first_hit


@dataclass
class ItemOutcome:
    question: str
    hit: bool
    rank_of_first_hit: int | None  # may exceed k for misses (diagnostics)


@dataclass
class EvalReport:
    hit_rate: float
    per_item: list[ItemOutcome]
    k: int
    n: int
    alpha: float
    wall_times: list[float]
    errors: list[tuple[str, str]] = field(default_factory=list)
    storage: dict | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "hit_rate": self.hit_rate,
            "k": self.k,
            "n": self.n,
            "alpha": self.alpha,
            "items": [
                {"question": o.question, "hit": o.hit, "rank_of_first_hit": o.rank_of_first_hit}
                for o in self.per_item
            ],
            "wall_times": self.wall_times,
            "errors": [list(e) for e in self.errors],
            "storage": self.storage,
        }


def _first_hit_rank(items, answers: set[str]) -> int | None:
    for rank, cand in enumerate(items, start=1):
        if cand.table_id in answers:
            return rank
    return None


def hit_rate(
    benchmark: list[BenchmarkItem],
    retriever: Retriever,
    k: int,
    n: int = 5,
    alpha: float = 0.5,
    judge: bool = True,
    dedupe_tables: bool = False,
) -> EvalReport:
    """Run every benchmark question through the pipeline and score hits.

    A failed query counts as a miss and is listed in the report. Misses get
    a diagnostic deeper ranking to locate the first hit beyond k.
    """
    if not benchmark:
        raise InvalidBenchmark("benchmark has no items")
    outcomes: list[ItemOutcome] = []
    errors: list[tuple[str, str]] = []
    wall_times: list[float] = []
    hits = 0
    for item in benchmark:
        answers = set(item.answer_tables)
        try:
            started = time.perf_counter()
            result = retriever.query(
                QueryRequest(
                    question=item.question,
                    k=k,
                    n=n,
                    alpha=alpha,
                    judge_enabled=judge,
                    dedupe_tables=dedupe_tables,
                )
            )
            wall_times.append(time.perf_counter() - started)
        except Exception as exc:
            errors.append((item.question, str(exc)))
            outcomes.append(ItemOutcome(item.question, False, None))
            continue
        rank = _first_hit_rank(result.items, answers)
        hit = rank is not None and rank <= k
        if hit:
            hits += 1
        elif rank is None:
            rank = _diagnostic_rank(retriever, item, answers, k, n, alpha, judge, dedupe_tables)
        outcomes.append(ItemOutcome(item.question, hit, rank))
    return EvalReport(
        hit_rate=hits / len(benchmark),
        per_item=outcomes,
        k=k,
        n=n,
        alpha=alpha,
        wall_times=wall_times,
        errors=errors,
    )


def _diagnostic_rank(retriever, item, answers, k, n, alpha, judge, dedupe_tables):
    try:
        deep = retriever.query(
            QueryRequest(
                question=item.question,
                k=k * DIAGNOSTIC_DEPTH_FACTOR,
                n=n,
                alpha=alpha,
                judge_enabled=judge,
                dedupe_tables=dedupe_tables,
            )
        )
    except Exception:
        return None
    return _first_hit_rank(deep.items, answers)


def throughput(
    questions: list[str],
    retriever: Retriever,
    repetitions: int = 10,
    k: int = 1,
    n: int = 5,
    alpha: float = 0.5,
    judge: bool = True,
    parallel: int = 0,
) -> dict:
    """Mean and standard deviation of queries/second over repeated runs.

    Queries run sequentially by default for stable timing; ``parallel``
    switches to a thread pool of that size for load testing.
    """
    if not questions:
        raise InvalidBenchmark("no questions to time")
    if repetitions < 1:
        raise InvalidBenchmark("repetitions must be >= 1")

    def run_one(question):
        retriever.query(
            QueryRequest(question=question, k=k, n=n, alpha=alpha, judge_enabled=judge)
        )

    rates = []
    for _ in range(repetitions):
        started = time.perf_counter()
        if parallel > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=parallel) as pool:
                list(pool.map(run_one, questions))
        else:
            for question in questions:
                run_one(question)
        elapsed = time.perf_counter() - started
        rates.append(len(questions) / elapsed if elapsed > 0 else float("inf"))
    return {
        "qps_mean": statistics.fmean(rates),
        "qps_stdev": statistics.stdev(rates) if len(rates) > 1 else 0.0,
        "repetitions": repetitions,
        "questions": len(questions),
        "parallel": parallel,
    }


def _tree_bytes(path: Path) -> int:
    if not path.exists():
        return 0
    if path.is_file():
        return path.stat().st_size
    return sum(p.stat().st_size for p in path.rglob("*") if p.is_file())


def storage_report(corpus_dir: str | Path, index_dir: str | Path) -> dict:
    """Byte totals per component plus the index-to-raw ratio."""
    corpus_dir, index_dir = Path(corpus_dir), Path(index_dir)
    if not corpus_dir.exists():
        raise OSError(f"no such corpus directory: {corpus_dir}")
    if not index_dir.exists():
        raise OSError(f"no such index directory: {index_dir}")
    documents = _tree_bytes(corpus_dir / "documents.jsonl")
    fulltext = _tree_bytes(index_dir / "fulltext")
    vectors = _tree_bytes(index_dir / "vectors")
    blocks = _tree_bytes(index_dir / "blocks.jsonl")
    raw = _tree_bytes(corpus_dir / "tables")
    index_total = fulltext + vectors + blocks
    return {
        "documents": documents,
        "fulltext": fulltext,
        "vectors": vectors,
        "blocks": blocks,
        "index_total": index_total,
        "tables_raw": raw,
        "ratio_index_to_raw": (index_total / raw) if raw else None,
    }


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1))

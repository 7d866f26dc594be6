"""Evaluation metrics: hit rate, throughput, storage accounting."""

import pytest

from tabq.benchmark import BenchmarkItem
from tabq.errors import InvalidBenchmark
from tabq.evaluation import hit_rate, storage_report, throughput
from tabq.retriever import QueryResult, ScoredCandidate


class FakeRetriever:
    """Deterministic ranked table lists keyed by question."""

    def __init__(self, rankings):
        self.rankings = rankings

    def query(self, request):
        tables = self.rankings[request.question][: request.k]
        items = [
            ScoredCandidate(
                block_id=f"{t}#row_summary#blk0",
                table_id=t,
                doc_type="row_summary",
                text="",
                final_rank=i + 1,
            )
            for i, t in enumerate(tables)
        ]
        return QueryResult(items=items, trace_id="fake", elapsed_s=0.0)


def items_for(rankings, answers):
    return [
        BenchmarkItem(question=q, answer_tables=answers[q], kind="content", provenance={})
        for q in rankings
    ]


def test_hit_rate_fraction_definition():
    """58 hits over 100 questions is exactly 0.58."""
    rankings, answers = {}, {}
    for i in range(100):
        q = f"q{i:03d}"
        rankings[q] = ["good", "other"] if i < 58 else ["bad", "worse"]
        answers[q] = ["good"]
    report = hit_rate(items_for(rankings, answers), FakeRetriever(rankings), k=1, judge=False)
    assert report.hit_rate == pytest.approx(0.58)
    assert len(report.per_item) == 100


def test_hit_rate_non_decreasing_in_k():
    """For a fixed ranking, larger k can only add hits."""
    rankings = {f"q{i}": [f"t{j}" for j in range(10)] for i in range(20)}
    answers = {f"q{i}": [f"t{i % 10}"] for i in range(20)}
    items = items_for(rankings, answers)
    fake = FakeRetriever(rankings)
    rates = [hit_rate(items, fake, k=k, judge=False).hit_rate for k in (1, 3, 5, 10)]
    assert rates == sorted(rates)
    assert rates[-1] == 1.0


def test_hit_rate_saturates_at_full_depth():
    rankings = {"q": ["a", "b", "c"]}
    report = hit_rate(
        items_for(rankings, {"q": ["c"]}), FakeRetriever(rankings), k=50, judge=False
    )
    assert report.hit_rate == 1.0


def test_hit_rate_records_miss_rank_for_diagnostics():
    rankings = {"q": ["a", "b", "target", "d"]}
    report = hit_rate(
        items_for(rankings, {"q": ["target"]}), FakeRetriever(rankings), k=1, judge=False
    )
    assert report.hit_rate == 0.0
    assert report.per_item[0].rank_of_first_hit == 3


def test_hit_rate_query_failures_count_as_misses():
    class Exploding:
        def query(self, request):
            raise RuntimeError("boom")

    items = [BenchmarkItem("q", ["t"], "content", {})]
    report = hit_rate(items, Exploding(), k=1)
    assert report.hit_rate == 0.0
    assert report.errors and report.errors[0][0] == "q"


def test_hit_rate_empty_benchmark_rejected():
    with pytest.raises(InvalidBenchmark):
        hit_rate([], FakeRetriever({}), k=1)


def test_throughput_requires_questions():
    with pytest.raises(InvalidBenchmark):
        throughput([], FakeRetriever({}))


def test_throughput_reports_mean_and_stdev():
    rankings = {"q": ["a"]}
    stats = throughput(["q"], FakeRetriever(rankings), repetitions=10, judge=False)
    assert stats["qps_mean"] > 0
    assert stats["qps_stdev"] >= 0
    assert stats["repetitions"] == 10


def test_throughput_parallel_mode():
    rankings = {f"q{i}": ["a"] for i in range(8)}
    stats = throughput(
        list(rankings), FakeRetriever(rankings), repetitions=2, judge=False, parallel=4
    )
    assert stats["qps_mean"] > 0
    assert stats["parallel"] == 4


def test_storage_report_sums_files(tmp_path):
    corpus_dir = tmp_path / "corpus"
    (corpus_dir / "tables").mkdir(parents=True)
    (corpus_dir / "documents.jsonl").write_bytes(b"x" * 100)
    (corpus_dir / "tables" / "t1.jsonl").write_bytes(b"y" * 40)
    index_dir = tmp_path / "index"
    (index_dir / "fulltext").mkdir(parents=True)
    (index_dir / "vectors").mkdir()
    (index_dir / "fulltext" / "postings.json").write_bytes(b"z" * 30)
    report = storage_report(corpus_dir, index_dir)
    assert report["documents"] == 100
    assert report["tables_raw"] == 40
    assert report["fulltext"] == 30
    assert report["vectors"] == 0
    assert report["index_total"] == 30
    assert report["ratio_index_to_raw"] == pytest.approx(30 / 40)


def test_storage_report_missing_path(tmp_path):
    with pytest.raises(OSError):
        storage_report(tmp_path / "nope", tmp_path / "also-nope")

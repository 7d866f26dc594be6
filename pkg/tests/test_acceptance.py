"""Acceptance criteria: formula exactness, oracle equivalence, and scaled
synthetic experiments. Each test is one criterion at its stated tolerance;
the conftest hook prints a pass/fail line per criterion.
"""

import json
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from tabq.benchmark import (
    annotate_content_alternatives,
    cycle_consistency_check,
    gen_sql,
    parse_sql,
    sql_exact_match,
)
from tabq.config import TemplateProbabilities
from tabq.evaluation import hit_rate, storage_report
from tabq.indexer import VectorIndex, pack_blocks
from tabq.indexer import store as istore
from tabq.provider import (
    AdaptiveBatcher,
    HashEmbedder,
    Prompt,
    ScriptedCompletion,
    pack_balanced,
)
from tabq.registry import Corpus, Document
from tabq.retriever import (
    Retriever,
    ScoredCandidate,
    fuse,
    judge_prompt,
    judge_reorder,
    minmax_normalize,
)
from tabq.summarizer import SummarizerConfig, summarize_corpus

from conftest import ThresholdExecutor
from oracles import exhaustive_nearest, minmax_reference, reference_bm25, stable_partition

DATA_DIR = Path(__file__).parent / "data" / "mini_corpus"


def make_candidates(rng, n):
    return [
        ScoredCandidate(
            block_id=f"b{i:03d}",
            table_id=f"t{i % 7}",
            doc_type="row_summary",
            text="",
            raw_lex=rng.uniform(0, 20),
            raw_sem=rng.uniform(-1, 1),
        )
        for i in range(n)
    ]


def test_criterion_01_fusion_formula_exactness():
    """Fused = alpha*norm_lex + (1-alpha)*norm_sem to 1e-12 on 1,000 random
    candidate sets; alpha endpoints reproduce single-retriever order."""
    rng = random.Random(101)
    started = time.perf_counter()
    for case in range(1000):
        cands = make_candidates(rng, rng.randint(2, 20))
        alpha = rng.random()
        fused = fuse(cands, alpha)
        for c in fused:
            assert abs(c.fused - (alpha * c.norm_lex + (1 - alpha) * c.norm_sem)) <= 1e-12
        if case % 2 == 0:
            lex_order = [
                c.block_id for c in sorted(cands, key=lambda c: (-c.raw_lex, c.block_id))
            ]
            got = [c.block_id for c in fuse(cands, alpha=1.0)]
            assert got == lex_order
        else:
            sem_order = [
                c.block_id for c in sorted(cands, key=lambda c: (-c.raw_sem, c.block_id))
            ]
            got = [c.block_id for c in fuse(cands, alpha=0.0)]
            assert got == sem_order
    assert time.perf_counter() - started < 5.0


def test_criterion_02_minmax_properties():
    """Order preservation, range in [0,1], degenerate rule, and affine
    invariance of the final ranking over >= 10,000 random cases."""
    rng = random.Random(202)
    started = time.perf_counter()
    for _ in range(6000):
        xs = [rng.uniform(-100, 100) for _ in range(rng.randint(2, 12))]
        normed = minmax_normalize(xs)
        assert normed == minmax_reference(xs)
        assert all(0.0 <= v <= 1.0 for v in normed)
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                if xs[i] < xs[j]:
                    assert normed[i] <= normed[j]
    for _ in range(2000):
        value = rng.uniform(-5, 5)
        size = rng.randint(1, 6)
        assert minmax_normalize([value] * size) == [1.0] * size
    for _ in range(2000):
        cands = make_candidates(rng, rng.randint(2, 10))
        alpha = rng.random()
        base_rank = [c.block_id for c in fuse([_copy(c) for c in cands], alpha)]
        scale, shift = rng.uniform(0.05, 20.0), rng.uniform(-30, 30)
        warped = [
            _copy(c, raw_lex=c.raw_lex * scale + shift) for c in cands
        ]
        assert [c.block_id for c in fuse(warped, alpha)] == base_rank
    assert time.perf_counter() - started < 10.0


def _copy(c, raw_lex=None, raw_sem=None):
    return ScoredCandidate(
        block_id=c.block_id,
        table_id=c.table_id,
        doc_type=c.doc_type,
        text=c.text,
        raw_lex=c.raw_lex if raw_lex is None else raw_lex,
        raw_sem=c.raw_sem if raw_sem is None else raw_sem,
    )


def test_criterion_03_bm25_oracle_equivalence():
    """Engine scores equal the naive reference on every block of 50 random
    corpora of up to 100 blocks, tolerance 1e-9."""
    from tabq.indexer import FullTextIndex

    rng = random.Random(303)
    vocab = [f"term{i}" for i in range(60)]
    for _ in range(50):
        blocks = {
            f"b{j:03d}": " ".join(rng.choices(vocab, k=rng.randint(2, 60)))
            for j in range(rng.randint(1, 100))
        }
        ftx = FullTextIndex()
        for bid, text in blocks.items():
            ftx.add_block(bid, text)
        ftx.commit()
        query = " ".join(rng.choices(vocab, k=rng.randint(1, 6)))
        ref = reference_bm25(blocks, query)
        for bid in blocks:
            assert ftx.score(query, bid) == pytest.approx(ref[bid], abs=1e-9)


def test_criterion_04_vector_recall():
    """HNSW recall@10 >= 0.95 on 1,000 random unit vectors (dim 256); exact
    mode below the threshold has recall 1.0."""
    rng = np.random.default_rng(404)
    n, dim = 1000, 256
    vecs = rng.normal(size=(n, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    ids = [f"b{i:04d}" for i in range(n)]

    approx_index = VectorIndex(dimension=dim, exact_threshold=0)
    exact_index = VectorIndex(dimension=dim, exact_threshold=2000)
    for bid, vec in zip(ids, vecs):
        approx_index.add(bid, vec)
        exact_index.add(bid, vec)

    queries = rng.normal(size=(100, dim))
    queries /= np.linalg.norm(queries, axis=1, keepdims=True)
    hits = exact_hits = 0
    for q in queries:
        truth = set(exhaustive_nearest(ids, vecs, q, 10))
        approx = {bid for bid, _ in approx_index.search(q, 10, ef_search=128)}
        exact = {bid for bid, _ in exact_index.search(q, 10)}
        hits += len(approx & truth)
        exact_hits += len(exact & truth)
    assert hits / 1000 >= 0.95
    assert exact_hits / 1000 == 1.0


def test_criterion_05_judge_stable_partition_exhaustive():
    """All verdict bitmaps over lists of length <= 8 reproduce the
    brute-force stable partition; relevant items keep fused order."""
    for length in range(0, 9):
        for bitmap in range(2**length):
            verdicts = [(bitmap >> i) & 1 == 1 for i in range(length)]
            cands = [
                ScoredCandidate(
                    block_id=f"b{i}", table_id=f"t{i}", doc_type="context", text=f"d{i}"
                )
                for i in range(length)
            ]
            fixtures = {
                judge_prompt("q", c).key: ("yes" if v else "no")
                for c, v in zip(cands, verdicts)
            }
            reordered, skipped = judge_reorder(
                "q", list(cands), ScriptedCompletion(fixtures), judge_pool=max(length, 1)
            )
            expected = stable_partition([c.block_id for c in cands], verdicts)
            assert [c.block_id for c in reordered] == expected
            assert not skipped


def test_criterion_06_block_packing(tmp_path):
    """Window respected (oversized singles truncated), no (table,type)
    mixing, block count <= document count; content documents stay <= 6 on a
    1,000-row table against 1,000 for a per-row scheme (>= 100x)."""
    rng = random.Random(606)
    for _ in range(30):
        docs = []
        for t in range(rng.randint(1, 4)):
            for dtype in ("schema_summary", "row_summary", "context"):
                for i in range(rng.randint(0, 8)):
                    word_count = rng.randint(1, 300)
                    docs.append(
                        Document(
                            f"t{t}#{dtype}#{i}",
                            f"t{t}",
                            dtype,
                            " ".join(f"w{j:03d}" for j in range(word_count)),
                        )
                    )
        window = rng.choice([64, 128, 512])
        blocks = pack_blocks(docs, window)
        assert len(blocks) <= len(docs)
        by_id = {d.doc_id: d for d in docs}
        for block in blocks:
            assert block.token_estimate <= window
            for member in block.member_doc_ids:
                assert by_id[member].table_id == block.table_id
                assert by_id[member].doc_type == block.doc_type
        assert sorted(m for b in blocks for m in b.member_doc_ids) == sorted(by_id)

    corpus = Corpus.create(tmp_path / "corpus")
    rows = [[f"r{i}", f"{i % 97}", f"{i % 13}"] for i in range(1000)]
    corpus.add_table("bulk", ["name", "mod97", "mod13"], rows, "mem://bulk")
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig(r=5))
    content_docs = [
        d
        for d in corpus.documents_for("bulk")
        if d.doc_type in ("schema_summary", "row_summary")
    ]
    per_row_scheme = len(rows)
    assert len(content_docs) <= 6
    assert per_row_scheme / len(content_docs) >= 100


def test_criterion_07_adaptive_batching():
    """Against a hidden token threshold: all prompts complete in order, the
    final size is within one step of the brute-force optimum, the probe
    count respects the binary-search budget, and balanced packing keeps the
    batch-sum spread within one prompt."""
    prompt_tokens = 25
    prompts = [
        Prompt.build("", "x" * (prompt_tokens * 4), key=f"p{i}") for i in range(3000)
    ]
    fixtures = {p.key: f"ok:{p.key}" for p in prompts}
    limit = 1000
    min_bs, max_bs, grow_after = 1, 64, 3
    executor = ThresholdExecutor(limit, fixtures)
    batcher = AdaptiveBatcher(executor, min_bs, max_bs, grow_after=grow_after)
    texts = batcher.execute(prompts)
    assert texts == [f"ok:p{i}" for i in range(3000)]

    passing = [
        size
        for size in range(min_bs, max_bs + 1)
        if all(
            sum(prompts[i].token_estimate for i in batch) <= limit
            for batch in pack_balanced(prompts, size).batches
        )
    ]
    optimum = max(passing)
    assert abs(batcher.current_size - optimum) <= 1

    sizes = [s for s, _ in batcher.size_history]
    last_change = max(
        (i for i in range(1, len(sizes)) if sizes[i] != sizes[i - 1]), default=0
    )
    span = max_bs - min_bs + 1
    budget = math.ceil(math.log2(span)) + grow_after * math.ceil(math.log2(span))
    assert last_change <= budget

    rng = random.Random(707)
    for _ in range(20):
        batch_prompts = [
            Prompt.build("", "y" * rng.randint(4, 400), key=f"q{i}")
            for i in range(rng.randint(2, 80))
        ]
        plan = pack_balanced(batch_prompts, rng.randint(1, 16))
        sums = [
            sum(batch_prompts[i].token_estimate for i in batch) for batch in plan.batches
        ]
        assert max(sums) - min(sums) <= max(p.token_estimate for p in batch_prompts)


@pytest.fixture
def sql_corpus(tmp_path):
    corpus = Corpus.create(tmp_path / "sqlcorpus")
    corpus.add_table(
        "inventory",
        ["depot", "part", "stock", "unit_cost"],
        [
            ["kyoto", "bolt", "120", "0.08"],
            ["oslo", "nut", "340", "0.05"],
            ["kyoto", "washer", "77", "0.02"],
            ["lima", "bolt", "15", "0.09"],
            ["oslo", "bolt", "88", "0.07"],
        ],
        "mem://inventory",
    )
    return corpus


def test_criterion_08_benchmark_generator_validity(sql_corpus):
    """1,000 seeded draws parse and stay free of FROM/JOIN/table-name;
    clause frequencies hold to 3 sigma; exact match passes the reorder cases
    and fails the mismatch cases; cycle consistency accepts a faithful back
    translator and rejects a column-dropping one."""
    config = TemplateProbabilities()
    n = 1000
    counts = {"group": 0, "having": 0, "order": 0, "limit": 0, "aggregate": 0}
    for seed in range(n):
        query = gen_sql(sql_corpus, "inventory", config, seed)
        rendered = query.render()
        upper = rendered.upper()
        assert "FROM" not in upper and "JOIN" not in upper
        assert "INVENTORY" not in upper
        assert sql_exact_match(parse_sql(rendered), query)
        counts["group"] += query.group_by is not None
        counts["having"] += query.having is not None
        counts["order"] += query.order_by is not None
        counts["limit"] += query.limit is not None
        counts["aggregate"] += any(i.aggregate for i in query.select_items)
    expected = {
        "aggregate": config.p_aggregate,
        "group": config.p_group_by,
        "having": config.p_group_by * config.p_having_given_group,
        "order": config.p_order_by,
        "limit": config.p_limit,
    }
    for clause, p in expected.items():
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[clause] - n * p) <= 3 * sigma, clause

    # Spider-style component equivalence
    assert sql_exact_match(
        "SELECT depot, MAX(stock) WHERE part = 'bolt'", "SELECT MAX(stock), depot WHERE part = 'bolt'"
    )
    assert sql_exact_match(
        "SELECT depot WHERE stock > 10 AND part = 'nut'",
        "SELECT depot WHERE part = 'nut' AND stock > 10",
    )
    assert not sql_exact_match("SELECT depot LIMIT 3", "SELECT depot LIMIT 5")
    assert not sql_exact_match("SELECT MAX(stock)", "SELECT MIN(stock)")

    faithful = rejected = 0
    trials = 40
    for seed in range(trials):
        query = gen_sql(sql_corpus, "inventory", config, seed)
        question = f"generated question {seed}"
        echo = ScriptedCompletion({f"q2sql:{question}": query.render()})
        faithful += cycle_consistency_check(question, query, sql_corpus, echo)
        dropped = parse_sql(query.render())
        if len(dropped.select_items) > 1:
            dropped.select_items = dropped.select_items[:1]
        else:
            dropped.limit = (dropped.limit or 0) + 7
        perturbed = ScriptedCompletion({f"q2sql:{question}": dropped.render()})
        rejected += not cycle_consistency_check(question, query, sql_corpus, perturbed)
    assert faithful == trials
    assert rejected == trials


def test_criterion_09_alternative_annotation_vs_brute_force(tmp_path):
    """On a 50-table corpus with planted duplicates the annotation equals an
    exhaustive containment scan, as an exact set."""
    rng = random.Random(909)
    corpus = Corpus.create(tmp_path / "corpus")
    source_schema = ["region", "model", "units"]
    source_rows = [
        [rng.choice(["na", "eu", "apac"]), f"m{rng.randint(1, 9)}", str(rng.randint(0, 50))]
        for _ in range(8)
    ]
    corpus.add_table("source", source_schema, source_rows, "mem://source")
    for i in range(3):  # planted duplicates, one with different case
        schema = [c.upper() for c in source_schema] if i == 0 else list(source_schema)
        corpus.add_table(f"dup{i}", schema, source_rows, f"mem://dup{i}")
    for i in range(46):
        cols = [f"c{j}" for j in range(rng.randint(2, 5))]
        rows = [[str(rng.randint(0, 30)) for _ in cols] for _ in range(6)]
        corpus.add_table(f"noise{i:02d}", cols, rows, f"mem://n{i}")

    def brute_force(sql):
        ref_cols = {c.lower().strip() for c in sql.referenced_columns()}
        eqs = [(c.column.lower().strip(), c.literal.strip()) for c in sql.where if c.op == "="]
        found = {sql.table_id}
        for t in corpus.tables():
            cols_lower = [c.lower().strip() for c in t.schema]
            if not ref_cols <= set(cols_lower):
                continue
            rows = corpus.rows(t.table_id)
            ok = True
            for col_key, lit in eqs:
                hit = False
                for ci, name in enumerate(cols_lower):
                    if name == col_key and any(r[ci].strip() == lit for r in rows):
                        hit = True
                if not hit:
                    ok = False
                    break
            if ok:
                found.add(t.table_id)
        return sorted(found)

    saw_duplicate = False
    for seed in range(60):
        sql = gen_sql(corpus, "source", seed=seed)
        answers = annotate_content_alternatives(sql, corpus)
        assert answers == brute_force(sql)
        assert "source" in answers
        saw_duplicate = saw_duplicate or any(a.startswith("dup") for a in answers)
    assert saw_duplicate


def mini_stack(tmp_path):
    corpus = Corpus.create(tmp_path / "corpus")
    with corpus.deferred():
        for path in sorted((DATA_DIR / "tables").glob("*.csv")):
            corpus.ingest_table(path)
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    embedder = HashEmbedder()
    store = istore.build(corpus, embedder, tmp_path / "index")
    retriever = Retriever(store, embedder, judge=ScriptedCompletion())
    return corpus, store, retriever


def load_mini_questions():
    from tabq.benchmark import BenchmarkItem

    return [
        BenchmarkItem.from_dict(json.loads(line))
        for line in (DATA_DIR / "questions.jsonl").read_text().splitlines()
        if line.strip()
    ]


def test_criterion_10_end_to_end_smoke(tmp_path):
    """Bundled 10-table corpus, 20 rare-keyword questions: hit rate @1 is
    1.0 with alpha=0.5, n=5, judge on; hit rate non-decreasing over k."""
    corpus, store, retriever = mini_stack(tmp_path)
    assert len(corpus.tables()) == 10
    items = load_mini_questions()
    assert len(items) == 20
    report1 = hit_rate(items, retriever, k=1, n=5, alpha=0.5, judge=True)
    assert report1.hit_rate == 1.0
    rates = [report1.hit_rate] + [
        hit_rate(items, retriever, k=k, n=5, alpha=0.5, judge=True).hit_rate for k in (5, 10)
    ]
    assert rates == sorted(rates)


def test_criterion_11_linear_storage_growth(tmp_path):
    """Document + index bytes grow linearly (R^2 > 0.99) over corpora of
    625 to 10,000 small tables."""
    sizes = [625, 1250, 2500, 5000, 10000]
    totals = []
    rng = random.Random(1111)
    for size in sizes:
        root = tmp_path / str(size)
        corpus = Corpus.create(root / "corpus")
        with corpus.deferred():
            for t in range(size):
                schema = [f"col{t}_{c}" for c in range(6)]
                rows = [
                    [f"v{rng.randrange(1000)}" for _ in range(6)] for _ in range(14)
                ]
                corpus.add_table(f"table{t:05d}", schema, rows, f"mem://{t}")
        summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
        istore.build(
            corpus, HashEmbedder(), root / "index", exact_threshold=10**9
        )
        report = storage_report(root / "corpus", root / "index")
        totals.append(report["documents"] + report["index_total"])
    x = np.array(sizes, dtype=float)
    y = np.array(totals, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    r2 = 1.0 - ((y - predicted) ** 2).sum() / ((y - y.mean()) ** 2).sum()
    assert slope > 0
    assert r2 > 0.99, f"R^2 {r2:.5f} over totals {totals}"


def test_criterion_12_incremental_maintenance(tmp_path):
    """Upsert and remove leave both indices with identical block-ref sets
    and full-text postings byte-identical to a from-scratch rebuild."""
    corpus = Corpus.create(tmp_path / "corpus")
    rng = random.Random(1212)
    with corpus.deferred():
        for t in range(20):
            schema = [f"f{t}_{c}" for c in range(4)]
            rows = [[f"x{rng.randrange(60)}" for _ in schema] for _ in range(8)]
            corpus.add_table(f"t{t:02d}", schema, rows, f"mem://{t}")
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    embedder = HashEmbedder()
    store = istore.build(corpus, embedder, tmp_path / "live")

    # change one table's documents and upsert
    corpus.remove_documents("t03")
    corpus.add_documents(
        [
            Document("t03#schema_summary#0", "t03", "schema_summary", "completely new narration"),
            Document("t03#row_summary#0", "t03", "row_summary", "f3_0: replaced"),
        ]
    )
    store.upsert_table(corpus, "t03", embedder)
    # drop another table entirely
    corpus.remove_table("t11")
    store.remove_table("t11", corpus_version=corpus.version)

    assert store.fulltext.block_ids() == store.vectors.block_ids() == set(store.blocks)

    rebuilt = istore.build(corpus, embedder, tmp_path / "rebuilt")
    assert set(rebuilt.blocks) == set(store.blocks)
    live_bytes = (tmp_path / "live" / "fulltext" / "postings.json").read_bytes()
    rebuilt_bytes = (tmp_path / "rebuilt" / "fulltext" / "postings.json").read_bytes()
    assert live_bytes == rebuilt_bytes

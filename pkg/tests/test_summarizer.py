"""Content summaries: schema narration, row summaries, corpus pass."""

from tabq.provider import ScriptedCompletion
from tabq.registry import stable_seed
from tabq.summarizer import (
    SummarizerConfig,
    escape_cell,
    make_row_summaries,
    narrate_schema,
    summarize_corpus,
    unescape_cell,
)

from conftest import add_demo_table, make_tables

AB_TEXT = "This represents the number of at-bats for a batter."
BABIP_TEXT = (
    "This represents Batting Average on Balls In Play, a statistic that measures "
    "a batter's success rate in converting balls put into play into hits."
)


def test_narrate_schema_formats_column_narrations(corpus):
    record = corpus.add_table("mlb", ["AB", "BABIP"], [["76", "0.317"]], "mem://mlb")
    llm = ScriptedCompletion({"narrate:AB": AB_TEXT, "narrate:BABIP": BABIP_TEXT})
    doc = narrate_schema(record, llm)
    assert doc.doc_id == "mlb#schema_summary#0"
    assert doc.text == f"AB: {AB_TEXT} | BABIP: {BABIP_TEXT}"


def test_narrate_schema_decline_falls_back_to_bare_name(corpus):
    record = corpus.add_table("ids", ["id"], [["1"]], "mem://ids")
    llm = ScriptedCompletion({"narrate:id": "UNKNOWN"})
    assert narrate_schema(record, llm).text == "id"


def test_narrate_schema_one_prompt_per_column(corpus):
    record = corpus.add_table("three", ["a", "b", "c"], [["1", "2", "3"]], "mem://three")
    llm = ScriptedCompletion()
    narrate_schema(record, llm)
    assert len(llm.calls) == 3
    assert sorted(p.key for p in llm.calls) == ["narrate:a", "narrate:b", "narrate:c"]


def test_narrate_schema_prompt_carries_full_schema(corpus):
    record = corpus.add_table("two", ["alpha", "beta"], [["1", "2"]], "mem://two")
    llm = ScriptedCompletion()
    narrate_schema(record, llm)
    system_text = llm.calls[0].messages[0][1]
    assert "alpha" in system_text and "beta" in system_text


def test_schema_summary_contains_every_column_verbatim(corpus):
    record = corpus.add_table("mix", ["AB", "Weird Col"], [["1", "2"]], "mem://mix")
    llm = ScriptedCompletion({"narrate:AB": AB_TEXT})
    text = narrate_schema(record, llm).text
    assert "AB" in text and "Weird Col" in text


def test_row_summary_pairs_columns_with_values(corpus):
    corpus.add_table("mlb", ["AB", "BABIP"], [["76", "0.317"]], "mem://mlb")
    docs = make_row_summaries(corpus, "mlb", r=5, seed=1)
    assert [d.text for d in docs] == ["AB: 76 | BABIP: 0.317"]
    assert docs[0].doc_id == "mlb#row_summary#0"


def test_row_summaries_empty_table(corpus):
    corpus.add_table("none", ["a"], [], "mem://none")
    assert make_row_summaries(corpus, "none", 5, 1) == []


def test_row_summary_escapes_separator():
    value = "left | right"
    escaped = escape_cell(value)
    assert escaped == "left \\| right"
    assert unescape_cell(escaped) == value
    tricky = "back\\slash | pipe"
    assert unescape_cell(escape_cell(tricky)) == tricky


def test_row_summary_truncates_long_cells(corpus):
    corpus.add_table("long", ["blob"], [["x" * 500]], "mem://long")
    docs = make_row_summaries(corpus, "long", 1, 1, SummarizerConfig(cell_truncate=256))
    assert docs[0].text == "blob: " + "x" * 256 + "…"


def test_row_summaries_deterministic(corpus):
    add_demo_table(corpus, "t", rows=[[f"p{i}", str(i), "0", "0"] for i in range(20)])
    a = make_row_summaries(corpus, "t", 5, seed=9)
    b = make_row_summaries(corpus, "t", 5, seed=9)
    assert [d.text for d in a] == [d.text for d in b]


def test_summarize_corpus_counts(corpus):
    """10 tables with >= 5 rows at r=5 give 60 documents."""
    make_tables(corpus, 10, rows=8)
    report = summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    assert report.written == 60
    assert len(corpus.documents) == 60


def test_summarize_corpus_idempotent(corpus):
    make_tables(corpus, 3, rows=6)
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    again = summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    assert again.written == 0
    assert again.skipped == 3


def test_summarize_corpus_force_regenerates(corpus):
    make_tables(corpus, 2, rows=6)
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    report = summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig(), force=True)
    assert report.written == 12


def test_summarize_corpus_passes_contexts_through(corpus):
    make_tables(corpus, 1, rows=6)
    table_id = corpus.tables()[0].table_id
    corpus.register_context(table_id, "first passage")
    corpus.register_context(table_id, "second passage")
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    docs = corpus.documents_for(table_id)
    by_type = {}
    for d in docs:
        by_type.setdefault(d.doc_type, []).append(d)
    assert len(by_type["schema_summary"]) == 1
    assert len(by_type["row_summary"]) <= 5
    assert [d.text for d in by_type["context"]] == ["first passage", "second passage"]


def test_document_count_bounded_per_table(corpus):
    """At most 1 + r + #contexts documents per table, however many rows."""
    corpus.add_table(
        "big", ["a", "b"], [[str(i), str(i * 2)] for i in range(1000)], "mem://big"
    )
    corpus.register_context("big", "one context")
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig(r=5))
    assert len(corpus.documents_for("big")) <= 1 + 5 + 1


def test_per_table_seed_derivation_is_stable():
    assert stable_seed(42, "tableA") == stable_seed(42, "tableA")
    assert stable_seed(42, "tableA") != stable_seed(42, "tableB")
    assert stable_seed(42, "tableA") != stable_seed(43, "tableA")


def test_summarize_failure_isolated_and_old_docs_survive(corpus):
    """A table whose narration keeps failing is reported; its previous
    summaries stay in place and the other tables regenerate."""
    from conftest import FailingKeyExecutor

    make_tables(corpus, 3, rows=6)
    summarize_corpus(corpus, ScriptedCompletion(), SummarizerConfig())
    victim = corpus.tables()[0].table_id
    before = [d.doc_id for d in corpus.documents_for(victim)]
    poisoned = FailingKeyExecutor({f"narrate:{corpus.table(victim).schema[0]}"})
    report = summarize_corpus(corpus, poisoned, SummarizerConfig(), force=True)
    assert [t for t, _ in report.failed] == [victim]
    assert [d.doc_id for d in corpus.documents_for(victim)] == before
    assert report.written == 12  # the two healthy tables regenerated

"""Command-line interface. Thin client over the core package: every
subcommand parses arguments, loads config, and delegates to the module that
does the work. The ``query`` path runs the exact pipeline the HTTP service
runs, so the two emit identical rankings for identical parameters.

Exit codes: 0 success, 1 user error (bad arguments, missing files, unknown
tables), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import benchmark as bench_mod
from . import evaluation
from .config import Config, build_providers, summarizer_config
from .errors import TabqError
from .indexer import store as index_store
from .registry import Corpus
from .retriever import QueryRequest, Retriever, result_items_to_dicts
from .summarizer import summarize_corpus

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tabq", description=__doc__)
    parser.add_argument("--config", help="path to config JSON", default=None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest CSV/JSONL tables into a corpus")
    p.add_argument("--tables", required=True, help="file or directory of tables")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--format", default="csv", choices=["csv", "jsonl-rows"])

    p = sub.add_parser("add-context", help="register a context passage for a table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("text")

    p = sub.add_parser("summarize", help="generate content summaries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--force", action="store_true")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("index", help="build or maintain the discovery indices")
    p.add_argument("action", nargs="?", default="build", choices=["build", "upsert", "remove"])
    p.add_argument("--corpus", default=None)
    p.add_argument("--out", default=None, help="index directory (build)")
    p.add_argument("--index", default=None, help="index directory (upsert/remove)")
    p.add_argument("--table", default=None)
    p.add_argument("--embed-window", type=int, default=None)
    p.add_argument("--allow-stale", action="store_true")

    p = sub.add_parser("query", help="ask a question, print ranked JSON lines")
    p.add_argument("--index", required=True)
    p.add_argument("-k", type=int, default=None)
    p.add_argument("-n", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--no-judge", action="store_true")
    p.add_argument("--dedupe-tables", action="store_true")
    p.add_argument("question")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)

    p = sub.add_parser("bench", help="benchmark generation")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)

    b = bench_sub.add_parser("gen-content", help="SQL-template content questions")
    b.add_argument("--corpus", required=True)
    b.add_argument("--count", type=int, default=200)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--out", required=True)

    b = bench_sub.add_parser("gen-contexts", help="elicit generated table contexts")
    b.add_argument("--corpus", required=True)
    b.add_argument("--table", default=None, help="single table (default: all)")

    b = bench_sub.add_parser("gen-context-questions", help="stratified context benchmark")
    b.add_argument("--corpus", required=True)
    b.add_argument("--per-question", type=int, default=20)
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--out", required=True)

    b = bench_sub.add_parser("annotate", help="add alternative answer tables")
    b.add_argument("--corpus", required=True)
    b.add_argument("--benchmark", required=True)
    b.add_argument("--out", default=None, help="default: rewrite in place")

    p = sub.add_parser("eval", help="hit rate / throughput evaluation")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--corpus", default=None)
    p.add_argument("-k", type=int, default=1)
    p.add_argument("--no-judge", action="store_true")
    p.add_argument("--json", dest="json_out", default=None)
    p.add_argument("--throughput", action="store_true", help="also time 10 repetitions")
    p.add_argument("--parallel", type=int, default=0, help="thread pool size for load testing")

    return parser


def run_cli(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s %(message)s",
    )
    try:
        cfg = Config.load(args.config)
        return _dispatch(args, cfg)
    except (TabqError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        logger.exception("internal error")
        return 2


def _dispatch(args: argparse.Namespace, cfg: Config) -> int:
    handler = {
        "ingest": _cmd_ingest,
        "add-context": _cmd_add_context,
        "summarize": _cmd_summarize,
        "index": _cmd_index,
        "query": _cmd_query,
        "serve": _cmd_serve,
        "bench": _cmd_bench,
        "eval": _cmd_eval,
    }[args.command]
    return handler(args, cfg)


def _open_corpus(path: str) -> Corpus:
    if not (Path(path) / "manifest.json").exists():
        raise FileNotFoundError(f"corpus not found at {path}")
    return Corpus.open(path)


def _open_store(path: str) -> index_store.IndexStore:
    if not (Path(path) / "manifest.json").exists():
        raise FileNotFoundError(f"index not found at {path}")
    return index_store.IndexStore.load(path)


def _retriever(cfg: Config, store) -> Retriever:
    llm, embedder = build_providers(cfg)
    return Retriever(
        store,
        embedder,
        judge=llm,
        ef_search_min=cfg.ef_search_min,
        batcher_args={
            "min_bs": cfg.min_batch_size,
            "max_bs": cfg.max_batch_size,
            "grow_after": cfg.grow_after,
            "retries": cfg.retries,
        },
    )


def _cmd_ingest(args, cfg) -> int:
    root = Path(args.tables)
    if root.is_dir():
        pattern = "*.csv" if args.format == "csv" else "*.jsonl"
        paths = sorted(root.glob(pattern))
    else:
        paths = [root]
    if not paths:
        raise FileNotFoundError(f"no {args.format} files under {root}")
    corpus_path = Path(args.corpus)
    corpus = Corpus.open(corpus_path) if (corpus_path / "manifest.json").exists() else Corpus.create(corpus_path)
    with corpus.deferred():
        for path in paths:
            record = corpus.ingest_table(path, fmt=args.format)
            print(f"ingested {record.table_id}: {record.row_count} rows")
    print(f"corpus at version {corpus.version} with {len(corpus.tables())} tables")
    return 0


def _cmd_add_context(args, cfg) -> int:
    corpus = _open_corpus(args.corpus)
    ctx = corpus.register_context(args.table, args.text)
    print(f"registered {ctx.context_id} for {ctx.table_id}")
    return 0


def _cmd_summarize(args, cfg) -> int:
    corpus = _open_corpus(args.corpus)
    llm, _ = build_providers(cfg)
    scfg = summarizer_config(cfg)
    if args.r is not None:
        scfg.r = args.r
    if args.seed is not None:
        scfg.seed = args.seed
    report = summarize_corpus(corpus, llm, scfg, force=args.force)
    print(f"wrote {report.written} documents ({report.skipped} tables already summarized)")
    for table_id, reason in report.failed:
        print(f"failed {table_id}: {reason}", file=sys.stderr)
    return 0 if not report.failed else 1


def _cmd_index(args, cfg) -> int:
    if args.action == "build":
        if not args.corpus or not args.out:
            raise ValueError("index build needs --corpus and --out")
        corpus = _open_corpus(args.corpus)
        _, embedder = build_providers(cfg)
        store = index_store.build(
            corpus,
            embedder,
            args.out,
            embed_window=args.embed_window or cfg.embed_window,
            k1=cfg.k1,
            b=cfg.b,
            hnsw_m=cfg.hnsw_m,
            hnsw_ef_construction=cfg.hnsw_ef_construction,
            exact_threshold=cfg.exact_threshold,
        )
        print(f"indexed {store.manifest['block_count']} blocks into {args.out}")
        return 0
    if not args.index or not args.table:
        raise ValueError(f"index {args.action} needs --index and --table")
    store = _open_store(args.index)
    if args.action == "upsert":
        if not args.corpus:
            raise ValueError("index upsert needs --corpus")
        corpus = _open_corpus(args.corpus)
        _, embedder = build_providers(cfg)
        report = store.upsert_table(corpus, args.table, embedder, allow_stale=args.allow_stale)
    else:
        report = store.remove_table(args.table)
        if args.corpus:
            corpus = _open_corpus(args.corpus)
            if corpus.has_table(args.table):
                corpus.remove_table(args.table)
            store.sync_version(corpus.version)
    print(
        f"{args.action} {report.table_id}: -{report.removed_blocks} +{report.added_blocks} blocks"
    )
    return 0


def _cmd_query(args, cfg) -> int:
    store = _open_store(args.index)
    retriever = _retriever(cfg, store)
    result = retriever.query(
        QueryRequest(
            question=args.question,
            k=args.k if args.k is not None else cfg.k,
            n=args.n if args.n is not None else cfg.n,
            alpha=args.alpha if args.alpha is not None else cfg.alpha,
            judge_enabled=not args.no_judge,
            dedupe_tables=args.dedupe_tables,
        )
    )
    for item in result_items_to_dicts(result):
        print(json.dumps(item))
    return 0


def build_service_app(index_dir: str, corpus_dir: str | None, cfg: Config):
    """Assemble the FastAPI app the `serve` command runs."""
    from .service import ServiceState, create_app

    store = _open_store(index_dir)
    corpus = _open_corpus(corpus_dir) if corpus_dir else None
    llm, embedder = build_providers(cfg)
    retriever = _retriever(cfg, store)
    return create_app(
        ServiceState(
            store=store, retriever=retriever, embedder=embedder, llm=llm, config=cfg, corpus=corpus
        )
    )


def _cmd_serve(args, cfg) -> int:
    import uvicorn

    app = build_service_app(args.index, args.corpus, cfg)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _cmd_bench(args, cfg) -> int:
    corpus = _open_corpus(args.corpus)
    llm, _ = build_providers(cfg)
    if args.bench_command == "gen-content":
        report = bench_mod.generate_content_benchmark(
            corpus, llm, count=args.count, seed=args.seed, template=cfg.template, leak_len=cfg.leak_len
        )
        bench_mod.save_items(report.items, args.out)
        print(f"wrote {len(report.items)} items to {args.out} ({len(report.dropped)} dropped)")
        return 0
    if args.bench_command == "gen-contexts":
        tables = [args.table] if args.table else [t.table_id for t in corpus.tables()]
        total, failures = 0, 0
        for table_id in tables:
            report = bench_mod.gen_contexts(corpus, table_id, llm)
            total += len(report.contexts)
            failures += len(report.failures)
        print(f"generated {total} contexts ({failures} failures)")
        return 0
    if args.bench_command == "gen-context-questions":
        report = bench_mod.gen_context_benchmark(
            corpus, llm, per_question=args.per_question, seed=args.seed, leak_len=cfg.leak_len
        )
        bench_mod.save_items(report.items, args.out)
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        print(f"wrote {len(report.items)} items to {args.out}")
        return 0
    # annotate
    items = bench_mod.load_items(args.benchmark)
    for item in items:
        if item.kind == "context":
            item.answer_tables = bench_mod.annotate_context_alternatives(item, corpus, llm)
        else:
            sql = bench_mod.parse_sql(item.provenance["sql"])
            sql.table_id = item.provenance.get("table_id", "")
            item.answer_tables = bench_mod.annotate_content_alternatives(sql, corpus)
    out = args.out or args.benchmark
    bench_mod.save_items(items, out)
    print(f"annotated {len(items)} items into {out}")
    return 0


def _cmd_eval(args, cfg) -> int:
    store = _open_store(args.index)
    retriever = _retriever(cfg, store)
    items = bench_mod.load_items(args.benchmark)
    report = evaluation.hit_rate(
        items, retriever, k=args.k, n=cfg.n, alpha=cfg.alpha, judge=not args.no_judge
    )
    print(f"hit_rate@{args.k} = {report.hit_rate:.4f} over {len(items)} questions")
    if args.throughput:
        stats = evaluation.throughput(
            [i.question for i in items[:100]],
            retriever,
            k=args.k,
            judge=not args.no_judge,
            parallel=args.parallel,
        )
        print(f"throughput: {stats['qps_mean']:.2f} +- {stats['qps_stdev']:.2f} qps")
    if args.corpus:
        report.storage = evaluation.storage_report(args.corpus, args.index)
        print(f"storage: {report.storage}")
    if args.json_out:
        evaluation.save_report(report, args.json_out)
        print(f"report written to {args.json_out}")
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()

"""Corpus registry: table ingestion, context registration, deterministic row
sampling, and the persistent document store.

The corpus directory is the canonical store; search indices are derived from
it and can always be rebuilt. Layout:

    manifest.json          table records + corpus version
    tables/<table_id>.jsonl   one JSON array (row of strings) per line
    contexts.jsonl         registered context passages
    documents.jsonl        content summaries and context documents
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import random
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateId, EmptyText, ParseError, UnknownTable

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")

DOC_TYPES = ("schema_summary", "row_summary", "context")


@dataclass
class TableRecord:
    table_id: str
    schema: list[str]
    row_count: int
    source_uri: str
    ingest_time: float

    def to_dict(self) -> dict:
        return {
            "table_id": self.table_id,
            "schema": list(self.schema),
            "row_count": self.row_count,
            "source_uri": self.source_uri,
            "ingest_time": self.ingest_time,
        }


@dataclass
class ContextDocument:
    context_id: str
    table_id: str
    text: str
    source: str = "user-supplied"  # or "generated"
    # Set for generated contexts: index of the elicitation question answered.
    elicitation_index: int | None = None

    def to_dict(self) -> dict:
        d = {
            "context_id": self.context_id,
            "table_id": self.table_id,
            "text": self.text,
            "source": self.source,
        }
        if self.elicitation_index is not None:
            d["elicitation_index"] = self.elicitation_index
        return d


@dataclass
class Document:
    """Unit of indexing: a content summary or a context passage.

    doc_id format is ``<table_id>#<doc_type>#<seq>``.
    """

    doc_id: str
    table_id: str
    doc_type: str
    text: str

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "table_id": self.table_id,
            "doc_type": self.doc_type,
            "text": self.text,
        }

    @property
    def seq(self) -> int:
        return int(self.doc_id.rsplit("#", 1)[1])


def _check_table_id(table_id: str) -> None:
    if not _ID_RE.match(table_id):
        raise ParseError(f"invalid table_id {table_id!r}")


def stable_seed(global_seed: int, *parts: str) -> int:
    """Derive a reproducible sub-seed from a global seed and string parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(global_seed).encode())
    for p in parts:
        h.update(b"\x00")
        h.update(p.encode())
    return int.from_bytes(h.digest(), "big")


class Corpus:
    """Directory-backed table/context/document store.

    Single-writer, multi-reader: mutations serialize on a corpus-level lock;
    reads see whatever was last committed. ``flush()`` persists the manifest
    and the contexts/documents files; row stores are written when tables are
    added. By default every mutation flushes; use ``deferred()`` to batch.
    """

    def __init__(self, root: str | Path, autoflush: bool = True):
        self.root = Path(root)
        self._lock = threading.RLock()
        self._autoflush = autoflush
        self.version = 0
        self._tables: dict[str, TableRecord] = {}
        self._rows: dict[str, list[list[str]]] = {}
        self._contexts: list[ContextDocument] = []
        self._ctx_by_table: dict[str, list[ContextDocument]] = {}
        self._documents: list[Document] = []
        self._docs_by_table: dict[str, list[Document]] = {}
        self._next_context = 0

    # --- lifecycle ---------------------------------------------------------

    @classmethod
    def create(cls, root: str | Path) -> "Corpus":
        corpus = cls(root)
        corpus.root.mkdir(parents=True, exist_ok=True)
        (corpus.root / "tables").mkdir(exist_ok=True)
        corpus.flush()
        return corpus

    @classmethod
    def open(cls, root: str | Path) -> "Corpus":
        root = Path(root)
        manifest_path = root / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no corpus manifest at {manifest_path}")
        corpus = cls(root)
        manifest = json.loads(manifest_path.read_text())
        corpus.version = manifest.get("version", 0)
        for rec in manifest.get("tables", []):
            corpus._tables[rec["table_id"]] = TableRecord(**rec)
        ctx_path = root / "contexts.jsonl"
        if ctx_path.exists():
            for line in ctx_path.read_text().splitlines():
                if line.strip():
                    ctx = ContextDocument(**json.loads(line))
                    corpus._contexts.append(ctx)
                    corpus._ctx_by_table.setdefault(ctx.table_id, []).append(ctx)
        corpus._next_context = len(corpus._contexts)
        doc_path = root / "documents.jsonl"
        if doc_path.exists():
            for line in doc_path.read_text().splitlines():
                if line.strip():
                    doc = Document(**json.loads(line))
                    corpus._documents.append(doc)
                    corpus._docs_by_table.setdefault(doc.table_id, []).append(doc)
        return corpus

    def flush(self) -> None:
        """Persist manifest, contexts, and documents atomically."""
        with self._lock:
            manifest = {
                "version": self.version,
                "tables": [t.to_dict() for t in sorted(self._tables.values(), key=lambda t: t.table_id)],
            }
            _write_atomic(self.root / "manifest.json", json.dumps(manifest, indent=1))
            _write_atomic(
                self.root / "contexts.jsonl",
                "".join(json.dumps(c.to_dict()) + "\n" for c in self._contexts),
            )
            _write_atomic(
                self.root / "documents.jsonl",
                "".join(json.dumps(d.to_dict()) + "\n" for d in self._documents),
            )

    @contextlib.contextmanager
    def deferred(self):
        """Batch many mutations into a single flush (bulk ingestion)."""
        prev = self._autoflush
        self._autoflush = False
        try:
            yield self
        finally:
            self._autoflush = prev
            self.flush()

    def _commit(self) -> None:
        self.version += 1
        if self._autoflush:
            self.flush()

    # --- tables --------------------------------------------------------------

    def add_table(
        self,
        table_id: str,
        schema: list[str],
        rows: list[list[str]],
        source_uri: str,
    ) -> TableRecord:
        """Register a table from already-parsed rows (all cells strings)."""
        _check_table_id(table_id)
        if not schema:
            raise ParseError(f"table {table_id!r} has an empty schema")
        with self._lock:
            existing = self._tables.get(table_id)
            if existing is not None and existing.source_uri != source_uri:
                raise DuplicateId(
                    f"table_id {table_id!r} already registered for {existing.source_uri!r}"
                )
            if existing is not None and existing.schema == schema and self.rows(table_id) == rows:
                return existing  # identical re-ingest is a no-op
            record = TableRecord(
                table_id=table_id,
                schema=list(schema),
                row_count=len(rows),
                source_uri=source_uri,
                ingest_time=time.time(),
            )
            self._tables[table_id] = record
            self._rows[table_id] = [list(r) for r in rows]
            _write_atomic(
                self.root / "tables" / f"{table_id}.jsonl",
                "".join(json.dumps(r) + "\n" for r in rows),
            )
            if existing is not None and self._docs_by_table.get(table_id):
                # replacement invalidates previous summaries
                self._documents = [d for d in self._documents if d.table_id != table_id]
                self._docs_by_table.pop(table_id, None)
            self._commit()
            return record

    def ingest_table(
        self,
        source_path: str | Path,
        table_id: str | None = None,
        fmt: str = "csv",
    ) -> TableRecord:
        """Ingest a CSV or JSONL-rows file. Cells are kept verbatim as strings."""
        source_path = Path(source_path)
        if not source_path.exists():
            raise ParseError(f"no such file: {source_path}")
        table_id = table_id or source_path.stem
        if fmt == "csv":
            schema, rows = _parse_csv(source_path)
        elif fmt == "jsonl-rows":
            schema, rows = _parse_jsonl_rows(source_path)
        else:
            raise ParseError(f"unknown format {fmt!r}")
        return self.add_table(table_id, schema, rows, source_uri=str(source_path))

    def table(self, table_id: str) -> TableRecord:
        try:
            return self._tables[table_id]
        except KeyError:
            raise UnknownTable(table_id) from None

    def tables(self) -> list[TableRecord]:
        return sorted(self._tables.values(), key=lambda t: t.table_id)

    def has_table(self, table_id: str) -> bool:
        return table_id in self._tables

    def rows(self, table_id: str) -> list[list[str]]:
        self.table(table_id)
        rows = self._rows.get(table_id)
        if rows is None:
            path = self.root / "tables" / f"{table_id}.jsonl"
            rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
            self._rows[table_id] = rows
        return rows

    def remove_table(self, table_id: str) -> None:
        """Remove a table and cascade-delete its contexts and documents."""
        with self._lock:
            self.table(table_id)
            del self._tables[table_id]
            self._rows.pop(table_id, None)
            (self.root / "tables" / f"{table_id}.jsonl").unlink(missing_ok=True)
            if self._ctx_by_table.pop(table_id, None):
                self._contexts = [c for c in self._contexts if c.table_id != table_id]
            if self._docs_by_table.pop(table_id, None):
                self._documents = [d for d in self._documents if d.table_id != table_id]
            self._commit()

    def export_table(self, table_id: str, dest: str | Path) -> Path:
        """Write the table back out as CSV (header + rows)."""
        record = self.table(table_id)
        dest = Path(dest)
        with dest.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(record.schema)
            writer.writerows(self.rows(table_id))
        return dest

    # --- contexts ------------------------------------------------------------

    def register_context(
        self,
        table_id: str,
        text: str,
        source: str = "user-supplied",
        elicitation_index: int | None = None,
    ) -> ContextDocument:
        self.table(table_id)
        if not text.strip():
            raise EmptyText(f"empty context text for table {table_id!r}")
        with self._lock:
            ctx = ContextDocument(
                context_id=f"ctx-{self._next_context:06d}",
                table_id=table_id,
                text=text,
                source=source,
                elicitation_index=elicitation_index,
            )
            self._next_context += 1
            self._contexts.append(ctx)
            self._ctx_by_table.setdefault(table_id, []).append(ctx)
            self._commit()
            return ctx

    def contexts(self) -> list[ContextDocument]:
        return list(self._contexts)

    def contexts_for(self, table_id: str) -> list[ContextDocument]:
        return list(self._ctx_by_table.get(table_id, []))

    def context(self, context_id: str) -> ContextDocument:
        for c in self._contexts:
            if c.context_id == context_id:
                return c
        raise KeyError(context_id)

    # --- row sampling ----------------------------------------------------------

    def sample_rows(self, table_id: str, r: int, seed: int) -> list[list[str]]:
        """Uniform sample of min(r, row_count) rows without replacement.

        Deterministic for fixed (row multiset, r, seed): positions are drawn
        from the content-sorted row order, so physical row order is irrelevant.
        """
        rows = self.rows(table_id)
        m = min(r, len(rows))
        if m <= 0:
            return []
        order = sorted(range(len(rows)), key=lambda i: rows[i])
        rng = random.Random(seed)
        picked = rng.sample(order, m)
        return [rows[i] for i in picked]

    # --- documents --------------------------------------------------------------

    @property
    def documents(self) -> list[Document]:
        return list(self._documents)

    def documents_for(self, table_id: str, doc_type: str | None = None) -> list[Document]:
        docs = self._docs_by_table.get(table_id, [])
        if doc_type is None:
            return list(docs)
        return [d for d in docs if d.doc_type == doc_type]

    def add_documents(self, docs: list[Document]) -> None:
        with self._lock:
            for d in docs:
                if d.table_id not in self._tables:
                    raise UnknownTable(d.table_id)
                if d.doc_type not in DOC_TYPES:
                    raise ParseError(f"unknown doc_type {d.doc_type!r}")
            self._documents.extend(docs)
            for d in docs:
                self._docs_by_table.setdefault(d.table_id, []).append(d)
            self._commit()

    def remove_documents(self, table_id: str, doc_type: str | None = None) -> int:
        with self._lock:
            doomed = {
                d.doc_id
                for d in self._docs_by_table.get(table_id, [])
                if doc_type is None or d.doc_type == doc_type
            }
            if not doomed:
                return 0
            self._documents = [d for d in self._documents if d.doc_id not in doomed]
            self._docs_by_table[table_id] = [
                d for d in self._docs_by_table.get(table_id, []) if d.doc_id not in doomed
            ]
            self._commit()
            return len(doomed)


def _write_atomic(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content)
    tmp.replace(path)


def _parse_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path} is empty (no header)") from None
        if not header:
            raise ParseError(f"{path} has an empty header")
        rows = []
        for i, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: expected {len(header)} fields, got {len(row)}", row=i
                )
            rows.append(row)
    return header, rows


def _parse_jsonl_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    schema: list[str] | None = None
    rows: list[list[str]] = []
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})", row=i) from None
        if not isinstance(obj, dict):
            raise ParseError(f"{path}: each line must be an object", row=i)
        if schema is None:
            schema = list(obj.keys())
            if not schema:
                raise ParseError(f"{path}: first record has no fields", row=i)
        if set(obj.keys()) != set(schema):
            raise ParseError(f"{path}: field names differ from first record", row=i)
        rows.append([_cell_text(obj[col]) for col in schema])
    if schema is None:
        raise ParseError(f"{path} is empty (no records)")
    return schema, rows


def _cell_text(value) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return json.dumps(value)

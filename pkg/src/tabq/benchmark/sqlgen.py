"""Single-table SQL template: random generation, rendering, parsing, and
component-wise exact matching.

Generated queries never contain a FROM clause or JOIN: naming the table is
the discovery task itself, so the query (and any question derived from it)
must not give the table away. Clause inclusion follows the configured
probabilities independently, which keeps observed frequencies testable.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from ..config import TemplateProbabilities
from ..errors import EmptyTable, SqlParseError
from ..registry import Corpus

AGGREGATES = ("MAX", "MIN", "SUM", "AVG", "COUNT")
NUMERIC_AGGREGATES = ("MAX", "MIN", "SUM", "AVG")
OPERATORS = ("=", "<", ">", "<=", ">=")
COMPARISONS = ("<", ">", "<=", ">=")

_BARE_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_NUM_RE = re.compile(r"^-?\d+(\.\d+)?([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class SelectItem:
    column: str
    aggregate: str | None = None

    def render(self) -> str:
        if self.aggregate:
            return f"{self.aggregate}({_ident(self.column)})"
        return _ident(self.column)


@dataclass(frozen=True)
class Condition:
    column: str
    op: str
    literal: str
    quoted: bool

    def render(self) -> str:
        return f"{_ident(self.column)} {self.op} {_literal(self.literal, self.quoted)}"


@dataclass(frozen=True)
class Having:
    aggregate: str
    column: str
    op: str
    literal: str

    def render(self) -> str:
        return f"{self.aggregate}({_ident(self.column)}) {self.op} {self.literal}"


@dataclass
class SQLQuery:
    table_id: str  # provenance only; never rendered
    select_items: list[SelectItem]
    where: list[Condition] = field(default_factory=list)
    group_by: str | None = None
    having: Having | None = None
    order_by: tuple[SelectItem, str] | None = None  # (expr, ASC|DESC)
    limit: int | None = None

    def render(self) -> str:
        parts = ["SELECT " + ", ".join(item.render() for item in self.select_items)]
        if self.where:
            parts.append("WHERE " + " AND ".join(c.render() for c in self.where))
        if self.group_by:
            parts.append(f"GROUP BY {_ident(self.group_by)}")
        if self.having:
            parts.append("HAVING " + self.having.render())
        if self.order_by:
            expr, direction = self.order_by
            parts.append(f"ORDER BY {expr.render()} {direction}")
        if self.limit is not None:
            parts.append(f"LIMIT {self.limit}")
        return " ".join(parts)

    def referenced_columns(self) -> set[str]:
        cols = {item.column for item in self.select_items}
        cols.update(c.column for c in self.where)
        if self.group_by:
            cols.add(self.group_by)
        if self.having:
            cols.add(self.having.column)
        if self.order_by:
            cols.add(self.order_by[0].column)
        return cols


def _ident(name: str) -> str:
    if _BARE_IDENT_RE.match(name):
        return name
    return '"' + name.replace('"', '""') + '"'


def _literal(text: str, quoted: bool) -> str:
    if quoted:
        return "'" + text.replace("'", "''") + "'"
    return text


# --- generation -----------------------------------------------------------------


def column_values(schema: list[str], rows: list[list[str]]) -> dict[str, list[str]]:
    values: dict[str, list[str]] = {col: [] for col in schema}
    for row in rows:
        for col, cell in zip(schema, row):
            values[col].append(cell)
    return values


def is_numeric_column(values: list[str]) -> bool:
    """Numeric iff every non-empty cell parses as a number (and one exists)."""
    non_empty = [v for v in values if v.strip()]
    if not non_empty:
        return False
    return all(_NUM_RE.match(v.strip()) for v in non_empty)


def _numeric_pool(values: list[str]) -> list[str]:
    return [v.strip() for v in values if v.strip()]


def gen_sql(
    corpus: Corpus,
    table_id: str,
    config: TemplateProbabilities | None = None,
    seed: int = 0,
) -> SQLQuery:
    """Fill the template by random sampling over the table's columns/values.

    Deterministic per seed. Clause inclusion decisions are independent
    Bernoulli draws at the configured probabilities. Literals come from the
    column's observed values, so predicates are satisfiable.
    """
    config = config or TemplateProbabilities()
    table = corpus.table(table_id)
    rows = corpus.rows(table_id)
    if not rows:
        raise EmptyTable(f"table {table_id!r} has no rows")
    values = column_values(table.schema, rows)
    numeric = {col: is_numeric_column(vals) for col, vals in values.items()}
    rng = random.Random(seed)
    for _ in range(20):
        query = _draw(table.schema, values, numeric, config, rng, table_id)
        rendered = query.render()
        if not re.search(rf"\b{re.escape(table_id)}\b", rendered, re.IGNORECASE):
            return query
    raise EmptyTable(f"could not draw a query avoiding the name {table_id!r}")


def _draw(
    schema: list[str],
    values: dict[str, list[str]],
    numeric: dict[str, bool],
    config: TemplateProbabilities,
    rng: random.Random,
    table_id: str,
) -> SQLQuery:
    has_aggregate = rng.random() < config.p_aggregate
    has_group = rng.random() < config.p_group_by
    has_having = has_group and rng.random() < config.p_having_given_group
    has_order = rng.random() < config.p_order_by
    has_limit = rng.random() < config.p_limit

    plain_col = rng.choice(schema)
    agg_item: SelectItem | None = None
    if has_aggregate:
        agg_col = rng.choice(schema)
        choices = NUMERIC_AGGREGATES + ("COUNT",) if numeric[agg_col] else ("COUNT",)
        agg_item = SelectItem(agg_col, rng.choice(choices))

    # keep the select list valid: a bare column next to an aggregate needs GROUP BY
    if agg_item and not has_group:
        select_items = [agg_item]
    elif agg_item:
        select_items = [SelectItem(plain_col), agg_item]
    else:
        select_items = [SelectItem(plain_col)]
    group_by = plain_col if has_group else None

    n_where = rng.randint(1, config.max_where)
    where = []
    for _ in range(n_where):
        col = rng.choice(schema)
        if numeric[col]:
            op = rng.choice(OPERATORS)
            literal = rng.choice(_numeric_pool(values[col]))
            where.append(Condition(col, op, literal, quoted=False))
        else:
            where.append(Condition(col, "=", rng.choice(values[col] or [""]), quoted=True))

    having = None
    if has_having:
        if agg_item and agg_item.aggregate in NUMERIC_AGGREGATES:
            h_col, h_agg = agg_item.column, agg_item.aggregate
            literal = rng.choice(_numeric_pool(values[h_col]))
        else:
            numeric_cols = [c for c in schema if numeric[c]]
            if numeric_cols and rng.random() < 0.5:
                h_col = rng.choice(numeric_cols)
                h_agg = rng.choice(NUMERIC_AGGREGATES)
                literal = rng.choice(_numeric_pool(values[h_col]))
            else:
                h_col, h_agg = rng.choice(schema), "COUNT"
                literal = str(rng.randint(1, 5))
        having = Having(h_agg, h_col, rng.choice(OPERATORS), literal)

    order_by = None
    if has_order:
        if group_by:
            target = SelectItem(group_by)
        else:
            target = select_items[0]
        order_by = (target, rng.choice(("ASC", "DESC")))

    limit = rng.randint(1, 10) if has_limit else None

    return SQLQuery(
        table_id=table_id,
        select_items=select_items,
        where=where,
        group_by=group_by,
        having=having,
        order_by=order_by,
        limit=limit,
    )


# --- parsing ----------------------------------------------------------------------

_CLAUSE_WORDS = {"WHERE", "GROUP", "HAVING", "ORDER", "LIMIT"}


def _tokenize_sql(text: str) -> list[tuple[str, str]]:
    tokens: list[tuple[str, str]] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch == "'":
            j, buf = i + 1, []
            while True:
                if j >= n:
                    raise SqlParseError("unterminated string literal")
                if text[j] == "'":
                    if j + 1 < n and text[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(("str", "".join(buf)))
            i = j + 1
        elif ch == '"':
            j, buf = i + 1, []
            while True:
                if j >= n:
                    raise SqlParseError("unterminated quoted identifier")
                if text[j] == '"':
                    if j + 1 < n and text[j + 1] == '"':
                        buf.append('"')
                        j += 2
                        continue
                    break
                buf.append(text[j])
                j += 1
            tokens.append(("qident", "".join(buf)))
            i = j + 1
        elif text[i : i + 2] in ("<=", ">="):
            tokens.append(("op", text[i : i + 2]))
            i += 2
        elif ch in "<>=":
            tokens.append(("op", ch))
            i += 1
        elif ch in "(),;":
            tokens.append((ch, ch))
            i += 1
        else:
            m = re.match(r"-?\d+(\.\d+)?([eE][+-]?\d+)?|[A-Za-z_][A-Za-z0-9_]*", text[i:])
            if not m:
                raise SqlParseError(f"unexpected character {ch!r}")
            tok = m.group(0)
            kind = "num" if _NUM_RE.match(tok) else "word"
            tokens.append((kind, tok))
            i += len(tok)
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> tuple[str, str]:
        tok = self.peek()
        if tok is None:
            raise SqlParseError("unexpected end of input")
        self.pos += 1
        return tok

    def expect_word(self, word: str) -> None:
        kind, val = self.next()
        if kind != "word" or val.upper() != word:
            raise SqlParseError(f"expected {word}, got {val!r}")

    def at_word(self, word: str) -> bool:
        tok = self.peek()
        return tok is not None and tok[0] == "word" and tok[1].upper() == word

    def column(self) -> str:
        kind, val = self.next()
        if kind == "qident":
            return val
        if kind == "word" and val.upper() not in _CLAUSE_WORDS:
            return val
        raise SqlParseError(f"expected column name, got {val!r}")

    def select_item(self) -> SelectItem:
        tok = self.peek()
        if (
            tok is not None
            and tok[0] == "word"
            and tok[1].upper() in AGGREGATES
            and self.pos + 1 < len(self.tokens)
            and self.tokens[self.pos + 1][0] == "("
        ):
            agg = self.next()[1].upper()
            self.next()  # (
            col = self.column()
            kind, _ = self.next()
            if kind != ")":
                raise SqlParseError("expected ) after aggregate column")
            return SelectItem(col, agg)
        return SelectItem(self.column())

    def literal(self) -> tuple[str, bool]:
        kind, val = self.next()
        if kind == "str":
            return val, True
        if kind == "num":
            return val, False
        raise SqlParseError(f"expected literal, got {val!r}")


def parse_sql(text: str) -> SQLQuery:
    """Parse template-grammar SQL. FROM and JOIN are rejected outright."""
    tokens = _tokenize_sql(text)
    for kind, val in tokens:
        if kind == "word" and val.upper() in ("FROM", "JOIN"):
            raise SqlParseError(f"{val.upper()} is not part of the template grammar")
    p = _Parser(tokens)
    p.expect_word("SELECT")
    select_items = [p.select_item()]
    while p.peek() is not None and p.peek()[0] == ",":
        p.next()
        select_items.append(p.select_item())
    where: list[Condition] = []
    if p.at_word("WHERE"):
        p.next()
        while True:
            col = p.column()
            kind, op = p.next()
            if kind != "op":
                raise SqlParseError(f"expected comparison operator, got {op!r}")
            lit, quoted = p.literal()
            where.append(Condition(col, op, lit, quoted))
            if p.at_word("AND"):
                p.next()
                continue
            break
    group_by = None
    if p.at_word("GROUP"):
        p.next()
        p.expect_word("BY")
        group_by = p.column()
    having = None
    if p.at_word("HAVING"):
        p.next()
        item = p.select_item()
        if item.aggregate is None:
            raise SqlParseError("HAVING requires an aggregate expression")
        kind, op = p.next()
        if kind != "op":
            raise SqlParseError(f"expected comparison operator, got {op!r}")
        lit, _ = p.literal()
        having = Having(item.aggregate, item.column, op, lit)
    order_by = None
    if p.at_word("ORDER"):
        p.next()
        p.expect_word("BY")
        item = p.select_item()
        direction = "ASC"
        if p.at_word("ASC") or p.at_word("DESC"):
            direction = p.next()[1].upper()
        order_by = (item, direction)
    limit = None
    if p.at_word("LIMIT"):
        p.next()
        kind, val = p.next()
        if kind != "num":
            raise SqlParseError(f"expected LIMIT count, got {val!r}")
        limit = int(val)
    if p.peek() is not None and p.peek()[0] == ";":
        p.next()
    if p.peek() is not None:
        raise SqlParseError(f"trailing tokens at {p.peek()[1]!r}")
    if having is not None and group_by is None:
        raise SqlParseError("HAVING without GROUP BY")
    return SQLQuery(
        table_id="",
        select_items=select_items,
        where=where,
        group_by=group_by,
        having=having,
        order_by=order_by,
        limit=limit,
    )


# --- exact match -------------------------------------------------------------------


def _normalize(query: "SQLQuery | str"):
    if isinstance(query, str):
        query = parse_sql(query)
    select = frozenset(
        (item.column.lower(), item.aggregate.upper() if item.aggregate else None)
        for item in query.select_items
    )
    where = frozenset(
        (c.column.lower(), c.op, c.literal, c.quoted) for c in query.where
    )
    group = query.group_by.lower() if query.group_by else None
    having = (
        (query.having.aggregate.upper(), query.having.column.lower(), query.having.op, query.having.literal)
        if query.having
        else None
    )
    order = None
    if query.order_by:
        item, direction = query.order_by
        order = (item.column.lower(), item.aggregate.upper() if item.aggregate else None, direction.upper())
    return select, where, group, having, order, query.limit


def sql_exact_match(a: "SQLQuery | str", b: "SQLQuery | str") -> bool:
    """Component-wise equality: select items and WHERE conjuncts compare as
    sets, identifiers case-insensitively, everything else exactly. No
    execution-based equivalence."""
    return _normalize(a) == _normalize(b)


# --- alternative answers ---------------------------------------------------------------


def annotate_content_alternatives(sql: SQLQuery, corpus: Corpus) -> list[str]:
    """Tables that contain every referenced column and every equality literal.

    Column names match case-insensitively after trimming; equality literals
    match a value of the corresponding column by trimmed string equality.
    The generating table is always included. Output is sorted, so it is
    invariant to corpus ordering.
    """
    ref_cols = {c.lower().strip() for c in sql.referenced_columns()}
    equalities = [
        (c.column.lower().strip(), c.literal.strip())
        for c in sql.where
        if c.op == "="
    ]
    answers = {sql.table_id} if sql.table_id else set()
    for table in corpus.tables():
        if table.table_id in answers:
            continue
        lookup: dict[str, list[str]] = {}
        for col in table.schema:
            lookup.setdefault(col.lower().strip(), []).append(col)
        if not ref_cols.issubset(lookup.keys()):
            continue
        values = column_values(table.schema, corpus.rows(table.table_id))
        ok = True
        for col_key, literal in equalities:
            cols = lookup.get(col_key, [])
            if not any(
                any(v.strip() == literal for v in values[c]) for c in cols
            ):
                ok = False
                break
        if ok:
            answers.add(table.table_id)
    return sorted(answers)

"""Inverted index with Okapi-style BM25 scoring.

Tokenizer: lowercase, split on non-alphanumerics, no stemming or stopword
removal, so raw column names and cell values match literally. Score of block
d for query q:

    score(q, d) = sum over query tokens t of
                  idf(t) * tf / (tf + k1 * (1 - b + b * dl / avgdl))
    idf(t)      = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))

Repeated query tokens contribute once per occurrence. Results are ordered by
descending score with ties broken by block_id ascending.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

from ..errors import UnknownBlock

_TOKEN_RE = re.compile(r"[a-z0-9]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class FullTextIndex:
    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self.postings: dict[str, dict[str, int]] = {}  # term -> {block_id: tf}
        self.doc_lengths: dict[str, int] = {}
        self.N = 0
        self.avgdl = 0.0

    # --- maintenance -------------------------------------------------------

    def add_block(self, block_id: str, text: str) -> None:
        if block_id in self.doc_lengths:
            self.remove_block(block_id)
        tokens = tokenize(text)
        self.doc_lengths[block_id] = len(tokens)
        for token in tokens:
            self.postings.setdefault(token, {})
            self.postings[token][block_id] = self.postings[token].get(block_id, 0) + 1

    def remove_block(self, block_id: str) -> None:
        if block_id not in self.doc_lengths:
            raise UnknownBlock(block_id)
        del self.doc_lengths[block_id]
        dead_terms = []
        for term, plist in self.postings.items():
            if block_id in plist:
                del plist[block_id]
                if not plist:
                    dead_terms.append(term)
        for term in dead_terms:
            del self.postings[term]

    def commit(self) -> None:
        """Recompute N and avgdl after a batch of mutations."""
        self.N = len(self.doc_lengths)
        self.avgdl = sum(self.doc_lengths.values()) / self.N if self.N else 0.0

    def block_ids(self) -> set[str]:
        return set(self.doc_lengths)

    # --- scoring -----------------------------------------------------------

    def _idf(self, term: str) -> float:
        n_t = len(self.postings.get(term, ()))
        return math.log(1.0 + (self.N - n_t + 0.5) / (n_t + 0.5))

    def _score_tokens(self, tokens: list[str], block_id: str) -> float:
        dl = self.doc_lengths[block_id]
        norm = self.k1 * (1.0 - self.b + self.b * (dl / self.avgdl if self.avgdl else 0.0))
        score = 0.0
        for token in tokens:
            tf = self.postings.get(token, {}).get(block_id, 0)
            if tf:
                score += self._idf(token) * tf / (tf + norm)
        return score

    def search(self, query: str, topn: int) -> list[tuple[str, float]]:
        """Top-n blocks by raw BM25 score. Unknown terms contribute nothing."""
        tokens = tokenize(query)
        candidates: set[str] = set()
        for token in set(tokens):
            candidates.update(self.postings.get(token, ()))
        scored = [(block_id, self._score_tokens(tokens, block_id)) for block_id in candidates]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:topn]

    def score(self, query: str, block_id: str) -> float:
        """Point evaluation: same score search would assign to this block."""
        if block_id not in self.doc_lengths:
            raise UnknownBlock(block_id)
        return self._score_tokens(tokenize(query), block_id)

    # --- persistence ---------------------------------------------------------

    def to_payload(self) -> dict:
        """Canonical serialization: terms and postings sorted, so an
        incrementally maintained index serializes byte-identically to a
        from-scratch rebuild of the same blocks."""
        return {
            "k1": self.k1,
            "b": self.b,
            "postings": {
                term: sorted(plist.items())
                for term, plist in sorted(self.postings.items())
            },
            "doc_lengths": dict(sorted(self.doc_lengths.items())),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "FullTextIndex":
        index = cls(k1=payload["k1"], b=payload["b"])
        index.postings = {
            term: {block_id: tf for block_id, tf in plist}
            for term, plist in payload["postings"].items()
        }
        index.doc_lengths = dict(payload["doc_lengths"])
        index.commit()
        return index

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_payload(), sort_keys=True))
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "FullTextIndex":
        return cls.from_payload(json.loads(Path(path).read_text()))

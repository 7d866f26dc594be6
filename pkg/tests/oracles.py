"""Independent reference implementations used to check the engines.

These stay deliberately naive: direct transcriptions of the scoring and
reordering definitions, sharing no code with the implementations they audit.
"""

import math

import numpy as np

from tabq.indexer import tokenize


def reference_bm25(blocks: dict[str, str], query: str, k1=1.2, b=0.75) -> dict[str, float]:
    """Brute-force BM25 over every block."""
    token_lists = {bid: tokenize(text) for bid, text in blocks.items()}
    N = len(blocks)
    avgdl = sum(len(t) for t in token_lists.values()) / N if N else 0.0
    scores = {}
    for bid, tokens in token_lists.items():
        dl = len(tokens)
        score = 0.0
        for term in tokenize(query):
            tf = tokens.count(term)
            if tf == 0:
                continue
            n_t = sum(1 for other in token_lists.values() if term in other)
            idf = math.log(1 + (N - n_t + 0.5) / (n_t + 0.5))
            score += idf * tf / (tf + k1 * (1 - b + b * dl / avgdl))
        scores[bid] = score
    return scores


def exhaustive_nearest(ids: list[str], matrix: np.ndarray, query: np.ndarray, topn: int):
    """Exact top-n by cosine (unit vectors), ties broken by id."""
    sims = matrix @ query
    order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))
    return [ids[i] for i in order[:topn]]


def stable_partition(items: list, relevant: list[bool]) -> list:
    """Relevant items first, both groups in original order."""
    return [x for x, r in zip(items, relevant) if r] + [
        x for x, r in zip(items, relevant) if not r
    ]


def minmax_reference(xs: list[float]) -> list[float]:
    lo, hi = min(xs), max(xs)
    if hi == lo:
        return [1.0] * len(xs)
    return [(x - lo) / (hi - lo) for x in xs]

"""tabq: natural-language table discovery.

Tables are represented as compact content summaries (an LLM-narrated schema
summary plus a handful of row summaries) and free-text contexts, indexed in
both a BM25 full-text index and a vector index, and retrieved by hybrid
score fusion refined with a binary LLM relevance judge.
"""

__version__ = "0.1.0"

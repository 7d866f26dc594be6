"""Discovery indices: block packing, BM25 full-text, HNSW vectors, storage."""

from .blocks import Block, pack_blocks
from .fulltext import FullTextIndex, tokenize
from .store import IndexStore, build
from .vector import VectorIndex

__all__ = [
    "Block",
    "pack_blocks",
    "FullTextIndex",
    "tokenize",
    "VectorIndex",
    "IndexStore",
    "build",
]

"""Vector index over block embeddings: exact cosine search for small corpora,
a hierarchical navigable small-world (HNSW) graph above ``exact_threshold``.

Vectors are unit-normalized by the embedding provider, so cosine similarity
is a dot product and HNSW distance is ``1 - dot``. Level assignment uses a
seeded RNG and builds insert in sorted block order, making graph construction
reproducible. Removals tombstone graph nodes (traversal may pass through
them, results never include them); tombstones are compacted on save or when
they exceed a quarter of the index.
"""

from __future__ import annotations

import heapq
import json
import math
import random
import threading
from pathlib import Path

import numpy as np

from ..errors import DimensionMismatch, UnknownBlock

DEFAULT_M = 16
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EXACT_THRESHOLD = 2000
_LEVEL_NORM = 1.0 / math.log(2.0)
_REBUILD_TOMBSTONE_FRACTION = 0.25


class VectorIndex:
    def __init__(
        self,
        dimension: int,
        m: int = DEFAULT_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
        seed: int = 13,
    ):
        self.dimension = dimension
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.exact_threshold = exact_threshold
        self.seed = seed
        self.ids: list[str] = []
        self.row_of: dict[str, int] = {}
        self._matrix = np.zeros((0, dimension), dtype=np.float32)
        self._deleted: set[int] = set()
        # graph state (built lazily, only used above exact_threshold)
        self._neighbors: list[list[list[int]]] = []  # row -> layer -> neighbor rows
        self._levels: list[int] = []
        self._entry: int | None = None
        self._rng = random.Random(seed)
        self._graph_rows = 0  # rows already wired into the graph
        self._graph_lock = threading.Lock()

    # --- bookkeeping ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.ids) - len(self._deleted)

    def block_ids(self) -> set[str]:
        return {bid for bid, row in self.row_of.items() if row not in self._deleted}

    def vector(self, block_id: str) -> np.ndarray:
        row = self.row_of.get(block_id)
        if row is None or row in self._deleted:
            raise UnknownBlock(block_id)
        return self._matrix[row]

    def _check_dim(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dimension:
            raise DimensionMismatch(
                f"query dimension {vec.shape[0]} != index dimension {self.dimension}"
            )
        return vec

    def add(self, block_id: str, vec: np.ndarray) -> None:
        vec = self._check_dim(vec)
        if block_id in self.row_of and self.row_of[block_id] not in self._deleted:
            self.remove(block_id)
        row = len(self.ids)
        self.ids.append(block_id)
        self.row_of[block_id] = row
        if row >= self._matrix.shape[0]:
            grown = np.zeros((max(64, self._matrix.shape[0] * 2), self.dimension), np.float32)
            grown[: self._matrix.shape[0]] = self._matrix
            self._matrix = grown
        self._matrix[row] = vec
        if self._graph_rows:
            self._insert_node(row)

    def remove(self, block_id: str) -> None:
        row = self.row_of.get(block_id)
        if row is None or row in self._deleted:
            raise UnknownBlock(block_id)
        self._deleted.add(row)
        del self.row_of[block_id]
        if self._deleted and len(self._deleted) > _REBUILD_TOMBSTONE_FRACTION * len(self.ids):
            self._compact()

    def score(self, block_id: str, query: np.ndarray) -> float:
        """Exact cosine similarity between the query and a stored block."""
        query = self._check_dim(query)
        return float(np.dot(self.vector(block_id), query))

    # --- search ---------------------------------------------------------------

    def search(
        self, query: np.ndarray, topn: int, ef_search: int | None = None
    ) -> list[tuple[str, float]]:
        """Top-n blocks by cosine similarity, ties broken by block_id.

        Exact exhaustive search at or below ``exact_threshold`` live blocks;
        HNSW beyond that.
        """
        query = self._check_dim(query)
        if len(self) == 0 or topn <= 0:
            return []
        if len(self) <= self.exact_threshold:
            return self._search_exact(query, topn)
        return self._search_hnsw(query, topn, ef_search or max(128, 2 * topn))

    def _live_rows(self) -> np.ndarray:
        rows = np.arange(len(self.ids))
        if self._deleted:
            mask = np.ones(len(self.ids), dtype=bool)
            mask[list(self._deleted)] = False
            rows = rows[mask]
        return rows

    def _search_exact(self, query: np.ndarray, topn: int) -> list[tuple[str, float]]:
        rows = self._live_rows()
        sims = self._matrix[rows] @ query
        scored = [(self.ids[r], float(s)) for r, s in zip(rows, sims)]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:topn]

    def _search_hnsw(self, query: np.ndarray, topn: int, ef: int) -> list[tuple[str, float]]:
        self._ensure_graph()
        ef = max(ef, topn) + len(self._deleted)
        entry = self._entry
        if entry is None:
            return []
        for layer in range(self._levels[entry], 0, -1):
            entry = self._greedy_layer(query, entry, layer)
        found = self._search_layer(query, [entry], 0, ef)
        live = [(self.ids[row], float(-dist + 1.0)) for dist, row in found if row not in self._deleted]
        live.sort(key=lambda item: (-item[1], item[0]))
        return live[:topn]

    # --- HNSW internals --------------------------------------------------------

    def _dist(self, query: np.ndarray, rows: list[int]) -> np.ndarray:
        return 1.0 - self._matrix[rows] @ query

    def _ensure_graph(self) -> None:
        # lazy build; double-checked so concurrent readers build it once
        if self._graph_rows == len(self.ids):
            return
        with self._graph_lock:
            if self._graph_rows != len(self.ids):
                self._build_graph()

    def _build_graph(self) -> None:
        self._neighbors = [[] for _ in self.ids]
        self._levels = [0] * len(self.ids)
        self._entry = None
        self._graph_rows = 0
        self._rng = random.Random(self.seed)
        order = sorted(range(len(self.ids)), key=lambda r: self.ids[r])
        for row in order:
            if row not in self._deleted:
                self._insert_node(row)
        self._graph_rows = len(self.ids)

    def _random_level(self) -> int:
        return int(-math.log(self._rng.uniform(1e-12, 1.0)) * _LEVEL_NORM)

    def _insert_node(self, row: int) -> None:
        while len(self._neighbors) < len(self.ids):
            self._neighbors.append([])
            self._levels.append(0)
        level = self._random_level()
        self._levels[row] = level
        self._neighbors[row] = [[] for _ in range(level + 1)]
        self._graph_rows = max(self._graph_rows, row + 1)
        if self._entry is None:
            self._entry = row
            return
        query = self._matrix[row]
        entry = self._entry
        for layer in range(self._levels[self._entry], level, -1):
            entry = self._greedy_layer(query, entry, layer)
        for layer in range(min(level, self._levels[self._entry]), -1, -1):
            candidates = self._search_layer(query, [entry], layer, self.ef_construction)
            m = self.m0 if layer == 0 else self.m
            chosen = [r for _, r in heapq.nsmallest(m, candidates)]
            self._neighbors[row][layer] = list(chosen)
            for other in chosen:
                links = self._neighbors[other][layer]
                links.append(row)
                cap = self.m0 if layer == 0 else self.m
                if len(links) > cap:
                    dists = self._dist(self._matrix[other], links)
                    keep = np.argsort(dists, kind="stable")[:cap]
                    self._neighbors[other][layer] = [links[i] for i in keep]
            entry = chosen[0] if chosen else entry
        if level > self._levels[self._entry]:
            self._entry = row

    def _greedy_layer(self, query: np.ndarray, entry: int, layer: int) -> int:
        best = entry
        best_dist = float(self._dist(query, [entry])[0])
        improved = True
        while improved:
            improved = False
            links = [r for r in self._neighbors[best][layer] if self._levels[r] >= layer]
            if not links:
                break
            dists = self._dist(query, links)
            idx = int(np.argmin(dists))
            if dists[idx] < best_dist:
                best, best_dist = links[idx], float(dists[idx])
                improved = True
        return best

    def _search_layer(
        self, query: np.ndarray, entries: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        visited = set(entries)
        dists = self._dist(query, entries)
        candidates = [(float(d), r) for d, r in zip(dists, entries)]
        heapq.heapify(candidates)
        best = [(-d, r) for d, r in candidates]
        heapq.heapify(best)
        while candidates:
            dist, row = heapq.heappop(candidates)
            if len(best) >= ef and dist > -best[0][0]:
                break
            fresh = [
                r
                for r in self._neighbors[row][layer]
                if r not in visited and len(self._neighbors[r]) > layer
            ]
            if not fresh:
                continue
            visited.update(fresh)
            for r, d in zip(fresh, self._dist(query, fresh)):
                d = float(d)
                if len(best) < ef:
                    heapq.heappush(candidates, (d, r))
                    heapq.heappush(best, (-d, r))
                elif d < -best[0][0]:
                    heapq.heappush(candidates, (d, r))
                    heapq.heappushpop(best, (-d, r))
        return sorted((-nd, r) for nd, r in best)

    # --- compaction & persistence -------------------------------------------------

    def _compact(self) -> None:
        live = [r for r in range(len(self.ids)) if r not in self._deleted]
        self._matrix = self._matrix[live].copy()
        self.ids = [self.ids[r] for r in live]
        self.row_of = {bid: i for i, bid in enumerate(self.ids)}
        self._deleted = set()
        self._neighbors, self._levels, self._entry = [], [], None
        self._graph_rows = 0

    def save(self, directory: str | Path) -> None:
        """Persist live vectors (tombstones dropped). Never mutates the
        in-memory structures, so a snapshot being read stays valid."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        live = [r for r in range(len(self.ids)) if r not in self._deleted]
        np.save(directory / "vectors.npy", self._matrix[live])
        meta = {
            "dimension": self.dimension,
            "m": self.m,
            "ef_construction": self.ef_construction,
            "exact_threshold": self.exact_threshold,
            "seed": self.seed,
            "ids": [self.ids[r] for r in live],
        }
        (directory / "meta.json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, directory: str | Path) -> "VectorIndex":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        index = cls(
            dimension=meta["dimension"],
            m=meta["m"],
            ef_construction=meta["ef_construction"],
            exact_threshold=meta["exact_threshold"],
            seed=meta["seed"],
        )
        matrix = np.load(directory / "vectors.npy")
        index.ids = list(meta["ids"])
        index.row_of = {bid: i for i, bid in enumerate(index.ids)}
        index._matrix = matrix.astype(np.float32)
        return index

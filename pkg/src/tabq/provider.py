"""Completion and embedding backends plus the adaptive batch scheduler.

Batched LLM inference is the throughput bottleneck of corpus summarization,
and the workable batch size depends on prompt sizes, not just prompt count.
Two pieces address that here: ``pack_balanced`` spreads prompts so every
batch carries a similar token load (a balanced packing admits much larger
batch sizes than naive chunking), and ``AdaptiveBatcher`` binary-searches
the batch size at runtime, shrinking on capacity failures and growing after
a streak of successes.

Deterministic stub backends (hash embedder, scripted completions) make every
downstream module testable offline.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import logging
import math
import re
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, CapacityFloor, ExecutorError, TransportError

logger = logging.getLogger(__name__)

STUB_DIMENSION = 256


def estimate_tokens(text: str) -> int:
    """Whitespace-language heuristic: ~4 bytes per token, minimum 1."""
    return max(1, math.ceil(len(text.encode("utf-8")) / 4))


@dataclass
class Prompt:
    """Role-tagged chat messages with a size estimate.

    ``key`` is an optional caller-declared identity used by scripted stub
    backends to look up fixture completions.
    """

    messages: list[tuple[str, str]]
    key: str | None = None
    token_estimate: int = field(init=False)

    def __post_init__(self):
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unsupported role {role!r}")
        self.token_estimate = estimate_tokens("".join(t for _, t in self.messages))

    @classmethod
    def build(cls, system: str, user: str, key: str | None = None) -> "Prompt":
        return cls(messages=[("system", system), ("user", user)], key=key)

    @property
    def user_text(self) -> str:
        return "\n".join(t for role, t in self.messages if role == "user")


@dataclass
class BatchPlan:
    batches: list[list[int]]
    batch_size: int


def pack_balanced(prompts: list[Prompt], batch_size: int) -> BatchPlan:
    """Spread prompts over ceil(n/batch_size) batches with balanced token sums.

    Prompts are sorted by token estimate descending, then each is assigned to
    the batch with the smallest current token sum that still has a free slot
    (ties broken by batch index). Deterministic for a fixed input.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(prompts)
    if n == 0:
        return BatchPlan(batches=[], batch_size=batch_size)
    n_batches = math.ceil(n / batch_size)
    order = sorted(range(n), key=lambda i: (-prompts[i].token_estimate, i))
    batches: list[list[int]] = [[] for _ in range(n_batches)]
    heap = [(0, b) for b in range(n_batches)]  # (token sum, batch index)
    heapq.heapify(heap)
    for i in order:
        total, b = heapq.heappop(heap)
        batches[b].append(i)
        if len(batches[b]) < batch_size:
            heapq.heappush(heap, (total + prompts[i].token_estimate, b))
    return BatchPlan(batches=[b for b in batches if b], batch_size=batch_size)


class CompletionBackend:
    """Interface for chat-completion backends."""

    def complete_batch(self, prompts: list[Prompt]) -> list[str]:
        raise NotImplementedError

    def complete(self, prompt: Prompt) -> str:
        return self.complete_batch([prompt])[0]


class EmbeddingBackend:
    """Interface for text-embedding backends. Vectors are unit L2 norm."""

    dimension: int

    def embed(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


class AdaptiveBatcher:
    """Binary-search scheduler for the batch size of a completion backend.

    Keeps a live range [lo, hi]; the working size is its midpoint. A capacity
    failure (``ExecutorError(capacity=True)``) shrinks hi to size-1 and the
    failed prompts are re-planned at the new size; ``grow_after`` consecutive
    successful batches raise lo to size+1. Non-capacity failures are retried
    ``retries`` times, then propagate. Every execution returns exactly one
    completion per prompt, in input order.
    """

    def __init__(
        self,
        executor: CompletionBackend,
        min_bs: int = 1,
        max_bs: int = 32,
        grow_after: int = 3,
        retries: int = 2,
    ):
        if not (1 <= min_bs <= max_bs):
            raise ValueError("need 1 <= min_bs <= max_bs")
        self.executor = executor
        self.min_bs = min_bs
        self.max_bs = max_bs
        self.grow_after = grow_after
        self.retries = retries
        self.size_history: list[tuple[int, bool]] = []  # (size, succeeded) per probe
        self.current_size = (min_bs + max_bs) // 2

    def execute(self, prompts: list[Prompt]) -> list[str]:
        if not prompts:
            return []
        results: dict[int, str] = {}
        pending = list(range(len(prompts)))
        lo, hi = self.min_bs, self.max_bs
        size = (lo + hi) // 2
        streak = 0
        self.size_history = []

        while pending:
            plan = pack_balanced([prompts[i] for i in pending], size)
            replan = False
            done: set[int] = set()
            for batch in plan.batches:
                idxs = [pending[j] for j in batch]
                try:
                    texts = self._run_batch([prompts[i] for i in idxs], size)
                except ExecutorError as exc:
                    if not exc.capacity:
                        raise
                    self.size_history.append((size, False))
                    if size <= self.min_bs:
                        raise CapacityFloor(
                            f"capacity failure at minimum batch size {self.min_bs}"
                        ) from exc
                    hi = size - 1
                    lo = min(lo, hi)
                    size = (lo + hi) // 2
                    streak = 0
                    replan = True
                    break
                self.size_history.append((size, True))
                for i, text in zip(idxs, texts):
                    results[i] = text
                done.update(idxs)
                streak += 1
                if streak >= self.grow_after and size < hi:
                    lo = min(size + 1, hi)
                    size = (lo + hi) // 2
                    streak = 0
                    replan = True
                    break
            pending = [i for i in pending if i not in done]
            if not replan and pending:
                raise ExecutorError("scheduler made no progress")  # pragma: no cover
        self.current_size = size
        return [results[i] for i in range(len(prompts))]

    def _run_batch(self, batch: list[Prompt], size: int) -> list[str]:
        attempts = 0
        while True:
            try:
                texts = self.executor.complete_batch(batch)
            except ExecutorError as exc:
                if exc.capacity:
                    raise
                attempts += 1
                if attempts > self.retries:
                    raise
                logger.warning("batch failed (%s), retry %d/%d", exc, attempts, self.retries)
                continue
            if len(texts) != len(batch):
                raise BackendError(
                    f"backend returned {len(texts)} completions for {len(batch)} prompts"
                )
            return texts


def adaptive_execute(
    prompts: list[Prompt],
    executor: CompletionBackend,
    min_bs: int = 1,
    max_bs: int = 32,
    grow_after: int = 3,
    retries: int = 2,
) -> list[str]:
    """One-shot wrapper around :class:`AdaptiveBatcher`."""
    return AdaptiveBatcher(executor, min_bs, max_bs, grow_after, retries).execute(prompts)


# --- stub backends ------------------------------------------------------------

_WORD_RE = re.compile(r"[a-z0-9]+")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def jaccard(a: str, b: str) -> float:
    """Word-set Jaccard overlap between two texts."""
    wa, wb = set(_words(a)), set(_words(b))
    if not wa and not wb:
        return 0.0
    return len(wa & wb) / len(wa | wb)


class HashEmbedder(EmbeddingBackend):
    """Deterministic feature-hashing embedder.

    Lowercase word unigrams and bigrams are hashed into a fixed-dimension
    signed feature vector, then L2-normalized. Lexical overlap between texts
    translates into cosine similarity, which is a good enough semantic proxy
    for offline tests.
    """

    def __init__(self, dimension: int = STUB_DIMENSION):
        self.dimension = dimension

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            words = _words(text)
            features = words + [f"{a} {b}" for a, b in zip(words, words[1:])]
            if not features:
                features = ["<empty>"]
            for feat in features:
                h = int.from_bytes(
                    hashlib.blake2b(feat.encode(), digest_size=8).digest(), "big"
                )
                sign = 1.0 if h & 1 else -1.0
                out[row, (h >> 1) % self.dimension] += sign
            out[row] /= np.linalg.norm(out[row])
        return out


class ScriptedCompletion(CompletionBackend):
    """Fixture-driven completion stub.

    Looks up each prompt's declared ``key`` in the fixture map. Prompts
    without a fixture fall back to a heuristic relevance judge when the user
    message carries ``Question:``/``Document:`` fields (relevant iff word
    Jaccard >= 0.1), and to an empty completion otherwise.
    """

    JACCARD_THRESHOLD = 0.1

    def __init__(self, fixtures: dict[str, str] | None = None):
        self.fixtures = dict(fixtures or {})
        self.calls: list[Prompt] = []

    @classmethod
    def from_file(cls, path) -> "ScriptedCompletion":
        return cls(json.loads(open(path).read()))

    def complete_batch(self, prompts: list[Prompt]) -> list[str]:
        self.calls.extend(prompts)
        return [self._one(p) for p in prompts]

    def _one(self, prompt: Prompt) -> str:
        if prompt.key is not None and prompt.key in self.fixtures:
            return self.fixtures[prompt.key]
        question, document = _parse_judge_fields(prompt.user_text)
        if question is not None and document is not None:
            relevant = jaccard(question, document) >= self.JACCARD_THRESHOLD
            return "yes" if relevant else "no"
        return ""


def _parse_judge_fields(text: str) -> tuple[str | None, str | None]:
    # judge prompts put the (possibly multi-line) document last
    q_match = re.search(r"^Question:\s*(.*)$", text, re.MULTILINE)
    d_match = re.search(r"^Document:\s*(.*)\Z", text, re.MULTILINE | re.DOTALL)
    question = q_match.group(1).strip() if q_match else None
    document = d_match.group(1).strip() if d_match else None
    return question, document


# --- HTTP backends --------------------------------------------------------------

_CAPACITY_STATUS = {413, 429, 507}
_CAPACITY_HINTS = ("out of memory", "oom", "too many tokens", "context length")


class HttpCompletionBackend(CompletionBackend):
    """Chat-completion client for any endpoint accepting role-tagged messages
    (OpenAI-compatible wire format). Out-of-capacity responses are surfaced
    as ``ExecutorError(capacity=True)`` so the adaptive scheduler can react.
    """

    def __init__(
        self,
        url: str,
        model: str = "default",
        api_key: str | None = None,
        timeout: float = 120.0,
        max_inflight: int = 4,
        temperature: float = 0.0,
    ):
        import httpx

        self.url = url
        self.model = model
        self.timeout = timeout
        self.temperature = temperature
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)
        self._gate = threading.Semaphore(max_inflight)

    def complete_batch(self, prompts: list[Prompt]) -> list[str]:
        return [self._one(p) for p in prompts]

    def _one(self, prompt: Prompt) -> str:
        import httpx

        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": role, "content": text} for role, text in prompt.messages],
        }
        with self._gate:
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.HTTPError as exc:
                raise TransportError(str(exc)) from exc
        if resp.status_code in _CAPACITY_STATUS:
            raise ExecutorError(f"HTTP {resp.status_code}", capacity=True)
        if resp.status_code >= 400:
            body = resp.text[:500]
            if any(h in body.lower() for h in _CAPACITY_HINTS):
                raise ExecutorError(f"HTTP {resp.status_code}: {body}", capacity=True)
            raise BackendError(f"HTTP {resp.status_code}: {body}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc


class HttpEmbeddingBackend(EmbeddingBackend):
    """Embedding client for endpoints accepting ``{"input": [texts]}``."""

    def __init__(
        self,
        url: str,
        model: str = "default",
        api_key: str | None = None,
        dimension: int = STUB_DIMENSION,
        timeout: float = 120.0,
        max_inflight: int = 4,
    ):
        import httpx

        self.url = url
        self.model = model
        self.dimension = dimension
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers)
        self._gate = threading.Semaphore(max_inflight)

    def embed(self, texts: list[str]) -> np.ndarray:
        import httpx

        with self._gate:
            try:
                resp = self._client.post(self.url, json={"model": self.model, "input": texts})
            except httpx.HTTPError as exc:
                raise TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            vectors = np.array([item["embedding"] for item in resp.json()["data"]], dtype=np.float64)
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        if vectors.shape != (len(texts), self.dimension):
            self.dimension = vectors.shape[1] if vectors.ndim == 2 else self.dimension
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return vectors / norms

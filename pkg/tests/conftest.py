"""Shared fixtures: corpus builders and instrumented stub backends."""

import random

import pytest


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[acceptance] {name}: {'PASS' if report.passed else 'FAIL'}")

from tabq.errors import BackendError, ExecutorError, ProviderError
from tabq.provider import HashEmbedder, Prompt, ScriptedCompletion
from tabq.registry import Corpus


@pytest.fixture
def corpus(tmp_path):
    return Corpus.create(tmp_path / "corpus")


@pytest.fixture
def embedder():
    return HashEmbedder()


def add_demo_table(corpus, table_id="batting", rows=None):
    schema = ["Player", "AB", "AVG", "BABIP"]
    rows = rows or [
        ["Smith", "76", "0.290", "0.317"],
        ["Jones", "11", "0.190", "0.111"],
        ["Brown", "54", "0.250", "0.301"],
    ]
    return corpus.add_table(table_id, schema, rows, f"mem://{table_id}")


def make_tables(corpus, count, columns=4, rows=10, seed=0, prefix="t"):
    """Plant `count` synthetic tables with per-table column names."""
    rng = random.Random(seed)
    with corpus.deferred():
        for i in range(count):
            schema = [f"{prefix}{i}_c{j}" for j in range(columns)]
            data = [
                [f"val{rng.randrange(100)}" for _ in range(columns)] for _ in range(rows)
            ]
            corpus.add_table(f"{prefix}{i:03d}", schema, data, f"mem://{prefix}{i}")
    return [t.table_id for t in corpus.tables()]


class ThresholdExecutor(ScriptedCompletion):
    """Completion stub that fails with a capacity error whenever a batch's
    token sum exceeds a hidden threshold."""

    def __init__(self, token_limit, fixtures=None):
        super().__init__(fixtures)
        self.token_limit = token_limit
        self.batches = []

    def complete_batch(self, prompts):
        total = sum(p.token_estimate for p in prompts)
        self.batches.append((len(prompts), total))
        if total > self.token_limit:
            raise ExecutorError(f"batch of {total} tokens over limit", capacity=True)
        return super().complete_batch(prompts)


class FlakyExecutor(ScriptedCompletion):
    """Raises a non-capacity error for the first `failures` batch calls."""

    def __init__(self, failures, fixtures=None):
        super().__init__(fixtures)
        self.failures = failures
        self.attempts = 0

    def complete_batch(self, prompts):
        self.attempts += 1
        if self.attempts <= self.failures:
            raise ExecutorError("transient backend hiccup", capacity=False)
        return super().complete_batch(prompts)


class FailingKeyExecutor(ScriptedCompletion):
    """Fails any batch containing a prompt with one of the poisoned keys."""

    def __init__(self, bad_keys, fixtures=None):
        super().__init__(fixtures)
        self.bad_keys = set(bad_keys)

    def complete_batch(self, prompts):
        for p in prompts:
            if p.key in self.bad_keys:
                raise BackendError(f"backend rejected {p.key}")
        return super().complete_batch(prompts)


class FailingEmbedder(HashEmbedder):
    def embed(self, texts):
        raise ProviderError("embedding backend down")


def echo_prompt(key):
    return Prompt.build("echo", key, key=key)

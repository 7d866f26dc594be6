"""Runtime configuration: a single JSON file with environment overrides.

Unknown keys are rejected on load so typos fail fast. Every default matches
the package-wide contract values (BM25 k1/b, fusion alpha, candidate factor
n, sampler r, batch scheduler bounds, ...).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

ENV_LLM_URL = "TABQ_LLM_URL"
ENV_EMBED_URL = "TABQ_EMBED_URL"
ENV_API_KEY = "TABQ_API_KEY"


@dataclass
class TemplateProbabilities:
    p_aggregate: float = 0.5
    p_group_by: float = 0.3
    p_having_given_group: float = 0.5
    p_order_by: float = 0.3
    p_limit: float = 0.2
    max_where: int = 2

    def validate(self) -> None:
        for name in ("p_aggregate", "p_group_by", "p_having_given_group", "p_order_by", "p_limit"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.max_where < 1:
            raise ValueError("max_where must be >= 1")


@dataclass
class Config:
    # provider backends: "stub" keeps everything offline and deterministic
    provider: str = "stub"
    llm_url: str | None = None
    embed_url: str | None = None
    api_key: str | None = None
    llm_model: str = "default"
    embed_model: str = "default"
    embed_dimension: int = 256
    fixtures_path: str | None = None
    max_inflight: int = 4

    # batch scheduler
    min_batch_size: int = 1
    max_batch_size: int = 32
    grow_after: int = 3
    retries: int = 2

    # summarizer
    r: int = 5
    seed: int = 42
    separator: str = " | "
    cell_truncate: int = 256

    # indexing
    k1: float = 1.2
    b: float = 0.75
    embed_window: int = 512
    hnsw_m: int = 16
    hnsw_ef_construction: int = 200
    exact_threshold: int = 2000

    # retrieval
    k: int = 5
    n: int = 5
    alpha: float = 0.5
    judge_enabled: bool = True
    dedupe_tables: bool = False
    judge_pool: int | None = None  # defaults to n*k at query time
    ef_search_min: int = 128

    # benchmark generation
    leak_len: int = 20
    template: TemplateProbabilities = field(default_factory=TemplateProbabilities)

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0,1], got {self.alpha}")
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be >= 1")
        if not (1 <= self.min_batch_size <= self.max_batch_size):
            raise ValueError("need 1 <= min_batch_size <= max_batch_size")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        self.template.validate()

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Config":
        """Read config JSON (if given), then apply environment overrides."""
        cfg = cls()
        if path is not None:
            data = json.loads(Path(path).read_text())
            field_names = {f.name for f in dataclasses.fields(cls)}
            unknown = set(data) - field_names
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            template = data.pop("template", None)
            for key, value in data.items():
                setattr(cfg, key, value)
            if template is not None:
                t_names = {f.name for f in dataclasses.fields(TemplateProbabilities)}
                t_unknown = set(template) - t_names
                if t_unknown:
                    raise ValueError(f"unknown template keys: {sorted(t_unknown)}")
                cfg.template = TemplateProbabilities(**template)
        if os.environ.get(ENV_LLM_URL):
            cfg.llm_url = os.environ[ENV_LLM_URL]
        if os.environ.get(ENV_EMBED_URL):
            cfg.embed_url = os.environ[ENV_EMBED_URL]
        if os.environ.get(ENV_API_KEY):
            cfg.api_key = os.environ[ENV_API_KEY]
        if cfg.llm_url or cfg.embed_url:
            cfg.provider = "http"
        cfg.validate()
        return cfg


def summarizer_config(cfg: Config):
    """Summarizer settings derived from the app config."""
    from .summarizer import SummarizerConfig

    return SummarizerConfig(
        r=cfg.r,
        seed=cfg.seed,
        separator=cfg.separator,
        cell_truncate=cfg.cell_truncate,
        batch={
            "min_bs": cfg.min_batch_size,
            "max_bs": cfg.max_batch_size,
            "grow_after": cfg.grow_after,
            "retries": cfg.retries,
        },
    )


def build_providers(cfg: Config):
    """Construct (completion backend, embedding backend) from config."""
    from . import provider

    if cfg.provider == "http":
        if not cfg.llm_url or not cfg.embed_url:
            raise ValueError("http provider requires llm_url and embed_url")
        llm = provider.HttpCompletionBackend(
            cfg.llm_url, model=cfg.llm_model, api_key=cfg.api_key, max_inflight=cfg.max_inflight
        )
        embedder = provider.HttpEmbeddingBackend(
            cfg.embed_url,
            model=cfg.embed_model,
            api_key=cfg.api_key,
            dimension=cfg.embed_dimension,
            max_inflight=cfg.max_inflight,
        )
        return llm, embedder
    fixtures = {}
    if cfg.fixtures_path:
        fixtures = json.loads(Path(cfg.fixtures_path).read_text())
    llm = provider.ScriptedCompletion(fixtures)
    embedder = provider.HashEmbedder(cfg.embed_dimension)
    return llm, embedder

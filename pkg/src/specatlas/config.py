"""TOML configuration: providers, retrieval budgets, prompt template path.

Example:

    prompt_template_path = "prompts/answer.txt"

    [providers.embed]
    kind = "mock-embed"
    dim = 64

    [providers.generate]
    kind = "remote-generate"
    endpoint = "http://localhost:8900"
    model_name = "gpt-4o"

    [retrieval]
    k1 = 4
    k2 = 3
    k3 = 3
    depth = 2

Remote providers read their API key from the SPECATLAS_API_KEY environment
variable and send it as a bearer token.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .embedding import ProviderConfig
from .pipeline import RetrievalConfig, default_prompt_template

DEFAULT_EMBED_DIM = 64


@dataclass
class AppConfig:
    embed_provider: ProviderConfig = field(
        default_factory=lambda: ProviderConfig.mock_embed(DEFAULT_EMBED_DIM)
    )
    gen_provider: ProviderConfig = field(default_factory=ProviderConfig.null_generate)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    prompt_template_path: str | None = None

    def prompt_template(self) -> str:
        if self.prompt_template_path:
            return Path(self.prompt_template_path).read_text(encoding="utf-8")
        return default_prompt_template()


def _provider_from_table(table: dict, default_kind: str) -> ProviderConfig:
    known = {"kind", "endpoint", "model_name", "dim", "timeout", "retry_count", "max_prompt_chars"}
    kwargs = {k: v for k, v in table.items() if k in known}
    kwargs.setdefault("kind", default_kind)
    return ProviderConfig(**kwargs)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Load configuration, falling back to offline defaults (mock embedder,
    null generator) when no file is given."""
    config = AppConfig()
    if path is None:
        return config
    with open(path, "rb") as fh:
        data = tomllib.load(fh)

    providers = data.get("providers", {})
    if "embed" in providers:
        config.embed_provider = _provider_from_table(providers["embed"], "mock-embed")
    if "generate" in providers:
        config.gen_provider = _provider_from_table(providers["generate"], "null-generate")

    retrieval = data.get("retrieval", {})
    config.retrieval = RetrievalConfig(
        k1=retrieval.get("k1", 4),
        k2=retrieval.get("k2", 3),
        k3=retrieval.get("k3", 3),
        max_depth=retrieval.get("depth", 2),
        hyde_enabled=retrieval.get("hyde", True),
    )
    config.prompt_template_path = data.get("prompt_template_path")
    return config

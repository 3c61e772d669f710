"""Declarative engine configuration loaded from a JSON key/value document."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .execution import StoppingPolicy
from .gateway import LiveGateway, LiveGatewayConfig, ReplayGateway, ScriptedTranscript
from .orchestrator import RoutingPolicy
from .packing import PackingBudget, PackingPolicy
from .retrieval import AuthorityFilterPolicy

ENV_BASE_URL = "DEEPRESEARCH_BASE_URL"
ENV_API_KEY = "DEEPRESEARCH_API_KEY"
ENV_MODEL = "DEEPRESEARCH_MODEL"


@dataclass
class EngineConfig:
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)
    stopping: StoppingPolicy = field(default_factory=StoppingPolicy)
    budget: PackingBudget = field(
        default_factory=lambda: PackingBudget(max_units=4096, reserve_fraction=0.125)
    )
    packing: PackingPolicy = field(default_factory=PackingPolicy)
    authority: AuthorityFilterPolicy = field(
        default_factory=lambda: AuthorityFilterPolicy(min_authority=0.5, max_results=8)
    )
    max_questions: int = 3
    human_gate: bool = False
    top_k: int = 5
    report_title: str | None = None


def load_config(path: str | os.PathLike | None = None) -> EngineConfig:
    """Config from a JSON document; absent keys keep their defaults."""
    if path is None:
        return EngineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")

    config = EngineConfig()
    if "routing" in data:
        config.routing = RoutingPolicy(**data["routing"])
    if "stopping" in data:
        config.stopping = StoppingPolicy(**data["stopping"])
    if "budget" in data:
        config.budget = PackingBudget(**data["budget"])
    if "packing" in data:
        config.packing = PackingPolicy(**data["packing"])
    if "authority" in data:
        config.authority = AuthorityFilterPolicy(**data["authority"])
    config.max_questions = int(data.get("max_questions", config.max_questions))
    config.human_gate = bool(data.get("human_gate", config.human_gate))
    config.top_k = int(data.get("top_k", config.top_k))
    config.report_title = data.get("report_title", config.report_title)
    return config


def gateway_from_args(
    replay_path: str | os.PathLike | None = None, *, strict: bool = False
):
    """Replay gateway when a transcript path is given, else env-configured live."""
    if replay_path is not None:
        return ReplayGateway(ScriptedTranscript.from_path(replay_path), strict=strict)
    base_url = os.environ.get(ENV_BASE_URL)
    if not base_url:
        raise ConfigError(
            f"live gateway needs {ENV_BASE_URL} (or pass a replay transcript)"
        )
    return LiveGateway(
        LiveGatewayConfig(
            base_url=base_url,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, "default"),
        )
    )

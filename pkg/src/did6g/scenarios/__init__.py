"""Deterministic multi-domain scenarios built on the identity, registry, agent and credential layers."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Union

from .flows import (
    SCENARIOS,
    SweepReport,
    run_consensus_sweep,
    run_iot_onboarding_scenario,
    run_nf_access_scenario,
    run_roaming_scenario,
)
from .model import (
    Counters,
    EntityKind,
    NetworkEntity,
    RelationshipBook,
    ScenarioFailure,
    ScenarioReport,
    Strength,
    TrustDomain,
    TrustRelationship,
)
from .world import ConfigError, World, entity_seed


def load_config(path: Union[str, Path]) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("a config is a JSON object")
    return data


def default_config(name: str) -> dict:
    """The packaged config for scenario ``name``."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}")
    text = resources.files(__package__).joinpath("configs", f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def run_scenario(name: str, config: dict, seed: Any = None):
    try:
        runner = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}") from None
    return runner(config, seed)


__all__ = [
    "SCENARIOS",
    "ConfigError",
    "Counters",
    "EntityKind",
    "NetworkEntity",
    "RelationshipBook",
    "ScenarioFailure",
    "ScenarioReport",
    "Strength",
    "SweepReport",
    "TrustDomain",
    "TrustRelationship",
    "World",
    "default_config",
    "entity_seed",
    "load_config",
    "run_consensus_sweep",
    "run_iot_onboarding_scenario",
    "run_nf_access_scenario",
    "run_roaming_scenario",
    "run_scenario",
]

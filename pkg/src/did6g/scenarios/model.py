"""Trust domains, network entities, trust relationships and scenario reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from ..agent import Agent
from ..registry import Ledger


class EntityKind(str, Enum):
    HOME_MNO = "HomeMno"
    VISITED_MNO = "VisitedMno"
    SUBSCRIBER = "Subscriber"
    NETWORK_FUNCTION = "NetworkFunction"
    IOT_DEVICE = "IotDevice"
    IOT_OPERATOR = "IotOperator"
    CLOUD_PROVIDER = "CloudProvider"
    # virtualization-stack parties; constructible, no dedicated scenario
    HYPERVISOR = "Hypervisor"
    ORCHESTRATOR = "Orchestrator"
    SDN_CONTROLLER = "SdnController"


@dataclass
class NetworkEntity:
    id: str
    kind: EntityKind
    agent: Agent
    registry_access: bool = True

    def __post_init__(self) -> None:
        self.kind = EntityKind(self.kind)
        if self.kind is EntityKind.IOT_DEVICE and self.registry_access:
            raise ValueError(f"IoT device {self.id} cannot have registry access")


@dataclass(frozen=True)
class TrustDomain:
    name: str
    entities: frozenset[str]


def check_domains(entities: Iterable[str], domains: Iterable[TrustDomain]) -> None:
    covered = set().union(*(d.entities for d in domains)) if domains else set()
    missing = sorted(set(entities) - covered)
    if missing:
        raise ValueError(f"entities outside every trust domain: {', '.join(missing)}")


class Strength(int, Enum):
    NONE = 0
    AUTHENTICATED = 1
    CREDENTIAL_BACKED = 2

    @property
    def label(self) -> str:
        return {0: "None", 1: "Authenticated", 2: "CredentialBacked"}[self.value]


@dataclass(frozen=True)
class TrustRelationship:
    source: str
    target: str
    subject_of_matter: str
    strength: Strength

    def to_wire(self) -> dict:
        return {
            "from": self.source,
            "to": self.target,
            "subjectOfMatter": self.subject_of_matter,
            "strength": self.strength.label,
        }


class RelationshipBook:
    """Trust relationships of one run. Strength only ever goes up."""

    def __init__(self) -> None:
        self._entries: dict[tuple[str, str, str], Strength] = {}

    def upgrade(self, source: str, target: str, subject: str, strength: Strength) -> Strength:
        key = (source, target, subject)
        current = self._entries.get(key, Strength.NONE)
        if strength > current:
            self._entries[key] = strength
            return strength
        self._entries.setdefault(key, current)
        return current

    def strength(self, source: str, target: str, subject: str) -> Strength:
        return self._entries.get((source, target, subject), Strength.NONE)

    def relationships(self) -> list[TrustRelationship]:
        return [TrustRelationship(s, t, m, v) for (s, t, m), v in sorted(self._entries.items())]


class Counters:
    FIELDS = (
        "envelopes_sent",
        "registry_reads",
        "registry_writes",
        "consensus_rounds",
        "consensus_messages",
        "home_network_queries_during_attach",
    )

    def __init__(self) -> None:
        self.values = dict.fromkeys(self.FIELDS, 0)

    def __getitem__(self, name: str) -> int:
        return self.values[name]

    def bump(self, name: str, by: int = 1) -> None:
        self.values[name] += by

    def to_wire(self) -> dict:
        return {_camel(k): v for k, v in self.values.items()}


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(p.title() for p in rest)


class ScenarioFailure(Exception):
    """Stops a run at its first failing step."""

    def __init__(self, step: str, reason: str) -> None:
        super().__init__(f"{step}: {reason}")
        self.step = step
        self.reason = reason


@dataclass
class ScenarioReport:
    scenario: str
    seed: int
    success: bool
    failure_step: Optional[str] = None
    failure_reason: Optional[str] = None
    counters: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    relationships: list[TrustRelationship] = field(default_factory=list)
    facts: dict = field(default_factory=dict)
    # registry ledger at the end of the run; not part of the serialized report
    ledger: Optional[Ledger] = field(default=None, repr=False, compare=False)

    def counter(self, name: str) -> int:
        return self.counters[_camel(name)]

    def relationship(self, source: str, target: str, subject: Optional[str] = None) -> Strength:
        found = [
            r.strength
            for r in self.relationships
            if r.source == source and r.target == target and (subject is None or r.subject_of_matter == subject)
        ]
        return max(found, default=Strength.NONE)

    def to_wire(self) -> dict:
        outcome: dict[str, Any] = {"status": "success"}
        if not self.success:
            outcome = {"status": "failure", "step": self.failure_step, "reason": self.failure_reason}
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "outcome": outcome,
            "counters": dict(self.counters),
            "eventLog": list(self.events),
            "finalRelationships": [r.to_wire() for r in self.relationships],
            "facts": dict(self.facts),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2, sort_keys=True) + "\n"

"""Builders shared by the test modules."""

from __future__ import annotations

import hashlib

from did6g.agent import Agent, LogicalClock
from did6g.registry import BftQuorum, GovernancePolicy, Registry


def seed_of(label: str) -> bytes:
    return hashlib.sha256(label.encode("utf-8")).digest()


def make_agent(name: str, clock: LogicalClock | None = None) -> Agent:
    return Agent(name, seed_of(f"agent/{name}"), clock=clock)


def open_registry(**kw) -> Registry:
    return Registry(GovernancePolicy.public_permissionless(), BftQuorum(("n0", "n1", "n2", "n3")), **kw)


def registered(registry: Registry, *names: str, key_agreement: bool = False) -> list[Agent]:
    """Agents with one registry DID each, created, registered and connected."""
    clock = LogicalClock()
    agents = []
    for name in names:
        agent = make_agent(name, clock)
        doc = agent.new_identity(key_agreement=key_agreement)
        agent.connect(registry, doc.did)
        agent.register(doc.did)
        agents.append(agent)
    return agents

"""Shared plumbing for scenario runs: entities, registry setup, transport and the event log."""

from __future__ import annotations

import hashlib
import json
from typing import Any, Optional

from ..agent import (
    Agent,
    ChannelMode,
    LogicalClock,
    SecureChannel,
    WalletBinding,
    establish_channel,
    receive,
    send,
)
from ..errors import Did6gError
from ..identity import DidDocument, DidMethod
from ..registry import Acl, BftQuorum, ConsensusConfig, GovernancePolicy, PolicyKind, Registry, StakeLottery
from .model import (
    Counters,
    EntityKind,
    NetworkEntity,
    RelationshipBook,
    ScenarioFailure,
    ScenarioReport,
    Strength,
    TrustDomain,
    check_domains,
)


class ConfigError(ValueError):
    """The scenario configuration is unusable."""


def entity_seed(seed: int, entity_id: str) -> bytes:
    return hashlib.sha256(b"did6g/entity/" + seed.to_bytes(8, "big") + entity_id.encode("utf-8")).digest()


class World:
    """Everything one deterministic scenario run needs.

    Messages are delivered in program order through ``post`` and the
    handshake observer, which is also where envelope and home-network
    counters are kept.
    """

    def __init__(self, config: dict, seed: int) -> None:
        self.config = config
        self.seed = int(seed)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.clock = LogicalClock()
        self.counters = Counters()
        self.events: list[dict] = []
        self.book = RelationshipBook()
        self.facts: dict[str, Any] = {}
        self.registry: Optional[Registry] = None
        self.phase = "setup"
        self.attach_phase = False
        self.home_dids: set[str] = set()
        self.entities: dict[str, NetworkEntity] = {}
        self.did_of: dict[str, str] = {}
        self.owner_of_did: dict[str, str] = {}

        domains: dict[str, set[str]] = {}
        for entry in config.get("entities", []):
            try:
                eid, kind = str(entry["id"]), EntityKind(entry["kind"])
                binding = WalletBinding(entry.get("wallet", "Software"))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad entity entry {entry!r}: {exc}") from None
            if eid in self.entities:
                raise ConfigError(f"duplicate entity {eid}")
            access = bool(entry.get("registryAccess", kind is not EntityKind.IOT_DEVICE))
            agent = Agent(eid, entity_seed(self.seed, eid), clock=self.clock, binding=binding)
            try:
                self.entities[eid] = NetworkEntity(eid, kind, agent, access)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            for d in entry.get("domains", []):
                domains.setdefault(str(d), set()).add(eid)
        self.domains = [TrustDomain(n, frozenset(m)) for n, m in sorted(domains.items())]
        try:
            check_domains(self.entities, self.domains)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # lookups

    def role(self, name: str, kind: Optional[EntityKind] = None) -> NetworkEntity:
        try:
            eid = self.config["roles"][name]
            entity = self.entities[eid]
        except KeyError:
            raise ConfigError(f"config names no entity for role {name!r}") from None
        if kind is not None and entity.kind is not kind:
            raise ConfigError(f"role {name!r} must be a {kind.value}, got {entity.kind.value}")
        return entity

    def agent(self, eid: str) -> Agent:
        return self.entities[eid].agent

    def adversary(self, flag: str) -> bool:
        return bool(self.config.get("adversary", {}).get(flag, False))

    # identities and registry

    def identity(self, eid: str, method: DidMethod = DidMethod.REGISTRY, **kw) -> DidDocument:
        doc = self.agent(eid).new_identity(method, **kw)
        self.did_of.setdefault(eid, doc.did)
        self.owner_of_did[doc.did] = eid
        if self.entities[eid].kind is EntityKind.HOME_MNO:
            self.home_dids.add(doc.did)
        self.log("create_identity", eid, did=doc.did, method=method.value)
        return doc

    def _acl_dids(self, ids: Any) -> Any:
        if ids == "*":
            return ids
        try:
            return [self.did_of[i] for i in ids]
        except KeyError as exc:
            raise ConfigError(f"ACL names unknown or identity-less entity {exc}") from None

    def build_registry(self, expected: PolicyKind, default_writers: list[str]) -> Registry:
        gov = dict(self.config.get("governance", {}))
        gov.setdefault("kind", expected.value)
        if gov["kind"] != expected.value:
            raise ConfigError(f"this scenario needs a {expected.value} registry")
        gov.setdefault("writers", default_writers)
        gov.setdefault("readers", "*" if expected is not PolicyKind.PRIVATE_PERMISSIONED else default_writers)
        gov.setdefault("admins", [])
        try:
            policy = GovernancePolicy(
                PolicyKind(gov["kind"]),
                Acl.from_wire(self._acl_dids(gov["readers"])),
                Acl.from_wire(self._acl_dids(gov["writers"])),
                frozenset(self._acl_dids(gov["admins"])),
            )
        except ValueError as exc:
            raise ConfigError(f"governance: {exc}") from None
        missing = [w for w in default_writers if not policy.writers.allows(self.did_of[w])]
        if missing:
            raise ConfigError(f"governance must let {', '.join(missing)} write")
        self.registry = Registry(policy, self._consensus(default_writers))
        for eid, entity in self.entities.items():
            if entity.registry_access and eid in self.did_of:
                entity.agent.connect(self.registry, self.did_of[eid])
        self.log("build_registry", "-", policy=policy.kind.value, consensus=type(self.registry.consensus).__name__)
        return self.registry

    def _consensus(self, default_nodes: list[str]) -> ConsensusConfig:
        cfg = dict(self.config.get("consensus", {}))
        kind = cfg.get("kind", "BftQuorum")
        latency = float(cfg.get("perMessageLatencyMs", 5))
        try:
            if kind == "BftQuorum":
                return BftQuorum(tuple(cfg.get("nodes", default_nodes)), frozenset(cfg.get("faulty", [])), latency)
            if kind == "StakeLottery":
                stakes = cfg.get("stakes", {n: 1 for n in default_nodes})
                return StakeLottery(stakes, int(cfg.get("rngSeed", self.seed)), latency)
        except ValueError as exc:
            raise ConfigError(f"consensus: {exc}") from None
        raise ConfigError(f"unsupported consensus kind {kind!r}")

    def register(self, eid: str) -> None:
        did = self.did_of[eid]
        try:
            self.agent(eid).register(did)
        except Did6gError as exc:
            raise ScenarioFailure("register", type(exc).__name__) from exc
        committed = did in self.registry
        self.log("register", eid, did=did, committed=committed)

    # messaging

    def new_step(self) -> None:
        for entity in self.entities.values():
            entity.agent.new_step()

    def _note_message(self, recipient_did: str) -> None:
        if self.attach_phase and recipient_did in self.home_dids:
            self.counters.bump("home_network_queries_during_attach")

    def _observe(self, sender: str, recipient: str, kind: str, size: int) -> None:
        self._note_message(recipient)

    def connect(
        self, initiator: str, responder: str, i_did: str, r_did: str, mode: ChannelMode
    ) -> tuple[SecureChannel, SecureChannel]:
        self.new_step()
        try:
            ends = establish_channel(
                self.agent(initiator), self.agent(responder), i_did, r_did, mode, observer=self._observe
            )
        except Did6gError as exc:
            raise ScenarioFailure("establish_channel", type(exc).__name__) from exc
        self.log(
            "establish_channel",
            initiator,
            peer=responder,
            channel=ends[0].channel_id,
            initiatorTrust=ends[0].trust_level.value,
            responderTrust=ends[1].trust_level.value,
        )
        return ends

    def post(self, end: SecureChannel, sender: str, receiver: str, message: dict) -> dict:
        """Send ``message`` as an envelope over ``end`` and deliver it to ``receiver``."""
        env = send(end, self.agent(sender), json.dumps(message, sort_keys=True).encode("utf-8"))
        self.counters.bump("envelopes_sent")
        self._note_message(env.recipient)
        try:
            body = receive(end, self.agent(receiver), env)
        except Did6gError as exc:
            raise ScenarioFailure("receive", type(exc).__name__) from exc
        self.log("envelope", sender, to=receiver, type=str(message.get("type", "")), sentAt=env.sent_at)
        return json.loads(body.decode("utf-8"))

    def relate(self, source: str, target: str, subject: str, strength: Strength) -> None:
        now = self.book.upgrade(source, target, subject, strength)
        self.log("relationship", source, to=target, subjectOfMatter=subject, strength=now.label)

    def log(self, step: str, actor: str, **detail: Any) -> None:
        self.events.append(
            {"seq": len(self.events), "clock": self.clock.now, "phase": self.phase, "step": step, "actor": actor, **detail}
        )

    # reporting

    def report(self, scenario: str, failure: Optional[ScenarioFailure]) -> ScenarioReport:
        if self.registry is not None:
            c = self.registry.counters
            self.counters.values.update(
                registry_reads=c.reads,
                registry_writes=c.writes,
                consensus_rounds=c.consensus_rounds,
                consensus_messages=c.consensus_messages,
            )
        if failure is not None:
            self.log("failure", "-", failedStep=failure.step, reason=failure.reason)
        return ScenarioReport(
            scenario=scenario,
            seed=self.seed,
            success=failure is None,
            failure_step=None if failure is None else failure.step,
            failure_reason=None if failure is None else failure.reason,
            counters=self.counters.to_wire(),
            events=self.events,
            relationships=self.book.relationships(),
            facts=self.facts,
            ledger=None if self.registry is None else self.registry.ledger,
        )

"""End-to-end flows: roaming attach, NF access grants, IoT onboarding and the consensus sweep."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

from ..agent import Agent, OutOfBand, RegistryResolved, SecureChannel
from ..credential import (
    DidSubject,
    LegacyKey,
    NonceRegistry,
    SubjectId,
    VcStatus,
    VerifiableCredential,
    VerifiablePresentation,
    VpStatus,
    create_vp,
    issue_vc,
    present_with_key,
    revoke_vc,
    verify_vc,
    verify_vp,
)
from ..errors import Did6gError
from ..identity import DidMethod, KeyPurpose, generate_keypair, hkdf, method_id
from ..registry import (
    BftQuorum,
    Ledger,
    PolicyKind,
    StakeLottery,
    TxKind,
    compare_replicas,
    estimate_metrics,
    halting_threshold,
    inject_stake_takeover,
    make_transaction,
    run_consensus_round,
    verify_chain,
)
from .model import EntityKind, ScenarioFailure, ScenarioReport, Strength
from .world import ConfigError, World, entity_seed


def _run(name: str, config: dict, seed: Optional[int], body: Callable[[World], None]) -> ScenarioReport:
    world = World(config, config.get("seed", 0) if seed is None else seed)
    failure = None
    try:
        body(world)
    except ScenarioFailure as exc:
        failure = exc
    return world.report(name, failure)


# shared steps


def _issue(
    w: World, issuer: str, subject: SubjectId, ctype: str, claims: dict, end: SecureChannel, holder: str
) -> VerifiableCredential:
    try:
        vc = issue_vc(w.agent(issuer), subject, ctype, claims, issuer_did=w.did_of[issuer])
    except Did6gError as exc:
        raise ScenarioFailure("issue_vc", type(exc).__name__) from exc
    w.log("issue_vc", issuer, credential=vc.credential_id, type=ctype)
    msg = w.post(end, issuer, holder, {"type": "credential", "vc": vc.to_wire()})
    delivered = VerifiableCredential.from_wire(msg["vc"])
    w.agent(holder).wallet.credentials.append(delivered)
    return delivered


def _challenge(w: World, verifier: str, holder: str, end: SecureChannel, nonces: NonceRegistry) -> bytes:
    nonce = nonces.challenge(w.agent(verifier))
    msg = w.post(end, verifier, holder, {"type": "challenge", "nonce": nonce.hex()})
    return bytes.fromhex(msg["nonce"])


def _present(w: World, holder: str, verifier: str, end: SecureChannel, vp: VerifiablePresentation) -> VerifiablePresentation:
    msg = w.post(end, holder, verifier, {"type": "presentation", "vp": vp.to_wire()})
    return VerifiablePresentation.from_wire(msg["vp"])


def _check_vc(w: World, verifier: str, vc: VerifiableCredential) -> None:
    status = verify_vc(vc, w.agent(verifier).registry_view)
    w.log("verify_vc", verifier, credential=vc.credential_id, verdict=status.value)
    if status is not VcStatus.VALID:
        raise ScenarioFailure("verify_vc", status.value)


def _check_vp(w: World, verifier: str, vp: VerifiablePresentation, nonce: bytes, nonces: NonceRegistry) -> None:
    status = verify_vp(w.agent(verifier), vp, nonce, nonces, verifier_did=w.did_of[verifier])
    w.log("verify_vp", verifier, credential=vp.credential.credential_id, verdict=status.value)
    if status is not VpStatus.ACCEPTED:
        raise ScenarioFailure("verify_vp", status.value)


def _stranger_key(w: World, label: str):
    seed = hkdf(entity_seed(w.seed, label), b"did6g/stranger")
    return generate_keypair(KeyPurpose.AUTHENTICATION, seed)


# roaming


def run_roaming_scenario(config: dict, seed: Optional[int] = None) -> ScenarioReport:
    """Subscriber attaches to a visited network with a home-issued credential.

    The home network is not contacted between attach start and verdict.
    Adversary toggles: ``strangerKey`` (VP signed by a foreign key) and
    ``replayAttach`` (the accepted VP is sent again under a new challenge).
    """
    return _run("roaming", config, seed, _roaming)


def _roaming(w: World) -> None:
    hmno = w.role("hmno", EntityKind.HOME_MNO).id
    vmno = w.role("vmno", EntityKind.VISITED_MNO).id
    sub = w.role("subscriber", EntityKind.SUBSCRIBER).id

    w.identity(hmno)
    w.identity(vmno)
    subject_doc = w.identity(sub, DidMethod.SELF_CERTIFIED, assertion=False)
    w.build_registry(PolicyKind.PUBLIC_PERMISSIONED, [hmno, vmno])
    w.register(hmno)
    w.register(vmno)

    w.phase = "onboarding"
    s_end, _ = w.connect(sub, hmno, subject_doc.did, w.did_of[hmno], OutOfBand(subject_doc))
    w.relate(sub, hmno, "subscription", Strength.AUTHENTICATED)
    w.relate(hmno, sub, "subscription", Strength.AUTHENTICATED)
    vc = _issue(w, hmno, DidSubject(subject_doc.did), "ValidCustomer", {"customerStatus": "valid"}, s_end, sub)
    w.relate(hmno, sub, "subscription", Strength.CREDENTIAL_BACKED)

    w.phase = "attach"
    w.attach_phase = True
    pairwise = w.agent(sub).pairwise_identity(w.did_of[vmno])
    w.owner_of_did[pairwise.did] = sub
    w.log("derive_pairwise_did", sub, did=pairwise.did, peer=w.did_of[vmno])
    a_end, v_end = w.connect(sub, vmno, pairwise.did, w.did_of[vmno], OutOfBand(pairwise))
    w.relate(sub, vmno, "roaming", Strength.AUTHENTICATED)
    nonces = NonceRegistry()
    nonce = _challenge(w, vmno, sub, v_end, nonces)
    if w.adversary("strangerKey"):
        key = _stranger_key(w, "stranger")
        vp = present_with_key(vc, nonce, w.did_of[vmno], key, method_id(subject_doc.did, 0, 0))
    else:
        vp = create_vp(w.agent(sub), vc, nonce, w.did_of[vmno])
    received = _present(w, sub, vmno, a_end, vp)

    w.phase = "verify"
    _check_vc(w, vmno, received.credential)
    _check_vp(w, vmno, received, nonce, nonces)
    w.relate(sub, vmno, "roaming", Strength.CREDENTIAL_BACKED)
    if w.adversary("replayAttach"):
        w.phase = "replay"
        second = _challenge(w, vmno, sub, v_end, nonces)
        again = _present(w, sub, vmno, a_end, vp)
        _check_vp(w, vmno, again, second, nonces)
    w.attach_phase = False

    w.facts.update(
        subjectDid=subject_doc.did,
        attachChannelDid=a_end.local,
        subscriberTrustInVisited=a_end.trust_level.value,
        visitedTrustInSubscriber=v_end.trust_level.value,
        credentialId=vc.credential_id,
    )


# NF access


DEFAULT_SERVICE = "nudm-sdm"
DEFAULT_SCOPE = "read"


def run_nf_access_scenario(config: dict, seed: Optional[int] = None) -> ScenarioReport:
    """A producer NF serves a consumer only against a presented access grant.

    Options: ``service`` and ``scope`` of the producer, ``probeDenial``
    (first request carries no grant and is refused), ``legacyBinding``
    (grant bound to the consumer's raw key). Adversary toggles:
    ``wrongTarget`` and ``revokeGrant``.
    """
    return _run("nf-access", config, seed, _nf_access)


def _nf_access(w: World) -> None:
    auth = w.role("authorizer", EntityKind.NETWORK_FUNCTION).id
    cons = w.role("consumer", EntityKind.NETWORK_FUNCTION).id
    prod = w.role("producer", EntityKind.NETWORK_FUNCTION).id
    service = str(w.config.get("service", DEFAULT_SERVICE))
    scope = str(w.config.get("scope", DEFAULT_SCOPE))
    served = denied = 0

    for eid in (auth, cons, prod):
        w.identity(eid)
    w.build_registry(PolicyKind.PRIVATE_PERMISSIONED, [auth, cons, prod])
    for eid in (auth, cons, prod):
        w.register(eid)

    w.phase = "grant"
    g_end, _ = w.connect(auth, cons, w.did_of[auth], w.did_of[cons], RegistryResolved())
    w.relate(auth, cons, "nf-grant", Strength.AUTHENTICATED)
    if w.config.get("legacyBinding", False):
        _, key = w.agent(cons).signing_key(w.did_of[cons])
        subject: SubjectId = LegacyKey(key.public_key, cons)
    else:
        subject = DidSubject(w.did_of[cons])
    target = "other-service" if w.adversary("wrongTarget") else service
    vc = _issue(w, auth, subject, "NfAccessGrant", {"target": target, "scope": scope}, g_end, cons)
    if w.adversary("revokeGrant"):
        try:
            revoke_vc(w.agent(auth), vc.credential_id)
        except Did6gError as exc:
            raise ScenarioFailure("revoke_vc", type(exc).__name__) from exc
        w.log("revoke_vc", auth, credential=vc.credential_id)

    w.phase = "access"
    c_end, p_end = w.connect(cons, prod, w.did_of[cons], w.did_of[prod], RegistryResolved())
    w.relate(cons, prod, f"service:{service}", Strength.AUTHENTICATED)
    nonces = NonceRegistry()
    try:
        if w.config.get("probeDenial", False):
            request = w.post(c_end, cons, prod, {"type": "request", "service": service})
            if "vp" not in request:
                denied += 1
                w.post(p_end, prod, cons, {"type": "denied", "service": service})
                w.log("deny", prod, reason="no presentation")

        nonce = _challenge(w, prod, cons, p_end, nonces)
        vp = create_vp(w.agent(cons), vc, nonce, w.did_of[prod])
        received = _present(w, cons, prod, c_end, vp)
        _check_vp(w, prod, received, nonce, nonces)
        claims = received.credential.claims_dict
        if (
            received.credential.metadata.credential_type != "NfAccessGrant"
            or claims.get("target") != service
            or claims.get("scope") != scope
        ):
            w.log("claims_check", prod, target=claims.get("target", ""), scope=claims.get("scope", ""))
            raise ScenarioFailure("claims_check", "ScopeMismatch")
        served += 1
        w.post(p_end, prod, cons, {"type": "served", "service": service})
        w.log("serve", prod, service=service)
        w.relate(cons, prod, f"service:{service}", Strength.CREDENTIAL_BACKED)
    finally:
        w.facts.update(served=served, denied=denied, credentialId=vc.credential_id)


# IoT onboarding


def run_iot_onboarding_scenario(config: dict, seed: Optional[int] = None) -> ScenarioReport:
    """A registry-less device gains network access with an operator attestation.

    Adversary toggles: ``operatorUnregistered`` and ``subjectMismatch``.
    """
    return _run("iot-onboarding", config, seed, _iot)


def _iot(w: World) -> None:
    op = w.role("operator", EntityKind.IOT_OPERATOR).id
    dev = w.role("device", EntityKind.IOT_DEVICE).id
    mno = w.role("mno").id
    if w.entities[mno].kind not in (EntityKind.HOME_MNO, EntityKind.VISITED_MNO):
        raise ConfigError("role 'mno' must be a network operator")
    device_class = str(w.config.get("deviceClass", "sensor"))

    w.identity(op)
    w.identity(mno)
    dev_doc = w.identity(dev, DidMethod.SELF_CERTIFIED, assertion=False)
    w.build_registry(PolicyKind.PUBLIC_PERMISSIONED, [op, mno])
    if not w.adversary("operatorUnregistered"):
        w.register(op)
    w.register(mno)

    w.phase = "provisioning"
    op_doc = w.agent(op).documents[w.did_of[op]]
    o_end, _ = w.connect(op, dev, op_doc.did, dev_doc.did, OutOfBand(dev_doc, op_doc))
    w.relate(dev, op, "provisioning", Strength.AUTHENTICATED)
    subject_did = dev_doc.did
    if w.adversary("subjectMismatch"):
        decoy = Agent("decoy", entity_seed(w.seed, "decoy")).new_identity(DidMethod.SELF_CERTIFIED, assertion=False)
        subject_did = decoy.did
    vc = _issue(w, op, DidSubject(subject_did), "DeviceAttestation", {"deviceClass": device_class}, o_end, dev)

    w.phase = "access"
    mno_doc = w.agent(mno).documents[w.did_of[mno]]
    d_end, m_end = w.connect(dev, mno, dev_doc.did, mno_doc.did, OutOfBand(dev_doc, mno_doc))
    w.relate(dev, mno, "network-access", Strength.AUTHENTICATED)
    nonces = NonceRegistry()
    nonce = _challenge(w, mno, dev, m_end, nonces)
    mid, key = w.agent(dev).signing_key(dev_doc.did)
    # the device signs with its own key whatever the subject says
    vp = present_with_key(vc, nonce, mno_doc.did, key, mid)
    received = _present(w, dev, mno, d_end, vp)
    w.facts.update(deviceDid=dev_doc.did, channelTrustLevel=m_end.trust_level.value, credentialId=vc.credential_id)
    _check_vc(w, mno, received.credential)
    _check_vp(w, mno, received, nonce, nonces)
    w.relate(dev, mno, "network-access", Strength.CREDENTIAL_BACKED)


# consensus sweep


DEFAULT_NODE_COUNTS = [4, 8, 16, 32]
DEFAULT_HALTING_NODES = list(range(1, 14))
DEFAULT_STAKE_FRACTIONS = ["0.50", "0.66", "0.666", "0.667", "0.70"]


@dataclass
class SweepReport:
    seed: int
    metrics: dict[str, list[dict]] = field(default_factory=dict)
    halting: list[dict] = field(default_factory=list)
    stake: list[dict] = field(default_factory=list)
    findings: dict[str, Any] = field(default_factory=dict)
    scenario: str = "consensus-sweep"
    success: bool = True

    def to_wire(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "outcome": {"status": "success"},
            "metrics": self.metrics,
            "bftHalting": self.halting,
            "stakeTakeover": self.stake,
            "findings": self.findings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2, sort_keys=True) + "\n"


def _probe_tx(seed: int):
    agent = Agent("probe", entity_seed(seed, "probe"))
    doc = agent.new_identity(assertion=False)
    mid, key = agent.signing_key(doc.did)
    return make_transaction(TxKind.CREATE_DOC, doc, doc.did, key, mid)


def _history(tx, blocks: int) -> Ledger:
    ledger = Ledger()
    for _ in range(blocks):
        ledger.append(ledger.next_block([tx]))
    return ledger


def run_consensus_sweep(config: dict, seed: Optional[int] = None) -> SweepReport:
    """Metrics table per consensus kind plus the BFT halting and stake takeover boundaries."""
    seed = int(config.get("seed", 0) if seed is None else seed)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    latency = float(config.get("perMessageLatencyMs", 5))
    tx_count = int(config.get("txCount", 100))
    node_counts = [int(n) for n in config.get("nodeCounts", DEFAULT_NODE_COUNTS)]
    kinds = config.get("kinds", ["BftQuorum", "StakeLottery"])
    report = SweepReport(seed)
    try:
        for kind in kinds:
            if kind == "BftQuorum":
                cfg: Any = BftQuorum.of_size(1, 0, latency)
            elif kind == "StakeLottery":
                cfg = StakeLottery({"node-0": 1}, seed, latency)
            else:
                raise ConfigError(f"unsupported consensus kind {kind!r}")
            report.metrics[kind] = [r.to_wire() for r in estimate_metrics(cfg, tx_count, node_counts)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    tx = _probe_tx(seed)
    for n in config.get("haltingNodeCounts", DEFAULT_HALTING_NODES):
        n = int(n)
        if n < 1:
            raise ConfigError("node counts are positive")
        halts = [f for f in range(n + 1) if not run_consensus_round(BftQuorum.of_size(n, f), [tx])[0].committed]
        smallest = min(halts, default=None)
        report.halting.append(
            {
                "n": n,
                "smallestHaltingFaulty": smallest,
                "smallestHaltingFraction": None if smallest is None else str(Fraction(smallest, n)),
                "expected": halting_threshold(n),
            }
        )

    total = int(config.get("stakeTotal", 1000))
    history = _history(tx, int(config.get("historyBlocks", 5)))
    rewrite_from = None
    for raw in config.get("stakeFractions", DEFAULT_STAKE_FRACTIONS):
        fraction = Fraction(str(raw))
        stake = fraction * total
        if stake.denominator != 1 or not 0 < stake <= total:
            raise ConfigError(f"stake fraction {raw} does not split a total of {total} into whole units")
        stakes = {"attacker": int(stake), "honest": total - int(stake)}
        takeover = inject_stake_takeover(StakeLottery(stakes, seed, latency), "attacker", history)
        row: dict[str, Any] = {"fraction": str(raw), "stake": int(stake), "canRewrite": takeover.can_rewrite}
        if takeover.fork is not None:
            row["forkHeight"] = takeover.fork_height
            row["forkChainValid"] = verify_chain(takeover.fork).ok
            row["forkDetectedAt"] = compare_replicas([history, history, takeover.fork]).diverged_at
        report.stake.append(row)
        if takeover.can_rewrite and (rewrite_from is None or fraction < rewrite_from[0]):
            rewrite_from = (fraction, str(raw))

    report.findings = {
        "bftHaltingMatchesCeilThird": all(r["smallestHaltingFaulty"] == r["expected"] for r in report.halting),
        "smallestRewriteFraction": None if rewrite_from is None else rewrite_from[1],
    }
    single = run_consensus_round(BftQuorum.of_size(1), [tx])[0]
    report.findings["singleNode"] = {"committed": single.committed, "rounds": single.rounds, "messages": single.messages_sent}
    return report


SCENARIOS: dict[str, Callable[..., Any]] = {
    "roaming": run_roaming_scenario,
    "nf-access": run_nf_access_scenario,
    "iot-onboarding": run_iot_onboarding_scenario,
    "consensus-sweep": run_consensus_sweep,
}

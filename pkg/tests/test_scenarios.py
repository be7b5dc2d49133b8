from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import pytest

from did6g.agent import OutOfBand
from did6g.identity import DidMethod
from did6g.registry import PolicyKind, verify_chain
from did6g.scenarios import (
    ConfigError,
    EntityKind,
    RelationshipBook,
    Strength,
    World,
    default_config,
    run_scenario,
)

from oracles import bft_halts, chain_is_intact, stake_can_rewrite

GOLDEN = Path(__file__).parent / "golden"
GOLDEN_SEED = 20260101
# set DID6G_UPDATE_GOLDEN=1 to rewrite the golden reports after an intended change
UPDATE = os.environ.get("DID6G_UPDATE_GOLDEN") == "1"


def config(name: str, **adversary) -> dict:
    cfg = copy.deepcopy(default_config(name))
    cfg.setdefault("adversary", {}).update(adversary)
    return cfg


def run(name: str, seed: int = 7, **adversary):
    return run_scenario(name, config(name, **adversary), seed)


# roaming


def test_roaming_honest():
    r = run("roaming")
    assert r.success, r.to_wire()["outcome"]
    assert r.counter("home_network_queries_during_attach") == 0
    assert r.facts["attachChannelDid"] != r.facts["subjectDid"]
    assert r.facts["subscriberTrustInVisited"] == "RegistryAnchored"
    assert r.facts["visitedTrustInSubscriber"] == "SelfAsserted"
    assert r.relationship("subscriber", "vmno", "roaming") is Strength.CREDENTIAL_BACKED
    assert r.relationship("hmno", "subscriber") is Strength.CREDENTIAL_BACKED
    assert r.counter("envelopes_sent") == 3
    assert chain_is_intact(r.ledger.dump())


def test_roaming_stranger_key():
    r = run("roaming", strangerKey=True)
    assert not r.success
    assert (r.failure_step, r.failure_reason) == ("verify_vp", "BadOwnershipProof")
    assert r.relationship("subscriber", "vmno", "roaming") is Strength.AUTHENTICATED


def test_roaming_replayed_attach():
    r = run("roaming", replayAttach=True)
    assert (r.failure_step, r.failure_reason) == ("verify_vp", "Replayed")
    # the first, honest attach went through before the replay
    assert r.relationship("subscriber", "vmno", "roaming") is Strength.CREDENTIAL_BACKED


def test_home_network_counter_does_count():
    # same plumbing, but a message to the home network during attach
    w = World(config("roaming"), 1)
    w.identity("hmno")
    w.identity("vmno")
    doc = w.identity("subscriber", DidMethod.SELF_CERTIFIED, assertion=False)
    w.build_registry(PolicyKind.PUBLIC_PERMISSIONED, ["hmno", "vmno"])
    w.register("hmno")
    w.attach_phase = True
    end, _ = w.connect("subscriber", "hmno", doc.did, w.did_of["hmno"], OutOfBand(doc))
    assert w.counters["home_network_queries_during_attach"] == 2  # hello and auth
    w.post(end, "subscriber", "hmno", {"type": "ping"})
    assert w.counters["home_network_queries_during_attach"] == 3


def test_pairwise_did_differs_per_seed_and_from_subject():
    a, b = run("roaming", seed=1), run("roaming", seed=2)
    assert a.facts["attachChannelDid"] != b.facts["attachChannelDid"]
    for r in (a, b):
        assert r.facts["attachChannelDid"].startswith("did:self:")
        assert r.facts["attachChannelDid"] != r.facts["subjectDid"]


# NF access


def test_nf_access_honest():
    r = run("nf-access")
    assert r.success
    assert r.facts["served"] == 1 and r.facts["denied"] == 1
    assert r.relationship("amf", "udm", "service:nudm-sdm") is Strength.CREDENTIAL_BACKED


def test_nf_access_without_probe():
    cfg = config("nf-access")
    cfg["probeDenial"] = False
    r = run_scenario("nf-access", cfg, 3)
    assert r.success and r.facts["denied"] == 0


def test_nf_access_legacy_binding():
    cfg = config("nf-access")
    cfg["legacyBinding"] = True
    assert run_scenario("nf-access", cfg, 3).success


def test_nf_access_wrong_target():
    r = run("nf-access", wrongTarget=True)
    assert (r.failure_step, r.failure_reason) == ("claims_check", "ScopeMismatch")
    assert r.facts["served"] == 0


def test_nf_access_revoked_grant():
    r = run("nf-access", revokeGrant=True)
    assert (r.failure_step, r.failure_reason) == ("verify_vp", "Revoked")
    assert any(e["step"] == "revoke_vc" for e in r.events)


def test_nf_access_scope_from_config():
    cfg = config("nf-access")
    cfg["scope"] = "write"
    r = run_scenario("nf-access", cfg, 3)
    assert r.success  # grant is issued for the configured scope
    assert r.facts["served"] == 1


# IoT onboarding


def test_iot_honest():
    r = run("iot-onboarding")
    assert r.success
    assert r.facts["channelTrustLevel"] == "SelfAsserted"
    assert r.facts["deviceDid"].startswith("did:self:")
    assert r.relationship("sensor", "mno", "network-access") is Strength.CREDENTIAL_BACKED
    assert r.counter("consensus_rounds") == 2


def test_iot_unregistered_operator():
    r = run("iot-onboarding", operatorUnregistered=True)
    assert (r.failure_step, r.failure_reason) == ("verify_vc", "IssuerUnresolvable")


def test_iot_subject_mismatch():
    r = run("iot-onboarding", subjectMismatch=True)
    assert (r.failure_step, r.failure_reason) == ("verify_vp", "BadOwnershipProof")


def test_iot_device_never_touches_registry():
    w = World(config("iot-onboarding"), 5)
    assert not w.entities["sensor"].registry_access
    r = run("iot-onboarding")
    assert not any(e["actor"] == "sensor" and e["step"] == "register" for e in r.events)


# configuration errors


def test_iot_device_with_registry_access():
    cfg = config("iot-onboarding")
    cfg["entities"][1]["registryAccess"] = True
    with pytest.raises(ConfigError, match="registry access"):
        run_scenario("iot-onboarding", cfg, 1)


def test_entity_outside_every_domain():
    cfg = config("roaming")
    cfg["entities"][0]["domains"] = []
    with pytest.raises(ConfigError, match="trust domain"):
        run_scenario("roaming", cfg, 1)


def test_missing_role():
    cfg = config("roaming")
    del cfg["roles"]["vmno"]
    with pytest.raises(ConfigError, match="vmno"):
        run_scenario("roaming", cfg, 1)


def test_role_of_wrong_kind():
    cfg = config("roaming")
    cfg["roles"]["vmno"] = "hmno"
    with pytest.raises(ConfigError, match="VisitedMno"):
        run_scenario("roaming", cfg, 1)


def test_wrong_registry_kind():
    cfg = config("nf-access")
    cfg["governance"]["kind"] = "PublicPermissionless"
    with pytest.raises(ConfigError):
        run_scenario("nf-access", cfg, 1)


def test_unknown_scenario_and_bad_seed():
    with pytest.raises(ConfigError):
        run_scenario("nope", {}, 1)
    with pytest.raises(ConfigError):
        run_scenario("roaming", config("roaming"), 2**64)
    with pytest.raises(ConfigError):
        default_config("nope")


def test_unknown_entity_kind_or_wallet():
    cfg = config("roaming")
    cfg["entities"][0]["kind"] = "Satellite"
    with pytest.raises(ConfigError):
        run_scenario("roaming", cfg, 1)
    cfg = config("roaming")
    cfg["entities"][2]["wallet"] = "Plastic"
    with pytest.raises(ConfigError):
        run_scenario("roaming", cfg, 1)


def test_virtualization_kinds_are_constructible():
    cfg = {
        "entities": [
            {"id": "hv", "kind": "Hypervisor", "domains": ["edge"]},
            {"id": "orc", "kind": "Orchestrator", "domains": ["edge"]},
            {"id": "sdn", "kind": "SdnController", "domains": ["edge"]},
        ]
    }
    w = World(cfg, 1)
    assert {e.kind for e in w.entities.values()} == {
        EntityKind.HYPERVISOR,
        EntityKind.ORCHESTRATOR,
        EntityKind.SDN_CONTROLLER,
    }


# relationships, determinism and reports


def test_relationship_strength_never_decreases():
    book = RelationshipBook()
    assert book.upgrade("a", "b", "x", Strength.CREDENTIAL_BACKED) is Strength.CREDENTIAL_BACKED
    assert book.upgrade("a", "b", "x", Strength.AUTHENTICATED) is Strength.CREDENTIAL_BACKED
    assert book.strength("a", "b", "x") is Strength.CREDENTIAL_BACKED
    assert book.strength("b", "a", "x") is Strength.NONE


@pytest.mark.parametrize("name", ["roaming", "nf-access", "iot-onboarding"])
def test_relationship_log_is_monotone(name):
    seen: dict = {}
    order = {s.label: s for s in Strength}
    for event in run(name).events:
        if event["step"] != "relationship":
            continue
        key = (event["actor"], event["to"], event["subjectOfMatter"])
        now = order[event["strength"]]
        assert now >= seen.get(key, Strength.NONE)
        seen[key] = now


@pytest.mark.parametrize("name", ["roaming", "nf-access", "iot-onboarding", "consensus-sweep"])
def test_same_seed_same_bytes(name):
    assert run(name, seed=11).to_json() == run(name, seed=11).to_json()


def test_different_seed_different_report():
    assert run("roaming", seed=1).to_json() != run("roaming", seed=2).to_json()


def test_event_log_is_ordered():
    events = run("nf-access").events
    assert [e["seq"] for e in events] == list(range(len(events)))
    clocks = [e["clock"] for e in events]
    assert clocks == sorted(clocks)


def test_report_shape():
    wire = json.loads(run("roaming").to_json())
    assert set(wire) == {"scenario", "seed", "outcome", "counters", "eventLog", "finalRelationships", "facts"}
    assert set(wire["counters"]) == {
        "envelopesSent",
        "registryReads",
        "registryWrites",
        "consensusRounds",
        "consensusMessages",
        "homeNetworkQueriesDuringAttach",
    }
    failed = json.loads(run("roaming", strangerKey=True).to_json())
    assert failed["outcome"] == {"status": "failure", "step": "verify_vp", "reason": "BadOwnershipProof"}


def test_ledgers_of_every_scenario_verify():
    for name in ("roaming", "nf-access", "iot-onboarding"):
        ledger = run(name).ledger
        assert verify_chain(ledger).ok and chain_is_intact(ledger.dump())


@pytest.mark.parametrize("name", ["roaming", "nf-access", "iot-onboarding", "consensus-sweep"])
def test_golden_report(name):
    path = GOLDEN / f"{name}.json"
    text = run_scenario(name, default_config(name), GOLDEN_SEED).to_json()
    if UPDATE:
        path.write_text(text, encoding="utf-8")
    assert path.read_text(encoding="utf-8") == text


# consensus sweep


def test_sweep_matches_oracles():
    r = run("consensus-sweep")
    assert r.findings["bftHaltingMatchesCeilThird"]
    for row in r.halting:
        n = row["n"]
        assert row["smallestHaltingFaulty"] == min(f for f in range(n + 1) if bft_halts(n, f))
    for row in r.stake:
        assert row["canRewrite"] == stake_can_rewrite(row["stake"], 1000)
        if row["canRewrite"]:
            assert row["forkChainValid"] and row["forkDetectedAt"] == row["forkHeight"]
    assert r.findings["smallestRewriteFraction"] == "0.667"
    assert r.findings["singleNode"] == {"committed": True, "rounds": 1, "messages": 0}


def test_sweep_metrics_grow_with_n():
    r = run("consensus-sweep")
    for kind, rows in r.metrics.items():
        messages = [row["messages"] for row in rows]
        assert messages == sorted(messages) and len(set(messages)) == len(messages), kind


@pytest.mark.parametrize(
    "patch",
    [
        {"stakeFractions": ["0.3333"]},
        {"kinds": ["ProofOfWork"]},
        {"haltingNodeCounts": [0]},
        {"nodeCounts": [0]},
    ],
)
def test_sweep_config_errors(patch):
    cfg = config("consensus-sweep") | patch
    with pytest.raises(ConfigError):
        run_scenario("consensus-sweep", cfg, 1)

from __future__ import annotations

import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from did6g.agent import (
    DocSource,
    Envelope,
    OutOfBand,
    RegistryResolved,
    TrustLevel,
    establish_channel,
    receive,
    resolve_peer,
    send,
)
from did6g.errors import (
    AuthFailed,
    BadSignature,
    ChannelError,
    DecryptFailed,
    NoRegistryAccess,
    NotFound,
    ResolveFailed,
    StaleDocument,
    UnknownChannel,
)
from did6g.identity import DidDocument, DidMethod, VerificationMethod

from helpers import make_agent, open_registry, registered


@pytest.fixture
def pair():
    reg = open_registry()
    alice, bob = registered(reg, "alice", "bob")
    return reg, alice, bob


def test_registry_anchored_channel(pair):
    _, alice, bob = pair
    a_end, b_end = establish_channel(alice, bob, alice.primary_did, bob.primary_did, RegistryResolved())
    assert a_end.established and b_end.established
    assert a_end.trust_level is b_end.trust_level is TrustLevel.REGISTRY_ANCHORED
    assert a_end.session_key == b_end.session_key and len(a_end.session_key) == 32
    assert a_end.channel_id == b_end.channel_id
    assert a_end.peer == bob.primary_did and b_end.peer == alice.primary_did
    assert alice.channels[a_end.channel_id] is a_end and bob.channels[b_end.channel_id] is b_end


def test_out_of_band_self_certified(pair):
    _, alice, bob = pair
    device = make_agent("device")
    doc = device.new_identity(DidMethod.SELF_CERTIFIED, assertion=False)
    bob_doc = bob.documents[bob.primary_did]
    d_end, b_end = establish_channel(device, bob, doc.did, bob.primary_did, OutOfBand(doc, bob_doc))
    assert d_end.trust_level is b_end.trust_level is TrustLevel.SELF_ASSERTED
    assert b_end.peer_doc_source is DocSource.OUT_OF_BAND


def test_mixed_mode_trust_is_per_endpoint(pair):
    _, alice, bob = pair
    pairwise = alice.pairwise_identity(bob.primary_did)
    a_end, b_end = establish_channel(alice, bob, pairwise.did, bob.primary_did, OutOfBand(pairwise))
    assert a_end.trust_level is TrustLevel.REGISTRY_ANCHORED
    assert b_end.trust_level is TrustLevel.SELF_ASSERTED


def test_forged_out_of_band_document_rejected(pair):
    _, alice, bob = pair
    doc = alice.pairwise_identity("x")
    other = make_agent("other").pairwise_identity("x")
    m = other.verification_methods[0]
    forged = DidDocument(doc.id, (VerificationMethod(f"{doc.did}#v0-0", m.purpose, m.public_key),))
    with pytest.raises(AuthFailed):
        establish_channel(alice, bob, doc.did, bob.primary_did, OutOfBand(forged))


def test_responder_signing_with_unpublished_key(pair):
    _, alice, bob = pair
    bob.rotate(bob.primary_did, publish=False)
    with pytest.raises(AuthFailed):
        establish_channel(alice, bob, alice.primary_did, bob.primary_did)
    assert not alice.channels and not bob.channels


def test_stale_key_reported(pair):
    _, alice, bob = pair
    did = alice.primary_did
    v0 = alice.documents[did]
    alice.rotate(did)
    alice.documents[did] = v0  # alice keeps authenticating with her old document
    alice.new_step()
    bob.new_step()
    with pytest.raises(StaleDocument):
        establish_channel(alice, bob, did, bob.primary_did)


def test_unknown_peer(pair):
    _, alice, bob = pair
    ghost = make_agent("ghost")
    doc = ghost.new_identity()
    with pytest.raises(ResolveFailed):
        establish_channel(ghost, bob, doc.did, bob.primary_did)


def test_tampered_message_never_establishes(pair):
    _, alice, bob = pair
    for index in range(4):

        def flip(i, wire, index=index):
            if i != index:
                return wire
            data = bytearray(wire)
            data[len(data) // 2] ^= 0x01
            return bytes(data)

        with pytest.raises(ChannelError):
            establish_channel(alice, bob, alice.primary_did, bob.primary_did, tamper=flip)
    assert not alice.channels and not bob.channels


def test_signature_from_another_handshake_is_rejected(pair):
    _, alice, bob = pair
    captured = {}

    def grab(i, wire):
        captured.setdefault(i, wire)
        return wire

    establish_channel(alice, bob, alice.primary_did, bob.primary_did, tamper=grab)
    old_auth = captured[2]

    def splice(i, wire):
        return old_auth if i == 2 else wire

    with pytest.raises(AuthFailed):
        establish_channel(alice, bob, alice.primary_did, bob.primary_did, tamper=splice)


def test_observer_sees_four_messages(pair):
    _, alice, bob = pair
    seen = []
    establish_channel(alice, bob, alice.primary_did, bob.primary_did, observer=lambda *a: seen.append(a[:3]))
    assert [k for _, _, k in seen] == ["hello", "response", "auth", "confirm"]
    assert seen[0][:2] == (alice.primary_did, bob.primary_did)


# envelopes


@pytest.fixture
def channel(pair):
    _, alice, bob = pair
    a_end, b_end = establish_channel(alice, bob, alice.primary_did, bob.primary_did)
    return alice, bob, a_end, b_end


def test_envelope_round_trip(channel):
    alice, bob, a_end, b_end = channel
    env = send(a_end, alice, b"attach-request")
    assert env.body != b"attach-request"
    assert receive(b_end, bob, env) == b"attach-request"
    reply = send(b_end, bob, b"ok")
    assert receive(a_end, alice, reply) == b"ok"


def test_envelope_wire_round_trip(channel):
    alice, bob, a_end, b_end = channel
    env = send(a_end, alice, b"x")
    wire = json.loads(json.dumps(env.to_wire()))
    assert Envelope.from_wire(wire) == env
    assert set(wire) == {"from", "to", "nonce", "sentAt", "body", "sig", "enc"}


def test_flipped_ciphertext_byte(channel):
    alice, bob, a_end, b_end = channel
    env = send(a_end, alice, b"attach-request")
    body = bytearray(env.body)
    body[0] ^= 0xFF
    with pytest.raises(BadSignature):
        receive(b_end, bob, replace(env, body=bytes(body)))


def test_envelope_on_other_channel(pair):
    reg, alice, bob = pair
    (carol,) = registered(reg, "carol")
    a_end, b_end = establish_channel(alice, bob, alice.primary_did, bob.primary_did)
    a2, c_end = establish_channel(alice, carol, alice.primary_did, carol.primary_did)
    env = send(a_end, alice, b"for bob")
    with pytest.raises(UnknownChannel):
        receive(c_end, carol, env)
    with pytest.raises(UnknownChannel):
        receive(b_end, carol, env)


def test_plaintext_mode_and_downgrade(pair):
    _, alice, bob = pair
    a_end, b_end = establish_channel(alice, bob, alice.primary_did, bob.primary_did, encrypt=False)
    env = send(a_end, alice, b"hi")
    assert env.body == b"hi" and receive(b_end, bob, env) == b"hi"
    a2, b2 = establish_channel(alice, bob, alice.primary_did, bob.primary_did)
    b2.encrypt = True
    a2.encrypt = False
    with pytest.raises(DecryptFailed):
        receive(b2, bob, send(a2, alice, b"hi"))


def test_clock_is_monotone(channel):
    alice, bob, a_end, b_end = channel
    stamps = [send(a_end, alice, b"m").sent_at for _ in range(5)]
    assert stamps == sorted(stamps) and len(set(stamps)) == 5


# resolution


def test_resolve_peer_latest_and_cached(pair):
    reg, alice, bob = pair
    assert resolve_peer(alice, bob.primary_did).version == 0
    reads = reg.counters.reads
    resolve_peer(alice, bob.primary_did)
    assert reg.counters.reads == reads
    bob.rotate(bob.primary_did)
    assert resolve_peer(alice, bob.primary_did).version == 0
    alice.new_step()
    assert resolve_peer(alice, bob.primary_did).version == 1


def test_resolve_peer_without_registry(pair):
    _, alice, bob = pair
    device = make_agent("device")
    with pytest.raises(NoRegistryAccess):
        resolve_peer(device, bob.primary_did)


def test_resolve_peer_unknown(pair):
    _, alice, _ = pair
    with pytest.raises(NotFound):
        resolve_peer(alice, "did:vdr:nobody")


def test_wallet_view_hides_private_keys(pair):
    _, alice, _ = pair
    text = json.dumps(alice.wallet.to_wire())
    for key in alice.wallet.keys.values():
        assert key.private_key.hex() not in text
    assert "private" not in repr(alice.wallet)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.data())
def test_any_corrupted_handshake_byte_fails(index, data):
    reg = open_registry()
    alice, bob = registered(reg, "alice", "bob")

    def corrupt(i, wire):
        if i != index:
            return wire
        pos = data.draw(st.integers(0, len(wire) - 1))
        value = data.draw(st.integers(0, 255).filter(lambda v: v != wire[pos]))
        return wire[:pos] + bytes([value]) + wire[pos + 1 :]

    with pytest.raises(ChannelError):
        establish_channel(alice, bob, alice.primary_did, bob.primary_did, tamper=corrupt)
    assert not alice.channels and not bob.channels

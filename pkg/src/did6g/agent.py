"""Agents, wallets, and mutually authenticated channels between agents.

The handshake is four messages, all in-process:

    1. I -> R  hello      {from, to, nonce_i, eph_i}
    2. R -> I  response   {from, to, nonce_r, eph_r, sig_R(transcript)}
    3. I -> R  auth       {sig_I(transcript)}
    4. R -> I  confirm    {HMAC(session_key, transcript)}

The transcript binds both DIDs, both nonces, both ephemeral X25519 shares
and the channel id (a hash of all of those), so a signature made for one
channel never validates in another. Each side signs with the
authentication key from its DID document and checks the peer's signature
against the peer document it obtained from the registry or out of band.
A channel only comes into existence if all four messages check out.

After the handshake, agents exchange one-way signed envelopes, encrypted
with the session key when the channel asks for it.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .codec import b64u, canonical_json, multibase, sha256_hex, unb64u
from .errors import (
    AuthFailed,
    BadSignature,
    DecryptFailed,
    Did6gError,
    NoRegistryAccess,
    PurposeMismatch,
    ResolveFailed,
    StaleDocument,
    UnknownChannel,
)
from .identity import (
    DidDocument,
    DidMethod,
    KeyPair,
    KeyPurpose,
    Signature,
    create_did_document,
    derive_pairwise_did,
    generate_keypair,
    hkdf,
    is_self_certified,
    method_id,
    propose_rotation,
    rotate_key,
    sign,
    VerificationMethod,
)
from .registry import Registry, RegistryHandle, TxKind, make_transaction

NONCE_LEN = 16


class WalletBinding(str, Enum):
    SOFTWARE = "Software"
    HARDWARE_BOUND = "HardwareBound"


@dataclass
class Wallet:
    binding: WalletBinding = WalletBinding.SOFTWARE
    keys: dict[str, KeyPair] = field(default_factory=dict, repr=False)
    credentials: list = field(default_factory=list)

    def add_key(self, method_id: str, key: KeyPair) -> None:
        self.keys[method_id] = key

    def find_by_public(self, public_key: bytes) -> Optional[tuple[str, KeyPair]]:
        for mid, key in self.keys.items():
            if key.public_key == public_key:
                return mid, key
        return None

    def to_wire(self) -> dict:
        """Public view of the wallet. Private keys are never serialized."""
        return {
            "binding": self.binding.value,
            "keys": {
                mid: {"purpose": k.purpose.value, "publicKeyMultibase": multibase(k.public_key)}
                for mid, k in sorted(self.keys.items())
            },
            "credentials": [c.to_wire() for c in self.credentials],
        }


class LogicalClock:
    """Monotone counter shared by the agents of one scenario."""

    def __init__(self) -> None:
        self.now = 0

    def tick(self) -> int:
        self.now += 1
        return self.now


class Agent:
    """Client-side representative of one network entity.

    All key material and randomness derive from ``seed``; two agents built
    from the same seed behave identically.
    """

    def __init__(
        self,
        name: str,
        seed: bytes,
        *,
        clock: Optional[LogicalClock] = None,
        binding: WalletBinding = WalletBinding.SOFTWARE,
    ) -> None:
        if len(seed) != 32:
            raise ValueError("agent seed must be 32 bytes")
        self.name = name
        self.seed = bytes(seed)
        self.clock = clock if clock is not None else LogicalClock()
        self.wallet = Wallet(binding)
        self.documents: dict[str, DidDocument] = {}
        self.registry_view: Optional[RegistryHandle] = None
        self.channels: dict[str, SecureChannel] = {}
        self.issued: dict[str, str] = {}  # credential id -> issuer DID
        self._rng = random.Random(int.from_bytes(hashlib.sha256(b"did6g/agent-rng" + self.seed).digest(), "big"))
        self._keys_made = 0
        self._cache: dict[str, DidDocument] = {}

    def __repr__(self) -> str:
        return f"Agent({self.name!r}, dids={sorted(self.documents)})"

    def fresh_bytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)

    def _key_seed(self) -> bytes:
        self._keys_made += 1
        return hkdf(self.seed, b"did6g/agent-key/%d" % self._keys_made)

    # identities

    def new_identity(
        self,
        method: DidMethod = DidMethod.REGISTRY,
        *,
        assertion: bool = True,
        key_agreement: bool = False,
    ) -> DidDocument:
        auth = generate_keypair(KeyPurpose.AUTHENTICATION, self._key_seed())
        extra = []
        if assertion:
            extra.append(generate_keypair(KeyPurpose.ASSERTION, self._key_seed()))
        if key_agreement:
            extra.append(generate_keypair(KeyPurpose.KEY_AGREEMENT, self._key_seed()))
        _, doc = create_did_document(method, auth, extra)
        self.adopt(doc, [auth, *extra])
        return doc

    def pairwise_identity(self, peer_context: str) -> DidDocument:
        _, doc, key = derive_pairwise_did(self.seed, peer_context)
        self.adopt(doc, [key])
        return doc

    def adopt(self, doc: DidDocument, keys: Iterable[KeyPair]) -> None:
        """Take ownership of ``doc``; ``keys`` must include the private halves of its methods."""
        by_public = {k.public_key: k for k in keys}
        for m in doc.verification_methods:
            if m.public_key in by_public:
                self.wallet.add_key(m.method_id, by_public[m.public_key])
        self.documents[doc.did] = doc

    @property
    def primary_did(self) -> Optional[str]:
        return next(iter(self.documents), None)

    def signing_key(self, did: str, purpose: KeyPurpose = KeyPurpose.AUTHENTICATION) -> tuple[str, KeyPair]:
        doc = self.documents.get(str(did))
        if doc is None:
            raise KeyError(f"{self.name} does not own {did}")
        for m in doc.methods(purpose):
            key = self.wallet.keys.get(m.method_id)
            if key is not None:
                return m.method_id, key
        raise PurposeMismatch(f"{self.name} holds no {purpose.value} key for {did}")

    def sign_as(self, did: str, message: bytes, purpose: KeyPurpose = KeyPurpose.AUTHENTICATION) -> Signature:
        mid, key = self.signing_key(did, purpose)
        return sign(key, message, mid)

    # registry

    def connect(self, registry: Registry, as_did: Optional[str] = None) -> None:
        self.registry_view = registry.handle(as_did if as_did is not None else self.primary_did)

    def _registry(self) -> RegistryHandle:
        if self.registry_view is None:
            raise NoRegistryAccess(f"{self.name} has no registry access")
        return self.registry_view

    def register(self, did: str) -> str:
        doc = self.documents[str(did)]
        mid, key = self.signing_key(did)
        return self._registry().submit(make_transaction(TxKind.CREATE_DOC, doc, doc.did, key, mid))

    def rotate(self, did: str, *, retain_old: bool = False, publish: bool = True) -> DidDocument:
        """Replace the authentication key of ``did`` and publish the new version."""
        doc = self.documents[str(did)]
        new_key = generate_keypair(KeyPurpose.AUTHENTICATION, self._key_seed())
        new_method = VerificationMethod(method_id(doc.id, doc.version + 1, 0), KeyPurpose.AUTHENTICATION, new_key.public_key)
        proposed = propose_rotation(doc, new_method, retain_old=retain_old)
        mid, key = self.signing_key(did)
        updated = rotate_key(doc, new_method, sign(key, proposed.canonical_bytes(), mid), retain_old=retain_old)
        if publish:
            self._registry().submit(make_transaction(TxKind.UPDATE_DOC, updated, updated.did, key, mid))
        self.wallet.add_key(new_method.method_id, new_key)
        self.documents[updated.did] = updated
        return updated

    def new_step(self) -> None:
        """Start a new scenario step; resolution results are cached within one step only."""
        self._cache.clear()


def resolve_peer(agent: Agent, did: str) -> DidDocument:
    cached = agent._cache.get(str(did))
    if cached is not None:
        return cached
    doc = agent._registry().resolve(str(did))
    agent._cache[str(did)] = doc
    return doc


class DocSource(str, Enum):
    REGISTRY_RESOLVED = "RegistryResolved"
    OUT_OF_BAND = "OutOfBand"


class TrustLevel(str, Enum):
    REGISTRY_ANCHORED = "RegistryAnchored"
    SELF_ASSERTED = "SelfAsserted"


@dataclass(frozen=True)
class RegistryResolved:
    """Both ends look up the peer document in the registry."""


class OutOfBand:
    """Documents exchanged out of band.

    An endpoint whose peer's document is among ``docs`` uses it instead of
    the registry; any other peer is still resolved from the registry.
    """

    def __init__(self, *docs: DidDocument) -> None:
        self.docs = {d.did: d for d in docs}

    def __repr__(self) -> str:
        return f"OutOfBand({', '.join(self.docs)})"


ChannelMode = Union[RegistryResolved, OutOfBand]


@dataclass
class SecureChannel:
    """One endpoint's view of an established channel."""

    channel_id: str
    local: str
    peer: str
    peer_doc: DidDocument
    peer_doc_source: DocSource
    trust_level: TrustLevel
    session_key: bytes = field(repr=False)
    encrypt: bool = True
    established: bool = False


HandshakeHook = Callable[[int, bytes], bytes]
Observer = Callable[[str, str, str, int], None]


def _parse(wire: bytes, fields: set[str]) -> dict:
    try:
        msg = json.loads(wire.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise AuthFailed(f"unparseable handshake message: {exc}") from None
    if not isinstance(msg, dict) or set(msg) != fields or not all(isinstance(v, (str, dict)) for v in msg.values()):
        raise AuthFailed("handshake message has unexpected shape")
    return msg


def _field_bytes(msg: dict, name: str, length: int) -> bytes:
    try:
        raw = unb64u(msg[name])
    except (ValueError, TypeError):
        raise AuthFailed(f"bad {name}") from None
    if len(raw) != length:
        raise AuthFailed(f"bad {name} length")
    return raw


def _sig(msg: dict) -> Signature:
    try:
        return Signature.from_wire(msg["sig"])
    except (ValueError, TypeError):
        raise AuthFailed("malformed signature") from None


def _peer_document(agent: Agent, peer_did: str, mode: ChannelMode) -> tuple[DidDocument, DocSource]:
    if isinstance(mode, OutOfBand) and peer_did in mode.docs:
        doc = mode.docs[peer_did]
        if doc.id.method is DidMethod.SELF_CERTIFIED and not is_self_certified(doc):
            raise AuthFailed(f"out-of-band document for {peer_did} is not self-certified")
        return doc, DocSource.OUT_OF_BAND
    try:
        return resolve_peer(agent, peer_did), DocSource.REGISTRY_RESOLVED
    except Did6gError as exc:
        raise ResolveFailed(f"{agent.name} cannot resolve {peer_did}: {exc}") from exc


def _check_peer(agent: Agent, doc: DidDocument, source: DocSource, message: bytes, sig: Signature) -> None:
    if doc.verify(message, sig):
        return
    if doc.method(sig.method_id) is None and source is DocSource.REGISTRY_RESOLVED:
        try:
            older = agent._registry().history(doc.did)
        except Did6gError:
            older = []
        if any(d.verify(message, sig) for d in older[:-1]):
            raise StaleDocument(f"{doc.did} authenticated with a rotated-away key")
    raise AuthFailed(f"signature from {doc.did} does not verify")


def _transcript(i_did: str, r_did: str, nonce_i: bytes, nonce_r: bytes, eph_i: bytes, eph_r: bytes) -> dict:
    t = {
        "initiator": i_did,
        "responder": r_did,
        "nonceI": b64u(nonce_i),
        "nonceR": b64u(nonce_r),
        "ephI": b64u(eph_i),
        "ephR": b64u(eph_r),
    }
    t["channel"] = sha256_hex(canonical_json(t))
    return t


def _signed_part(transcript: dict, role: str) -> bytes:
    return canonical_json({"role": role, "transcript": transcript})


def _session_key(private: X25519PrivateKey, peer_share: bytes, transcript: dict) -> bytes:
    try:
        shared = private.exchange(X25519PublicKey.from_public_bytes(peer_share))
    except ValueError:
        raise AuthFailed("degenerate key share") from None
    return hkdf(shared, b"did6g/session-key", salt=hashlib.sha256(canonical_json(transcript)).digest())


def _confirm_tag(key: bytes, transcript: dict) -> bytes:
    return hmac.new(key, b"responder-confirm" + canonical_json(transcript), hashlib.sha256).digest()


def establish_channel(
    initiator: Agent,
    responder: Agent,
    initiator_did: str,
    responder_did: str,
    mode: ChannelMode = RegistryResolved(),
    *,
    encrypt: bool = True,
    tamper: Optional[HandshakeHook] = None,
    observer: Optional[Observer] = None,
) -> tuple[SecureChannel, SecureChannel]:
    """Run the four-message handshake and return the (initiator, responder) endpoints.

    ``tamper(index, wire)`` may rewrite message ``index`` (0-3) in flight;
    ``observer(sender, recipient, kind, size)`` sees every message.
    Raises AuthFailed, ResolveFailed or StaleDocument; on failure neither
    agent gets a channel.
    """
    i_did, r_did = str(initiator_did), str(responder_did)

    def wire(index: int, sender: str, recipient: str, kind: str, msg: dict) -> bytes:
        data = canonical_json(msg)
        if tamper is not None:
            data = tamper(index, data)
        if observer is not None:
            observer(sender, recipient, kind, len(data))
        return data

    # 1: hello
    eph_i = X25519PrivateKey.from_private_bytes(initiator.fresh_bytes(32))
    eph_i_pub = eph_i.public_key().public_bytes_raw()
    nonce_i = initiator.fresh_bytes(NONCE_LEN)
    w1 = wire(0, i_did, r_did, "hello", {"from": i_did, "to": r_did, "nonce": b64u(nonce_i), "eph": b64u(eph_i_pub)})

    # responder handles hello
    m1 = _parse(w1, {"from", "to", "nonce", "eph"})
    if m1["to"] != r_did:
        raise AuthFailed("hello addressed to someone else")
    r_view_peer = m1["from"]
    r_peer_doc, r_source = _peer_document(responder, r_view_peer, mode)
    r_nonce_i = _field_bytes(m1, "nonce", NONCE_LEN)
    r_eph_i = _field_bytes(m1, "eph", 32)
    eph_r = X25519PrivateKey.from_private_bytes(responder.fresh_bytes(32))
    eph_r_pub = eph_r.public_key().public_bytes_raw()
    nonce_r = responder.fresh_bytes(NONCE_LEN)
    r_transcript = _transcript(r_view_peer, r_did, r_nonce_i, nonce_r, r_eph_i, eph_r_pub)
    sig_r = responder.sign_as(r_did, _signed_part(r_transcript, "responder"))
    w2 = wire(
        1,
        r_did,
        r_view_peer,
        "response",
        {"from": r_did, "to": r_view_peer, "nonce": b64u(nonce_r), "eph": b64u(eph_r_pub), "sig": sig_r.to_wire()},
    )

    # initiator handles response
    m2 = _parse(w2, {"from", "to", "nonce", "eph", "sig"})
    if m2["from"] != r_did or m2["to"] != i_did:
        raise AuthFailed("response from or to the wrong party")
    i_peer_doc, i_source = _peer_document(initiator, r_did, mode)
    i_transcript = _transcript(
        i_did, r_did, nonce_i, _field_bytes(m2, "nonce", NONCE_LEN), eph_i_pub, _field_bytes(m2, "eph", 32)
    )
    _check_peer(initiator, i_peer_doc, i_source, _signed_part(i_transcript, "responder"), _sig(m2))
    sig_i = initiator.sign_as(i_did, _signed_part(i_transcript, "initiator"))
    w3 = wire(2, i_did, r_did, "auth", {"sig": sig_i.to_wire()})

    # responder handles auth
    m3 = _parse(w3, {"sig"})
    _check_peer(responder, r_peer_doc, r_source, _signed_part(r_transcript, "initiator"), _sig(m3))
    r_key = _session_key(eph_r, r_eph_i, r_transcript)
    w4 = wire(3, r_did, i_did, "confirm", {"mac": b64u(_confirm_tag(r_key, r_transcript))})

    # initiator handles confirm
    m4 = _parse(w4, {"mac"})
    i_key = _session_key(eph_i, _field_bytes(m2, "eph", 32), i_transcript)
    if not hmac.compare_digest(_field_bytes(m4, "mac", 32), _confirm_tag(i_key, i_transcript)):
        raise AuthFailed("key confirmation failed")

    def endpoint(local: str, peer: str, doc: DidDocument, source: DocSource, key: bytes, cid: str) -> SecureChannel:
        trust = TrustLevel.SELF_ASSERTED if source is DocSource.OUT_OF_BAND else TrustLevel.REGISTRY_ANCHORED
        return SecureChannel(cid, local, peer, doc, source, trust, key, encrypt, established=True)

    i_end = endpoint(i_did, r_did, i_peer_doc, i_source, i_key, i_transcript["channel"])
    r_end = endpoint(r_did, r_view_peer, r_peer_doc, r_source, r_key, r_transcript["channel"])
    initiator.channels[i_end.channel_id] = i_end
    responder.channels[r_end.channel_id] = r_end
    return i_end, r_end


class Encryption(str, Enum):
    NONE = "none"
    SESSION_KEY = "session"


@dataclass(frozen=True)
class Envelope:
    sender: str
    recipient: str
    nonce: bytes
    sent_at: int
    body: bytes
    signature: Signature
    encryption: Encryption
    key_id: str

    def header(self) -> dict:
        return {
            "from": self.sender,
            "to": self.recipient,
            "nonce": b64u(self.nonce),
            "sentAt": self.sent_at,
            "enc": {"mode": self.encryption.value, "kid": self.key_id},
        }

    def signing_bytes(self) -> bytes:
        return canonical_json({**self.header(), "body": b64u(self.body)})

    def to_wire(self) -> dict:
        return {**self.header(), "body": b64u(self.body), "sig": self.signature.to_wire()}

    @classmethod
    def from_wire(cls, data: Any) -> "Envelope":
        if not isinstance(data, dict) or set(data) != {"from", "to", "nonce", "sentAt", "body", "sig", "enc"}:
            raise ValueError("malformed envelope")
        enc = data["enc"]
        if not isinstance(enc, dict) or set(enc) != {"mode", "kid"}:
            raise ValueError("malformed enc field")
        return cls(
            str(data["from"]),
            str(data["to"]),
            unb64u(data["nonce"]),
            int(data["sentAt"]),
            unb64u(data["body"]),
            Signature.from_wire(data["sig"]),
            Encryption(enc["mode"]),
            str(enc["kid"]),
        )


def _endpoint(agent: Agent, channel: SecureChannel) -> SecureChannel:
    end = agent.channels.get(channel.channel_id)
    if end is None or not end.established:
        raise UnknownChannel(f"{agent.name} has no channel {channel.channel_id[:12]}")
    return end


def send(channel: SecureChannel, sender: Agent, body: bytes) -> Envelope:
    end = _endpoint(sender, channel)
    nonce = sender.fresh_bytes(NONCE_LEN)
    sent_at = sender.clock.tick()
    mode = Encryption.SESSION_KEY if end.encrypt else Encryption.NONE
    draft = Envelope(end.local, end.peer, nonce, sent_at, b"", Signature("", b"", ""), mode, end.channel_id)
    payload = bytes(body)
    if end.encrypt:
        payload = ChaCha20Poly1305(end.session_key).encrypt(nonce[:12], payload, canonical_json(draft.header()))
    unsigned = Envelope(end.local, end.peer, nonce, sent_at, payload, draft.signature, mode, end.channel_id)
    sig = sender.sign_as(end.local, unsigned.signing_bytes())
    return Envelope(end.local, end.peer, nonce, sent_at, payload, sig, mode, end.channel_id)


def receive(channel: SecureChannel, receiver: Agent, envelope: Envelope) -> bytes:
    end = _endpoint(receiver, channel)
    if envelope.key_id != end.channel_id or envelope.recipient != end.local or envelope.sender != end.peer:
        raise UnknownChannel("envelope does not belong to this channel")
    if not end.peer_doc.verify(envelope.signing_bytes(), envelope.signature):
        raise BadSignature("envelope signature does not verify")
    if envelope.encryption is Encryption.NONE:
        if end.encrypt:
            raise DecryptFailed("channel requires encryption")
        return envelope.body
    try:
        return ChaCha20Poly1305(end.session_key).decrypt(
            envelope.nonce[:12], envelope.body, canonical_json(envelope.header())
        )
    except InvalidTag:
        raise DecryptFailed("ciphertext does not decrypt under the session key") from None

"""Verifiable credentials and one-time verifiable presentations.

A credential is metadata + flat string claims + an issuer proof made with
an assertion key. A presentation wraps exactly one credential together with
a verifier-minted nonce and the verifier's DID (the audience), signed by
whoever holds the credential subject's key. The presenter may reach the
verifier over a channel built on some completely different DID; the
ownership proof inside the presentation is what ties it to the subject.

Subjects are either DIDs or, for legacy deployments, a raw public key with a
label (an IP address, an NF instance name, ...). Legacy subjects can be
verified with no registry at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Union

from .agent import Agent, SecureChannel, receive, send
from .codec import canonical_json, multibase, sha256_hex, unmultibase
from .errors import (
    Did6gError,
    EmptyClaims,
    NoAssertionKey,
    NoRegistryAccess,
    NotHolder,
    NotIssuer,
    PurposeMismatch,
)
from .identity import (
    Did,
    DidDocument,
    DidMethod,
    KeyPair,
    KeyPurpose,
    SCHEME_ID,
    Signature,
    canonical_hash,
    sign,
    verify,
)
from .registry import RegistryHandle, StatusEntry, TxKind, make_transaction


@dataclass(frozen=True)
class DidSubject:
    did: str

    def to_wire(self) -> Any:
        return self.did


@dataclass(frozen=True)
class LegacyKey:
    public_key: bytes
    label: str = ""

    def to_wire(self) -> Any:
        return {"legacyKey": multibase(self.public_key), "label": self.label}


SubjectId = Union[DidSubject, LegacyKey]


def subject_from_wire(data: Any) -> SubjectId:
    if isinstance(data, str):
        return DidSubject(data)
    if isinstance(data, dict) and set(data) == {"legacyKey", "label"}:
        return LegacyKey(unmultibase(data["legacyKey"]), str(data["label"]))
    raise ValueError("malformed subject")


@dataclass(frozen=True)
class CredentialMetadata:
    issuer: str
    subject: SubjectId
    credential_type: str
    issued_at: int
    credential_id: str = ""

    def _core(self) -> dict:
        return {
            "issuer": self.issuer,
            "subject": self.subject.to_wire(),
            "type": self.credential_type,
            "issuedAt": self.issued_at,
        }

    def to_wire(self) -> dict:
        return {**self._core(), "id": self.credential_id}


def credential_id_for(metadata: CredentialMetadata, claims: Mapping[str, str]) -> str:
    return sha256_hex(canonical_json({"metadata": metadata._core(), "claims": dict(claims)}))


@dataclass(frozen=True)
class Proof:
    signature: Signature
    method_id: str
    created: int


@dataclass(frozen=True)
class VerifiableCredential:
    metadata: CredentialMetadata
    claims: tuple[tuple[str, str], ...]
    proof: Proof

    @property
    def credential_id(self) -> str:
        return self.metadata.credential_id

    @property
    def claims_dict(self) -> dict[str, str]:
        return dict(self.claims)

    def signing_bytes(self) -> bytes:
        return canonical_json({"metadata": self.metadata.to_wire(), "claims": self.claims_dict})

    def to_wire(self) -> dict:
        return {
            "metadata": self.metadata.to_wire(),
            "claims": self.claims_dict,
            "proof": {
                "sig": multibase(self.proof.signature.value),
                "method": self.proof.method_id,
                "created": self.proof.created,
            },
        }

    @classmethod
    def from_wire(cls, data: Any) -> "VerifiableCredential":
        if not isinstance(data, dict) or set(data) != {"metadata", "claims", "proof"}:
            raise ValueError("malformed credential")
        md, proof, claims = data["metadata"], data["proof"], data["claims"]
        if set(md) != {"issuer", "subject", "type", "issuedAt", "id"} or set(proof) != {"sig", "method", "created"}:
            raise ValueError("malformed credential")
        if not isinstance(claims, dict) or not all(isinstance(v, str) for v in claims.values()):
            raise ValueError("claims are flat string pairs")
        metadata = CredentialMetadata(
            str(md["issuer"]), subject_from_wire(md["subject"]), str(md["type"]), int(md["issuedAt"]), str(md["id"])
        )
        sig = Signature(SCHEME_ID, unmultibase(proof["sig"]), str(proof["method"]))
        return cls(metadata, tuple(claims.items()), Proof(sig, str(proof["method"]), int(proof["created"])))


def _issuer_identity(issuer: Agent, issuer_did: Optional[str]) -> tuple[str, str, KeyPair]:
    candidates = [str(issuer_did)] if issuer_did is not None else list(issuer.documents)
    for did in candidates:
        try:
            mid, key = issuer.signing_key(did, KeyPurpose.ASSERTION)
        except (KeyError, PurposeMismatch):
            continue
        return did, mid, key
    raise NoAssertionKey(f"{issuer.name} has no assertion key in its DID document")


def issue_vc(
    issuer: Agent,
    subject: SubjectId,
    credential_type: str,
    claims: Mapping[str, str],
    *,
    issuer_did: Optional[str] = None,
    channel: Optional[SecureChannel] = None,
    holder: Optional[Agent] = None,
) -> VerifiableCredential:
    """Sign ``claims`` about ``subject``.

    With ``channel`` and ``holder`` the credential is also delivered over that
    channel and stored in the holder's wallet.
    """
    if not claims:
        raise EmptyClaims("a credential needs at least one claim")
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in claims.items()):
        raise TypeError("claims are flat string pairs")
    did, mid, key = _issuer_identity(issuer, issuer_did)
    issued_at = issuer.clock.tick()
    draft = CredentialMetadata(did, subject, credential_type, issued_at)
    metadata = CredentialMetadata(did, subject, credential_type, issued_at, credential_id_for(draft, claims))
    unsigned = VerifiableCredential(metadata, tuple(claims.items()), Proof(Signature(SCHEME_ID, b"", mid), mid, issued_at))
    vc = VerifiableCredential(metadata, unsigned.claims, Proof(sign(key, unsigned.signing_bytes(), mid), mid, issued_at))
    issuer.issued[metadata.credential_id] = did
    if channel is not None and holder is not None:
        deliver_vc(channel, issuer, holder, vc)
    return vc


def deliver_vc(channel: SecureChannel, issuer: Agent, holder: Agent, vc: VerifiableCredential):
    """Send ``vc`` over ``channel`` and file it in the holder's wallet. Returns the envelope."""
    env = send(channel, issuer, canonical_json(vc.to_wire()))
    body = receive(channel, holder, env)
    received = VerifiableCredential.from_wire(json.loads(body.decode("utf-8")))
    holder.wallet.credentials.append(received)
    return env


class VcStatus(str, Enum):
    VALID = "valid"
    BAD_PROOF = "BadProof"
    ISSUER_UNRESOLVABLE = "IssuerUnresolvable"
    REVOKED = "Revoked"


DocSource = Union[RegistryHandle, DidDocument]


def verify_vc(vc: VerifiableCredential, doc_source: DocSource, *, as_of_height: Optional[int] = None) -> VcStatus:
    """Check the issuer proof, via a registry view or a supplied issuer document.

    Only a registry can report revocation. ``as_of_height`` evaluates
    against a registry snapshot instead of the latest state.
    """
    issuer = vc.metadata.issuer
    if isinstance(doc_source, DidDocument):
        if doc_source.did != issuer:
            return VcStatus.ISSUER_UNRESOLVABLE
        doc = doc_source
    else:
        try:
            doc = doc_source.resolve(issuer, as_of_height)
        except Did6gError:
            return VcStatus.ISSUER_UNRESOLVABLE
    if (
        not vc.claims
        or vc.proof.method_id != vc.proof.signature.method_id
        or credential_id_for(vc.metadata, vc.claims_dict) != vc.credential_id
        or not doc.verify(vc.signing_bytes(), vc.proof.signature, (KeyPurpose.ASSERTION,))
    ):
        return VcStatus.BAD_PROOF
    if not isinstance(doc_source, DidDocument):
        entry = doc_source.status(vc.credential_id, as_of_height, issuer)
        if entry is not None and entry.status == "revoked":
            return VcStatus.REVOKED
    return VcStatus.VALID


@dataclass(frozen=True)
class HolderProof:
    signature: Signature
    method_id: str
    public_key: bytes


@dataclass(frozen=True)
class VerifiablePresentation:
    credential: VerifiableCredential
    holder_proof: HolderProof
    nonce: bytes
    audience: str

    def signing_bytes(self) -> bytes:
        return _presentation_bytes(self.credential, self.nonce, self.audience)

    def to_wire(self) -> dict:
        return {
            "vc": self.credential.to_wire(),
            "nonce": multibase(self.nonce),
            "audience": self.audience,
            "holderProof": {
                "sig": multibase(self.holder_proof.signature.value),
                "method": self.holder_proof.method_id,
                "key": multibase(self.holder_proof.public_key),
            },
        }

    @classmethod
    def from_wire(cls, data: Any) -> "VerifiablePresentation":
        if not isinstance(data, dict) or set(data) != {"vc", "nonce", "audience", "holderProof"}:
            raise ValueError("malformed presentation")
        hp = data["holderProof"]
        if not isinstance(hp, dict) or set(hp) != {"sig", "method", "key"}:
            raise ValueError("malformed holder proof")
        sig = Signature(SCHEME_ID, unmultibase(hp["sig"]), str(hp["method"]))
        return cls(
            VerifiableCredential.from_wire(data["vc"]),
            HolderProof(sig, str(hp["method"]), unmultibase(hp["key"])),
            unmultibase(data["nonce"]),
            str(data["audience"]),
        )


def _presentation_bytes(vc: VerifiableCredential, nonce: bytes, audience: str) -> bytes:
    return canonical_json({"vc": vc.to_wire(), "nonce": multibase(nonce), "audience": audience})


def present_with_key(
    vc: VerifiableCredential, nonce: bytes, audience: str, key: KeyPair, method_id: str
) -> VerifiablePresentation:
    """Wrap ``vc`` and sign it with ``key``; no check that the key belongs to the subject."""
    sig = sign(key, _presentation_bytes(vc, nonce, str(audience)), method_id)
    return VerifiablePresentation(vc, HolderProof(sig, method_id, key.public_key), bytes(nonce), str(audience))


def _subject_key(holder: Agent, subject: SubjectId) -> tuple[str, KeyPair]:
    if isinstance(subject, LegacyKey):
        found = holder.wallet.find_by_public(subject.public_key)
        if found is not None and found[1].purpose.signs:
            return found
    else:
        try:
            return holder.signing_key(subject.did, KeyPurpose.AUTHENTICATION)
        except (KeyError, PurposeMismatch):
            pass
    raise NotHolder(f"{holder.name} does not hold the subject key")


def create_vp(holder: Agent, vc: VerifiableCredential, nonce: bytes, audience: str) -> VerifiablePresentation:
    mid, key = _subject_key(holder, vc.metadata.subject)
    return present_with_key(vc, nonce, audience, key, mid)


class VpStatus(str, Enum):
    ACCEPTED = "accepted"
    BAD_ISSUER_PROOF = "BadIssuerProof"
    BAD_OWNERSHIP_PROOF = "BadOwnershipProof"
    NONCE_MISMATCH = "NonceMismatch"
    REPLAYED = "Replayed"
    WRONG_AUDIENCE = "WrongAudience"
    REVOKED = "Revoked"


@dataclass
class NonceRegistry:
    """Verifier-side memory of challenges handed out and (nonce, credential id) pairs consumed."""

    issued: set[bytes] = field(default_factory=set)
    consumed: set[tuple[bytes, str]] = field(default_factory=set)

    def challenge(self, verifier: Agent) -> bytes:
        nonce = verifier.fresh_bytes(16)
        self.issued.add(nonce)
        return nonce

    def __contains__(self, pair: object) -> bool:
        return pair in self.consumed


def _owns_subject(vp: VerifiablePresentation, verifier: Agent) -> bool:
    hp = vp.holder_proof
    subject = vp.credential.metadata.subject
    if isinstance(subject, LegacyKey):
        bound = hp.public_key == subject.public_key
    else:
        try:
            did = Did.parse(subject.did)
        except ValueError:
            return False
        if did.method is DidMethod.SELF_CERTIFIED:
            bound = canonical_hash(hp.public_key) == did.identifier
        else:
            try:
                doc = verifier._registry().resolve(subject.did)
            except Did6gError:
                return False
            m = doc.method(hp.method_id)
            bound = m is not None and m.purpose is KeyPurpose.AUTHENTICATION and m.public_key == hp.public_key
    return bound and hp.signature.method_id == hp.method_id and verify(hp.public_key, vp.signing_bytes(), hp.signature)


def verify_vp(
    verifier: Agent,
    vp: VerifiablePresentation,
    expected_nonce: bytes,
    nonce_registry: NonceRegistry,
    *,
    verifier_did: Optional[str] = None,
    issuer_doc: Optional[DidDocument] = None,
) -> VpStatus:
    """Accept a presentation at most once.

    Checks run in order: issuer proof (and revocation), subject ownership,
    audience, replay, nonce. A replayed presentation is reported as
    Replayed even when it arrives under a fresh challenge. On acceptance the
    (nonce, credential id) pair is consumed.
    """
    source: Optional[DocSource] = issuer_doc if issuer_doc is not None else verifier.registry_view
    if source is None:
        return VpStatus.BAD_ISSUER_PROOF
    status = verify_vc(vp.credential, source)
    if status is VcStatus.REVOKED:
        return VpStatus.REVOKED
    if status is not VcStatus.VALID:
        return VpStatus.BAD_ISSUER_PROOF
    if not _owns_subject(vp, verifier):
        return VpStatus.BAD_OWNERSHIP_PROOF
    audiences = {str(verifier_did)} if verifier_did is not None else set(verifier.documents)
    if vp.audience not in audiences:
        return VpStatus.WRONG_AUDIENCE
    pair = (vp.nonce, vp.credential.credential_id)
    if pair in nonce_registry:
        return VpStatus.REPLAYED
    if vp.nonce != expected_nonce:
        return VpStatus.NONCE_MISMATCH
    nonce_registry.consumed.add(pair)
    return VpStatus.ACCEPTED


def revoke_vc(issuer: Agent, credential_id: str, registry: Optional[RegistryHandle] = None) -> str:
    """Publish a revocation status entry for a credential this agent issued. Returns the transaction id."""
    issuer_did = issuer.issued.get(credential_id)
    if issuer_did is None:
        raise NotIssuer(f"{issuer.name} did not issue {credential_id}")
    handle = registry if registry is not None else issuer.registry_view
    if handle is None:
        raise NoRegistryAccess(f"{issuer.name} has no registry access")
    mid, key = issuer.signing_key(issuer_did)
    tx = make_transaction(TxKind.SET_STATUS, StatusEntry(credential_id, issuer_did), issuer_did, key, mid)
    return handle.submit(tx)

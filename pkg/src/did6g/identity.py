"""Key material, DID syntax, DID documents and raw sign/verify.

Every function here is pure: the same inputs always produce the same bytes,
which is what lets scenario runs replay exactly from a single seed.

Two DID methods are supported:

    did:vdr:<id>    anchored in a registry
    did:self:<id>   self-certified, verifiable with no registry at all

For both, ``<id>`` is the lowercase base32 SHA-256 of the version-0
authentication public key, so identifiers are unique and fixed length.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Iterable, Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .codec import base32_lower, canonical_json, multibase, sha256_hex, unmultibase
from .errors import (
    DidSyntaxError,
    InvalidContext,
    InvalidDocument,
    InvalidSeed,
    NotController,
    PurposeMismatch,
)

SCHEME_ID = "Ed25519"
SEED_LEN = 32
KEY_LEN = 32

_IDENTIFIER_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class KeyPurpose(str, Enum):
    AUTHENTICATION = "authentication"
    ASSERTION = "assertionMethod"
    KEY_AGREEMENT = "keyAgreement"

    @property
    def signs(self) -> bool:
        return self is not KeyPurpose.KEY_AGREEMENT


class DidMethod(str, Enum):
    REGISTRY = "vdr"
    SELF_CERTIFIED = "self"


def hkdf(key: bytes, info: bytes, *, salt: Optional[bytes] = None, length: int = 32) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=length, salt=salt, info=info).derive(key)


@lru_cache(maxsize=4096)
def _ed25519(private_key: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(private_key)


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes = field(repr=False)
    purpose: KeyPurpose

    @staticmethod
    def public_from_private(private_key: bytes, purpose: KeyPurpose) -> bytes:
        if purpose is KeyPurpose.KEY_AGREEMENT:
            return X25519PrivateKey.from_private_bytes(private_key).public_key().public_bytes_raw()
        return _ed25519(private_key).public_key().public_bytes_raw()


def generate_keypair(purpose: KeyPurpose, seed: bytes) -> KeyPair:
    """Derive a key pair for ``purpose`` from 32 bytes of caller-supplied entropy.

    The purpose is mixed into the derivation, so one seed never yields the
    same secret for two purposes.
    """
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_LEN:
        raise InvalidSeed(f"seed must be {SEED_LEN} bytes")
    purpose = KeyPurpose(purpose)
    private = hkdf(bytes(seed), b"did6g/keypair/" + purpose.value.encode("ascii"))
    return KeyPair(KeyPair.public_from_private(private, purpose), private, purpose)


@dataclass(frozen=True, order=True)
class Did:
    method: DidMethod
    identifier: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", DidMethod(self.method))
        if not _IDENTIFIER_RE.match(self.identifier or ""):
            raise DidSyntaxError(f"identifier is not URL-safe: {self.identifier!r}")

    def __str__(self) -> str:
        return f"did:{self.method.value}:{self.identifier}"

    @classmethod
    def parse(cls, text: str) -> "Did":
        parts = text.split(":") if isinstance(text, str) else []
        if len(parts) != 3 or parts[0] != "did":
            raise DidSyntaxError(f"not a DID: {text!r}")
        try:
            method = DidMethod(parts[1])
        except ValueError:
            raise DidSyntaxError(f"unsupported DID method: {parts[1]!r}") from None
        return cls(method, parts[2])


def canonical_hash(public_key: bytes) -> str:
    """Self-certifying identifier for a public key."""
    return base32_lower(hashlib.sha256(public_key).digest())


@dataclass(frozen=True)
class Signature:
    scheme_id: str
    value: bytes
    method_id: str

    def to_wire(self) -> dict:
        return {"scheme": self.scheme_id, "method": self.method_id, "value": multibase(self.value)}

    @classmethod
    def from_wire(cls, data: dict) -> "Signature":
        if not isinstance(data, dict) or set(data) != {"scheme", "method", "value"}:
            raise ValueError("malformed signature")
        return cls(str(data["scheme"]), unmultibase(data["value"]), str(data["method"]))


def sign(key: KeyPair, message: bytes, method_id: str = "") -> Signature:
    if not key.purpose.signs:
        raise PurposeMismatch(f"{key.purpose.value} keys cannot sign")
    return Signature(SCHEME_ID, _ed25519(key.private_key).sign(message), method_id)


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    if signature.scheme_id != SCHEME_ID or len(public_key) != KEY_LEN:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature.value, message)
    except (InvalidSignature, ValueError):
        return False
    return True


@dataclass(frozen=True)
class VerificationMethod:
    method_id: str
    purpose: KeyPurpose
    public_key: bytes

    def to_wire(self) -> dict:
        return {
            "id": self.method_id,
            "purpose": self.purpose.value,
            "publicKeyMultibase": multibase(self.public_key),
        }

    @classmethod
    def from_wire(cls, data: Any) -> "VerificationMethod":
        if not isinstance(data, dict) or set(data) != {"id", "purpose", "publicKeyMultibase"}:
            raise InvalidDocument("verification method has unexpected fields")
        try:
            return cls(str(data["id"]), KeyPurpose(data["purpose"]), unmultibase(data["publicKeyMultibase"]))
        except ValueError as exc:
            raise InvalidDocument(str(exc)) from exc


DOCUMENT_FIELDS = frozenset({"id", "controller", "verificationMethod", "version", "prevVersionHash"})


@dataclass(frozen=True)
class DidDocument:
    """Public verification material for one DID.

    The field set is closed: there is nowhere to put a name, address,
    subscriber number or any other personal attribute.
    """

    id: Did
    verification_methods: tuple[VerificationMethod, ...]
    controller: Optional[Did] = None
    version: int = 0
    prev_version_hash: Optional[str] = None

    def __post_init__(self) -> None:
        if self.controller is None:
            object.__setattr__(self, "controller", self.id)
        object.__setattr__(self, "verification_methods", tuple(self.verification_methods))
        if not any(m.purpose is KeyPurpose.AUTHENTICATION for m in self.verification_methods):
            raise InvalidDocument("a DID document needs at least one authentication method")
        if not isinstance(self.version, int) or isinstance(self.version, bool) or self.version < 0:
            raise InvalidDocument("version must be a non-negative integer")
        if (self.version == 0) != (self.prev_version_hash is None):
            raise InvalidDocument("prevVersionHash is absent exactly at version 0")
        ids = [m.method_id for m in self.verification_methods]
        if len(set(ids)) != len(ids):
            raise InvalidDocument("duplicate verification method id")
        prefix = f"{self.id}#"
        for m in self.verification_methods:
            if not m.method_id.startswith(prefix):
                raise InvalidDocument(f"method id {m.method_id!r} not scoped to {self.id}")
            if len(m.public_key) != KEY_LEN:
                raise InvalidDocument("public keys are 32 bytes")

    @property
    def did(self) -> str:
        return str(self.id)

    def to_wire(self) -> dict:
        return {
            "id": str(self.id),
            "controller": str(self.controller),
            "verificationMethod": [m.to_wire() for m in self.verification_methods],
            "version": self.version,
            "prevVersionHash": self.prev_version_hash,
        }

    @classmethod
    def from_wire(cls, data: Any) -> "DidDocument":
        if not isinstance(data, dict) or set(data) != DOCUMENT_FIELDS:
            raise InvalidDocument("DID document has unexpected or missing fields")
        methods = data["verificationMethod"]
        if not isinstance(methods, list):
            raise InvalidDocument("verificationMethod must be a list")
        prev = data["prevVersionHash"]
        if prev is not None and not isinstance(prev, str):
            raise InvalidDocument("prevVersionHash must be a string or null")
        return cls(
            id=Did.parse(data["id"]),
            controller=Did.parse(data["controller"]),
            verification_methods=tuple(VerificationMethod.from_wire(m) for m in methods),
            version=data["version"],
            prev_version_hash=prev,
        )

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_wire())

    def digest(self) -> str:
        return sha256_hex(self.canonical_bytes())

    def methods(self, purpose: KeyPurpose) -> list[VerificationMethod]:
        return [m for m in self.verification_methods if m.purpose is purpose]

    def method(self, method_id: str) -> Optional[VerificationMethod]:
        for m in self.verification_methods:
            if m.method_id == method_id:
                return m
        return None

    def verify(
        self,
        message: bytes,
        signature: Signature,
        purposes: Iterable[KeyPurpose] = (KeyPurpose.AUTHENTICATION,),
    ) -> bool:
        """Check ``signature`` against the method it names, if that method has an allowed purpose."""
        m = self.method(signature.method_id)
        if m is None or m.purpose not in tuple(purposes):
            return False
        return verify(m.public_key, message, signature)


def method_id(did: Did | str, version: int, index: int) -> str:
    return f"{did}#v{version}-{index}"


def create_did_document(
    method: DidMethod, auth_key: KeyPair, extra_keys: Sequence[KeyPair] = ()
) -> tuple[Did, DidDocument]:
    if auth_key.purpose is not KeyPurpose.AUTHENTICATION:
        raise PurposeMismatch("the first key of a DID document must be an authentication key")
    did = Did(DidMethod(method), canonical_hash(auth_key.public_key))
    methods = [
        VerificationMethod(method_id(did, 0, i), k.purpose, k.public_key)
        for i, k in enumerate([auth_key, *extra_keys])
    ]
    return did, DidDocument(did, tuple(methods))


def is_self_certified(doc: DidDocument, genesis: Optional[DidDocument] = None) -> bool:
    """True when the identifier re-hashes from the version-0 authentication key.

    For later versions the version-0 document must be supplied.
    """
    origin = genesis if genesis is not None else doc
    if origin.version != 0 or origin.id != doc.id:
        return False
    auth = origin.methods(KeyPurpose.AUTHENTICATION)
    return bool(auth) and canonical_hash(auth[0].public_key) == doc.id.identifier


def next_version(
    doc: DidDocument,
    verification_methods: Sequence[VerificationMethod],
    controller: Optional[Did] = None,
) -> DidDocument:
    return DidDocument(
        id=doc.id,
        controller=controller if controller is not None else doc.controller,
        verification_methods=tuple(verification_methods),
        version=doc.version + 1,
        prev_version_hash=doc.digest(),
    )


def propose_rotation(doc: DidDocument, new_method: VerificationMethod, *, retain_old: bool = False) -> DidDocument:
    """The document a rotation would produce; the controller signs its canonical bytes."""
    methods = list(doc.verification_methods)
    if new_method.purpose is KeyPurpose.AUTHENTICATION and not retain_old:
        methods = [m for m in methods if m.purpose is not KeyPurpose.AUTHENTICATION]
    methods.append(new_method)
    return next_version(doc, methods)


def rotate_key(
    doc: DidDocument,
    new_method: VerificationMethod,
    controller_signature: Signature,
    *,
    retain_old: bool = False,
    controller_doc: Optional[DidDocument] = None,
) -> DidDocument:
    """Apply a key rotation authorised by the document's controller.

    When the controller is a different DID its current document must be
    passed as ``controller_doc``.
    """
    proposed = propose_rotation(doc, new_method, retain_old=retain_old)
    if controller_doc is None:
        controller_doc = doc
    if controller_doc.id != doc.controller:
        raise NotController(f"{controller_doc.id} does not control {doc.id}")
    if not controller_doc.verify(proposed.canonical_bytes(), controller_signature):
        raise NotController("rotation is not signed by the controller")
    return proposed


def derive_pairwise_did(root_seed: bytes, peer_context: str) -> tuple[Did, DidDocument, KeyPair]:
    """A self-certified DID for talking to one peer.

    Each ``peer_context`` gets its own key derived from the root seed with a
    domain-separation tag, so two pairwise DIDs share no key material.
    """
    if not peer_context:
        raise InvalidContext("peer_context must be non-empty")
    if not isinstance(root_seed, (bytes, bytearray)) or len(root_seed) != SEED_LEN:
        raise InvalidSeed(f"root seed must be {SEED_LEN} bytes")
    seed = hkdf(bytes(root_seed), peer_context.encode("utf-8"), salt=b"did6g/pairwise/v1")
    key = generate_keypair(KeyPurpose.AUTHENTICATION, seed)
    did, doc = create_did_document(DidMethod.SELF_CERTIFIED, key)
    return did, doc, key

"""Transactions, hash-chained blocks, and the integrity checks over them.

Block hash = SHA-256(height as 8-byte big-endian || prev_hash as ASCII hex ||
canonical JSON of the transaction list). The genesis block links to 64 zero
hex characters. There is no transaction kind that removes anything.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Union

from ..codec import ZERO_HASH, canonical_json, sha256_hex
from ..errors import LedgerFormatError, TooFewReplicas
from ..identity import DidDocument, KeyPair, Signature, sign


class TxKind(str, Enum):
    CREATE_DOC = "CreateDoc"
    UPDATE_DOC = "UpdateDoc"
    # credential status entries (revocation); append-only like everything else
    SET_STATUS = "SetStatus"


@dataclass(frozen=True)
class StatusEntry:
    credential_id: str
    issuer: str
    status: str = "revoked"

    def to_wire(self) -> dict:
        return {"credentialId": self.credential_id, "issuer": self.issuer, "status": self.status}

    @classmethod
    def from_wire(cls, data: dict) -> "StatusEntry":
        if not isinstance(data, dict) or set(data) != {"credentialId", "issuer", "status"}:
            raise ValueError("malformed status entry")
        return cls(str(data["credentialId"]), str(data["issuer"]), str(data["status"]))


Payload = Union[DidDocument, StatusEntry]


def _signing_bytes(kind: TxKind, payload: Payload, author: str) -> bytes:
    return canonical_json({"kind": kind.value, "author": author, "payload": payload.to_wire()})


@dataclass(frozen=True)
class RegistryTransaction:
    kind: TxKind
    payload: Payload
    author: str
    author_signature: Signature
    tx_id: str

    def signing_bytes(self) -> bytes:
        return _signing_bytes(self.kind, self.payload, self.author)

    def compute_id(self) -> str:
        return sha256_hex(
            canonical_json(
                {
                    "kind": self.kind.value,
                    "author": self.author,
                    "payload": self.payload.to_wire(),
                    "sig": self.author_signature.to_wire(),
                }
            )
        )

    def to_wire(self) -> dict:
        return {
            "txId": self.tx_id,
            "kind": self.kind.value,
            "author": self.author,
            "payload": self.payload.to_wire(),
            "sig": self.author_signature.to_wire(),
        }

    @classmethod
    def from_wire(cls, data: dict) -> "RegistryTransaction":
        if not isinstance(data, dict) or set(data) != {"txId", "kind", "author", "payload", "sig"}:
            raise ValueError("malformed transaction")
        kind = TxKind(data["kind"])
        payload: Payload
        if kind is TxKind.SET_STATUS:
            payload = StatusEntry.from_wire(data["payload"])
        else:
            payload = DidDocument.from_wire(data["payload"])
        return cls(kind, payload, str(data["author"]), Signature.from_wire(data["sig"]), str(data["txId"]))


def make_transaction(kind: TxKind, payload: Payload, author: str, key: KeyPair, method_id: str) -> RegistryTransaction:
    kind = TxKind(kind)
    author = str(author)
    sig = sign(key, _signing_bytes(kind, payload, author), method_id)
    unsigned = RegistryTransaction(kind, payload, author, sig, "")
    return RegistryTransaction(kind, payload, author, sig, unsigned.compute_id())


def compute_block_hash(height: int, prev_hash: str, tx_wires: list) -> str:
    h = hashlib.sha256()
    h.update(height.to_bytes(8, "big"))
    h.update(prev_hash.encode("utf-8"))
    h.update(canonical_json(tx_wires))
    return h.hexdigest()


@dataclass(frozen=True)
class LedgerBlock:
    height: int
    prev_hash: str
    txs: tuple[RegistryTransaction, ...]
    block_hash: str

    @classmethod
    def build(cls, height: int, prev_hash: str, txs: Sequence[RegistryTransaction]) -> "LedgerBlock":
        txs = tuple(txs)
        return cls(height, prev_hash, txs, compute_block_hash(height, prev_hash, [t.to_wire() for t in txs]))

    def recompute_hash(self) -> str:
        return compute_block_hash(self.height, self.prev_hash, [t.to_wire() for t in self.txs])

    def to_wire(self) -> dict:
        return {
            "height": self.height,
            "prevHash": self.prev_hash,
            "blockHash": self.block_hash,
            "txs": [t.to_wire() for t in self.txs],
        }

    def summary(self) -> dict:
        return {
            "height": self.height,
            "prevHash": self.prev_hash,
            "blockHash": self.block_hash,
            "txIds": [t.tx_id for t in self.txs],
        }


@dataclass
class Ledger:
    blocks: list[LedgerBlock] = field(default_factory=list)

    @property
    def height(self) -> int:
        """Height the next block will get."""
        return len(self.blocks)

    @property
    def head_hash(self) -> str:
        return self.blocks[-1].block_hash if self.blocks else ZERO_HASH

    def next_block(self, txs: Sequence[RegistryTransaction]) -> LedgerBlock:
        return LedgerBlock.build(self.height, self.head_hash, txs)

    def append(self, block: LedgerBlock) -> None:
        if block.height != self.height or block.prev_hash != self.head_hash:
            raise ValueError("block does not extend the ledger head")
        self.blocks.append(block)

    def copy(self) -> "Ledger":
        return Ledger(list(self.blocks))

    def dump(self) -> bytes:
        """Full state as JSON lines, one block per line."""
        return b"".join(canonical_json(b.to_wire()) + b"\n" for b in self.blocks)

    @classmethod
    def load(cls, data: bytes) -> "Ledger":
        ledger = cls()
        for lineno, line in enumerate(_lines(data)):
            try:
                wire = json.loads(line.decode("utf-8"))
                if set(wire) != {"height", "prevHash", "blockHash", "txs"}:
                    raise ValueError("unexpected block fields")
                block = LedgerBlock(
                    wire["height"],
                    wire["prevHash"],
                    tuple(RegistryTransaction.from_wire(t) for t in wire["txs"]),
                    wire["blockHash"],
                )
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                raise LedgerFormatError(f"line {lineno}: {exc}") from exc
            ledger.blocks.append(block)
        return ledger


def _lines(data: bytes) -> list[bytes]:
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    return lines


@dataclass(frozen=True)
class ChainCheck:
    ok: bool
    broken_at: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


@lru_cache(maxsize=8192)
def _check_line(line: bytes) -> Optional[tuple[int, str, str]]:
    """(height, prev_hash, block_hash) for a self-consistent block line, else None."""
    try:
        wire = json.loads(line.decode("utf-8"))
        if not isinstance(wire, dict) or set(wire) != {"height", "prevHash", "blockHash", "txs"}:
            return None
        if canonical_json(wire) != line:
            return None
        height, prev, stored = wire["height"], wire["prevHash"], wire["blockHash"]
        if type(height) is not int or not isinstance(prev, str) or not isinstance(wire["txs"], list):
            return None
        if compute_block_hash(height, prev, wire["txs"]) != stored:
            return None
    except (ValueError, UnicodeDecodeError, OverflowError):
        return None
    return height, prev, stored


def verify_chain(ledger: Union[Ledger, bytes]) -> ChainCheck:
    """Recompute every block hash and prev-hash link.

    Accepts a ``Ledger`` or its serialized JSON-lines form; for bytes, a
    line that fails to parse or is not in canonical form is reported as
    broken at that line's height. Truncating the tail is not detectable here;
    use ``compare_replicas`` for that.
    """
    prev = ZERO_HASH
    if isinstance(ledger, (bytes, bytearray)):
        for expected, line in enumerate(_lines(bytes(ledger))):
            parsed = _check_line(line)
            if parsed is None or parsed[0] != expected or parsed[1] != prev:
                return ChainCheck(False, expected)
            prev = parsed[2]
        return ChainCheck(True)

    for expected, block in enumerate(ledger.blocks):
        if block.height != expected or block.prev_hash != prev or block.recompute_hash() != block.block_hash:
            return ChainCheck(False, expected)
        prev = block.block_hash
    return ChainCheck(True)


@dataclass(frozen=True)
class ReplicaCheck:
    consistent: bool
    diverged_at: Optional[int] = None
    replica_ids: frozenset[int] = frozenset()

    def __bool__(self) -> bool:
        return self.consistent


def compare_replicas(replicas: Sequence[Ledger]) -> ReplicaCheck:
    """Compare block hashes height by height and report the first divergence.

    The replicas that disagree with the most common hash at that height (a
    missing block counts as disagreement) are reported by index.
    """
    if len(replicas) < 2:
        raise TooFewReplicas("need at least two replicas")
    longest = max(len(r.blocks) for r in replicas)
    for h in range(longest):
        hashes = [r.blocks[h].block_hash if h < len(r.blocks) else None for r in replicas]
        if len(set(hashes)) == 1:
            continue
        majority = Counter(hashes).most_common(1)[0][0]
        return ReplicaCheck(False, h, frozenset(i for i, x in enumerate(hashes) if x != majority))
    return ReplicaCheck(True)

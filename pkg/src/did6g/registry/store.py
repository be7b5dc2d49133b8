"""The registry state machine: validation, commit, and historical reads."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Optional

from ..errors import (
    BadSignature,
    DuplicateDid,
    EmptyPending,
    NotController,
    NotFound,
    NotIssuer,
    ReadDenied,
    VersionGap,
    WriteDenied,
)
from ..identity import DidDocument, is_self_certified
from .consensus import BftQuorum, ConsensusConfig, ConsensusOutcome, run_consensus_round
from .governance import GovernancePolicy
from .ledger import Ledger, RegistryTransaction, StatusEntry, TxKind


@dataclass
class RegistryCounters:
    reads: int = 0
    writes: int = 0
    rejected: int = 0
    consensus_rounds: int = 0
    consensus_messages: int = 0


class Registry:
    """A single logical verifiable data registry.

    Accepted transactions wait in ``pending`` until a consensus round
    commits them into a block. With ``auto_commit`` every accepted
    transaction triggers a round immediately. If the round halts the
    transactions stay pending.
    """

    def __init__(
        self,
        policy: GovernancePolicy,
        consensus: Optional[ConsensusConfig] = None,
        *,
        auto_commit: bool = True,
    ) -> None:
        self.policy = policy
        self.consensus = consensus if consensus is not None else BftQuorum(("node-0",))
        self.auto_commit = auto_commit
        self.ledger = Ledger()
        self.pending: list[RegistryTransaction] = []
        self.counters = RegistryCounters()
        self.outcomes: list[ConsensusOutcome] = []
        # did -> [(height, doc)] in commit order
        self._docs: dict[str, list[tuple[int, DidDocument]]] = {}
        self._status: dict[str, list[tuple[int, StatusEntry]]] = {}

    @property
    def height(self) -> int:
        """Height of the latest committed block, -1 when empty."""
        return self.ledger.height - 1

    def handle(self, caller: Optional[str]) -> "RegistryHandle":
        return RegistryHandle(self, None if caller is None else str(caller))

    def amend_policy(self, admin: str, **changes) -> GovernancePolicy:
        self.policy = self.policy.amend(str(admin), **changes)
        return self.policy

    # writes

    def _current(self, did: str) -> Optional[DidDocument]:
        for tx in reversed(self.pending):
            if tx.kind is not TxKind.SET_STATUS and tx.payload.did == did:
                return tx.payload
        versions = self._docs.get(did)
        return versions[-1][1] if versions else None

    def validate(self, tx: RegistryTransaction) -> None:
        """Raise the reason ``tx`` would be rejected; return silently if acceptable."""
        if not self.policy.writers.allows(tx.author):
            raise WriteDenied(f"{tx.author} may not write")
        if tx.tx_id != tx.compute_id():
            raise BadSignature("transaction id does not match its content")
        msg = tx.signing_bytes()

        if tx.kind is TxKind.SET_STATUS:
            author_doc = self._current(tx.author)
            if author_doc is None or not author_doc.verify(msg, tx.author_signature):
                raise BadSignature("status entry not signed by a registered authentication key")
            entry = tx.payload
            # the registry never sees credentials, so it can only insist that authors speak for themselves;
            # readers filter entries by the credential's issuer
            if entry.issuer != tx.author:
                raise NotIssuer(f"{tx.author} may only publish status entries as issuer")
            return

        doc = tx.payload
        if not isinstance(doc, DidDocument):
            raise TypeError("document transactions carry a DidDocument")
        current = self._current(doc.did)

        if tx.kind is TxKind.CREATE_DOC:
            if current is not None:
                raise DuplicateDid(f"{doc.did} already exists")
            signer = doc if tx.author == doc.did else self._current(tx.author)
            if signer is None or not signer.verify(msg, tx.author_signature):
                raise BadSignature("create not signed by the author's authentication key")
            if str(doc.controller) != tx.author:
                raise NotController(f"{tx.author} is not the controller of {doc.did}")
            if doc.version != 0:
                raise VersionGap("new documents start at version 0")
            if not is_self_certified(doc):
                raise BadSignature("identifier does not bind the version-0 authentication key")
            return

        if current is None:
            raise NotFound(f"{doc.did} is not registered")
        author_doc = current if tx.author == doc.did else self._current(tx.author)
        if author_doc is None or not author_doc.verify(msg, tx.author_signature):
            raise BadSignature("update not signed by the author's current authentication key")
        if tx.author != str(current.controller):
            raise NotController(f"{tx.author} is not the controller of {doc.did}")
        if doc.version != current.version + 1 or doc.prev_version_hash != current.digest():
            raise VersionGap(f"expected version {current.version + 1} chained to {current.digest()[:12]}")

    def submit(self, tx: RegistryTransaction) -> str:
        """Accept ``tx`` into the pending pool (and commit it when auto-committing)."""
        try:
            self.validate(tx)
        except Exception:
            self.counters.rejected += 1
            raise
        self.pending.append(tx)
        self.counters.writes += 1
        if self.auto_commit:
            self.commit()
        return tx.tx_id

    def commit(self) -> ConsensusOutcome:
        if not self.pending:
            raise EmptyPending("no pending transactions")
        outcome, block = run_consensus_round(
            self.consensus, self.pending, height=self.ledger.height, prev_hash=self.ledger.head_hash
        )
        self.counters.consensus_rounds += outcome.rounds
        self.counters.consensus_messages += outcome.messages_sent
        self.outcomes.append(outcome)
        if block is not None:
            self.ledger.append(block)
            for tx in block.txs:
                if tx.kind is TxKind.SET_STATUS:
                    self._status.setdefault(tx.payload.credential_id, []).append((block.height, tx.payload))
                else:
                    self._docs.setdefault(tx.payload.did, []).append((block.height, tx.payload))
            self.pending = []
        return outcome

    # reads

    def _check_read(self, caller: Optional[str]) -> None:
        self.counters.reads += 1
        if not self.policy.readers.allows(caller):
            raise ReadDenied(f"{caller} may not read")

    @staticmethod
    def _upto(entries: list, as_of_height: Optional[int]) -> list:
        if as_of_height is None:
            return entries
        return entries[: bisect.bisect_right([h for h, _ in entries], as_of_height)]

    def resolve(self, did: str, as_of_height: Optional[int] = None, caller: Optional[str] = None) -> DidDocument:
        """Latest version of ``did`` committed at or before ``as_of_height``."""
        self._check_read(caller)
        versions = self._upto(self._docs.get(str(did), []), as_of_height)
        if not versions:
            raise NotFound(f"{did} not found")
        return versions[-1][1]

    def history(self, did: str, caller: Optional[str] = None) -> list[DidDocument]:
        self._check_read(caller)
        versions = self._docs.get(str(did))
        if not versions:
            raise NotFound(f"{did} not found")
        return [doc for _, doc in versions]

    def status(
        self,
        credential_id: str,
        as_of_height: Optional[int] = None,
        caller: Optional[str] = None,
        issuer: Optional[str] = None,
    ) -> Optional[StatusEntry]:
        """Latest status entry for ``credential_id``, only counting entries by ``issuer`` when given."""
        self._check_read(caller)
        entries = self._upto(self._status.get(credential_id, []), as_of_height)
        if issuer is not None:
            entries = [e for e in entries if e[1].issuer == issuer]
        return entries[-1][1] if entries else None

    def __contains__(self, did: object) -> bool:
        return str(did) in self._docs


@dataclass
class RegistryHandle:
    """A registry as seen by one caller; ACL checks use ``caller``."""

    registry: Registry
    caller: Optional[str]

    @property
    def height(self) -> int:
        return self.registry.height

    def resolve(self, did: str, as_of_height: Optional[int] = None) -> DidDocument:
        return self.registry.resolve(did, as_of_height, self.caller)

    def history(self, did: str) -> list[DidDocument]:
        return self.registry.history(did, self.caller)

    def status(
        self, credential_id: str, as_of_height: Optional[int] = None, issuer: Optional[str] = None
    ) -> Optional[StatusEntry]:
        return self.registry.status(credential_id, as_of_height, self.caller, issuer)

    def submit(self, tx: RegistryTransaction) -> str:
        return self.registry.submit(tx)

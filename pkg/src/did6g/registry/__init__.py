"""Trust layer: a governed, append-only, replicated registry for DID documents."""

from .consensus import (
    UNBOUNDED,
    BftQuorum,
    ConsensusConfig,
    ConsensusOutcome,
    MetricsRow,
    StakeLottery,
    TamperReport,
    bft_messages,
    estimate_metrics,
    halting_threshold,
    inject_stake_takeover,
    run_consensus_round,
    stake_messages,
)
from .governance import Acl, GovernancePolicy, PolicyKind
from .ledger import (
    ChainCheck,
    Ledger,
    LedgerBlock,
    RegistryTransaction,
    ReplicaCheck,
    StatusEntry,
    TxKind,
    compare_replicas,
    compute_block_hash,
    make_transaction,
    verify_chain,
)
from .store import Registry, RegistryCounters, RegistryHandle

__all__ = [
    "UNBOUNDED",
    "Acl",
    "BftQuorum",
    "ChainCheck",
    "ConsensusConfig",
    "ConsensusOutcome",
    "GovernancePolicy",
    "Ledger",
    "LedgerBlock",
    "MetricsRow",
    "PolicyKind",
    "Registry",
    "RegistryCounters",
    "RegistryHandle",
    "RegistryTransaction",
    "ReplicaCheck",
    "StakeLottery",
    "StatusEntry",
    "TamperReport",
    "TxKind",
    "bft_messages",
    "compare_replicas",
    "compute_block_hash",
    "estimate_metrics",
    "halting_threshold",
    "inject_stake_takeover",
    "make_transaction",
    "run_consensus_round",
    "stake_messages",
    "verify_chain",
]

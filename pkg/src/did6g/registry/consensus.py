"""Closed-form consensus models.

Nothing here touches a network. Message counts and latencies follow fixed
formulas so that results are exact and reproducible:

* BFT quorum (pre-prepare, prepare, commit):
  ``(n - 1) + 2 * n * (n - 1)`` messages, 3 message delays; the round
  commits iff fewer than ``ceil(n / 3)`` nodes are faulty.
* Stake lottery (propose, acknowledge): ``2 * (n - 1)`` messages,
  2 message delays; the leader is drawn with probability stake / total.

Proof-of-work is deliberately not offered.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from ..errors import EmptyPending, UnknownActor
from .ledger import Ledger, LedgerBlock, RegistryTransaction
from ..codec import ZERO_HASH

BFT_PHASES = 3
STAKE_PHASES = 2
TAKEOVER_FRACTION = Fraction(2, 3)
UNBOUNDED = "unbounded"


def halting_threshold(n: int) -> int:
    """Smallest number of faulty nodes that stops a BFT quorum of ``n``."""
    return -(-n // 3)


def bft_messages(n: int) -> int:
    return (n - 1) + 2 * n * (n - 1)


def stake_messages(n: int) -> int:
    return 2 * (n - 1)


@dataclass(frozen=True)
class BftQuorum:
    nodes: tuple[str, ...]
    faulty: frozenset[str] = frozenset()
    per_message_latency_ms: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "faulty", frozenset(self.faulty))
        if not self.nodes:
            raise ValueError("a quorum needs at least one node")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate node id")
        if not self.faulty <= set(self.nodes):
            raise ValueError("faulty nodes must be members of the quorum")
        if self.per_message_latency_ms < 0:
            raise ValueError("latency must be non-negative")

    @classmethod
    def of_size(cls, n: int, faulty: int = 0, per_message_latency_ms: float = 1.0) -> "BftQuorum":
        nodes = tuple(f"node-{i}" for i in range(n))
        return cls(nodes, frozenset(nodes[:faulty]), per_message_latency_ms)

    @property
    def n(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class StakeLottery:
    stakes: Mapping[str, int]
    rng_seed: int = 0
    per_message_latency_ms: float = 1.0

    def __post_init__(self) -> None:
        stakes = dict(sorted((str(k), int(v)) for k, v in dict(self.stakes).items()))
        if any(v < 0 for v in stakes.values()):
            raise ValueError("stakes are non-negative")
        if sum(stakes.values()) <= 0:
            raise ValueError("total stake must be positive")
        if self.per_message_latency_ms < 0:
            raise ValueError("latency must be non-negative")
        object.__setattr__(self, "stakes", stakes)

    def __hash__(self) -> int:
        return hash((tuple(self.stakes.items()), self.rng_seed, self.per_message_latency_ms))

    @property
    def n(self) -> int:
        return len(self.stakes)

    @property
    def total(self) -> int:
        return sum(self.stakes.values())

    def draw_leader(self, height: int) -> str:
        # str seeds are hashed with SHA-512 by random.Random, so this is stable across processes
        r = random.Random(f"{self.rng_seed}/{height}").randrange(self.total)
        for holder, stake in self.stakes.items():
            if r < stake:
                return holder
            r -= stake
        raise AssertionError("unreachable")


ConsensusConfig = Union[BftQuorum, StakeLottery]


@dataclass(frozen=True)
class ConsensusOutcome:
    committed: bool
    rounds: int
    messages_sent: int
    simulated_latency_ms: float
    leader: Optional[str] = None


def run_consensus_round(
    cfg: ConsensusConfig,
    pending: Sequence[RegistryTransaction],
    *,
    height: int = 0,
    prev_hash: str = ZERO_HASH,
) -> tuple[ConsensusOutcome, Optional[LedgerBlock]]:
    """Agree on one block holding ``pending``; the block is ``None`` when the round halts.

    A halted BFT round still pays its messages: crash-faulty nodes are
    counted as targets.
    """
    if not pending:
        raise EmptyPending("nothing to agree on")
    if isinstance(cfg, BftQuorum):
        n = cfg.n
        committed = len(cfg.faulty) < halting_threshold(n)
        leader = None
        if committed:
            # primary rotates with height; a crashed primary is skipped (view change)
            for i in range(n):
                candidate = cfg.nodes[(height + i) % n]
                if candidate not in cfg.faulty:
                    leader = candidate
                    break
        outcome = ConsensusOutcome(
            committed, 1, bft_messages(n), BFT_PHASES * cfg.per_message_latency_ms, leader
        )
    elif isinstance(cfg, StakeLottery):
        outcome = ConsensusOutcome(
            True, 1, stake_messages(cfg.n), STAKE_PHASES * cfg.per_message_latency_ms, cfg.draw_leader(height)
        )
    else:
        raise TypeError(f"unsupported consensus config: {type(cfg).__name__}")
    block = LedgerBlock.build(height, prev_hash, pending) if outcome.committed else None
    return outcome, block


@dataclass(frozen=True)
class TamperReport:
    attacker: str
    stake: int
    total_stake: int
    can_rewrite: bool
    fork_height: Optional[int] = None
    fork: Optional[Ledger] = field(default=None, compare=False)
    leader: Optional[str] = None

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.stake, self.total_stake)


def inject_stake_takeover(cfg: StakeLottery, attacker: str, ledger: Optional[Ledger] = None) -> TamperReport:
    """Can ``attacker`` rewrite history? Yes exactly when it holds at least 2/3 of the stake.

    If it can and a ledger is given, the report carries a forked copy in
    which the attacker, as leader, replaced the latest non-empty block with
    one that drops that block's last transaction.
    """
    if not isinstance(cfg, StakeLottery):
        raise TypeError("stake takeover needs a StakeLottery config")
    if attacker not in cfg.stakes:
        raise UnknownActor(f"{attacker} holds no stake entry")
    stake = cfg.stakes[attacker]
    can_rewrite = Fraction(stake, cfg.total) >= TAKEOVER_FRACTION
    if not can_rewrite or ledger is None:
        return TamperReport(attacker, stake, cfg.total, can_rewrite)

    target = next((b for b in reversed(ledger.blocks) if b.txs), None)
    if target is None:
        return TamperReport(attacker, stake, cfg.total, True, leader=attacker)
    fork = Ledger(list(ledger.blocks[: target.height]))
    fork.append(fork.next_block(target.txs[:-1]))
    return TamperReport(attacker, stake, cfg.total, True, target.height, fork, attacker)


@dataclass(frozen=True)
class MetricsRow:
    n: int
    tps: float
    latency_ms: float
    messages: int

    def to_wire(self) -> dict:
        return {
            "n": self.n,
            "tps": UNBOUNDED if math.isinf(self.tps) else self.tps,
            "latencyMs": self.latency_ms,
            "messages": self.messages,
        }


def estimate_metrics(cfg: ConsensusConfig, tx_count: int, node_counts: Sequence[int]) -> list[MetricsRow]:
    """Throughput, latency and message load for one batch of ``tx_count`` writes at each node count.

    latency = rounds * phases * per-message latency, tps = tx_count / latency
    (``inf`` when latency is zero).
    """
    if not node_counts:
        raise ValueError("node_counts must be non-empty")
    if isinstance(cfg, BftQuorum):
        phases, messages = BFT_PHASES, bft_messages
    elif isinstance(cfg, StakeLottery):
        phases, messages = STAKE_PHASES, stake_messages
    else:
        raise TypeError(f"unsupported consensus config: {type(cfg).__name__}")
    rows = []
    for n in node_counts:
        if n < 1:
            raise ValueError("node counts are positive")
        latency = 1 * phases * cfg.per_message_latency_ms
        tps = math.inf if latency == 0 else tx_count / (latency / 1000.0)
        rows.append(MetricsRow(n, tps, latency, messages(n)))
    return rows

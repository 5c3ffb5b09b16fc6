"""Toy leader-based consensus fed by sortition vouchers.

Each round's elected process proposes a block together with its proof;
everyone else accepts the first proposal whose proof claims the round's
voucher under the sender's own index.  There is no view change: a silent
leader simply yields a round without a block.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Optional

from .sortition import LocalCluster, SortitionProcess, verify

PROPOSAL_TAG = b"Proposal"
_HEADER = struct.Struct(">8sQH")

CHAIN_STRATEGIES = ("honest", "silent", "false-propose", "steal")


@dataclass(frozen=True)
class BlockProposal:
    r: int
    proposer: int
    proof: int
    payload: bytes = b""

    def to_bytes(self, lam: int = 256) -> bytes:
        return (_HEADER.pack(PROPOSAL_TAG, self.r, self.proposer)
                + self.proof.to_bytes((lam + 7) // 8, "big") + self.payload)

    @classmethod
    def from_bytes(cls, data: bytes, lam: int = 256) -> "BlockProposal":
        tag, r, j = _HEADER.unpack_from(data)
        if tag != PROPOSAL_TAG:
            raise ValueError(f"not a proposal: {tag!r}")
        k = _HEADER.size + (lam + 7) // 8
        return cls(r, j, int.from_bytes(data[_HEADER.size:k], "big"), data[k:])


@dataclass
class RoundOutcome:
    r: int
    elected: Optional[int]
    accepted: dict = field(default_factory=dict)  # correct pid -> accepted proposer
    proposers: tuple = ()

    @property
    def accepted_proposers(self) -> set:
        return set(self.accepted.values())

    def to_dict(self) -> dict:
        return {"r": self.r, "elected": self.elected,
                "accepted": bool(self.accepted), "proposer": min(self.accepted_proposers, default=None),
                "accepted_by": sorted(self.accepted)}


class ChainDriver:
    """Consensus-side logic of one process on top of its sortition engine."""

    def __init__(self, process: SortitionProcess):
        self.process = process
        self.accepted: dict[int, BlockProposal] = {}
        self.rejected = 0
        self._waiting: dict[int, list[tuple[BlockProposal, int]]] = {}

    @property
    def index(self) -> int:
        return self.process.index

    def make_proposal(self, r: int) -> BlockProposal:
        return BlockProposal(r, self.index, self.process.claim(r), b"block:%d:%d" % (r, self.index))

    def on_voucher(self, r: int) -> Optional[BlockProposal]:
        """Called once the voucher of round r is known; returns our proposal if we lead."""
        proposal = None
        if self.process.is_elected(r):
            proposal = self.make_proposal(r)
            self.on_proposal(proposal, self.index)
        for prop, sender in self._waiting.pop(r, []):
            self.on_proposal(prop, sender)
        return proposal

    def on_proposal(self, prop: BlockProposal, sender: int) -> bool:
        state = self.process.states.get(prop.r)
        if state is None or state.voucher is None:
            self._waiting.setdefault(prop.r, []).append((prop, sender))
            return False
        if prop.r in self.accepted:
            return False
        if prop.proposer != sender or not verify(sender, prop.proof, state.voucher, self.process.lam):
            self.rejected += 1
            return False
        self.accepted[prop.r] = prop
        return True


def pipeline_plan(horizon: int, d: int = 1) -> list[list[int]]:
    """Rounds 1..horizon grouped into dependency chains.

    Rounds inside a chain (one permutation) must run in order; chains are
    mutually independent.  With d = 1 every round is its own chain.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if d < 1:
        raise ValueError("d must be >= 1")
    return [list(range(start, min(start + d, horizon + 1))) for start in range(1, horizon + 1, d)]


def linearize(plan: list[list[int]], rng: Optional[random.Random] = None) -> list[int]:
    """One execution order respecting the plan; random interleaving if ``rng`` is given."""
    if rng is None:
        return [r for chain in plan for r in chain]
    cursors = [list(chain) for chain in plan]
    order = []
    while cursors:
        k = rng.randrange(len(cursors))
        order.append(cursors[k].pop(0))
        if not cursors[k]:
            cursors.pop(k)
    return order


def drive_round(cluster: LocalCluster, r: int, d: int = 1,
                chain_strategy: str = "honest") -> RoundOutcome:
    """Run sortition for r and one propose/accept step, without a network.

    ``chain_strategy`` governs the cluster's corrupted processes:
    ``silent`` never propose, ``false-propose`` propose with their own proof
    regardless of election, ``steal`` re-propose the leader's proof under
    their own index.
    """
    if chain_strategy not in CHAIN_STRATEGIES:
        raise ValueError(f"unknown chain strategy {chain_strategy!r}")
    if cluster.fast:
        raise ValueError("drive_round needs every process to hold the voucher; use fast=False")
    result = cluster.elect(r, d)
    drivers = {i: ChainDriver(cluster.processes[i]) for i in cluster.correct}
    proposals: list[tuple[BlockProposal, int]] = []
    for i in cluster.stake_table.indices:
        if i in drivers:
            prop = drivers[i].on_voucher(r)
            if prop is not None:
                proposals.append((prop, i))
        elif chain_strategy == "false-propose" or (chain_strategy != "silent" and i in result.elected):
            proposals.append((ChainDriver(cluster.processes[i]).make_proposal(r), i))
    if chain_strategy == "steal":
        for prop, sender in list(proposals):
            if sender not in cluster.corrupted:
                proposals.extend((BlockProposal(r, j, prop.proof, prop.payload), j)
                                 for j in sorted(cluster.corrupted))
    outcome = RoundOutcome(r, result.elected[0] if len(result.elected) == 1 else None,
                           proposers=tuple(s for _, s in proposals))
    for i in cluster.correct:
        for prop, sender in proposals:
            if sender != i:
                drivers[i].on_proposal(prop, sender)
        if r in drivers[i].accepted:
            outcome.accepted[i] = drivers[i].accepted[r].proposer
    return outcome

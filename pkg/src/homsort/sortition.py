"""Encrypted sortition: per-process round state machine.

A round runs entirely on ciphertexts:

1. derive the round's random word ``draw = PRF(seed, r)`` from the encrypted seed;
2. compare ``draw`` against the stake windows, either the plaintext partial sums
   scaled up to [0, delta] (first round of a permutation) or, in later rounds
   of a permutation, the encrypted partial sums left after removing earlier
   leaders, with ``draw`` scaled down to the unselected stake;
3. turn the comparison mask into a one-hot leader mask and select the
   leader's stake, ticket and index;
4. form the voucher ``H(PRF(ticket, r) || index)`` and threshold-decrypt it.

Only the voucher is ever decrypted.  The elected process recognises itself
by recomputing the same hash from its own plaintext ticket and index.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from . import circuits as C
from .ceremony import SetupArtifacts, run_ceremony
from .encdom import CipherHandle, DecryptionShare, InsufficientStake, KeyShare, ThresholdDomain
from .stakes import StakeTable


class SortitionError(Exception):
    pass


class RoundOrderError(SortitionError):
    """A permutation round was started before its predecessor."""


def init_permutation(stakes: Sequence[int], delta: int) -> tuple[list[int], int, list[int]]:
    """Cumulative stakes, their total, and windows scaled to the draw domain.

    ``windows[i] = floor(prefix[i] * delta / total)`` so the last window is ``delta``.
    """
    prefix, acc = [], 0
    for s in stakes:
        acc += s
        prefix.append(acc)
    total = prefix[-1]
    windows = [u * delta // total for u in prefix]
    return prefix, total, windows


def derive_randomness(domain: ThresholdDomain, seed: CipherHandle, r: int,
                      cost: Optional[C.CostCounter] = None) -> CipherHandle:
    return domain.eval("prf", seed, r, cost=cost)


def compare_and_elect(domain: ThresholdDomain, draw: CipherHandle,
                      bounds: Union[Sequence[int], CipherHandle],
                      cost: Optional[C.CostCounter] = None) -> tuple[CipherHandle, CipherHandle]:
    """``below[i] = draw < bounds[i]`` and the one-hot first 1 of it.

    Encrypted bounds use the enc-enc comparator.
    """
    circuit = "lt_enc" if isinstance(bounds, CipherHandle) else "lt"
    below = domain.eval(circuit, draw, bounds, cost=cost)
    onehot = domain.eval("first_one", below, cost=cost)
    return below, onehot


def update_permutation(domain: ThresholdDomain, prefix: Union[Sequence[int], CipherHandle],
                       below_prev: CipherHandle, stake_prev: CipherHandle, draw: CipherHandle,
                       cost: Optional[C.CostCounter] = None):
    """Remove the previous leader's stake and rescale the draw to what is left."""
    prefix_next = domain.eval("sub_masked", stake_prev, prefix, below_prev, cost=cost)
    remaining = domain.project(prefix_next, -1)
    scaled = domain.eval("scale", draw, remaining, cost=cost)
    return prefix_next, remaining, scaled


def make_voucher(domain: ThresholdDomain, onehot: CipherHandle, stakes: Sequence[int],
                 tickets: Sequence[CipherHandle], r: int, cost: Optional[C.CostCounter] = None):
    """Select the leader's stake, ticket and index, and hash its proof into the voucher."""
    stake = domain.eval("select", list(stakes), onehot, cost=cost)
    ticket = domain.eval("select", list(tickets), onehot, cost=cost)
    index = domain.eval("select", list(range(1, len(stakes) + 1)), onehot, cost=cost)
    proof = domain.eval("prf", ticket, r, cost=cost, bits=domain.config.lam)
    voucher = domain.eval("hash", proof, index, cost=cost)
    return stake, ticket, index, proof, voucher


def claim(ticket: int, r: int, lam: int = 256) -> int:
    """The proof PRF(t_i, r) a process presents to claim round r."""
    return C.prf(ticket, r, lam)


def verify(i: int, proof: int, voucher: int, lam: int = 256) -> bool:
    return C.hash_proof(proof, i, lam) == voucher


# -- wire format ----------------------------------------------------------------

PVOUCHER_TAG = b"PVoucher"
_HEADER = struct.Struct(">8sQQ")


def encode_pvoucher(r: int, perm_id: int, share: DecryptionShare) -> bytes:
    return _HEADER.pack(PVOUCHER_TAG, r, perm_id) + share.to_bytes()


def decode_pvoucher(data: bytes) -> tuple[int, int, DecryptionShare]:
    if len(data) < _HEADER.size:
        raise ValueError("truncated PVoucher")
    tag, r, perm_id = _HEADER.unpack_from(data)
    if tag != PVOUCHER_TAG:
        raise ValueError(f"not a PVoucher message: {tag!r}")
    return r, perm_id, DecryptionShare.from_bytes(data[_HEADER.size:])


# -- per-process engine -----------------------------------------------------------


@dataclass
class RoundState:
    r: int
    d: int
    draw: CipherHandle
    prefix: Union[list, CipherHandle]
    remaining: Union[int, CipherHandle]
    below: CipherHandle
    onehot: CipherHandle
    stake_ct: CipherHandle
    ticket_ct: CipherHandle
    index_ct: CipherHandle
    proof_ct: CipherHandle
    voucher_ct: CipherHandle
    windows: Optional[list] = None
    shares: dict = field(default_factory=dict)
    voucher: Optional[int] = None

    @property
    def perm_id(self) -> int:
        return (self.r - 1) // self.d

    @property
    def new_permutation(self) -> bool:
        return (self.r - 1) % self.d == 0


class SortitionProcess:
    """Sortition state of one process p_i."""

    def __init__(self, index: int, domain: ThresholdDomain, artifacts: SetupArtifacts,
                 key: KeyShare, cost: Optional[C.CostCounter] = None):
        self.index = index
        self.domain = domain
        self.stake_table = domain.stake_table
        self.artifacts = artifacts
        self.key = key
        self.cost = cost if cost is not None else C.CostCounter(self.stake_table.s_t)
        self.states: dict[int, RoundState] = {}
        self.pending: dict[int, list[tuple[DecryptionShare, int]]] = {}
        self.dropped = 0

    @property
    def lam(self) -> int:
        return self.domain.config.lam

    def compute_round(self, r: int, d: int = 1) -> RoundState:
        st, dom = self.stake_table, self.domain
        if r < 1:
            raise SortitionError("rounds are 1-based")
        if not 1 <= d <= st.n:
            raise SortitionError(f"permutation length d={d} must be in [1, {st.n}]")
        if r in self.states:
            if self.states[r].d != d:
                raise SortitionError(f"round {r} already computed with d={self.states[r].d}")
            return self.states[r]
        draw = derive_randomness(dom, self.artifacts.seed, r, self.cost)
        windows = None
        if (r - 1) % d == 0:
            prefix, remaining, windows = init_permutation(st.stakes, dom.config.delta)
            below, onehot = compare_and_elect(dom, draw, windows, self.cost)
        else:
            prev = self.states.get(r - 1)
            if prev is None or prev.d != d:
                raise RoundOrderError(f"round {r} needs round {r - 1} of the same permutation")
            prefix, remaining, draw = update_permutation(dom, prev.prefix, prev.below, prev.stake_ct,
                                                         draw, self.cost)
            below, onehot = compare_and_elect(dom, draw, prefix, self.cost)
        selected = make_voucher(dom, onehot, st.stakes, self.artifacts.tickets, r, self.cost)
        state = RoundState(r, d, draw, prefix, remaining, below, onehot, *selected, windows)
        self.states[r] = state
        for share, j in self.pending.pop(r, []):
            self.on_pvoucher(r, share, j)
        return state

    def publish_share(self, r: int) -> DecryptionShare:
        """Our partial decryption of the round's voucher; also delivered to ourselves."""
        state = self.states[r]
        share = self.domain.pdec(self.key, state.voucher_ct, caller=self.index)
        self.on_pvoucher(r, share, self.index)
        return share

    def pvoucher_message(self, r: int, share: DecryptionShare) -> bytes:
        return encode_pvoucher(r, self.states[r].perm_id, share)

    def on_pvoucher(self, r: int, share: DecryptionShare, j: int) -> bool:
        """Keep a share iff it verifies for our voucher ciphertext and p_j has none stored yet."""
        state = self.states.get(r)
        if state is None:
            self.pending.setdefault(r, []).append((share, j))
            return False
        if j in state.shares or not self.domain.ver(share, state.voucher_ct, j):
            self.dropped += 1
            return False
        state.shares[j] = share
        return True

    def share_stake(self, r: int) -> int:
        state = self.states.get(r)
        return self.stake_table.stake_of(state.shares) if state else 0

    def try_decrypt(self, r: int) -> Optional[int]:
        state = self.states.get(r)
        if state is None:
            return None
        if state.voucher is not None:
            return state.voucher
        if self.share_stake(r) < self.stake_table.threshold:
            return None
        try:
            (state.voucher,) = self.domain.dec(state.voucher_ct, state.shares.values(), round=r)
        except InsufficientStake:
            return None
        return state.voucher

    def claim(self, r: int) -> int:
        return claim(self.artifacts.my_ticket, r, self.lam)

    def is_elected(self, r: int) -> Optional[bool]:
        state = self.states.get(r)
        if state is None or state.voucher is None:
            return None
        return verify(self.index, self.claim(r), state.voucher, self.lam)

    def forget(self, before: int) -> None:
        for r in [r for r in self.states if r < before]:
            del self.states[r]


# -- synchronous cluster ------------------------------------------------------------


@dataclass(frozen=True)
class RoundResult:
    r: int
    voucher: int
    elected: tuple[int, ...]

    @property
    def leader(self) -> int:
        if len(self.elected) != 1:
            raise SortitionError(f"round {self.r} has {len(self.elected)} claimants")
        return self.elected[0]


class LocalCluster:
    """All processes of a committee in one address space, no network.

    Runs the same per-process engine as the simulator but exchanges shares
    directly.  With ``fast=True`` a single correct process evaluates the
    round and the others only partially decrypt its (content-identical)
    voucher ciphertext, which makes large statistical runs affordable.
    """

    def __init__(self, stake_table: StakeTable, seed: int = 0,
                 config: Optional[C.CircuitConfig] = None,
                 corrupted: Iterable[int] = (), fast: bool = False):
        self.stake_table = stake_table
        self.domain = ThresholdDomain(stake_table, config, seed=seed, protocol=True)
        self.public, views = run_ceremony(self.domain, random.Random(f"ceremony:{seed}"))
        self.corrupted = frozenset(corrupted)
        if stake_table.stake_of(self.corrupted) > stake_table.s_f:
            raise ValueError("corrupted stake exceeds s_f")
        self.cost = C.CostCounter(stake_table.s_t)
        self.processes = {
            i: SortitionProcess(i, self.domain, views[i], self.domain.keys.share(i), self.cost)
            for i in stake_table.indices
        }
        self.correct = [i for i in stake_table.indices if i not in self.corrupted]
        self.fast = fast
        self._signers = self._minimal_correct_signers()

    def _minimal_correct_signers(self) -> list[int]:
        chosen, stake = [], 0
        for i in sorted(self.correct, key=lambda j: -self.stake_table.stake(j)):
            chosen.append(i)
            stake += self.stake_table.stake(i)
            if stake >= self.stake_table.threshold:
                return chosen
        raise SortitionError("correct processes cannot reach the decryption threshold")

    def tickets(self) -> dict[int, int]:
        return {i: p.artifacts.my_ticket for i, p in self.processes.items()}

    def claimants(self, r: int, voucher: int) -> tuple[int, ...]:
        lam = self.domain.config.lam
        return tuple(i for i, p in self.processes.items() if verify(i, p.claim(r), voucher, lam))

    def elect(self, r: int, d: int = 1) -> RoundResult:
        if self.fast:
            rep = self.processes[self.correct[0]]
            state = rep.compute_round(r, d)
            for j in self._signers:
                if j != rep.index:
                    rep.on_pvoucher(r, self.domain.pdec(self.domain.keys.share(j), state.voucher_ct, caller=j), j)
                else:
                    rep.publish_share(r)
            voucher = rep.try_decrypt(r)
            rep.forget(r)
        else:
            shares = {}
            for i in self.correct:
                self.processes[i].compute_round(r, d)
                shares[i] = self.processes[i].publish_share(r)
            vouchers = set()
            for i in self.correct:
                p = self.processes[i]
                for j, sh in shares.items():
                    if j != i:
                        p.on_pvoucher(r, sh, j)
                vouchers.add(p.try_decrypt(r))
                p.forget(r)
            if len(vouchers) != 1 or None in vouchers:
                raise SortitionError(f"round {r}: correct processes disagree: {vouchers}")
            (voucher,) = vouchers
        return RoundResult(r, voucher, self.claimants(r, voucher))

    def permutation(self, k: int, d: int) -> list[int]:
        """Leaders of the k-th permutation (0-based), rounds k*d+1 .. k*d+d."""
        return [self.elect(k * d + j, d).leader for j in range(1, d + 1)]

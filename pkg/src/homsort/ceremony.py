"""Setup ceremony: tickets and seed from XOR-combined contributions.

Agreement on the accepted contribution set is taken as given (a trusted or
externally agreed step); this module only checks the set is large enough,
combines it, encrypts the result and hands each process its own ticket.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from functools import reduce
from typing import Iterable, Optional, Sequence

from .encdom import CipherHandle, ThresholdDomain
from .stakes import StakeTable


class CeremonyError(ValueError):
    pass


class InsufficientContributionStake(CeremonyError):
    pass


class DuplicateContributor(CeremonyError):
    pass


class TicketAccessError(PermissionError):
    pass


@dataclass(frozen=True)
class Contribution:
    issuer: int
    vector: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vector", tuple(int(v) for v in self.vector))


@dataclass(frozen=True)
class SetupArtifacts:
    """Public setup output plus, for a process view, its own plaintext ticket."""

    tickets: tuple[CipherHandle, ...]
    seed: CipherHandle
    generation: int = 0
    owner: Optional[int] = None
    my_ticket: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.tickets)

    def for_process(self, i: int, ticket: int) -> "SetupArtifacts":
        return replace(self, owner=i, my_ticket=ticket)


def xor_combine(vectors: Iterable[Sequence[int]]) -> list[int]:
    vectors = [list(v) for v in vectors]
    if len({len(v) for v in vectors}) > 1:
        raise CeremonyError("contribution vectors differ in length")
    return reduce(lambda a, b: [x ^ y for x, y in zip(a, b)], vectors)


def random_contribution(issuer: int, n: int, rng: random.Random, beta_x: int) -> Contribution:
    return Contribution(issuer, tuple(rng.getrandbits(beta_x) for _ in range(n + 1)))


def combine(domain: ThresholdDomain, contributions: Iterable[Contribution],
            stake_table: Optional[StakeTable] = None, generation: int = 0) -> SetupArtifacts:
    """XOR the accepted contributions; first n words are tickets, the last is the seed."""
    stake_table = stake_table or domain.stake_table
    contributions = list(contributions)
    issuers = [c.issuer for c in contributions]
    if len(set(issuers)) != len(issuers):
        raise DuplicateContributor(f"repeated contributors in {sorted(issuers)}")
    need = stake_table.s_t - stake_table.s_f
    have = stake_table.stake_of(issuers)
    if have < need:
        raise InsufficientContributionStake(f"contributors hold {have} stake, need {need}")
    n = stake_table.n
    limit = 1 << domain.config.beta_x
    for c in contributions:
        if len(c.vector) != n + 1:
            raise CeremonyError(f"contribution of p_{c.issuer} has {len(c.vector)} words, need {n + 1}")
        if any(not 0 <= w < limit for w in c.vector):
            raise CeremonyError(f"contribution of p_{c.issuer} has a word outside [0, 2^{domain.config.beta_x})")
    words = xor_combine(c.vector for c in contributions)
    tickets = tuple(domain.enc([t]) for t in words[:n])
    seed = domain.seal(domain.enc([words[n]]))
    return SetupArtifacts(tickets, seed, generation)


def deliver_ticket(domain: ThresholdDomain, artifacts: SetupArtifacts, i: int,
                   requester: int) -> int:
    """Privately release ticket t_i; only p_i may ask for it."""
    if requester != i:
        domain._log("release_denied", artifacts.tickets[i - 1], None, [requester])
        raise TicketAccessError(f"p_{requester} asked for the ticket of p_{i}")
    (ticket,) = domain.private_release(artifacts.tickets[i - 1], i)
    return ticket


def run_ceremony(domain: ThresholdDomain, rng: Optional[random.Random] = None,
                 contributions: Optional[Iterable[Contribution]] = None,
                 generation: int = 0) -> tuple[SetupArtifacts, dict[int, SetupArtifacts]]:
    """Full ceremony; returns the public artifacts and each process's private view.

    Either explicit ``contributions`` or an ``rng`` (every process contributes)
    must be supplied.
    """
    st = domain.stake_table
    if contributions is None:
        if rng is None:
            raise ValueError("need contributions or an rng")
        contributions = [random_contribution(i, st.n, rng, domain.config.beta_x) for i in st.indices]
    public = combine(domain, contributions, st, generation)
    views = {i: public.for_process(i, deliver_ticket(domain, public, i, i)) for i in st.indices}
    return public, views

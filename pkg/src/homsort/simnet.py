"""Deterministic discrete-event network for sortition runs.

Channels are reliable and asynchronous: every envelope is delivered after a
finite, adversary-chosen delay measured in integer ticks.  Corrupted
processes follow one of a closed set of share-level strategies, and
optionally a chain-level strategy when the consensus driver is enabled.

A run is a pure function of its :class:`Scenario`, including the seed.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from . import circuits as C
from .ceremony import Contribution, run_ceremony
from .chain import CHAIN_STRATEGIES, BlockProposal, ChainDriver, RoundOutcome, linearize, pipeline_plan
from .encdom import AuditRecord, ThresholdDomain, attest
from .sortition import SortitionProcess, decode_pvoucher, encode_pvoucher, verify
from .stakes import StakeTable

STRATEGIES = ("honest", "withhold-shares", "forge-shares", "replay", "equivocate-shares", "delay-max")
POLICIES = ("fifo", "random", "starve", "corrupted-first")


class SimulationError(Exception):
    pass


class LivenessViolation(SimulationError):
    pass


@dataclass(frozen=True)
class AdversaryProfile:
    corrupted: frozenset = frozenset()
    strategy: str = "honest"
    chain_strategy: str = "honest"

    def __post_init__(self):
        object.__setattr__(self, "corrupted", frozenset(int(i) for i in self.corrupted))
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown adversary strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.chain_strategy not in CHAIN_STRATEGIES:
            raise ValueError(f"unknown chain strategy {self.chain_strategy!r}")

    def check(self, stake_table: StakeTable) -> None:
        bad = [i for i in self.corrupted if not 1 <= i <= stake_table.n]
        if bad:
            raise ValueError(f"corrupted indices {bad} outside 1..{stake_table.n}")
        if stake_table.stake_of(self.corrupted) > stake_table.s_f:
            raise ValueError(f"corrupted stake {stake_table.stake_of(self.corrupted)} exceeds s_f={stake_table.s_f}")


@dataclass(order=True)
class Envelope:
    delivery_time: int
    seq: int
    sender: int = field(compare=False)
    recipient: int = field(compare=False)
    payload: bytes = field(compare=False, repr=False)
    enqueue_time: int = field(compare=False)
    kind: str = field(compare=False, default="PVoucher")

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "sender": self.sender, "recipient": self.recipient,
                "enqueue_time": self.enqueue_time, "delivery_time": self.delivery_time,
                "payload": self.payload.hex()}


# -- delivery schedules --------------------------------------------------------------


class SchedulePolicy:
    """Chooses each envelope's delivery time; subclasses override :meth:`delay`."""

    def __init__(self, seed: int = 0):
        self.rng = random.Random(f"policy:{seed}")

    def delay(self, env: Envelope) -> int:
        return 1

    def delivery_time(self, env: Envelope) -> int:
        return env.enqueue_time + max(1, self.delay(env))


class FifoPolicy(SchedulePolicy):
    pass


class RandomPolicy(SchedulePolicy):
    def __init__(self, seed: int = 0, max_delay: int = 10):
        super().__init__(seed)
        self.max_delay = max_delay

    def delay(self, env):
        return self.rng.randint(1, self.max_delay)


class StarvePolicy(SchedulePolicy):
    """Freeze ``victim``'s inbox until tick ``k``, then flush it."""

    def __init__(self, victim: int, k: int, seed: int = 0):
        super().__init__(seed)
        self.victim, self.k = victim, k

    def delivery_time(self, env):
        t = env.enqueue_time + 1
        return max(t, self.k) if env.recipient == self.victim else t


class CorruptedFirstPolicy(SchedulePolicy):
    """Corrupted senders' traffic arrives at once; correct traffic is slowed."""

    def __init__(self, corrupted, seed: int = 0, max_delay: int = 10):
        super().__init__(seed)
        self.corrupted = frozenset(corrupted)
        self.max_delay = max_delay

    def delay(self, env):
        return 1 if env.sender in self.corrupted else self.rng.randint(2, max(2, self.max_delay))


def schedule_policy(name: str = "fifo", seed: int = 0, *, max_delay: int = 10,
                    victim: int = 1, starve_ticks: int = 10, corrupted=()) -> SchedulePolicy:
    if name == "fifo":
        return FifoPolicy(seed)
    if name == "random":
        return RandomPolicy(seed, max_delay)
    if name == "starve":
        return StarvePolicy(victim, starve_ticks, seed)
    if name == "corrupted-first":
        return CorruptedFirstPolicy(corrupted, seed, max_delay)
    raise ValueError(f"unknown schedule policy {name!r}; choose from {POLICIES}")


# -- scenarios -----------------------------------------------------------------------


@dataclass
class Scenario:
    stakes: Sequence[int]
    s_f: int
    d: int = 1
    rounds: int = 1
    adversary: AdversaryProfile = field(default_factory=AdversaryProfile)
    seed: int = 0
    delta_bits: int = 64
    lam: int = 256
    policy: str = "fifo"
    max_delay: int = 10
    victim: int = 1
    starve_ticks: int = 10
    start_jitter: int = 0
    shuffle_rounds: bool = False
    tick_budget: int = 100_000
    chain: bool = False
    contributions: Optional[list] = None

    def __post_init__(self):
        self.stakes = tuple(int(s) for s in self.stakes)
        if isinstance(self.adversary, dict):
            self.adversary = AdversaryProfile(**self.adversary)

    def stake_table(self) -> StakeTable:
        return StakeTable(self.stakes, self.s_f)

    def circuit_config(self) -> C.CircuitConfig:
        return C.CircuitConfig.for_stake(sum(self.stakes), beta_x=self.delta_bits, lam=self.lam)

    def validate(self) -> None:
        st = self.stake_table()
        self.circuit_config()
        self.adversary.check(st)
        if not 1 <= self.d <= st.n:
            raise ValueError(f"d={self.d} must be in [1, n={st.n}]")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["stakes"] = list(self.stakes)
        out["adversary"] = {"corrupted": sorted(self.adversary.corrupted),
                            "strategy": self.adversary.strategy,
                            "chain_strategy": self.adversary.chain_strategy}
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- transcript ------------------------------------------------------------------------


@dataclass
class Transcript:
    scenario: Scenario
    envelopes: list = field(default_factory=list)
    outputs: dict = field(default_factory=dict)  # pid -> {r: voucher}
    output_ticks: dict = field(default_factory=dict)  # pid -> {r: tick}
    publish_ticks: dict = field(default_factory=dict)  # pid -> {r: tick}
    elected: dict = field(default_factory=dict)  # r -> claimants, from the tickets
    audit: list = field(default_factory=list)
    cost: Optional[C.CostCounter] = None
    messages: Counter = field(default_factory=Counter)
    pvouchers_per_round: Counter = field(default_factory=Counter)
    dropped: dict = field(default_factory=dict)
    outcomes: dict = field(default_factory=dict)  # r -> RoundOutcome
    correct: tuple = ()
    final_tick: int = 0
    enqueued_correct: int = 0
    delivered_correct: int = 0

    def voucher(self, r: int) -> int:
        vs = {self.outputs[p][r] for p in self.correct}
        if len(vs) != 1:
            raise SimulationError(f"round {r}: correct processes output {len(vs)} distinct vouchers")
        return vs.pop()

    def latency(self, pid: int, r: int) -> int:
        return self.output_ticks[pid][r] - self.publish_ticks[pid][r]

    def records(self):
        yield {"type": "scenario", "config_hash": self.scenario.config_hash(), **self.scenario.to_dict()}
        for env in self.envelopes:
            yield {"type": "envelope", **env.to_dict()}
        for p in sorted(self.outputs):
            for r in sorted(self.outputs[p]):
                yield {"type": "output", "pid": p, "r": r, "voucher": format(self.outputs[p][r], "x"),
                       "tick": self.output_ticks[p][r], "published": self.publish_ticks[p].get(r)}
        for r in sorted(self.elected):
            yield {"type": "election", "r": r, "claimants": list(self.elected[r])}
        for r in sorted(self.outcomes):
            yield {"type": "round_outcome", **self.outcomes[r].to_dict()}
        for rec in self.audit:
            yield {"type": "audit", **rec.to_dict()}
        yield {"type": "summary", "messages": dict(sorted(self.messages.items())),
               "gates": dict(sorted(self.cost.gates.items())) if self.cost else {},
               "final_tick": self.final_tick,
               "dropped": {str(k): v for k, v in sorted(self.dropped.items())}}

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.records())

    def export(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl())


# -- simulator -------------------------------------------------------------------------


class Simulator:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.st = scenario.stake_table()
        self.adv = scenario.adversary
        self.domain = ThresholdDomain(self.st, scenario.circuit_config(), seed=scenario.seed,
                                      protocol=True)
        if scenario.contributions is not None:
            contribs = [Contribution(i + 1, v) for i, v in enumerate(scenario.contributions)]
            _, views = run_ceremony(self.domain, contributions=contribs)
        else:
            _, views = run_ceremony(self.domain, random.Random(f"ceremony:{scenario.seed}"))
        self.views = views
        self.cost = C.CostCounter(self.st.s_t)
        self.procs = {i: SortitionProcess(i, self.domain, views[i], self.domain.keys.share(i), self.cost)
                      for i in self.st.indices}
        self.drivers = {i: ChainDriver(p) for i, p in self.procs.items()} if scenario.chain else {}
        self.correct = tuple(i for i in self.st.indices if i not in self.adv.corrupted)
        self.policy = schedule_policy(scenario.policy, scenario.seed, max_delay=scenario.max_delay,
                                      victim=scenario.victim, starve_ticks=scenario.starve_ticks,
                                      corrupted=self.adv.corrupted)
        self.rng = random.Random(f"sim:{scenario.seed}")
        self.adv_rng = random.Random(f"adversary:{scenario.seed}")
        self.queue: list = []
        self.seq = 0
        self.now = 0
        self.tr = Transcript(scenario, cost=self.cost, correct=self.correct)
        for i in self.st.indices:
            self.tr.outputs[i], self.tr.output_ticks[i], self.tr.publish_ticks[i] = {}, {}, {}
        self._sent_shares: dict[int, dict] = {}

    # -- event plumbing --

    def _push(self, time: int, kind: str, data) -> None:
        heapq.heappush(self.queue, (time, self.seq, kind, data))
        self.seq += 1

    def send(self, sender: int, recipient: int, payload: bytes, kind: str = "PVoucher",
             delay: Optional[int] = None) -> None:
        env = Envelope(0, self.seq, sender, recipient, payload, self.now, kind)
        env.delivery_time = self.now + delay if delay is not None else self.policy.delivery_time(env)
        self.tr.envelopes.append(env)
        self.tr.messages[kind] += 1
        if sender in self.correct and recipient in self.correct:
            self.tr.enqueued_correct += 1
        self._push(env.delivery_time, "deliver", env)

    def _schedule_computations(self) -> None:
        plan = pipeline_plan(self.sc.rounds, self.sc.d)
        for i in self.st.indices:
            order = linearize(plan, self.rng if self.sc.shuffle_rounds else None)
            ready: dict[int, int] = {}
            for r in order:
                t = self.rng.randint(0, self.sc.start_jitter) if self.sc.start_jitter else 0
                if (r - 1) % self.sc.d != 0:
                    t = max(t, ready[r - 1])
                ready[r] = t
                self._push(t, "compute", (i, r))

    def run(self) -> Transcript:
        self._schedule_computations()
        while self.queue:
            time, _, kind, data = heapq.heappop(self.queue)
            if time > self.sc.tick_budget:
                raise LivenessViolation(f"events pending beyond tick budget {self.sc.tick_budget}")
            self.now = time
            if kind == "compute":
                self._compute(*data)
            else:
                self._deliver(data)
        self.tr.final_tick = self.now
        self._finish()
        return self.tr

    # -- process behaviour --

    def _others(self, i: int):
        return [j for j in self.st.indices if j != i]

    def _compute(self, i: int, r: int) -> None:
        p = self.procs[i]
        state = p.compute_round(r, self.sc.d)
        share = p.publish_share(r)
        self.tr.publish_ticks[i][r] = self.now
        self._sent_shares.setdefault(i, {})[r] = share
        msg = encode_pvoucher(r, state.perm_id, share)
        if i in self.adv.corrupted:
            self._byzantine_send(i, r, state, share, msg)
        else:
            for j in self._others(i):
                self.send(i, j, msg)
        self._after_share(i, r)
        if i in self.adv.corrupted and self.drivers and self.adv.chain_strategy == "false-propose":
            prop = self.drivers[i].make_proposal(r)
            for j in self._others(i):
                self.send(i, j, prop.to_bytes(self.sc.lam), kind="Proposal")

    def _forged(self, i: int, r: int, state) -> bytes:
        """A share with a wrong digest under our own key, or one impersonating a peer."""
        key = self.domain.keys.share(i)
        digest = self.adv_rng.randbytes(32)
        if self.adv_rng.random() < 0.5:
            share = attest(key, state.voucher_ct.id, digest)
        else:
            victim = self.adv_rng.choice(self.correct) if self.correct else i
            share = attest(key, state.voucher_ct.id, digest, index=victim)
        return encode_pvoucher(r, state.perm_id, share)

    def _byzantine_send(self, i: int, r: int, state, share, msg: bytes) -> None:
        s = self.adv.strategy
        if s == "honest":
            for j in self._others(i):
                self.send(i, j, msg)
        elif s == "withhold-shares":
            pass
        elif s == "forge-shares":
            for j in self._others(i):
                self.send(i, j, self._forged(i, r, state))
        elif s == "replay":
            older = [self._sent_shares[i][k] for k in sorted(self._sent_shares[i]) if k != r]
            for j in self._others(i):
                self.send(i, j, msg)
                self.send(i, j, msg)
                for old in older[-2:]:
                    self.send(i, j, encode_pvoucher(r, state.perm_id, old))
        elif s == "equivocate-shares":
            for k, j in enumerate(self._others(i)):
                self.send(i, j, msg if k % 2 == 0 else self._forged(i, r, state))
        elif s == "delay-max":
            for j in self._others(i):
                self.send(i, j, msg, delay=self.sc.max_delay)

    def _deliver(self, env: Envelope) -> None:
        if env.sender in self.correct and env.recipient in self.correct:
            self.tr.delivered_correct += 1
        i = env.recipient
        if env.kind == "PVoucher":
            r, _, share = decode_pvoucher(env.payload)
            self.procs[i].on_pvoucher(r, share, env.sender)
            self._after_share(i, r)
        elif env.kind == "Proposal":
            prop = BlockProposal.from_bytes(env.payload, self.sc.lam)
            self.drivers[i].on_proposal(prop, env.sender)
            if (i in self.adv.corrupted and self.adv.chain_strategy == "steal"
                    and env.sender not in self.adv.corrupted and prop.proposer == env.sender):
                stolen = BlockProposal(prop.r, i, prop.proof, prop.payload)
                for j in self._others(i):
                    self.send(i, j, stolen.to_bytes(self.sc.lam), kind="Proposal")

    def _after_share(self, i: int, r: int) -> None:
        if r in self.tr.outputs[i]:
            return
        v = self.procs[i].try_decrypt(r)
        if v is None:
            return
        self.tr.outputs[i][r] = v
        self.tr.output_ticks[i][r] = self.now
        if self.drivers:
            if i in self.adv.corrupted and self.adv.chain_strategy in ("silent", "false-propose"):
                return
            prop = self.drivers[i].on_voucher(r)
            if prop is not None:
                for j in self._others(i):
                    self.send(i, j, prop.to_bytes(self.sc.lam), kind="Proposal")

    def _finish(self) -> None:
        tr = self.tr
        missing = [(i, r) for i in self.correct for r in range(1, self.sc.rounds + 1)
                   if r not in tr.outputs[i]]
        if missing:
            raise LivenessViolation(f"no voucher output for (process, round) {missing[:5]}")
        lam = self.domain.config.lam
        for r in range(1, self.sc.rounds + 1):
            v = tr.voucher(r)
            tr.elected[r] = tuple(i for i, p in self.procs.items() if verify(i, p.claim(r), v, lam))
            tr.pvouchers_per_round[r] = 0
        for env in tr.envelopes:
            if env.kind == "PVoucher":
                tr.pvouchers_per_round[decode_pvoucher(env.payload)[0]] += 1
        tr.dropped = {i: p.dropped for i, p in self.procs.items()}
        tr.audit = list(self.domain.audit)
        if self.drivers:
            for r in range(1, self.sc.rounds + 1):
                claim = tr.elected[r]
                out = RoundOutcome(r, claim[0] if len(claim) == 1 else None)
                for i in self.correct:
                    acc = self.drivers[i].accepted.get(r)
                    if acc is not None:
                        out.accepted[i] = acc.proposer
                tr.outcomes[r] = out


def run(scenario: Scenario) -> Transcript:
    """Execute a scenario to quiescence and return its transcript."""
    return Simulator(scenario).run()


def load_scenario(path: Union[str, Path]) -> Scenario:
    data = json.loads(Path(path).read_text())
    return scenario_from_dict(data)


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data)
    n = data.pop("n", None)
    if "lambda" in data:
        data["lam"] = data.pop("lambda")
    sc = Scenario(**data)
    if n is not None and n != len(sc.stakes):
        raise ValueError(f"n={n} but {len(sc.stakes)} stakes given")
    return sc

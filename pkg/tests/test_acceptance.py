"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are echoed in the terminal
summary (see conftest.py) so they show up without ``-s``.
"""

import contextlib
import math
import random

import numpy as np
import pytest

from homsort import circuits as C
from homsort.chain import BlockProposal, ChainDriver
from homsort.experiments import slp_permutations, ssle_fairness
from homsort.simnet import POLICIES, STRATEGIES, AdversaryProfile, LivenessViolation, Scenario, Simulator, run
from homsort.sortition import LocalCluster
from homsort.stakes import StakeTable

RESULTS = []


@contextlib.contextmanager
def criterion(number, title):
    detail = {}
    try:
        yield detail
    except BaseException:
        line = f"FAIL  criterion {number}: {title} {detail.get('info', '')}".rstrip()
        RESULTS.append(line)
        print(line)
        raise
    line = f"PASS  criterion {number}: {title} {detail.get('info', '')}".rstrip()
    RESULTS.append(line)
    print(line)


def test_1_uniqueness():
    with criterion(1, "uniqueness over 10^4 rounds, random stake tables n<=16") as info:
        rng = random.Random(1)
        rounds = violations = 0
        while rounds < 10_000:
            n = rng.randint(1, 16)
            stakes = [rng.randint(1, 100) for _ in range(n)]
            cluster = LocalCluster(StakeTable.with_max_faults(stakes), seed=rng.getrandbits(32), fast=True)
            for r in range(1, 51):
                res = cluster.elect(r)  # claimants() checks all n indices
                violations += len(res.elected) != 1
            rounds += 50
        info["info"] = f"({rounds} rounds, {violations} violations)"
        assert violations == 0


def test_2_fairness():
    with criterion(2, "fairness for stakes [1,2,3,4,10] over 10^5 rounds") as info:
        rep = ssle_fairness([1, 2, 3, 4, 10], 100_000, seed=2)
        z = np.abs(rep.z_scores)
        info["info"] = f"(chi2 p={rep.p_value:.4f}, max |z|={z.max():.2f})"
        assert rep.p_value > 0.001
        assert np.all(z <= 3)


def test_3_slp_permutation():
    with criterion(3, "SLP d=n=5 over 10^4 permutations") as info:
        rep = slp_permutations([1, 2, 3, 4, 10], 5, 10_000, seed=3)
        valid = sum(sorted(p) == [1, 2, 3, 4, 5] for p in rep.permutations)
        info["info"] = f"({valid}/10000 valid, conditional chi2 p={rep.p_value:.4f}, dof={rep.dof})"
        assert valid == 10_000
        assert rep.p_value > 0.001


def termination_scenario(strategy, seed):
    # s_t = 11, s_f = ceil(11/2) - 1 = 5; corrupted {2, 4} holds exactly 5
    rng = random.Random(f"{strategy}:{seed}")
    stakes = [1, 2, 1, 3, 2, 1, 1]
    s_f = math.ceil(sum(stakes) / 2) - 1
    return Scenario(stakes, s_f, d=rng.choice([1, 3, 7]), rounds=7, seed=seed,
                    adversary=AdversaryProfile({2, 4}, strategy),
                    policy=rng.choice(POLICIES), max_delay=rng.randint(2, 30),
                    victim=rng.choice([1, 3, 5, 6, 7]), starve_ticks=rng.randint(1, 200),
                    start_jitter=rng.randint(0, 20), shuffle_rounds=True, tick_budget=10_000)


def test_4_termination():
    with criterion(4, "termination, every strategy, corrupted stake = s_f, 100 schedules") as info:
        failures = []
        for strategy in STRATEGIES:
            for seed in range(100):
                sc = termination_scenario(strategy, seed)
                assert sc.stake_table().stake_of(sc.adversary.corrupted) == sc.s_f
                try:
                    tr = run(sc)
                    for r in range(1, sc.rounds + 1):
                        tr.voucher(r)
                except LivenessViolation as exc:
                    failures.append((strategy, seed, str(exc)))
        info["info"] = f"({len(STRATEGIES) * 100} runs, {len(failures)} liveness violations)"
        assert not failures, failures[:3]


def test_5_steal_resistance():
    with criterion(5, "steal resistance over 10^4 rounds at lambda=256") as info:
        st_ = StakeTable.with_max_faults([3, 1, 4, 1, 5, 9, 2, 6])
        cluster = LocalCluster(st_, seed=5, fast=True)
        assert cluster.domain.config.lam == 256
        # the fast cluster's evaluating process keeps the current voucher and judges proposals
        judge = ChainDriver(cluster.processes[cluster.correct[0]])
        accepts = attempts = 0
        for r in range(1, 10_001):
            res = cluster.elect(r)
            proof = cluster.processes[res.leader].claim(r)
            for thief in st_.indices:
                if thief != res.leader:
                    attempts += 1
                    accepts += judge.on_proposal(BlockProposal(r, thief, proof), thief)
            assert judge.on_proposal(BlockProposal(r, res.leader, proof), res.leader)
        info["info"] = f"({attempts} re-proposals, {accepts} accepted)"
        assert accepts == 0


def audit_scenarios():
    for strategy in STRATEGIES:
        yield Scenario([2, 1, 1, 3, 1], 3, rounds=6, d=3, seed=6, policy="random",
                       adversary=AdversaryProfile({2, 5}, strategy))
    for chain in ("honest", "silent", "false-propose", "steal"):
        yield Scenario([1, 1, 1, 1, 1], 2, rounds=5, chain=True, seed=7,
                       adversary=AdversaryProfile({4, 5}, "honest", chain))


def test_6_decryption_audit():
    with criterion(6, "only vouchers are decrypted, seed never released") as info:
        decs = bad = 0
        for sc in audit_scenarios():
            sim = Simulator(sc)
            tr = sim.run()
            voucher_ids = {p.states[r].voucher_ct.id.hex() for p in sim.procs.values() for r in p.states}
            seed_id = sim.views[1].seed.id.hex()
            for rec in tr.audit:
                if rec.event == "dec":
                    decs += 1
                    bad += rec.handle_id not in voucher_ids or rec.circuit != "hash"
                elif rec.event in ("private_release", "audit_peek", "audit_replay"):
                    bad += rec.event != "private_release" or rec.handle_id == seed_id
            bad += len(sim.domain.audit_violations())
        info["info"] = f"({decs} decryptions audited, {bad} violations; suite-wide check in conftest)"
        assert decs > 0 and bad == 0


def test_7_scale_bound():
    with criterion(7, "C_scale deviation bound, exhaustive for delta 2^4..2^8") as info:
        worst, cases = 0.0, 0
        for beta_x in range(4, 9):
            delta = 1 << beta_x
            for m in range(1, 1 << (beta_x - 1)):
                hits = np.bincount([C.scale(x, m, beta_x) for x in range(delta)], minlength=m)
                assert len(hits) == m
                dev = np.max(np.abs(hits / delta - 1 / m))
                bound = 2.0 ** -(beta_x - m.bit_length())
                worst = max(worst, dev / bound)
                cases += 1
                assert dev <= bound, (beta_x, m, dev, bound)
        info["info"] = f"({cases} (delta, m) pairs, worst deviation/bound = {worst:.3f})"


def honest_counts(n):
    tr = run(Scenario([1] * n, (n - 1) // 2, rounds=3))
    return tr


def test_8_messages_and_latency():
    with criterion(8, "n(n-1) PVoucher messages per round and latency of one delivery") as info:
        sizes = (4, 8, 16, 32)
        per_round = {}
        for n in sizes:
            tr = honest_counts(n)
            counts = {tr.pvouchers_per_round[r] for r in (1, 2, 3)}
            assert counts == {n * (n - 1)}
            assert {tr.latency(p, r) for p in tr.correct for r in (1, 2, 3)} == {1}
            per_round[n] = n * (n - 1)
        info["info"] = "(" + ", ".join(f"n={n}: {c}" for n, c in per_round.items()) + ")"


@pytest.mark.xfail(strict=True, reason="n(n-1) does not scale by exactly 4 when n doubles; "
                                       "see the decisions ledger")
def test_8b_doubling_quadruples_exactly():
    with criterion("8b", "doubling n quadruples the PVoucher count exactly") as info:
        ratios = {}
        for n in (4, 8, 16):
            small, big = honest_counts(n), honest_counts(2 * n)
            ratios[n] = big.pvouchers_per_round[1] / small.pvouchers_per_round[1]
            # the exact ratio for n(n-1) counts is 2(2n-1)/(n-1)
            assert ratios[n] == pytest.approx(2 * (2 * n - 1) / (n - 1))
        info["info"] = "(ratios " + ", ".join(f"{n}->{2 * n}: {ratio:.3f}" for n, ratio in ratios.items()) + ")"
        assert all(ratio == 4 for ratio in ratios.values())


def test_9_cost_model():
    with criterion(9, "4218-gate PRF/H, SSLE depth 16, O(n^2) binary growth") as info:
        rep = C.cost_report(32, 32)
        assert rep.row("C_PRF").gates == rep.row("C_H").gates == 4218
        assert rep.ssle.depth == 16
        # depth also measured on the handles of an actual round
        cluster = LocalCluster(StakeTable.with_max_faults([1, 2, 3, 4]), seed=9, fast=True)
        p = cluster.processes[1]
        s = p.compute_round(1)
        assert s.voucher_ct.depth - s.draw.depth == 16
        ns = np.array([8, 16, 32, 64])
        growing = np.array([C.cost_report(int(n), int(n)).ssle.n_dependent_gates for n in ns])
        total = np.array([C.cost_report(int(n), int(n)).ssle.gates for n in ns])
        slope = np.polyfit(np.log(ns), np.log(growing), 1)[0]
        total_slope = np.polyfit(np.log(ns), np.log(total), 1)[0]
        info["info"] = (f"(slope of n-dependent gates {slope:.3f}; "
                        f"slope including the constant 3x4218 PRF/H terms {total_slope:.3f})")
        assert abs(slope - 2.0) <= 0.1

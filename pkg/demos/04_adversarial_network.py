"""Byzantine processes and a hostile scheduler, simulated tick by tick.

Processes p2 and p4 hold the largest stake an adversary is allowed
(s_f = 5 of 11). Whatever they do with their shares, every correct process
still outputs the same voucher for every round.
"""

from homsort import AdversaryProfile, Scenario, run
from homsort.simnet import STRATEGIES

stakes = [1, 2, 1, 3, 2, 1, 1]
print(f"{'strategy':<18} {'policy':<16} {'last tick':>9} {'dropped':>8}  leaders")
for strategy in STRATEGIES:
    for policy in ("fifo", "random", "corrupted-first"):
        sc = Scenario(stakes, s_f=5, rounds=5, d=1, seed=3, policy=policy,
                      adversary=AdversaryProfile({2, 4}, strategy))
        tr = run(sc)
        last = max(max(ticks.values()) for p, ticks in tr.output_ticks.items() if p in tr.correct)
        leaders = [tr.elected[r][0] for r in range(1, 6)]
        print(f"{strategy:<18} {policy:<16} {last:>9} {sum(tr.dropped.values()):>8}  {leaders}")

# the vouchers do not depend on the schedule or on the adversary
base = run(Scenario(stakes, s_f=5, rounds=5, seed=3))
hostile = run(Scenario(stakes, s_f=5, rounds=5, seed=3, policy="random", start_jitter=9,
                       adversary=AdversaryProfile({2, 4}, "equivocate-shares")))
print("\nsame vouchers under attack:",
      all(base.voucher(r) == hostile.voucher(r) for r in range(1, 6)))

"""One committee, a handful of rounds, one leader per round.

Each process knows only its own ticket. Once the voucher of a round is
decrypted, exactly one process holds a proof that matches it.
"""

from homsort import LocalCluster, StakeTable, verify

stakes = StakeTable.with_max_faults([1, 2, 3, 4, 10])
cluster = LocalCluster(stakes, seed=1)

print(f"{'round':>5}  {'voucher':<18}  leader  winners by self-check")
for r in range(1, 9):
    res = cluster.elect(r)
    # every process checks privately whether it won
    winners = [i for i, p in cluster.processes.items() if p.is_elected(r)]
    print(f"{r:>5}  {res.voucher >> 192:016x}..  p{res.leader:<5} {winners}")

# the leader of the last round reveals its proof, anyone can check it
proof = cluster.processes[res.leader].claim(res.r)
print("proof checks for the leader:", verify(res.leader, proof, res.voucher))
print("proof checks under any other index:",
      any(verify(j, proof, res.voucher) for j in stakes.indices if j != res.leader))

"""Permutation mode: d consecutive rounds elect d distinct leaders.

Stake still matters. The first slot of each permutation goes to process i
with probability proportional to its stake, and later slots are drawn from
whoever is left.
"""

from homsort import LocalCluster, StakeTable, slp_permutations

stakes = [1, 2, 3, 4, 10]
cluster = LocalCluster(StakeTable.with_max_faults(stakes), seed=4, fast=True)
for k in range(6):
    print(f"permutation {k}: leaders", cluster.permutation(k, d=5))

# conditional frequencies of the second slot, given who took the first one
rep = slp_permutations(stakes, d=5, count=3000, seed=4)
print()
print(rep.to_text())

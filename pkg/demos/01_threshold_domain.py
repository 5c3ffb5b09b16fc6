"""Walk through the emulated threshold domain.

Encrypt a random word, compare it against stake windows under encryption,
and decrypt the result with stake-weighted partial decryptions.
Run with ``python3 demos/01_threshold_domain.py``.
"""

from homsort import StakeTable, ThresholdDomain
from homsort.encdom import InsufficientStake
from homsort.sortition import init_permutation

# five processes, any coalition holding 4 or less stake is harmless
stakes = StakeTable([1, 2, 3, 1, 2], s_f=4)
dom = ThresholdDomain(stakes, seed=7)
print("total stake", stakes.s_t, "decryption threshold", stakes.threshold)

x = dom.enc([2**63])
print("handles hide their payload:", x)

# cumulative stake windows scaled to the word size
_, _, windows = init_permutation(stakes.stakes, dom.config.delta)
below = dom.eval("lt", x, windows)
winner = dom.eval("first_one", below)
print("comparison handle depth:", below.depth, "one-hot handle depth:", winner.depth)

# evaluation ids are content addressed: the same circuit on the same inputs
# yields the same ciphertext id, whoever evaluates it
print("same id for identical evaluations:", dom.eval("first_one", below).id == winner.id)

# partial decryptions from p3 and p5 carry 5 stake, which is enough
shares = [dom.pdec(dom.keys.share(i), winner) for i in (3, 5)]
print("one-hot winner:", dom.dec(winner, shares))

# p1 and p4 alone hold 2 stake
try:
    dom.dec(winner, [dom.pdec(dom.keys.share(i), winner) for i in (1, 4)])
except InsufficientStake as exc:
    print("refused:", exc)

for rec in dom.audit:
    print(rec.event, rec.circuit, rec.issuer_set)

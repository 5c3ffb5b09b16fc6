"""Binary gate counts of one election round as the committee grows.

The PRF and hash circuits cost a fixed 4218 AND gates each. The comparison
and selection circuits grow with n, and selection dominates at about n^2.
"""

import numpy as np

from homsort import cost_report

print(cost_report(16, 16).to_text())
print()

ns = np.array([8, 16, 32, 64, 128])
reports = [cost_report(int(n), int(n)) for n in ns]
growing = np.array([r.ssle.n_dependent_gates for r in reports])
total = np.array([r.ssle.gates for r in reports])
for n, g, t in zip(ns, growing, total):
    print(f"n={n:<4} n-dependent gates {g:>8}  round total {t:>8}")

slope = np.polyfit(np.log(ns), np.log(growing), 1)[0]
print(f"log-log slope of the n-dependent part: {slope:.2f}")

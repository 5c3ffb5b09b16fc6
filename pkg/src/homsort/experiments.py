"""Batch election experiments: frequencies, chi-square fits, permutation tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import circuits as C
from .sortition import LocalCluster
from .stakes import StakeTable


@dataclass
class FairnessReport:
    stakes: tuple
    trials: int
    counts: np.ndarray
    expected_p: np.ndarray
    chi2: float
    p_value: float

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.trials

    @property
    def z_scores(self) -> np.ndarray:
        """Deviation of each count from its binomial mean, in standard deviations."""
        p = self.expected_p
        sd = np.sqrt(self.trials * p * (1 - p))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.counts - self.trials * p) / sd
        return np.where(sd > 0, z, 0.0)

    def rows(self) -> list[dict]:
        return [{"process": i + 1, "stake": s, "count": int(c), "frequency": float(f),
                 "expected": float(e), "z": float(z)}
                for i, (s, c, f, e, z) in enumerate(zip(self.stakes, self.counts, self.frequencies,
                                                         self.expected_p, self.z_scores))]

    def to_text(self) -> str:
        lines = [f"{'p':>3} {'stake':>6} {'count':>8} {'freq':>8} {'expected':>9} {'z':>7}"]
        for row in self.rows():
            lines.append(f"{row['process']:>3} {row['stake']:>6} {row['count']:>8} "
                         f"{row['frequency']:>8.4f} {row['expected']:>9.4f} {row['z']:>7.2f}")
        lines.append(f"chi2={self.chi2:.3f} p={self.p_value:.4g} trials={self.trials}")
        return "\n".join(lines)


def chi_square(counts: Sequence[int], probabilities: Sequence[float]) -> tuple[float, float]:
    counts = np.asarray(counts, dtype=float)
    probabilities = np.asarray(probabilities, dtype=float)
    res = stats.chisquare(counts, counts.sum() * probabilities)
    return float(res.statistic), float(res.pvalue)


def _cluster(stakes: Sequence[int], seed: int, config: Optional[C.CircuitConfig],
             s_f: Optional[int]) -> LocalCluster:
    st = StakeTable.with_max_faults(stakes) if s_f is None else StakeTable(stakes, s_f)
    return LocalCluster(st, seed=seed, config=config, fast=True)


def ssle_fairness(stakes: Sequence[int], trials: int, seed: int = 0,
                  config: Optional[C.CircuitConfig] = None, s_f: Optional[int] = None) -> FairnessReport:
    """Elect ``trials`` independent rounds and compare winners with S[i]/s_t."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cluster = _cluster(stakes, seed, config, s_f)
    counts = np.zeros(len(stakes), dtype=int)
    for r in range(1, trials + 1):
        counts[cluster.elect(r).leader - 1] += 1
    p = np.asarray(stakes, dtype=float) / sum(stakes)
    chi2, pv = chi_square(counts, p)
    return FairnessReport(tuple(stakes), trials, counts, p, chi2, pv)


@dataclass
class PermutationReport:
    stakes: tuple
    d: int
    permutations: list
    first_counts: Counter = field(default_factory=Counter)
    second_counts: dict = field(default_factory=dict)  # first pick -> Counter of second picks
    chi2: float = float("nan")
    dof: int = 0
    p_value: float = float("nan")
    row_p_values: dict = field(default_factory=dict)

    @property
    def all_distinct(self) -> bool:
        return all(len(set(p)) == len(p) for p in self.permutations)

    def to_text(self) -> str:
        lines = [f"{len(self.permutations)} permutations of length {self.d}; all distinct: {self.all_distinct}"]
        s_t = sum(self.stakes)
        for i1 in sorted(self.second_counts):
            row = self.second_counts[i1]
            total = sum(row.values())
            rest = s_t - self.stakes[i1 - 1]
            cells = " ".join(
                f"p{j}:{row.get(j, 0) / total:.3f}/{self.stakes[j - 1] / rest:.3f}"
                for j in range(1, len(self.stakes) + 1) if j != i1
            )
            lines.append(f"first=p{i1} (n={total}) {cells} p={self.row_p_values.get(i1, float('nan')):.4g}")
        if self.dof:
            lines.append(f"pooled conditional chi2={self.chi2:.3f} dof={self.dof} p={self.p_value:.4g}")
        return "\n".join(lines)


def slp_permutations(stakes: Sequence[int], d: int, count: int, seed: int = 0,
                     config: Optional[C.CircuitConfig] = None, s_f: Optional[int] = None) -> PermutationReport:
    """Run ``count`` permutations and test second picks against S[j]/(s_t - S[i_1])."""
    if not 1 <= d <= len(stakes):
        raise ValueError(f"d must be in [1, {len(stakes)}]")
    cluster = _cluster(stakes, seed, config, s_f)
    perms = [cluster.permutation(k, d) for k in range(count)]
    rep = PermutationReport(tuple(stakes), d, perms)
    rep.first_counts = Counter(p[0] for p in perms)
    if d < 2:
        return rep
    for p in perms:
        rep.second_counts.setdefault(p[0], Counter())[p[1]] += 1
    s_t = sum(stakes)
    chi_total, dof = 0.0, 0
    for i1, row in rep.second_counts.items():
        others = [j for j in range(1, len(stakes) + 1) if j != i1]
        probs = [stakes[j - 1] / (s_t - stakes[i1 - 1]) for j in others]
        chi, pv = chi_square([row.get(j, 0) for j in others], probs)
        rep.row_p_values[i1] = pv
        chi_total += chi
        dof += len(others) - 1
    rep.chi2, rep.dof = chi_total, dof
    rep.p_value = float(stats.chi2.sf(chi_total, dof)) if dof else float("nan")
    return rep

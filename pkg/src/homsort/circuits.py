"""Reference semantics of the sortition circuits and their cost model.

Every circuit is defined here on plaintext integers.  The encrypted-domain
emulation in :mod:`homsort.encdom` evaluates exactly these functions on hidden
payloads and charges the gate/depth figures below to a :class:`CostCounter`.

Two cost models are kept side by side:

* binary (TFHE-style) gate counts, where PRF and hash are the 4218-AND-gate
  Rasta figures and the remaining circuits use unit constant factors on
  their asymptotic counts;
* arithmetic (BGV-style) multiplicative depth, with ``None`` for the scaling
  circuit, which has no known arithmetic realization.
"""

from __future__ import annotations

import hashlib
import hmac
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

PRF_AND_GATES = 4218
HASH_AND_GATES = 4218
INDEX_SUFFIX_BYTES = 2
MAX_LAMBDA = 256


@dataclass(frozen=True)
class CircuitConfig:
    """Word widths used by the circuits.

    ``beta_x`` is the random-word width (so delta = 2**beta_x), ``beta_m`` the
    width of the largest unselected stake, ``lam`` the hash/proof width and
    ``beta_cost`` the size of one encrypted bit, used only for
    communication accounting.
    """

    beta_x: int = 64
    beta_m: int = 16
    lam: int = 256
    beta_cost: float = 1.0

    def __post_init__(self):
        if self.beta_x < 2:
            raise ValueError("beta_x must be at least 2 bits")
        if self.beta_m < 1 or self.beta_x <= self.beta_m:
            raise ValueError(f"need beta_x > beta_m, got {self.beta_x} <= {self.beta_m}")
        if not 1 <= self.lam <= MAX_LAMBDA:
            raise ValueError(f"lam must be in [1, {MAX_LAMBDA}]")
        if self.beta_cost <= 0:
            raise ValueError("beta_cost must be positive")

    @property
    def delta(self) -> int:
        return 1 << self.beta_x

    @classmethod
    def for_stake(cls, s_t: int, beta_x: int = 64, lam: int = 256, beta_cost: float = 1.0):
        return cls(beta_x=beta_x, beta_m=max(1, s_t.bit_length()), lam=lam, beta_cost=beta_cost)


# -- reference semantics -------------------------------------------------------


def cmp_lt_plain(x: int, ys: Sequence[int]) -> list[int]:
    """C_<: ``[x < y for y in ys]`` against a plaintext vector."""
    if len(ys) == 0:
        raise ValueError("comparison vector is empty")
    return [int(x < y) for y in ys]


def cmp_lt_enc(x: int, ys: Sequence[int]) -> list[int]:
    """Encrypted-vector comparator.

    Labelled C_<= in the cost tables, but its outputs are strict ``x < y``; only
    the cost differs from :func:`cmp_lt_plain`.
    """
    return cmp_lt_plain(x, ys)


def first_one(bits: Sequence[int]) -> list[int]:
    """C_01: one-hot mask of the first 1 in a non-decreasing bit vector."""
    return [b - (bits[i - 1] if i else 0) for i, b in enumerate(bits)]


def select(xs: Sequence[int], bits: Sequence[int]) -> int:
    """C_Sel: dot product of ``xs`` with a one-hot ``bits``."""
    if len(xs) != len(bits):
        raise ValueError(f"select shape mismatch: {len(xs)} values, {len(bits)} bits")
    return sum(x * b for x, b in zip(xs, bits))


def _word_bytes(bits: int) -> int:
    return max(1, (bits + 7) // 8)


def prf(key: int, x: int, bits: int = 64) -> int:
    """C_PRF: HMAC-SHA256 keyed by ``key``, truncated to ``bits`` high bits.

    Keys are encoded as 32 big-endian bytes and inputs as 8, so keys up to
    256 bits and inputs up to 64 bits are accepted.
    """
    if not 1 <= bits <= MAX_LAMBDA:
        raise ValueError(f"prf output width must be in [1, {MAX_LAMBDA}]")
    k = key.to_bytes(32, "big")
    msg = x.to_bytes(8, "big")
    digest = hmac.new(k, msg, hashlib.sha256).digest()
    return int.from_bytes(digest, "big") >> (MAX_LAMBDA - bits)


def encode_proof_index(proof: int, index: int, lam: int) -> bytes:
    """``proof || index``: the lam-bit proof followed by a 16-bit big-endian index."""
    return proof.to_bytes(_word_bytes(lam), "big") + index.to_bytes(INDEX_SUFFIX_BYTES, "big")


def hash_bytes(data: bytes, lam: int = 256) -> int:
    """C_H on a byte string: SHA-256 truncated to ``lam`` high bits."""
    if not 1 <= lam <= MAX_LAMBDA:
        raise ValueError(f"hash width must be in [1, {MAX_LAMBDA}]")
    return int.from_bytes(hashlib.sha256(data).digest(), "big") >> (MAX_LAMBDA - lam)


def hash_proof(proof: int, index: int, lam: int = 256) -> int:
    """C_H applied to ``proof || index``."""
    return hash_bytes(encode_proof_index(proof, index, lam), lam)


def scale(x: int, m: int, beta_x: int = 64) -> int:
    """C_scale: ``floor(x * m / 2**beta_x)``, mapping [0, delta) onto [0, m)."""
    if m < 1:
        raise ValueError("scale needs m >= 1")
    return (x * m) >> beta_x


def sub_masked(y: int, xs: Sequence[int], bits: Sequence[int]) -> list[int]:
    """C_-: ``[x - y*b for x, b in zip(xs, bits)]``."""
    if len(xs) != len(bits):
        raise ValueError(f"sub_masked shape mismatch: {len(xs)} values, {len(bits)} bits")
    return [x - y * b for x, b in zip(xs, bits)]


# -- cost model -----------------------------------------------------------------


def log_stake(s_t: int) -> int:
    """ceil(log2 s_t), at least 1."""
    return max(1, (s_t - 1).bit_length())


@dataclass(frozen=True)
class CircuitSpec:
    name: str
    label: str
    gates: Callable[[int, int], int]
    depth: Callable[[int, int], Optional[int]]
    gates_formula: str
    depth_formula: str
    n_dependent: bool = True


CIRCUITS: dict[str, CircuitSpec] = {
    c.name: c
    for c in [
        CircuitSpec("lt", "C_<", lambda n, s: n * log_stake(s), lambda n, s: 2,
                    "n*ceil(log2 s_t)", "2"),
        CircuitSpec("first_one", "C_01", lambda n, s: n, lambda n, s: 1, "n", "1"),
        CircuitSpec("select", "C_Sel", lambda n, s: n * n, lambda n, s: 1, "n^2", "1"),
        CircuitSpec("prf", "C_PRF", lambda n, s: PRF_AND_GATES, lambda n, s: 6,
                    "4218 (AND gates only)", "6", n_dependent=False),
        CircuitSpec("hash", "C_H", lambda n, s: HASH_AND_GATES, lambda n, s: 6,
                    "4218 (AND gates only)", "6", n_dependent=False),
        CircuitSpec("lt_enc", "C_<=", lambda n, s: n * log_stake(s),
                    lambda n, s: max(1, (n * log_stake(s) - 1).bit_length()),
                    "n*ceil(log2 s_t)", "ceil(log2(n*ceil(log2 s_t)))"),
        CircuitSpec("scale", "C_scale", lambda n, s: log_stake(s) ** 2, lambda n, s: None,
                    "ceil(log2 s_t)^2", "unavailable"),
        CircuitSpec("sub_masked", "C_-", lambda n, s: n, lambda n, s: 1, "n", "1"),
    ]
}

SSLE_ROUND = ("prf", "lt", "first_one", "select", "select", "select", "prf", "hash")
SLP_CONTINUATION_ROUND = ("prf", "sub_masked", "scale", "lt_enc", "first_one",
                          "select", "select", "select", "prf", "hash")
# Multiplicative critical path from the round's random word to the voucher.
SSLE_DEPTH_PATH = ("lt", "first_one", "select", "prf", "hash")
SLP_DEPTH_PATH = ("sub_masked", "scale", "lt_enc", "first_one", "select", "prf", "hash")


def circuit_spec(name: str) -> CircuitSpec:
    try:
        return CIRCUITS[name]
    except KeyError:
        raise KeyError(f"unknown circuit {name!r}") from None


def path_depth(path: Sequence[str], n: int, s_t: int) -> Optional[int]:
    total = 0
    for name in path:
        d = circuit_spec(name).depth(n, s_t)
        if d is None:
            return None
        total += d
    return total


@dataclass
class CostCounter:
    """Caller-owned accumulator of circuit invocations."""

    s_t: int
    invocations: Counter = field(default_factory=Counter)
    gates: Counter = field(default_factory=Counter)

    def charge(self, name: str, n: int) -> int:
        g = circuit_spec(name).gates(n, self.s_t)
        self.invocations[name] += 1
        self.gates[name] += g
        return g

    @property
    def total_gates(self) -> int:
        return sum(self.gates.values())

    def merge(self, other: "CostCounter") -> None:
        self.invocations.update(other.invocations)
        self.gates.update(other.gates)


@dataclass(frozen=True)
class CostRow:
    label: str
    gates: int
    gates_formula: str
    depth: Optional[int]
    depth_formula: str


@dataclass(frozen=True)
class RoundCost:
    kind: str
    gates: int
    n_dependent_gates: int
    depth: Optional[int]
    invocations: dict


@dataclass(frozen=True)
class CostReport:
    n: int
    s_t: int
    config: CircuitConfig
    rows: tuple[CostRow, ...]
    ssle: RoundCost
    slp: RoundCost
    messages_per_round: int
    share_bits: float

    @property
    def bits_per_round(self) -> float:
        return self.messages_per_round * self.share_bits

    def row(self, label: str) -> CostRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_text(self) -> str:
        out = io.StringIO()
        fmt_depth = lambda d: "-" if d is None else str(d)
        out.write(f"Circuit costs for n={self.n}, s_t={self.s_t}\n")
        out.write(f"{'Circuit':<10} {'Nb of gates (binary)':>22} {'Mult. depth (arith.)':>22}\n")
        for r in self.rows:
            out.write(f"{r.label:<10} {r.gates:>22} {fmt_depth(r.depth):>22}\n")
        for rc in (self.ssle, self.slp):
            out.write(f"{'round ' + rc.kind:<10} {rc.gates:>22} {fmt_depth(rc.depth):>22}\n")
        out.write(f"messages/round: {self.messages_per_round}, "
                  f"share size: {self.share_bits:g} bits (lambda*beta), "
                  f"total: {self.bits_per_round:g} bits\n")
        return out.getvalue()

    def to_rows(self) -> list[dict]:
        rows = [
            {"circuit": r.label, "gates": r.gates, "depth": r.depth,
             "gates_formula": r.gates_formula, "depth_formula": r.depth_formula}
            for r in self.rows
        ]
        for rc in (self.ssle, self.slp):
            rows.append({"circuit": f"round:{rc.kind}", "gates": rc.gates, "depth": rc.depth,
                         "gates_formula": "sum", "depth_formula": "critical path"})
        return rows


def round_cost(kind: str, invocations: Sequence[str], depth_path: Sequence[str],
               n: int, s_t: int) -> RoundCost:
    counter = CostCounter(s_t)
    for name in invocations:
        counter.charge(name, n)
    variable = sum(g for name, g in counter.gates.items() if CIRCUITS[name].n_dependent)
    return RoundCost(kind, counter.total_gates, variable, path_depth(depth_path, n, s_t),
                     dict(counter.invocations))


def cost_report(n: int, s_t: int, config: Optional[CircuitConfig] = None) -> CostReport:
    """Per-circuit and per-round costs for a committee of ``n`` with total stake ``s_t``."""
    if n < 1 or s_t < 1:
        raise ValueError("need n >= 1 and s_t >= 1")
    config = config or CircuitConfig.for_stake(s_t)
    rows = tuple(
        CostRow(c.label, c.gates(n, s_t), c.gates_formula, c.depth(n, s_t), c.depth_formula)
        for c in CIRCUITS.values()
    )
    return CostReport(
        n=n,
        s_t=s_t,
        config=config,
        rows=rows,
        ssle=round_cost("SSLE", SSLE_ROUND, SSLE_DEPTH_PATH, n, s_t),
        slp=round_cost("SLP", SLP_CONTINUATION_ROUND, SLP_DEPTH_PATH, n, s_t),
        messages_per_round=n * (n - 1),
        share_bits=config.lam * config.beta_cost,
    )

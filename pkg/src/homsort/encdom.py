"""Emulated threshold FHE with stake-weighted, verifiable decryption.

Ciphertexts are :class:`CipherHandle` objects whose payload is kept behind an
access discipline: honest code reaches plaintext only through :meth:`dec`
(threshold path) or :meth:`private_release` (ticket delivery).  Anything
else that looks at a payload goes through :meth:`ThresholdDomain.peek` and is
written to the audit log, so tests can prove it never happens during a
protocol run.

Handles produced by ``eval`` are content-addressed: their id is a digest of
the circuit name, parent handle ids and plaintext arguments.  Two processes
that evaluate the same circuits on the same inputs therefore hold
bit-identical ciphertexts, which is what lets a share issued by one process
verify against another's handle.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import IO, Any, Iterable, Optional, Sequence, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import circuits as C
from .stakes import StakeTable

HANDLE_ID_BYTES = 16
DIGEST_BYTES = 32
SIGNATURE_BYTES = 64


class EncDomError(Exception):
    pass


class InsufficientStake(EncDomError):
    pass


class MixedHandles(EncDomError):
    pass


class DuplicateIssuer(EncDomError):
    pass


class InvalidShare(EncDomError):
    pass


class ForeignKeyShare(EncDomError):
    pass


class SealedHandle(EncDomError, PermissionError):
    """A sealed handle (the setup seed) was asked to leave the encrypted domain."""


class ShapeMismatch(EncDomError, ValueError):
    pass


class UnknownCircuit(EncDomError, KeyError):
    pass


class WordRangeError(EncDomError, ValueError):
    pass


# -- keys ------------------------------------------------------------------------


@dataclass(frozen=True)
class KeyShare:
    """Private key share kappa_j of process ``index``."""

    index: int
    _signing_key: Ed25519PrivateKey = field(repr=False, compare=False)

    def sign(self, message: bytes) -> bytes:
        return self._signing_key.sign(message)


@lru_cache(maxsize=4096)
def _load_public(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


@lru_cache(maxsize=1 << 17)
def _verify_signature(raw_public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        _load_public(raw_public).verify(signature, message)
    except InvalidSignature:
        return False
    return True


@dataclass(frozen=True)
class KeyMaterial:
    joint_public_key: bytes
    shares: tuple[KeyShare, ...]
    verify_keys: tuple[bytes, ...]
    threshold_stake: int

    def share(self, index: int) -> KeyShare:
        return self.shares[index - 1]

    def verify(self, index: int, message: bytes, signature: bytes) -> bool:
        if not 1 <= index <= len(self.verify_keys):
            return False
        return _verify_signature(self.verify_keys[index - 1], message, signature)


def keygen(stake_table: StakeTable, seed: int = 0) -> KeyMaterial:
    """Emulated DKG outcome: one share per process, threshold s_f + 1."""
    if 2 * stake_table.s_f >= stake_table.s_t:
        raise ValueError("s_f must be below s_t/2")
    rng = random.Random(f"keygen:{seed}")
    shares, verify_keys = [], []
    for i in stake_table.indices:
        sk = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        shares.append(KeyShare(i, sk))
        verify_keys.append(sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw))
    pk = hashlib.sha256(b"".join(verify_keys)).digest()
    km = KeyMaterial(pk, tuple(shares), tuple(verify_keys), stake_table.s_f + 1)
    assert km.threshold_stake <= stake_table.s_t - stake_table.s_f
    return km


# -- ciphertexts -------------------------------------------------------------------


@dataclass(frozen=True)
class Provenance:
    op: str
    inputs: tuple = ()
    params: tuple = ()


class CipherHandle:
    """Opaque encrypted word-vector."""

    __slots__ = ("id", "_payload", "provenance", "depth")

    def __init__(self, hid: bytes, payload: tuple[int, ...], provenance: Provenance,
                 depth: Optional[int]):
        self.id = hid
        self._payload = payload
        self.provenance = provenance
        self.depth = depth

    @property
    def width(self) -> int:
        return len(self._payload)

    @property
    def circuit(self) -> str:
        return self.provenance.op

    def __repr__(self):
        return f"CipherHandle({self.id.hex()[:12]}, {self.provenance.op}, width={self.width})"

    def __eq__(self, other):
        return isinstance(other, CipherHandle) and other.id == self.id

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class DecryptionShare:
    handle_id: bytes
    digest: bytes
    index: int
    signature: bytes

    def to_bytes(self) -> bytes:
        return self.handle_id + self.digest + self.index.to_bytes(2, "big") + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "DecryptionShare":
        if len(data) != SHARE_BYTES:
            raise ValueError(f"share must be {SHARE_BYTES} bytes, got {len(data)}")
        a, b = HANDLE_ID_BYTES, HANDLE_ID_BYTES + DIGEST_BYTES
        return cls(data[:a], data[a:b], int.from_bytes(data[b:b + 2], "big"), data[b + 2:])


SHARE_BYTES = HANDLE_ID_BYTES + DIGEST_BYTES + 2 + SIGNATURE_BYTES


def _attested_message(handle_id: bytes, digest: bytes, index: int) -> bytes:
    return b"pdec" + handle_id + digest + index.to_bytes(2, "big")


def attest(key: KeyShare, handle_id: bytes, digest: bytes, index: Optional[int] = None) -> DecryptionShare:
    """Sign an arbitrary (handle, digest, index) triple.

    Honest code never needs this; it exists so simulated Byzantine processes
    can build malformed shares with their own keys.
    """
    index = key.index if index is None else index
    return DecryptionShare(handle_id, digest, index, key.sign(_attested_message(handle_id, digest, index)))


@dataclass(frozen=True)
class AuditRecord:
    event: str
    handle_id: str
    round: Optional[int]
    issuer_set: tuple[int, ...]
    circuit: str

    def to_dict(self) -> dict:
        return {"event": self.event, "handle_id": self.handle_id, "round": self.round,
                "issuer_set": list(self.issuer_set), "circuit": self.circuit}


Value = Union[CipherHandle, int]
Arg = Union[Value, Sequence[Value]]

# Argument kinds per circuit: "s" scalar word, "v" word vector.
SIGNATURES: dict[str, tuple[str, ...]] = {
    "lt": ("s", "v"),
    "lt_enc": ("s", "v"),
    "first_one": ("v",),
    "select": ("v", "v"),
    "prf": ("s", "s"),
    "hash": ("s", "s"),
    "scale": ("s", "s"),
    "sub_masked": ("s", "v", "v"),
}


class ThresholdDomain:
    """One emulated ThFHE universe: joint key, shares, and the decryption audit log.

    ``protocol=True`` marks domains driven by protocol code; for those the
    audit log must only ever show voucher decryptions.
    """

    def __init__(self, stake_table: StakeTable, config: Optional[C.CircuitConfig] = None,
                 seed: int = 0, keys: Optional[KeyMaterial] = None, protocol: bool = False):
        self.stake_table = stake_table
        self.config = config or C.CircuitConfig.for_stake(stake_table.s_t)
        self.keys = keys or keygen(stake_table, seed)
        self.protocol = protocol
        self.audit: list[AuditRecord] = []
        self.sealed: set[bytes] = set()
        self._nonce_rng = random.Random(f"nonce:{seed}")

    # -- threshold FHE interface --

    def enc(self, values: Iterable[int]) -> CipherHandle:
        words = tuple(int(v) for v in values)
        limit = 1 << self.config.beta_x
        for v in words:
            if not 0 <= v < limit:
                raise WordRangeError(f"value {v} outside [0, 2^{self.config.beta_x})")
        hid = self._nonce_rng.randbytes(HANDLE_ID_BYTES)
        return CipherHandle(hid, words, Provenance("enc", (), words), 0)

    def eval(self, circuit: str, *inputs: Arg, cost: Optional[C.CostCounter] = None,
             **params: Any) -> CipherHandle:
        """Evaluate ``circuit`` on a mix of handles and plaintext values."""
        try:
            kinds = SIGNATURES[circuit]
        except KeyError:
            raise UnknownCircuit(circuit) from None
        if len(inputs) != len(kinds):
            raise ShapeMismatch(f"{circuit} takes {len(kinds)} inputs, got {len(inputs)}")
        values = [_resolve(a, k, circuit, _hidden) for a, k in zip(inputs, kinds)]
        widths = {len(v) for v, k in zip(values, kinds) if k == "v"}
        if len(widths) > 1:
            raise ShapeMismatch(f"{circuit} vector inputs differ in length: {sorted(widths)}")
        out = self._apply(circuit, values, params)
        width = max((len(v) for v in values if isinstance(v, list)), default=1)
        if cost is not None:
            cost.charge(circuit, width)
        parents = _flatten_handles(inputs)
        hid = _derive_id(circuit, inputs, params)
        return CipherHandle(hid, out, Provenance(circuit, tuple(inputs), tuple(sorted(params.items()))),
                            _child_depth(circuit, parents, width, self.stake_table.s_t))

    def project(self, handle: CipherHandle, index: int) -> CipherHandle:
        """Slot extraction ``handle[index]`` (0-based); free in both cost models."""
        if not -handle.width <= index < handle.width:
            raise ShapeMismatch(f"index {index} outside width {handle.width}")
        index %= handle.width
        hid = _derive_id("project", (handle,), {"index": index})
        return CipherHandle(hid, (handle._payload[index],),
                            Provenance("project", (handle,), (("index", index),)), handle.depth)

    def pdec(self, key: KeyShare, handle: CipherHandle, caller: Optional[int] = None) -> DecryptionShare:
        if caller is not None and key.index != caller:
            raise ForeignKeyShare(f"p_{caller} used the key share of p_{key.index}")
        if self.keys.share(key.index) is not key:
            raise ForeignKeyShare(f"key share for p_{key.index} does not belong to this domain")
        digest = _payload_digest(handle)
        sig = key.sign(_attested_message(handle.id, digest, key.index))
        return DecryptionShare(handle.id, digest, key.index, sig)

    def ver(self, share: DecryptionShare, handle: CipherHandle, j: int) -> bool:
        if share.index != j or share.handle_id != handle.id:
            return False
        if share.digest != _payload_digest(handle):
            return False
        return self.keys.verify(j, _attested_message(share.handle_id, share.digest, j), share.signature)

    def dec(self, handle: CipherHandle, shares: Iterable[DecryptionShare],
            round: Optional[int] = None) -> tuple[int, ...]:
        self._check_sealed(handle, round)
        shares = list(shares)
        if any(s.handle_id != handle.id for s in shares):
            raise MixedHandles("shares reference different handles")
        issuers = [s.index for s in shares]
        if len(set(issuers)) != len(issuers):
            raise DuplicateIssuer(f"repeated issuers in {sorted(issuers)}")
        for s in shares:
            if not self.ver(s, handle, s.index):
                raise InvalidShare(f"share of p_{s.index} does not verify")
        stake = self.stake_table.stake_of(issuers)
        if stake < self.keys.threshold_stake:
            raise InsufficientStake(f"issuer stake {stake} < {self.keys.threshold_stake}")
        self._log("dec", handle, round, sorted(issuers))
        return handle._payload

    def seal(self, handle: CipherHandle) -> CipherHandle:
        """Forbid every release path for ``handle``; used for the setup seed."""
        self.sealed.add(handle.id)
        return handle

    def _check_sealed(self, handle: CipherHandle, round, issuers=()) -> None:
        if handle.id in self.sealed:
            self._log("release_denied", handle, round, issuers)
            raise SealedHandle(f"handle {handle.id.hex()} is sealed")

    # -- non-threshold access paths --

    def private_release(self, handle: CipherHandle, recipient: int,
                        round: Optional[int] = None) -> tuple[int, ...]:
        """Authenticated private delivery of ``handle`` to ``recipient`` (ticket wrapping)."""
        self._check_sealed(handle, round, [recipient])
        self._log("private_release", handle, round, [recipient])
        return handle._payload

    def peek(self, handle: CipherHandle) -> tuple[int, ...]:
        """Audit-only payload access; every call is logged."""
        self._log("audit_peek", handle, None, [])
        return handle._payload

    def reevaluate(self, handle: CipherHandle) -> tuple[int, ...]:
        """Recompute a payload from its provenance DAG (audit oracle)."""
        self._log("audit_replay", handle, None, [])
        return _replay(self, handle, {})

    # -- audit log --

    def _log(self, event: str, handle: CipherHandle, round, issuers) -> None:
        self.audit.append(AuditRecord(event, handle.id.hex(), round, tuple(issuers), handle.circuit))

    def audit_violations(self) -> list[str]:
        """Log entries a protocol run must never produce.

        Threshold decryption is reserved for vouchers (``hash`` outputs),
        nothing may be peeked, and sealed handles never leave the domain.
        """
        sealed = {h.hex() for h in self.sealed}
        bad = []
        for rec in self.audit:
            if rec.event == "dec" and rec.circuit != "hash":
                bad.append(f"dec of a {rec.circuit} handle")
            elif rec.event == "audit_peek":
                bad.append(f"peek at {rec.handle_id}")
            elif rec.event in ("dec", "private_release") and rec.handle_id in sealed:
                bad.append(f"{rec.event} of sealed handle {rec.handle_id}")
            elif rec.event == "private_release" and rec.circuit != "enc":
                bad.append(f"private release of a {rec.circuit} handle")
        return bad

    def export_audit(self, fp: IO[str]) -> None:
        for rec in self.audit:
            fp.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")

    # -- internals --

    def _apply(self, circuit: str, v: list, params: dict) -> tuple[int, ...]:
        cfg = self.config
        if circuit == "lt":
            return tuple(C.cmp_lt_plain(*v))
        if circuit == "lt_enc":
            return tuple(C.cmp_lt_enc(*v))
        if circuit == "first_one":
            return tuple(C.first_one(*v))
        if circuit == "select":
            return (C.select(*v),)
        if circuit == "prf":
            return (C.prf(v[0], v[1], params.get("bits", cfg.beta_x)),)
        if circuit == "hash":
            return (C.hash_proof(v[0], v[1], cfg.lam),)
        if circuit == "scale":
            return (C.scale(v[0], v[1], cfg.beta_x),)
        if circuit == "sub_masked":
            return tuple(C.sub_masked(*v))
        raise UnknownCircuit(circuit)


def _hidden(handle: CipherHandle) -> tuple[int, ...]:
    return handle._payload


def _resolve(arg: Arg, kind: str, circuit: str, fetch):
    if kind == "s":
        if isinstance(arg, CipherHandle):
            if arg.width != 1:
                raise ShapeMismatch(f"{circuit} expected a scalar, got width {arg.width}")
            return fetch(arg)[0]
        if isinstance(arg, (list, tuple)):
            raise ShapeMismatch(f"{circuit} expected a scalar, got a vector")
        return int(arg)
    if isinstance(arg, CipherHandle):
        return list(fetch(arg))
    if not isinstance(arg, (list, tuple)):
        raise ShapeMismatch(f"{circuit} expected a vector, got a scalar")
    out = []
    for a in arg:
        out.extend(fetch(a) if isinstance(a, CipherHandle) else (int(a),))
    return out


def _flatten_handles(inputs) -> list[CipherHandle]:
    out = []
    for a in inputs:
        if isinstance(a, CipherHandle):
            out.append(a)
        elif isinstance(a, (list, tuple)):
            out.extend(x for x in a if isinstance(x, CipherHandle))
    return out


def _canon(arg) -> Any:
    if isinstance(arg, CipherHandle):
        return "h:" + arg.id.hex()
    if isinstance(arg, (list, tuple)):
        return [_canon(a) for a in arg]
    return int(arg)


def _derive_id(op: str, inputs, params: dict) -> bytes:
    blob = json.dumps([op, _canon(list(inputs)), sorted(params.items())], separators=(",", ":"))
    return hashlib.blake2b(blob.encode(), digest_size=HANDLE_ID_BYTES).digest()


def _child_depth(circuit: str, parents: list[CipherHandle], n: int, s_t: int) -> Optional[int]:
    d = C.circuit_spec(circuit).depth(n, s_t)
    if d is None or any(p.depth is None for p in parents):
        return None
    return max((p.depth for p in parents), default=0) + d


def _payload_digest(handle: CipherHandle) -> bytes:
    blob = handle.id + b"".join(w.to_bytes((w.bit_length() + 8) // 8, "big", signed=True)
                                + b"|" for w in handle._payload)
    return hashlib.sha256(blob).digest()


def _replay(domain: ThresholdDomain, handle: CipherHandle, memo: dict) -> tuple[int, ...]:
    if handle.id in memo:
        return memo[handle.id]
    prov = handle.provenance
    if prov.op == "enc":
        out = tuple(prov.params)
    elif prov.op == "project":
        out = (_replay(domain, prov.inputs[0], memo)[dict(prov.params)["index"]],)
    else:
        fetch = lambda h: _replay(domain, h, memo)
        values = [_resolve(a, k, prov.op, fetch) for a, k in zip(prov.inputs, SIGNATURES[prov.op])]
        out = domain._apply(prov.op, values, dict(prov.params))
    memo[handle.id] = out
    return out

import io
import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homsort import circuits as C
from homsort.encdom import (
    CipherHandle,
    DecryptionShare,
    DuplicateIssuer,
    ForeignKeyShare,
    InsufficientStake,
    InvalidShare,
    MixedHandles,
    SealedHandle,
    ShapeMismatch,
    ThresholdDomain,
    UnknownCircuit,
    WordRangeError,
    attest,
    keygen,
)
from homsort.stakes import StakeTable


def full_shares(dom, h):
    return [dom.pdec(dom.keys.share(i), h) for i in dom.stake_table.indices]


# -- stake tables and keygen --


def test_stake_table_totals():
    st_ = StakeTable([3, 1, 2], 2)
    assert (st_.n, st_.s_t, st_.threshold) == (3, 6, 3)
    assert st_.prefix_sums() == [3, 4, 6]
    assert st_.stake_of([1, 1, 3]) == 5


@pytest.mark.parametrize("stakes,s_f", [([], 0), ([0, 1], 0), ([1, 1], 1), ([1], -1)])
def test_stake_table_rejects(stakes, s_f):
    with pytest.raises(ValueError):
        StakeTable(stakes, s_f)


def test_with_max_faults():
    assert StakeTable.with_max_faults([1, 2, 3, 4, 10]).s_f == 9
    assert StakeTable.with_max_faults([1]).s_f == 0


def test_keygen_threshold_examples():
    assert keygen(StakeTable([2, 2, 2], 2)).threshold_stake == 3
    assert keygen(StakeTable([1], 0)).threshold_stake == 1
    with pytest.raises(ValueError):
        keygen(StakeTable([3, 3], 3))


@given(st.lists(st.integers(1, 9), min_size=1, max_size=8), st.data())
def test_keygen_shape(stakes, data):
    s_f = data.draw(st.integers(0, (sum(stakes) - 1) // 2))
    st_ = StakeTable(stakes, s_f)
    km = keygen(st_)
    assert len(km.shares) == st_.n == len(km.verify_keys)
    assert km.threshold_stake == s_f + 1 <= st_.s_t - s_f


# -- enc / eval --


def test_enc_round_trip_and_fresh_ids():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    h = dom.enc([42])
    assert dom.dec(h, full_shares(dom, h)) == (42,)
    z = dom.enc([0, 0, 0])
    assert z.width == 3 and dom.dec(z, full_shares(dom, z)) == (0, 0, 0)
    assert dom.enc([42]).id != h.id


def test_enc_word_range():
    dom = ThresholdDomain(StakeTable([1], 0), C.CircuitConfig(beta_x=8, beta_m=2))
    dom.enc([255])
    with pytest.raises(WordRangeError):
        dom.enc([256])
    with pytest.raises(WordRangeError):
        dom.enc([-1])


@given(st.integers(0, 2**64 - 1))
@settings(max_examples=50)
def test_round_trip_property(v):
    dom = ThresholdDomain(StakeTable([1, 2], 0))
    h = dom.enc([v])
    assert dom.dec(h, full_shares(dom, h)) == (v,)


def test_eval_examples():
    dom = ThresholdDomain(StakeTable([1, 1, 1, 1, 1], 2))
    sel = dom.eval("select", dom.enc([10, 20, 30]), dom.enc([0, 1, 0]))
    assert dom.peek(sel) == (20,)
    fo = dom.eval("first_one", dom.enc([0, 0, 1, 1, 1]))
    assert dom.peek(fo) == (0, 0, 1, 0, 0)
    lt = dom.eval("lt", dom.enc([7]), [6, 8, 12])
    assert dom.peek(lt) == (0, 1, 1)


def test_eval_errors():
    dom = ThresholdDomain(StakeTable([1, 1], 0))
    h = dom.enc([1, 2])
    with pytest.raises(UnknownCircuit):
        dom.eval("xor", h)
    with pytest.raises(ShapeMismatch):
        dom.eval("lt", h, [1, 2])
    with pytest.raises(ShapeMismatch):
        dom.eval("select", [1, 2, 3], h)
    with pytest.raises(ShapeMismatch):
        dom.eval("first_one", h, h)


def test_eval_is_content_addressed():
    dom = ThresholdDomain(StakeTable([1, 1], 0))
    seed = dom.enc([5])
    a, b = dom.eval("prf", seed, 3), dom.eval("prf", seed, 3)
    assert a.id == b.id and a == b
    assert dom.eval("prf", seed, 4).id != a.id


def test_project_is_free_slot_access():
    dom = ThresholdDomain(StakeTable([1, 1], 0))
    counter = C.CostCounter(2)
    h = dom.eval("sub_masked", 1, [3, 4, 6], [0, 1, 1], cost=counter)
    assert dom.peek(dom.project(h, -1)) == (5,)
    assert counter.invocations == {"sub_masked": 1}
    with pytest.raises(ShapeMismatch):
        dom.project(h, 3)


def test_payload_not_exposed():
    dom = ThresholdDomain(StakeTable([1], 0))
    h = dom.enc([9])
    assert "9" not in repr(h)
    assert not hasattr(h, "payload")
    with pytest.raises(AttributeError):
        h.extra = 1


# -- shares --


def test_pdec_ver_examples():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    a, b = dom.enc([1]), dom.enc([2])
    sh = dom.pdec(dom.keys.share(2), a)
    assert dom.ver(sh, a, 2)
    assert not dom.ver(sh, b, 2)
    assert not dom.ver(sh, a, 1)
    forged = attest(dom.keys.share(2), a.id, b"\x00" * 32)
    assert not dom.ver(forged, a, 2)


def test_pdec_foreign_key():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    other = ThresholdDomain(StakeTable([1, 1, 1], 1), seed=9)
    h = dom.enc([1])
    with pytest.raises(ForeignKeyShare):
        dom.pdec(dom.keys.share(1), h, caller=2)
    with pytest.raises(ForeignKeyShare):
        dom.pdec(other.keys.share(1), h)


def test_forged_shares_rejected_monte_carlo():
    dom = ThresholdDomain(StakeTable([1, 1, 1, 1], 1))
    h = dom.enc([3])
    rng = random.Random(1)
    for _ in range(10_000):
        j = rng.randint(1, 4)
        sh = attest(dom.keys.share(rng.randint(1, 4)), h.id, rng.randbytes(32), index=j)
        assert not dom.ver(sh, h, j)


def test_impersonation_rejected():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    h = dom.enc([3])
    real = dom.pdec(dom.keys.share(1), h)
    fake = attest(dom.keys.share(3), h.id, real.digest, index=1)
    assert not dom.ver(fake, h, 1)


def test_share_wire_round_trip():
    dom = ThresholdDomain(StakeTable([1, 1], 0))
    sh = dom.pdec(dom.keys.share(2), dom.enc([7]))
    raw = sh.to_bytes()
    assert len(raw) == 114
    assert DecryptionShare.from_bytes(raw) == sh


def test_dec_examples():
    dom = ThresholdDomain(StakeTable([2, 2, 2], 2))
    h = dom.enc([11])
    s1, s2 = (dom.pdec(dom.keys.share(i), h) for i in (1, 2))
    with pytest.raises(InsufficientStake):
        dom.dec(h, [s1])
    assert dom.dec(h, [s1, s2]) == (11,)
    with pytest.raises(DuplicateIssuer):
        dom.dec(h, [s1, s1])


def test_dec_other_errors():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    a, b = dom.enc([1]), dom.enc([2])
    with pytest.raises(MixedHandles):
        dom.dec(a, [dom.pdec(dom.keys.share(1), a), dom.pdec(dom.keys.share(2), b)])
    bad = attest(dom.keys.share(2), a.id, b"\x01" * 32)
    with pytest.raises(InvalidShare):
        dom.dec(a, [dom.pdec(dom.keys.share(1), a), bad])


@given(st.lists(st.integers(1, 6), min_size=1, max_size=7), st.data())
@settings(max_examples=40, deadline=None)
def test_threshold_exactness(stakes, data):
    s_f = data.draw(st.integers(0, (sum(stakes) - 1) // 2))
    dom = ThresholdDomain(StakeTable(stakes, s_f))
    h = dom.enc([1])
    subset = data.draw(st.sets(st.integers(1, len(stakes))))
    shares = [dom.pdec(dom.keys.share(i), h) for i in subset]
    if sum(stakes[i - 1] for i in subset) >= s_f + 1:
        assert dom.dec(h, shares) == (1,)
    else:
        with pytest.raises(InsufficientStake):
            dom.dec(h, shares)


# -- audit trail --


def test_audit_records_and_export():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    h = dom.enc([4])
    dom.dec(h, full_shares(dom, h)[:2], round=7)
    dom.private_release(h, 3)
    buf = io.StringIO()
    dom.export_audit(buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["event"] for r in recs] == ["dec", "private_release"]
    assert recs[0]["round"] == 7 and recs[0]["issuer_set"] == [1, 2]
    assert set(recs[0]) == {"event", "handle_id", "round", "issuer_set", "circuit"}


def test_sealed_handle_never_released():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    seed = dom.seal(dom.enc([5]))
    with pytest.raises(SealedHandle):
        dom.dec(seed, full_shares(dom, seed))
    with pytest.raises(SealedHandle):
        dom.private_release(seed, 1)
    assert [r.event for r in dom.audit] == ["release_denied", "release_denied"]
    assert dom.audit_violations() == []


def test_audit_violations_flag_misuse():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    draw = dom.eval("prf", dom.enc([5]), 1)
    dom.dec(draw, full_shares(dom, draw))
    dom.peek(draw)
    bad = dom.audit_violations()
    assert len(bad) == 2 and "dec of a prf handle" in bad[0]


def test_provenance_replay_matches_payload():
    dom = ThresholdDomain(StakeTable([3, 1, 2], 2))
    seed = dom.enc([123456789])
    draw = dom.eval("prf", seed, 1)
    below = dom.eval("lt", draw, [2**62, 2**63, 2**64])
    onehot = dom.eval("first_one", below)
    tickets = [dom.enc([w]) for w in (11, 22, 33)]
    ticket = dom.eval("select", tickets, onehot)
    proof = dom.eval("prf", ticket, 1, bits=256)
    index = dom.eval("select", [1, 2, 3], onehot)
    voucher = dom.eval("hash", proof, index)
    prefix = dom.eval("sub_masked", dom.eval("select", [3, 1, 2], onehot), [3, 4, 6], below)
    scaled = dom.eval("scale", dom.eval("prf", seed, 2), dom.project(prefix, -1))
    for h in (draw, below, onehot, ticket, proof, index, voucher, prefix, scaled):
        assert dom.reevaluate(h) == dom.peek(h)


def test_depth_propagates():
    dom = ThresholdDomain(StakeTable([1, 1, 1], 1))
    draw = dom.eval("prf", dom.enc([1]), 1)
    assert draw.depth == 6
    below = dom.eval("lt", draw, [1, 2, 3])
    assert below.depth == 8
    assert dom.eval("scale", draw, 3).depth is None


def test_every_circuit_matches_reference():
    dom = ThresholdDomain(StakeTable([1, 1, 1, 1], 1), C.CircuitConfig(beta_x=16, beta_m=4))
    rng = random.Random(5)
    for _ in range(200):
        n = rng.randint(1, 6)
        ys = [rng.randrange(1 << 16) for _ in range(n)]
        x = rng.randrange(1 << 16)
        bits = sorted(rng.randint(0, 1) for _ in range(n))
        hot = [0] * n
        hot[rng.randrange(n)] = 1
        m = rng.randint(1, 15)
        cases = [
            ("lt", (x, ys), C.cmp_lt_plain(x, ys)),
            ("lt_enc", (x, ys), C.cmp_lt_enc(x, ys)),
            ("first_one", (bits,), C.first_one(bits)),
            ("select", (ys, hot), [C.select(ys, hot)]),
            ("prf", (x, n), [C.prf(x, n, 16)]),
            ("hash", (x, n), [C.hash_proof(x, n, 256)]),
            ("scale", (x, m), [C.scale(x, m, 16)]),
            ("sub_masked", (1, [y + 1 for y in ys], bits), C.sub_masked(1, [y + 1 for y in ys], bits)),
        ]
        for name, args, want in cases:
            enc_args = [dom.enc([a]) if isinstance(a, int) else dom.enc(a) for a in args]
            assert list(dom.peek(dom.eval(name, *enc_args))) == want

import numpy as np
from hypothesis import given, strategies as st

from bapred import wire
from bapred.crypto import ThresholdScheme


def test_value_costs_one_byte():
    assert wire.account_bits("gc1", (1,), 64, 256) == 8


def test_seven_bit_vote_costs_one_byte():
    assert wire.account_bits("vote", (np.ones(7, dtype=bool),), 64, 256) == 8


def test_signature_costs_kappa():
    s = ThresholdScheme(4)
    tsig = s.combine(2, [s.key(p).share_sign(2, ("certify", None)) for p in (1, 2)])
    assert wire.account_bits("nocommon", (tsig,), 4, 256) == 256
    assert wire.account_bits("nocommon", (tsig,), 4, 128) == 128


def test_pid_width():
    assert [wire.pid_bytes(n) for n in (2, 256, 257, 65536, 65537)] == [1, 1, 2, 2, 3]


def test_idset_has_length_prefix():
    assert wire.payload_bytes("lvote", ((1, 2, 3),), 300, 256) == 2 * 4
    # at n=256 an id fits one byte but the count 256 needs two
    assert wire.payload_bytes("lvote", (tuple(range(1, 257)),), 256, 256) == 2 + 256
    assert len(wire.encode("lvote", (tuple(range(1, 257)),), 256, 256)) == 258


@given(st.integers(2, 300), st.lists(st.booleans(), min_size=1, max_size=70),
       st.lists(st.integers(1, 300), max_size=10, unique=True))
def test_encode_length_matches_accounting(n, bits, ids):
    s = ThresholdScheme(n)
    sig = s.key(1).share_sign(1, "m")
    ids = tuple(sorted(p for p in ids if p <= n))
    bodies = {
        "gc1": (1,), "pred": (np.array(bits),), "leader": (n,), "lvote": (ids,),
        "concil": (0, ids), "avote": (1, sig), "valc": (1, 7, sig, sig),
        "proposec": (0, 3, sig, sig, sig), "fwd_commit": (2 if n > 1 else 1, 1, sig, sig),
    }
    for kind, body in bodies.items():
        assert wire.well_formed(kind, body, n)
        assert len(wire.encode(kind, body, n, 256)) == wire.payload_bytes(kind, body, n, 256)


def test_malformed_bodies_rejected():
    n = 8
    s = ThresholdScheme(n)
    sig = s.key(1).share_sign(1, "m")
    assert not wire.well_formed("nope", (1,), n)
    assert not wire.well_formed("gc1", (1, 2), n)
    assert not wire.well_formed("gc1", [1], n)
    assert not wire.well_formed("leader", (0,), n)
    assert not wire.well_formed("leader", (9,), n)
    assert not wire.well_formed("lvote", ((3, 2),), n)
    assert not wire.well_formed("avote", (1, "sig"), n)
    assert wire.well_formed("avote", (1, sig), n)


@given(st.binary(max_size=40), st.sampled_from(sorted(wire.kinds())))
def test_random_bytes_are_never_well_formed(blob, kind):
    assert not wire.well_formed(kind, blob, 16)
    assert not wire.well_formed(kind, (blob,) * len(wire.field_types(kind)), 16)

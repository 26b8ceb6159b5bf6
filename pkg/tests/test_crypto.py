import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from py_ecc.optimized_bn128 import G1, multiply, normalize

from bileve.crypto import (
    SIG_BITS,
    KeyMatrix,
    KeyPair,
    bit_table,
    compress_g1,
    decompress_g1,
    encode_message,
    gen_key_matrix,
    keygen,
    load_public_key,
    sign_message,
    token_bit_hash,
    token_bits,
    verify_signature,
)

MSG = list(range(100, 144))


@pytest.fixture(scope="module")
def kp():
    return keygen(b"crypto-tests")


@pytest.fixture(scope="module")
def sig(kp):
    return sign_message(kp.sk, MSG)


def test_keygen_seeded_and_distinct():
    assert keygen(b"x") == keygen(b"x")
    assert keygen(b"x").pk != keygen(b"y").pk
    assert len(keygen(b"x").pk) == 128


def test_roundtrip(kp, sig):
    assert sig.shape == (SIG_BITS,) and SIG_BITS == 256
    assert set(np.unique(sig)) <= {0, 1}
    assert verify_signature(kp.pk, MSG, sig)


def test_mismatched_pk(sig):
    assert not verify_signature(keygen(b"someone else").pk, MSG, sig)


def test_deterministic_signing(kp, sig):
    assert np.array_equal(sign_message(kp.sk, MSG), sig)


def test_one_token_changes_bits(kp, sig):
    other = MSG[:-1] + [MSG[-1] + 1]
    assert not np.array_equal(sign_message(kp.sk, other), sig)


def test_flipped_bit_fails(kp, sig):
    for pos in (0, 100, 255):
        bad = sig.copy()
        bad[pos] ^= 1
        assert not verify_signature(kp.pk, MSG, bad)


def test_replaced_message_token_fails(kp, sig):
    bad = list(MSG)
    bad[7] = 9999
    assert not verify_signature(kp.pk, bad, sig)


def test_randomized_tamper(kp, sig):
    rng = np.random.default_rng(3)
    for _ in range(4):
        bad = sig.copy()
        bad[rng.integers(SIG_BITS)] ^= 1
        assert not verify_signature(kp.pk, MSG, bad)


def test_wrong_bit_length(kp, sig):
    with pytest.raises(ValueError):
        verify_signature(kp.pk, MSG, sig[:-1])


def test_message_length_check(kp):
    with pytest.raises(ValueError):
        sign_message(kp.sk, MSG, m=10)


def test_malformed_public_key(sig):
    with pytest.raises(ValueError, match="malformed public key"):
        verify_signature(b"\x01" * 128, MSG, sig)
    with pytest.raises(ValueError, match="malformed public key"):
        verify_signature(b"\x01" * 12, MSG, sig)


def test_encoding_is_length_prefixed():
    assert encode_message([1, 256]) == bytes([0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 1, 0])
    # no ambiguity between [1, 2] and [258]
    assert encode_message([1, 2]) != encode_message([258])


def test_key_files(tmp_path, kp):
    kp.save(tmp_path)
    assert KeyPair.load(tmp_path) == kp
    assert load_public_key(tmp_path / "public.key") == kp.pk


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2**64))
def test_g1_compression_roundtrip(k):
    pt = multiply(G1, k)
    back = decompress_g1(compress_g1(pt))
    assert normalize(back) == normalize(pt)


def test_bit_hash_matches_oracle():
    for i in (0, 1, 2, 255, 256, 9986):
        assert token_bit_hash(i) == hashlib.sha256(i.to_bytes(4, "big")).digest()[0] % 2
        assert token_bit_hash(i) == token_bit_hash(i)


def test_bit_balance_over_1000_ids():
    frac = np.mean([token_bit_hash(i) for i in range(1000)])
    assert 0.4 <= frac <= 0.6


def test_bits_depend_only_on_id():
    ids = [5, 9, 5, 5, 9]
    bits = token_bits(ids)
    assert bits[0] == bits[2] == bits[3] and bits[1] == bits[4]
    assert np.array_equal(bit_table(10)[ids], bits)


def test_key_matrix_seeded():
    a = gen_key_matrix(b"s", 300, 1000)
    b = gen_key_matrix(b"s", 300, 1000)
    assert np.array_equal(a.xi, b.xi)
    assert not np.array_equal(a.xi, gen_key_matrix(b"t", 300, 1000).xi)
    assert 0.49 <= a.xi.mean() <= 0.51
    assert a.xi.min() >= 0 and a.xi.max() < 1


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_shift_composition(t, d1, d2):
    keys = KeyMatrix(b"comp", 37, 4)
    assert np.array_equal(keys.row(t, d1 + d2), keys.row(t + d2, d1))


def test_key_matrix_file(tmp_path):
    keys = gen_key_matrix(b"file", 20, 50)
    keys.save(tmp_path / "k.txt")
    again = KeyMatrix.load(tmp_path / "k.txt")
    assert np.array_equal(again.xi, keys.xi) and again.fingerprint == keys.fingerprint


def test_key_matrix_ranks():
    keys = KeyMatrix.from_array([[0.3, 0.1, 0.3, 0.9]])
    assert keys.ranks.tolist() == [[1, 0, 2, 3]]

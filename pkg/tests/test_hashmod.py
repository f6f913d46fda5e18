import numpy as np
import pytest
from hypothesis import given, strategies as st

from qka_sim.hashmod import (
    Digest,
    HashError,
    HashMode,
    HashParams,
    KeyString,
    Registry,
    _gf2_rank,
    combine,
    hash_exponent,
    hash_key,
    is_probable_prime,
    verify_chain,
    verify_equal,
    xor_all,
)

keys = st.integers(1, 8).flatmap(
    lambda m: st.lists(st.integers(0, 1), min_size=2 * m, max_size=2 * m).map(lambda b: KeyString(tuple(b)))
)


def gf2_matvec(rows, key_bits, key):
    """Oracle: dense numpy matrix-vector product mod 2."""
    mat = np.array([[(r >> (key_bits - 1 - c)) & 1 for c in range(key_bits)] for r in rows])
    return [int(x) for x in (mat @ np.array(key.bits)) % 2]


def sieve(limit):
    flags = np.ones(limit, dtype=bool)
    flags[:2] = False
    for p in range(2, int(limit**0.5) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return flags


def test_keystring_parse_and_format():
    k = KeyString.parse("10,11,01")
    assert k.bits == (1, 0, 1, 1, 0, 1)
    assert str(k) == "10,11,01"
    assert k.m == 3 and len(k) == 6
    assert k.chunks() == [(1, 0), (1, 1), (0, 1)]
    assert KeyString.parse("(10, 11, 01)") == k
    with pytest.raises(HashError):
        KeyString.parse("10,12")
    with pytest.raises(HashError):
        KeyString.parse("101")


@given(keys)
def test_keystring_int_round_trip(k):
    assert KeyString.from_int(k.to_int(), len(k)) == k
    assert KeyString.from_chunks(k.chunks()) == k


def test_xor_all_paper_keys():
    ks = [KeyString.parse(t) for t in ("10,11,10", "00,01,01", "11,01,00", "11,10,11", "00,10,01")]
    assert str(xor_all(ks)) == "10,11,01"


def test_xor_length_mismatch():
    with pytest.raises(HashError):
        KeyString.parse("10") ^ KeyString.parse("10,11")


def test_primality_against_sieve():
    flags = sieve(20_000)
    assert all(is_probable_prime(n) == bool(flags[n]) for n in range(20_000))
    assert is_probable_prime(2**61 - 1)
    assert not is_probable_prime(2**61 + 1)
    # strong pseudoprime to several small bases
    assert not is_probable_prime(3215031751)


@given(st.integers(0, 2**32 - 1), st.integers(1, 16), st.integers(1, 70))
def test_xor_linear_rank(seed, key_bits, digest_bits):
    params = HashParams.xor_linear(key_bits, np.random.default_rng(seed), digest_bits)
    assert len(params.rows) == digest_bits
    assert _gf2_rank(params.rows) == min(key_bits, digest_bits)


def test_gf2_rank_oracle():
    assert _gf2_rank([0b11, 0b01, 0b10]) == 2
    assert _gf2_rank([0, 0]) == 0
    assert _gf2_rank([0b101, 0b101]) == 1


@given(st.integers(0, 2**32 - 1), keys)
def test_hash_matches_matrix_product(seed, k):
    params = HashParams.xor_linear(len(k), np.random.default_rng(seed))
    bits = gf2_matvec(params.rows, len(k), k)
    assert hash_key(k, params).value == int("".join(map(str, bits)), 2)


@given(st.integers(0, 2**32 - 1), st.data())
def test_xor_linear_homomorphism(seed, data):
    m = data.draw(st.integers(1, 8))
    rng = np.random.default_rng(seed)
    params = HashParams.xor_linear(2 * m, rng)
    x, y = KeyString.random(m, rng), KeyString.random(m, rng)
    assert combine(hash_key(x, params), hash_key(y, params)) == hash_key(x ^ y, params)


def test_xor_linear_injective_for_short_keys():
    params = HashParams.xor_linear(8, np.random.default_rng(3), digest_bits=64)
    digests = {hash_key(KeyString.from_int(v, 8), params).value for v in range(256)}
    assert len(digests) == 256


def test_modexp_worked_values():
    params = HashParams.modexp(2, 11, 4)
    h3, h2, h5 = (hash_exponent(v, params) for v in (3, 2, 5))
    assert (h3.value, h2.value, h5.value) == (8, 4, 10)
    assert combine(h3, h2) == h5
    assert hash_key(KeyString.from_int(5, 4), params) == h5


@given(st.integers(0, 2**20), st.integers(0, 2**20))
def test_modexp_homomorphism_over_integer_addition(a, b):
    params = HashParams.modexp(3, 1_000_003, 24)
    assert combine(hash_exponent(a, params), hash_exponent(b, params)) == hash_exponent(a + b, params)


def test_modexp_matches_xor_only_without_carries():
    params = HashParams.modexp(3, 2**61 - 1, 6)
    a, b = KeyString.parse("10,00,01"), KeyString.parse("01,00,10")
    assert combine(hash_key(a, params), hash_key(b, params)) == hash_key(a ^ b, params)
    c = KeyString.parse("10,00,01")
    assert combine(hash_key(a, params), hash_key(c, params)) != hash_key(a ^ c, params)


def test_modexp_validation():
    with pytest.raises(HashError):
        HashParams.modexp(2, 12, 4)
    with pytest.raises(HashError):
        HashParams.modexp(11, 11, 4)
    with pytest.raises(HashError):
        hash_exponent(3, HashParams.xor_linear(4, np.random.default_rng(0)))


def test_digest_string_round_trip():
    d = Digest(HashMode.XOR_LINEAR, 0xABC, 16)
    assert d.to_str() == "xl16:0abc"
    assert Digest.parse(d.to_str()) == d
    e = Digest(HashMode.MODEXP, 10, 11)
    assert Digest.parse(e.to_str(), modulus=11) == e
    with pytest.raises(HashError):
        Digest.parse("me:a")
    with pytest.raises(HashError):
        combine(d, e)


def test_registry_lifecycle():
    rng = np.random.default_rng(0)
    params = HashParams.xor_linear(4, rng)
    ks = {j: KeyString.random(2, rng) for j in (1, 2, 3)}
    reg = Registry(params)
    for j, k in ks.items():
        reg.register(j, hash_key(k, params))
    with pytest.raises(HashError):
        reg.register(1, hash_key(ks[1], params))
    reg.freeze()
    with pytest.raises(HashError):
        reg.register(4, params.identity())
    with pytest.raises(HashError):
        reg[9]
    with pytest.raises(TypeError):
        reg.entries[5] = params.identity()
    assert 2 in reg and 4 not in reg
    assert verify_chain(reg, [1, 3], hash_key(ks[1] ^ ks[3], params))
    assert not verify_chain(reg, [1, 2], hash_key(ks[1] ^ ks[3], params))
    assert verify_equal(hash_key(ks[2], params), ks[2], params)
    assert verify_chain(reg, [], params.identity())

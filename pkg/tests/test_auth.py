import pytest

from qkd_mitm.auth import (
    TWO_STEP,
    WEGMAN_CARTER,
    AuthenticatedMessage,
    AuthScheme,
    KeyPool,
    analytic_bounds,
    make_tag,
    tag_bits,
    verify_bits,
    verify_tag,
)
from qkd_mitm.bits import BitString
from qkd_mitm.errors import ConfigError, KeyExhausted, LengthMismatch
from qkd_mitm.hash_core import PublicHashDescriptor, SpaceParams, Su2Key, eval_su2


def two_step(m=8, r=4, n=2, f=None):
    space = SpaceParams(m, r, n)
    return AuthScheme(TWO_STEP, space, f or PublicHashDescriptor.xor_fold(m, r))


def test_key_cost():
    space = SpaceParams(16, 8, 4)
    assert AuthScheme(TWO_STEP, space, PublicHashDescriptor.xor_fold(16, 8)).key_cost == 15
    assert AuthScheme(WEGMAN_CARTER, space).key_cost == 23


def test_zero_intermediate_tag_is_offset():
    s = two_step()
    key = BitString.from_str("10110") + BitString.from_str("01")
    # 1111 xor 1111 folds to zero
    assert s.tag_with(key, BitString.from_str("11111111")) == BitString.from_str("01")


def test_tag_is_composition_of_primitives():
    f = PublicHashDescriptor.xor_fold(6, 3)
    s = AuthScheme(TWO_STEP, SpaceParams(6, 3, 2), f)
    key = BitString.from_str("1011") + BitString.from_str("10")
    msg = BitString.from_str("110101")
    expected = eval_su2(Su2Key(key[:4], key[4:]), f(msg))
    assert s.tag_with(key, msg) == expected


def test_round_trip_and_tamper():
    s = two_step()
    alice, bob = KeyPool(5), KeyPool(5)
    for v in range(256):
        am = make_tag(s, alice, BitString(v, 8))
        assert verify_tag(s, bob, am)
    am = make_tag(s, alice, BitString(3, 8))
    for i in range(2):
        pool = KeyPool(5)
        pool.draw(alice.consumed - s.key_cost)
        assert not verify_tag(s, pool, AuthenticatedMessage(am.payload, am.tag.flip(i)))


def test_colliding_substitute_accepted():
    s = two_step()
    alice, bob = KeyPool(9), KeyPool(9)
    m_a = BitString.from_str("10100110")
    m_e = BitString.from_str("11000000")
    assert s.f(m_e) == s.f(m_a)
    am = make_tag(s, alice, m_a)
    assert verify_tag(s, bob, AuthenticatedMessage(m_e, am.tag))


def test_wrong_length_message():
    with pytest.raises(LengthMismatch):
        make_tag(two_step(), KeyPool(0), BitString.zeros(7))


def test_pool_is_deterministic_and_finite():
    a, b = KeyPool(1, capacity=10), KeyPool(1, capacity=10)
    assert a.draw(6) + a.draw(4) == b.draw(10)
    with pytest.raises(KeyExhausted):
        a.draw(1)
    assert KeyPool(1).draw(64) != KeyPool(2).draw(64)


def test_verify_bits_chunks():
    s = two_step()
    bits = BitString.from_str("1" * 19)
    tags = tag_bits(s, KeyPool(3), bits)
    assert len(tags) == 3
    assert verify_bits(s, KeyPool(3), bits, tags) == [True] * 3
    assert verify_bits(s, KeyPool(3), bits, tags[:2]) == [False]


def test_scheme_validation():
    with pytest.raises(ConfigError):
        AuthScheme(TWO_STEP, SpaceParams(8, 4, 2))
    with pytest.raises(ConfigError):
        AuthScheme("poly1305", SpaceParams(8, 4, 2))
    with pytest.raises(ConfigError):
        AuthScheme(TWO_STEP, SpaceParams(8, 4, 2), PublicHashDescriptor.xor_fold(8, 3))


def test_bounds():
    s = two_step(8, 4, 4 - 2)
    assert analytic_bounds(two_step(8, 5, 4)).eps2 == 1 / 16
    assert analytic_bounds(s).eps1 == 1 / 16
    assert analytic_bounds(s, ("list", 16)).eps1 == 1.0
    assert analytic_bounds(s, ("list", 16)).eps == 1.0
    assert analytic_bounds(s, ("list", 4)).eps1 == 0.25
    wc = AuthScheme(WEGMAN_CARTER, SpaceParams(8, 4, 2))
    assert analytic_bounds(wc).eps1 == 0.0


def test_fixed_message_bound_uses_rank_for_large_m():
    s = two_step(64, 8, 4)
    assert analytic_bounds(s).eps1 == 2.0 ** -8

import pytest
from hypothesis import given, strategies as st

from qkd_mitm.bits import BitString, read_bitstring
from qkd_mitm.errors import ContractViolation, LengthMismatch

bitstrings = st.integers(0, 200).flatmap(
    lambda n: st.builds(BitString, st.integers(0, (1 << n) - 1), st.just(n)))


def test_bit_zero_is_most_significant():
    b = BitString.from_str("1000")
    assert b[0] == 1 and b.value == 8
    assert BitString.unit(0, 4) == b


def test_order_matches_integer_order():
    assert BitString.from_str("0011") < BitString.from_str("0100")


@given(bitstrings)
def test_serialization_round_trip(b):
    assert BitString.from_bytes(b.to_bytes()) == b
    value, used = read_bitstring(b.to_bytes() + b"\x00", 0)
    assert value == b and used == len(b.to_bytes())


def test_trailing_bytes_rejected():
    with pytest.raises(ContractViolation):
        BitString.from_bytes(BitString.from_str("101").to_bytes() + b"\x00")


def test_chunks_zero_pad_last():
    parts = BitString.from_str("1011011").chunks(3)
    assert [str(p) for p in parts] == ["101", "101", "100"]


def test_empty_string_is_one_chunk():
    assert BitString().chunks(4) == [BitString.zeros(4)]


def test_xor_requires_equal_lengths():
    with pytest.raises(LengthMismatch):
        BitString.zeros(3) ^ BitString.zeros(4)


@given(bitstrings, bitstrings)
def test_concat_and_slice(a, b):
    joined = a + b
    assert joined[:len(a)] == a and joined[len(a):] == b


def test_value_must_fit():
    with pytest.raises(ContractViolation):
        BitString(4, 2)

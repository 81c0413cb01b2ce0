"""Immutable fixed-length bit strings.

Bit 0 is the first (most significant) bit.  Ordering between equal-length
strings is lexicographic, which coincides with the order of the underlying
unsigned integers.
"""
from __future__ import annotations

import struct
from typing import Iterable, Iterator, Sequence

from .errors import ContractViolation, LengthMismatch

__all__ = ["BitString", "read_bitstring"]


class BitString:
    __slots__ = ("_v", "_n")

    def __init__(self, value: int = 0, length: int = 0):
        if length < 0:
            raise ContractViolation(f"negative length {length}")
        if value < 0 or value >> length:
            raise ContractViolation(f"value {value} does not fit in {length} bits")
        self._v = value
        self._n = length

    # constructors

    @classmethod
    def zeros(cls, length: int) -> BitString:
        return cls(0, length)

    @classmethod
    def ones(cls, length: int) -> BitString:
        return cls((1 << length) - 1, length)

    @classmethod
    def from_str(cls, text: str) -> BitString:
        text = text.replace(" ", "").replace("_", "")
        if text and set(text) - {"0", "1"}:
            raise ContractViolation(f"not a bit string: {text!r}")
        return cls(int(text, 2) if text else 0, len(text))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> BitString:
        v = 0
        n = 0
        for b in bits:
            v = (v << 1) | (1 if b else 0)
            n += 1
        return cls(v, n)

    @classmethod
    def unit(cls, position: int, length: int) -> BitString:
        """Single 1 at ``position`` (0 = first bit)."""
        if not 0 <= position < length:
            raise ContractViolation(f"position {position} outside 0..{length - 1}")
        return cls(1 << (length - 1 - position), length)

    # basic protocol

    def __len__(self) -> int:
        return self._n

    @property
    def value(self) -> int:
        return self._v

    def __int__(self) -> int:
        return self._v

    def __iter__(self) -> Iterator[int]:
        n = self._n
        v = self._v
        for i in range(n):
            yield (v >> (n - 1 - i)) & 1

    def __getitem__(self, key):
        if isinstance(key, slice):
            start, stop, step = key.indices(self._n)
            if step == 1:
                width = max(0, stop - start)
                return BitString((self._v >> (self._n - start - width)) & ((1 << width) - 1), width)
            return BitString.from_bits(self[i] for i in range(start, stop, step))
        i = key + self._n if key < 0 else key
        if not 0 <= i < self._n:
            raise IndexError(key)
        return (self._v >> (self._n - 1 - i)) & 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._n == other._n and self._v == other._v

    def __hash__(self) -> int:
        return hash((self._v, self._n))

    def __lt__(self, other: BitString) -> bool:
        self._check(other)
        return self._v < other._v

    def __le__(self, other: BitString) -> bool:
        self._check(other)
        return self._v <= other._v

    def __repr__(self) -> str:
        if self._n <= 64:
            return f"BitString('{self}')"
        return f"BitString(<{self._n} bits> {self.hex()})"

    def __str__(self) -> str:
        return format(self._v, f"0{self._n}b") if self._n else ""

    # arithmetic

    def _check(self, other: BitString) -> None:
        if self._n != other._n:
            raise LengthMismatch(f"length {self._n} != {other._n}")

    def __xor__(self, other: BitString) -> BitString:
        self._check(other)
        return BitString(self._v ^ other._v, self._n)

    def __and__(self, other: BitString) -> BitString:
        self._check(other)
        return BitString(self._v & other._v, self._n)

    def __or__(self, other: BitString) -> BitString:
        self._check(other)
        return BitString(self._v | other._v, self._n)

    def __invert__(self) -> BitString:
        return BitString(self._v ^ ((1 << self._n) - 1), self._n)

    def __add__(self, other: BitString) -> BitString:
        """Concatenation."""
        return BitString((self._v << other._n) | other._v, self._n + other._n)

    def weight(self) -> int:
        return self._v.bit_count()

    def parity(self) -> int:
        return self.weight() & 1

    def hamming(self, other: BitString) -> int:
        return (self ^ other).weight()

    def flip(self, position: int) -> BitString:
        return self ^ BitString.unit(position, self._n)

    def positions(self) -> list[int]:
        """Indices of the 1 bits, ascending."""
        n = self._n
        v = self._v
        return [i for i in range(n) if (v >> (n - 1 - i)) & 1]

    def pad_to(self, length: int) -> BitString:
        """Append zero bits up to ``length``."""
        if length < self._n:
            raise ContractViolation(f"cannot pad {self._n} bits down to {length}")
        return BitString(self._v << (length - self._n), length)

    def chunks(self, size: int) -> list[BitString]:
        """Split into ``ceil(len/size)`` pieces, the last zero-padded."""
        if size <= 0:
            raise ContractViolation("chunk size must be positive")
        count = max(1, -(-self._n // size))
        padded = self.pad_to(count * size)
        return [padded[i * size:(i + 1) * size] for i in range(count)]

    def select(self, positions: Sequence[int]) -> BitString:
        return BitString.from_bits(self[i] for i in positions)

    def to_list(self) -> list[int]:
        return list(self)

    # serialization

    def hex(self) -> str:
        return self.payload_bytes().hex()

    def payload_bytes(self) -> bytes:
        """MSB-first bytes, zero-padded at the end to a whole byte."""
        nbytes = -(-self._n // 8)
        return (self._v << (nbytes * 8 - self._n)).to_bytes(nbytes, "big")

    def to_bytes(self) -> bytes:
        """32-bit big-endian bit count followed by the padded payload."""
        return struct.pack(">I", self._n) + self.payload_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> BitString:
        value, used = read_bitstring(data, 0)
        if used != len(data):
            raise ContractViolation(f"{len(data) - used} trailing bytes")
        return value


def read_bitstring(data: bytes, offset: int) -> tuple[BitString, int]:
    """Decode one length-prefixed bit string starting at ``offset``.

    Returns the value and the offset just past it.
    """
    if offset + 4 > len(data):
        raise ContractViolation("truncated bit-string length prefix")
    (n,) = struct.unpack_from(">I", data, offset)
    offset += 4
    nbytes = -(-n // 8)
    if offset + nbytes > len(data):
        raise ContractViolation("truncated bit-string payload")
    raw = int.from_bytes(data[offset:offset + nbytes], "big")
    pad = nbytes * 8 - n
    if raw & ((1 << pad) - 1):
        raise ContractViolation("nonzero padding bits")
    return BitString(raw >> pad, n), offset + nbytes

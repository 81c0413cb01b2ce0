"""Message authentication: the two-step h_k(f(m)) primitive and a Wegman-Carter baseline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .bits import BitString
from .errors import ConfigError, ContractViolation, KeyExhausted, LengthMismatch
from .hash_core import (
    MAX_PREIMAGE_M,
    PublicHashDescriptor,
    SpaceParams,
    Su2Key,
    count_preimages,
    fiber_size,
    toeplitz_multiply,
)

__all__ = [
    "AuthScheme",
    "KeyPool",
    "AuthenticatedMessage",
    "Bounds",
    "make_tag",
    "verify_tag",
    "tag_bits",
    "verify_bits",
    "analytic_bounds",
]

TWO_STEP = "two_step"
WEGMAN_CARTER = "wegman_carter"

# spawn key for the shared-secret stream inside a session's seed sequence
KEYPOOL_STREAM = 0x6B6579


@dataclass(frozen=True)
class AuthScheme:
    kind: str
    space: SpaceParams
    f: Optional[PublicHashDescriptor] = None

    def __post_init__(self):
        if self.kind == TWO_STEP:
            if self.f is None:
                raise ConfigError("two_step scheme needs a public hash f")
            if (self.f.m_bits, self.f.r_bits) != (self.space.m_bits, self.space.r_bits):
                raise ConfigError(
                    f"public hash is {self.f.m_bits}->{self.f.r_bits} bits but the space "
                    f"is m={self.space.m_bits}, r={self.space.r_bits}")
        elif self.kind != WEGMAN_CARTER:
            raise ConfigError(f"unknown authentication scheme {self.kind!r}")

    @property
    def hashed_bits(self) -> int:
        """Width of the input to the secret Toeplitz hash."""
        return self.space.r_bits if self.kind == TWO_STEP else self.space.m_bits

    @property
    def key_cost(self) -> int:
        n = self.space.n_bits
        return (n + self.hashed_bits - 1) + n

    def tag_with(self, key_bits: BitString, msg: BitString) -> BitString:
        if len(msg) != self.space.m_bits:
            raise LengthMismatch(f"message must be {self.space.m_bits} bits, got {len(msg)}")
        n = self.space.n_bits
        a_len = n + self.hashed_bits - 1
        key = Su2Key(key_bits[:a_len], key_bits[a_len:])
        z = self.f(msg) if self.kind == TWO_STEP else msg
        return toeplitz_multiply(key.a, z, n) ^ key.b


class KeyPool:
    """Pre-shared secret bits, drawn strictly in order and never reused.

    Alice and Bob each hold a pool built from the same seed; as long as they
    draw the same amounts in the same order their segments coincide.
    """

    _BLOCK = 4096

    def __init__(self, seed: int, capacity: int = 1 << 20):
        self.seed = seed
        self.capacity = capacity
        self.consumed = 0
        self._rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, KEYPOOL_STREAM])))
        self._buf = 0
        self._buf_len = 0

    @property
    def remaining(self) -> int:
        return self.capacity - self.consumed

    def draw(self, nbits: int) -> BitString:
        if nbits < 0:
            raise ContractViolation("cannot draw a negative number of bits")
        if nbits > self.remaining:
            raise KeyExhausted(
                f"need {nbits} secret bits, {self.remaining} of {self.capacity} left")
        while self._buf_len < nbits:
            block = self._rng.integers(0, 2, size=self._BLOCK, dtype=np.uint8)
            self._buf = (self._buf << self._BLOCK) | int.from_bytes(np.packbits(block).tobytes(), "big")
            self._buf_len += self._BLOCK
        rest = self._buf_len - nbits
        out = self._buf >> rest
        self._buf &= (1 << rest) - 1
        self._buf_len = rest
        self.consumed += nbits
        return BitString(out, nbits)


@dataclass(frozen=True)
class AuthenticatedMessage:
    payload: BitString
    tag: BitString


def make_tag(scheme: AuthScheme, pool: KeyPool, msg: BitString) -> AuthenticatedMessage:
    if len(msg) != scheme.space.m_bits:
        raise LengthMismatch(f"message must be {scheme.space.m_bits} bits, got {len(msg)}")
    key = pool.draw(scheme.key_cost)
    return AuthenticatedMessage(msg, scheme.tag_with(key, msg))


def verify_tag(scheme: AuthScheme, pool: KeyPool, am: AuthenticatedMessage) -> bool:
    """Accept (True) iff the recomputed tag equals the received one."""
    key = pool.draw(scheme.key_cost)
    if len(am.tag) != scheme.space.n_bits:
        return False
    return scheme.tag_with(key, am.payload) == am.tag


def tag_bits(scheme: AuthScheme, pool: KeyPool, bits: BitString) -> list[BitString]:
    """Tag an arbitrary-length encoding as ceil(len/m) zero-padded chunks."""
    return [make_tag(scheme, pool, c).tag for c in bits.chunks(scheme.space.m_bits)]


def verify_bits(scheme: AuthScheme, pool: KeyPool, bits: BitString,
                tags: Sequence[BitString]) -> list[bool]:
    """Per-chunk verdicts; stops drawing key at the first rejection.

    A tag count that differs from the chunk count yields a single False.
    """
    chunks = bits.chunks(scheme.space.m_bits)
    if len(chunks) != len(tags):
        return [False]
    verdicts = []
    for chunk, tag in zip(chunks, tags):
        ok = verify_tag(scheme, pool, AuthenticatedMessage(chunk, tag))
        verdicts.append(ok)
        if not ok:
            break
    return verdicts


@dataclass(frozen=True)
class Bounds:
    eps1: float
    eps2: float

    @property
    def eps(self) -> float:
        return min(1.0, self.eps1 + self.eps2)


EveModel = Union[str, tuple]


def analytic_bounds(scheme: AuthScheme, eve_model: EveModel = "fixed_message",
                    m_e: Optional[BitString] = None, override: bool = False) -> Bounds:
    """Per-tag forgery bounds eps1 (public-hash collision) and eps2 = 2^-n.

    ``eve_model`` is ``"fixed_message"`` or ``("list", L)`` with L distinct
    images.  The fixed-message eps1 is the exact fraction of uniform honest
    messages colliding with ``m_e`` (all-zero by default) under f.
    """
    space = scheme.space
    space.guard(override)
    eps2 = 2.0 ** -space.n_bits
    if scheme.kind == WEGMAN_CARTER:
        return Bounds(0.0, eps2)
    f = scheme.f
    if eve_model == "fixed_message":
        if m_e is None:
            m_e = BitString.zeros(space.m_bits)
        if space.m_bits <= MAX_PREIMAGE_M or override:
            count = count_preimages(f, f(m_e), override=override)
        else:
            count = fiber_size(f)
        return Bounds(count / 2.0 ** space.m_bits, eps2)
    if isinstance(eve_model, tuple) and eve_model[0] == "list":
        size = int(eve_model[1])
        if not 0 <= size <= 1 << space.r_bits:
            raise ContractViolation(f"list size {size} outside 0..2^r")
        return Bounds(size / 2.0 ** space.r_bits, eps2)
    raise ContractViolation(f"unknown adversary model {eve_model!r}")

"""Public compression hashes, the affine-Toeplitz SU2 family, and collision search.

Both public hash kinds are GF(2)-linear maps from ``m_bits`` to ``r_bits``.
Collision search exploits that: a Hamming-ball query becomes a subset-xor
problem over the images of the unit vectors, which is solved exactly with a
small dynamic program instead of enumerating the ball.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Optional, Sequence

import numpy as np

from .bits import BitString
from .errors import ContractViolation, GuardRefused, LengthMismatch

__all__ = [
    "SpaceParams",
    "PublicHashDescriptor",
    "Su2Family",
    "Su2Key",
    "VerificationReport",
    "toeplitz_multiply",
    "eval_public_hash",
    "eval_su2",
    "verify_su2_family",
    "count_preimages",
    "fiber_size",
    "find_collision_in_ball",
    "ball_coverage",
    "collision_order",
]

MAX_GUARD_R = 12
MAX_GUARD_N = 6
MAX_PREIMAGE_M = 20
# keys x ordered input pairs examined by verify_su2_family
MAX_SU2_WORK = 1 << 28


@dataclass(frozen=True)
class SpaceParams:
    """Message length ``m_bits`` > intermediate ``r_bits`` > tag length ``n_bits``."""

    m_bits: int
    r_bits: int
    n_bits: int

    def __post_init__(self):
        if not 0 < self.n_bits < self.r_bits < self.m_bits:
            raise ContractViolation(
                f"need 0 < n < r < m, got m={self.m_bits} r={self.r_bits} n={self.n_bits}")

    def guard(self, override: bool = False) -> None:
        if override:
            return
        if self.r_bits > MAX_GUARD_R or self.n_bits > MAX_GUARD_N:
            raise GuardRefused(
                f"exhaustive operation refused for r={self.r_bits}, n={self.n_bits} "
                f"(limits r<={MAX_GUARD_R}, n<={MAX_GUARD_N})")


def _check_len(bits: BitString, expected: int, what: str) -> None:
    if len(bits) != expected:
        raise LengthMismatch(f"{what}: expected {expected} bits, got {len(bits)}")


@dataclass(frozen=True)
class PublicHashDescriptor:
    """The publicly known compression hash f: m_bits -> r_bits.

    ``kind`` is ``"xor_fold"`` (XOR of the zero-padded r-bit blocks) or
    ``"crc_poly"`` (remainder modulo ``poly``, a degree-r polynomial written
    as r+1 bits, highest coefficient first).
    """

    kind: str
    m_bits: int
    r_bits: int
    poly: Optional[BitString] = None

    def __post_init__(self):
        if not 0 < self.r_bits < self.m_bits:
            raise ContractViolation(f"need 0 < r < m, got r={self.r_bits} m={self.m_bits}")
        if self.kind == "xor_fold":
            if self.poly is not None:
                raise ContractViolation("xor_fold takes no polynomial")
        elif self.kind == "crc_poly":
            p = self.poly
            if p is None or len(p) != self.r_bits + 1 or p[0] != 1 or p[-1] != 1:
                raise ContractViolation(
                    "crc_poly needs an (r+1)-bit polynomial with leading and trailing 1")
        else:
            raise ContractViolation(f"unknown public hash kind {self.kind!r}")

    @classmethod
    def xor_fold(cls, m_bits: int, r_bits: int) -> PublicHashDescriptor:
        return cls("xor_fold", m_bits, r_bits)

    @classmethod
    def crc(cls, m_bits: int, poly: str | BitString) -> PublicHashDescriptor:
        if isinstance(poly, str):
            poly = BitString.from_str(poly)
        return cls("crc_poly", m_bits, len(poly) - 1, poly)

    def describe(self) -> str:
        if self.kind == "crc_poly":
            return f"crc_poly:{self.poly}"
        return "xor_fold"

    def _eval_int(self, v: int) -> int:
        m, r = self.m_bits, self.r_bits
        if self.kind == "xor_fold":
            blocks = -(-m // r)
            v <<= blocks * r - m
            mask = (1 << r) - 1
            out = 0
            for _ in range(blocks):
                out ^= v & mask
                v >>= r
            return out
        p = self.poly.value
        for bit in range(m - 1, r - 1, -1):
            if (v >> bit) & 1:
                v ^= p << (bit - r)
        return v

    def __call__(self, msg: BitString) -> BitString:
        _check_len(msg, self.m_bits, "public hash input")
        return BitString(self._eval_int(msg.value), self.r_bits)

    def eval_array(self, values: np.ndarray) -> np.ndarray:
        """Vectorised evaluation over an array of message integers (m_bits <= 62)."""
        m, r = self.m_bits, self.r_bits
        if m > 62:
            raise ContractViolation("eval_array supports m_bits <= 62")
        v = np.asarray(values, dtype=np.int64)
        if self.kind == "xor_fold":
            blocks = -(-m // r)
            v = v << (blocks * r - m)
            mask = (1 << r) - 1
            out = np.zeros_like(v)
            for _ in range(blocks):
                out ^= v & mask
                v = v >> r
            return out
        p = self.poly.value
        v = v.copy()
        for bit in range(m - 1, r - 1, -1):
            hit = (v >> bit) & 1
            v ^= hit * (p << (bit - r))
        return v

    @property
    def columns(self) -> tuple[int, ...]:
        """f of each unit vector, position 0 first, as r-bit integers."""
        return _columns(self)


@lru_cache(maxsize=None)
def _columns(f: PublicHashDescriptor) -> tuple[int, ...]:
    m = f.m_bits
    return tuple(f._eval_int(1 << (m - 1 - i)) for i in range(m))


def eval_public_hash(f: PublicHashDescriptor, msg: BitString) -> BitString:
    return f(msg)


def toeplitz_multiply(seed: BitString, x: BitString, rows: int) -> BitString:
    """Multiply the rows x len(x) Toeplitz matrix defined by ``seed`` with ``x``.

    Entry (i, j) is ``seed[rows - 1 + j - i]``: the first row is
    ``seed[rows-1:]`` and the first column, top to bottom, is
    ``seed[rows-1], seed[rows-2], ..., seed[0]``.
    """
    cols = len(x)
    if rows < 0:
        raise ContractViolation("negative row count")
    _check_len(seed, max(0, rows + cols - 1), "toeplitz seed")
    a = seed.value
    z = x.value
    mask = (1 << cols) - 1
    out = 0
    for i in range(rows):
        out = (out << 1) | (((a >> i) & mask & z).bit_count() & 1)
    return BitString(out, rows)


def toeplitz_matrix(seed: BitString, rows: int, cols: int) -> np.ndarray:
    """Dense 0/1 matrix for the same convention as :func:`toeplitz_multiply`."""
    s = np.array(seed.to_list(), dtype=np.uint8)
    i = np.arange(rows)[:, None]
    j = np.arange(cols)[None, :]
    return s[rows - 1 + j - i]


@dataclass(frozen=True)
class Su2Key:
    a: BitString
    b: BitString


@dataclass(frozen=True)
class Su2Family:
    """Affine Toeplitz hashes h_(a,b)(z) = T_a z xor b from r_bits to n_bits."""

    r_bits: int
    n_bits: int

    @property
    def a_bits(self) -> int:
        return self.n_bits + self.r_bits - 1

    @property
    def key_bits(self) -> int:
        return self.a_bits + self.n_bits

    @property
    def size(self) -> int:
        return 1 << self.key_bits

    def key_from_bits(self, bits: BitString) -> Su2Key:
        _check_len(bits, self.key_bits, "SU2 key material")
        return Su2Key(bits[:self.a_bits], bits[self.a_bits:])

    def keys(self) -> Iterator[Su2Key]:
        for v in range(self.size):
            yield self.key_from_bits(BitString(v, self.key_bits))

    def __call__(self, key: Su2Key, z: BitString) -> BitString:
        return eval_su2(key, z, self)


def eval_su2(key: Su2Key, z: BitString, family: Optional[Su2Family] = None) -> BitString:
    n = len(key.b)
    if family is not None:
        _check_len(key.a, family.a_bits, "SU2 key a")
        _check_len(key.b, family.n_bits, "SU2 key b")
        _check_len(z, family.r_bits, "SU2 input")
    elif len(key.a) != n + len(z) - 1:
        raise LengthMismatch(
            f"key a has {len(key.a)} bits, expected {n + len(z) - 1} for n={n}, r={len(z)}")
    return toeplitz_multiply(key.a, z, n) ^ key.b


@dataclass
class VerificationReport:
    r_bits: int
    n_bits: int
    family_size: int
    expected_count: int
    min_count: int
    max_count: int
    cells_checked: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = self.min_count == self.max_count == self.expected_count


def verify_su2_family(params: SpaceParams, override: bool = False) -> VerificationReport:
    """Exhaustively count, for every z1 != z2 and (t1, t2), the keys mapping z1->t1, z2->t2."""
    params.guard(override)
    fam = Su2Family(params.r_bits, params.n_bits)
    r, n = fam.r_bits, fam.n_bits
    pairs = (1 << r) * ((1 << r) - 1)
    if not override and fam.size * pairs > MAX_SU2_WORK:
        raise GuardRefused(f"SU2 verification for r={r}, n={n} needs {fam.size * pairs} steps")
    zs = [BitString(v, r) for v in range(1 << r)]
    # linear part for every a, every z
    lin = np.array([[toeplitz_multiply(BitString(a, fam.a_bits), z, n).value for z in zs]
                    for a in range(1 << fam.a_bits)], dtype=np.int64)
    bs = np.arange(1 << n, dtype=np.int64)
    out = (lin[:, None, :] ^ bs[None, :, None]).reshape(-1, 1 << r)
    cells = 1 << (2 * n)
    lo, hi = None, 0
    for z1 in range(1 << r):
        first = out[:, z1] << n
        for z2 in range(1 << r):
            if z1 == z2:
                continue
            counts = np.bincount(first | out[:, z2], minlength=cells)
            cmin, cmax = int(counts.min()), int(counts.max())
            lo = cmin if lo is None else min(lo, cmin)
            hi = max(hi, cmax)
    return VerificationReport(r, n, fam.size, fam.size >> (2 * n), lo, hi, pairs * cells)


def count_preimages(f: PublicHashDescriptor, z: BitString, override: bool = False) -> int:
    """Exact number of messages hashing to ``z``, by scanning all 2^m messages."""
    _check_len(z, f.r_bits, "public hash output")
    if f.m_bits > MAX_PREIMAGE_M and not override:
        raise GuardRefused(f"preimage scan over 2^{f.m_bits} messages refused")
    total = 0
    step = 1 << 20
    for start in range(0, 1 << f.m_bits, step):
        block = np.arange(start, min(start + step, 1 << f.m_bits), dtype=np.int64)
        total += int(np.count_nonzero(f.eval_array(block) == z.value))
    return total


def gf2_rank(vectors: Sequence[int]) -> int:
    basis: dict[int, int] = {}
    for v in vectors:
        while v:
            top = v.bit_length() - 1
            if top not in basis:
                basis[top] = v
                break
            v ^= basis[top]
    return len(basis)


def fiber_size(f: PublicHashDescriptor) -> int:
    """Size of every nonempty fiber of the linear map f, from its rank."""
    return 1 << (f.m_bits - gf2_rank(f.columns))


# ---------------------------------------------------------------------------
# Hamming-ball collision search


@lru_cache(maxsize=256)
def _reach_table(cols: tuple[int, ...], allowed: tuple[bool, ...], r_bits: int,
                 radius: int) -> np.ndarray:
    """reach[i, k, d]: some k allowed positions among i.. have images xoring to d."""
    m = len(cols)
    size = 1 << r_bits
    idx = np.arange(size)
    reach = np.zeros((m + 1, radius + 1, size), dtype=bool)
    reach[m, 0, 0] = True
    for i in range(m - 1, -1, -1):
        reach[i] = reach[i + 1]
        if allowed[i] and radius:
            reach[i, 1:] |= reach[i + 1, :-1][:, idx ^ cols[i]]
    return reach


def _effective_radius(max_radius: int, allowed: tuple[bool, ...], r_bits: int) -> int:
    # any reachable xor needs at most rank <= r_bits columns
    return max(0, min(max_radius, sum(allowed), r_bits))


def _allowed_tuple(m: int, allowed: Optional[Sequence[bool] | BitString]) -> tuple[bool, ...]:
    if allowed is None:
        return (True,) * m
    if isinstance(allowed, BitString):
        _check_len(allowed, m, "allowed-position mask")
        return tuple(bool(b) for b in allowed)
    if len(allowed) != m:
        raise LengthMismatch(f"allowed-position mask has {len(allowed)} entries, need {m}")
    return tuple(bool(b) for b in allowed)


def _walk(reach: np.ndarray, cols: Sequence[int], allowed: Sequence[bool], center: int,
          m: int, k: int, delta: int) -> int:
    """Lexicographically smallest center^e with |e| = k, allowed support, f(e) = delta."""
    out = 0
    for i in range(m):
        c = (center >> (m - 1 - i)) & 1
        flip_ok = allowed[i] and k >= 1 and reach[i + 1, k - 1, delta ^ cols[i]]
        stay_ok = reach[i + 1, k, delta]
        if c == 0:
            flip = not stay_ok
        else:
            flip = bool(flip_ok)
        if flip:
            k -= 1
            delta ^= cols[i]
            out = (out << 1) | (c ^ 1)
        else:
            out = (out << 1) | c
    assert k == 0 and delta == 0
    return out


def find_collision_in_ball(f: PublicHashDescriptor, center: BitString, target_z: BitString,
                           max_radius: int,
                           allowed: Optional[Sequence[bool] | BitString] = None
                           ) -> Optional[BitString]:
    """Lexicographically first message closest to ``center`` with f(msg) = target_z.

    Radii are tried in ascending order up to ``max_radius``; within a radius the
    smallest message (as a bit string) wins.  ``allowed`` optionally restricts
    which positions may be flipped.  Returns None when the ball holds no
    witness.
    """
    m, r = f.m_bits, f.r_bits
    _check_len(center, m, "search center")
    _check_len(target_z, r, "target hash value")
    if not 0 <= max_radius <= m:
        raise ContractViolation(f"max_radius must be in 0..{m}, got {max_radius}")
    allow = _allowed_tuple(m, allowed)
    delta = f(center).value ^ target_z.value
    if delta == 0:
        return center
    radius = _effective_radius(max_radius, allow, r)
    reach = _reach_table(f.columns, allow, r, radius)
    for k in range(1, radius + 1):
        if reach[0, k, delta]:
            return BitString(_walk(reach, f.columns, allow, center.value, m, k, delta), m)
    return None


def ball_coverage(f: PublicHashDescriptor, max_radius: int,
                  allowed: Optional[Sequence[bool] | BitString] = None) -> int:
    """How many z values lie within ``max_radius`` flips of any fixed center."""
    allow = _allowed_tuple(f.m_bits, allowed)
    radius = _effective_radius(max_radius, allow, f.r_bits)
    reach = _reach_table(f.columns, allow, f.r_bits, radius)
    return int(np.count_nonzero(reach[0].any(axis=0)))


def collision_order(f: PublicHashDescriptor, center: BitString, max_radius: int,
                    allowed: Optional[Sequence[bool] | BitString] = None
                    ) -> list[tuple[int, BitString, BitString]]:
    """Every z reachable from ``center`` in discovery order of an expanding ball.

    Returns ``(distance, witness, z)`` triples sorted by distance and then by
    witness, i.e. the order in which a radius-by-radius lexicographic scan
    would first meet each z.  ``allowed`` restricts the flippable positions.
    """
    m, r = f.m_bits, f.r_bits
    _check_len(center, m, "search center")
    allow = _allowed_tuple(m, allowed)
    radius = _effective_radius(max_radius, allow, r)
    reach = _reach_table(f.columns, allow, r, radius)
    fc = f(center).value
    found = []
    for delta in range(1 << r):
        for k in range(radius + 1):
            if reach[0, k, delta]:
                w = _walk(reach, f.columns, allow, center.value, m, k, delta)
                found.append((k, w, fc ^ delta))
                break
    found.sort(key=lambda t: (t[0], t[1]))
    return [(k, BitString(w, m), BitString(z, r)) for k, w, z in found]

"""BB84 post-processing between Alice and Bob, with every classical message
routed through an optional adversary.

Phase order (direction):  timestamp (B->A), settings (A->B), ec_maps (A->B),
ec_confirm (B->A), pa_map (A->B), and optionally secret_hash_check (A->B).

The quantum channel is classical bookkeeping: per-position bases and bits.
"""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .auth import TWO_STEP, WEGMAN_CARTER, AuthScheme, KeyPool, tag_bits, verify_bits
from .bits import BitString, read_bitstring
from .errors import ConfigError, ContractViolation, LengthMismatch, Unimplemented
from .hash_core import PublicHashDescriptor, SpaceParams, toeplitz_multiply

__all__ = [
    "Phase",
    "Direction",
    "ProtocolConfig",
    "QuantumRecord",
    "PhaseMessage",
    "EcMaps",
    "EcResult",
    "Wire",
    "Transcript",
    "TranscriptEntry",
    "SessionOutcome",
    "sift",
    "sift_positions",
    "ec_build",
    "ec_apply",
    "decode_block",
    "privacy_amplify",
    "secret_hash_value",
    "secret_hash_check",
    "run_session",
]

AUTH_MODES = ("immediate", "postponed")
KNOWN_COUNTERMEASURES = ("secret_hash_check", "otp_reconciliation")

# spawn keys for the per-session random streams
_STREAM_ALICE, _STREAM_BOB, _STREAM_CHANNEL, _STREAM_EC, _STREAM_PA = 1, 2, 3, 4, 5


class Phase(enum.IntEnum):
    TIMESTAMP = 0
    SETTINGS = 1
    EC_MAPS = 2
    EC_CONFIRM = 3
    PA_MAP = 4
    SECRET_HASH_CHECK = 5

    @property
    def label(self) -> str:
        return _PHASE_LABELS[self]


_PHASE_LABELS = {
    Phase.TIMESTAMP: "timestamp_end_quantum",
    Phase.SETTINGS: "settings",
    Phase.EC_MAPS: "ec_maps",
    Phase.EC_CONFIRM: "ec_confirm",
    Phase.PA_MAP: "pa_map",
    Phase.SECRET_HASH_CHECK: "secret_hash_check",
}


class Direction(str, enum.Enum):
    A_TO_B = "A->B"
    B_TO_A = "B->A"


PHASE_DIRECTION = {
    Phase.TIMESTAMP: Direction.B_TO_A,
    Phase.SETTINGS: Direction.A_TO_B,
    Phase.EC_MAPS: Direction.A_TO_B,
    Phase.EC_CONFIRM: Direction.B_TO_A,
    Phase.PA_MAP: Direction.A_TO_B,
    Phase.SECRET_HASH_CHECK: Direction.A_TO_B,
}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProtocolConfig:
    num_qubits: int = 256
    space: SpaceParams = SpaceParams(64, 8, 4)
    auth_mode: str = "immediate"
    scheme: Optional[AuthScheme] = None
    channel_error_rate: float = 0.0
    qber_abort_threshold: float = 0.11
    ec_block_bits: int = 32
    sifted_key_bits: int = 64
    pa_security_margin_bits: Optional[int] = None
    countermeasures: frozenset = frozenset()
    seed: int = 0
    key_pool_bits: int = 1 << 20

    def __post_init__(self):
        if self.scheme is None:
            f = PublicHashDescriptor.xor_fold(self.space.m_bits, self.space.r_bits)
            object.__setattr__(self, "scheme", AuthScheme(TWO_STEP, self.space, f))
        if self.pa_security_margin_bits is None:
            object.__setattr__(self, "pa_security_margin_bits", 2 * self.space.n_bits)
        object.__setattr__(self, "countermeasures", frozenset(self.countermeasures))
        self.validate()

    def validate(self) -> None:
        if self.num_qubits < 1:
            raise ConfigError("num_qubits must be positive")
        if self.auth_mode not in AUTH_MODES:
            raise ConfigError(f"auth_mode must be one of {AUTH_MODES}, got {self.auth_mode!r}")
        if self.scheme.space != self.space:
            raise ConfigError("scheme space differs from config space")
        if not 0.0 <= self.channel_error_rate <= 0.5:
            raise ConfigError("channel_error_rate must be in [0, 0.5]")
        if not 0.0 < self.qber_abort_threshold <= 0.25:
            raise ConfigError("qber_abort_threshold must be in (0, 0.25]")
        if self.ec_block_bits < 2:
            raise ConfigError("ec_block_bits must be at least 2")
        if self.sifted_key_bits < 1:
            raise ConfigError("sifted_key_bits must be positive")
        if self.pa_security_margin_bits < 0:
            raise ConfigError("pa_security_margin_bits must be nonnegative")
        unknown = set(self.countermeasures) - set(KNOWN_COUNTERMEASURES)
        if unknown:
            raise ConfigError(f"unknown countermeasures {sorted(unknown)}")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def with_seed(self, seed: int) -> ProtocolConfig:
        return replace(self, seed=seed)

    @classmethod
    def build(cls, *, m_bits: int = 64, r_bits: int = 8, n_bits: int = 4,
              scheme: str = TWO_STEP, public_hash: str = "xor_fold", **kwargs) -> ProtocolConfig:
        """Convenience constructor from flat parameters.

        ``public_hash`` is ``"xor_fold"`` or ``"crc_poly:<bits>"``.
        """
        space = SpaceParams(m_bits, r_bits, n_bits)
        f = parse_public_hash(public_hash, m_bits, r_bits)
        return cls(space=space, scheme=AuthScheme(scheme, space, f if scheme == TWO_STEP else None),
                   **kwargs)


def parse_public_hash(text: str, m_bits: int, r_bits: int) -> PublicHashDescriptor:
    if text == "xor_fold":
        return PublicHashDescriptor.xor_fold(m_bits, r_bits)
    if text.startswith("crc_poly:"):
        f = PublicHashDescriptor.crc(m_bits, text.split(":", 1)[1])
        if f.r_bits != r_bits:
            raise ConfigError(f"polynomial has degree {f.r_bits}, space needs r={r_bits}")
        return f
    raise ConfigError(f"unknown public hash {text!r}")


# ---------------------------------------------------------------------------
# wire format

_SCHEMA: dict[Phase, tuple[tuple[str, str], ...]] = {
    Phase.TIMESTAMP: (("timestamp", "u32"), ("bases", "bits")),
    Phase.SETTINGS: (("bases", "bits"),),
    Phase.EC_MAPS: (("perm_seed", "u32"), ("key_bits", "u32"), ("block_bits", "u32"),
                    ("blocks", "pairs")),
    Phase.EC_CONFIRM: (("matched", "bits"), ("corrected", "u32")),
    Phase.PA_MAP: (("out_len", "u32"), ("seed", "bits")),
    Phase.SECRET_HASH_CHECK: (("check", "bits"),),
}


@dataclass(frozen=True)
class PhaseMessage:
    """One classical protocol message.

    ``fields`` maps the phase's field names to values: ``u32`` fields are
    ints, ``bits`` fields are BitStrings, and the ec_maps ``blocks`` field is
    a tuple of (matrix, syndrome) BitString pairs, matrices row-major.
    """

    phase: Phase
    fields: dict

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        names = [n for n, _ in _SCHEMA[self.phase]]
        if sorted(self.fields) != sorted(names):
            raise ContractViolation(
                f"{self.phase.label} needs fields {names}, got {sorted(self.fields)}")

    def __getitem__(self, name: str) -> Any:
        return self.fields[name]

    def __hash__(self):
        return hash(self.encode())

    def __eq__(self, other):
        if not isinstance(other, PhaseMessage):
            return NotImplemented
        return self.encode() == other.encode()

    def encode(self) -> bytes:
        out = [bytes([int(self.phase)])]
        for name, kind in _SCHEMA[self.phase]:
            value = self.fields[name]
            if kind == "u32":
                if not 0 <= value < 1 << 32:
                    raise ContractViolation(f"{name}={value} does not fit in 32 bits")
                out.append(struct.pack(">I", value))
            elif kind == "bits":
                out.append(value.to_bytes())
            else:
                out.append(struct.pack(">I", len(value)))
                for matrix, syndrome in value:
                    out.append(matrix.to_bytes())
                    out.append(syndrome.to_bytes())
        return b"".join(out)

    def to_bits(self) -> BitString:
        data = self.encode()
        return BitString(int.from_bytes(data, "big"), 8 * len(data))

    @classmethod
    def decode(cls, data: bytes) -> PhaseMessage:
        if not data:
            raise ContractViolation("empty phase message")
        if data[0] > max(Phase):
            raise ContractViolation(f"unknown phase id {data[0]}")
        phase = Phase(data[0])
        pos = 1
        fields: dict[str, Any] = {}
        for name, kind in _SCHEMA[phase]:
            if kind == "u32":
                if pos + 4 > len(data):
                    raise ContractViolation(f"truncated field {name}")
                (fields[name],) = struct.unpack_from(">I", data, pos)
                pos += 4
            elif kind == "bits":
                fields[name], pos = read_bitstring(data, pos)
            else:
                if pos + 4 > len(data):
                    raise ContractViolation(f"truncated field {name}")
                (count,) = struct.unpack_from(">I", data, pos)
                pos += 4
                pairs = []
                for _ in range(count):
                    matrix, pos = read_bitstring(data, pos)
                    syndrome, pos = read_bitstring(data, pos)
                    pairs.append((matrix, syndrome))
                fields[name] = tuple(pairs)
        if pos != len(data):
            raise ContractViolation(f"{len(data) - pos} trailing bytes after {phase.label}")
        return cls(phase, fields)

    @classmethod
    def from_bits(cls, bits: BitString) -> PhaseMessage:
        if len(bits) % 8:
            raise ContractViolation("encoding is not a whole number of bytes")
        return cls.decode(bits.payload_bytes())

    def field_spans(self) -> dict[str, list[tuple[int, int]]]:
        """Bit offsets ``(start, length)`` of each field's value inside :meth:`to_bits`.

        Length prefixes are excluded.  For ``blocks`` the list holds, per
        block, the matrix span followed by the syndrome span; they are also
        exposed as ``matrix[j]`` and ``syndrome[j]``.
        """
        spans: dict[str, list[tuple[int, int]]] = {}
        pos = 8
        for name, kind in _SCHEMA[self.phase]:
            value = self.fields[name]
            if kind == "u32":
                spans[name] = [(pos, 32)]
                pos += 32
            elif kind == "bits":
                spans[name] = [(pos + 32, len(value))]
                pos += 32 + 8 * (-(-len(value) // 8))
            else:
                pos += 32
                spans[name] = []
                for j, (matrix, syndrome) in enumerate(value):
                    for label, bits in (("matrix", matrix), ("syndrome", syndrome)):
                        span = (pos + 32, len(bits))
                        spans[name].append(span)
                        spans[f"{label}[{j}]"] = [span]
                        pos += 32 + 8 * (-(-len(bits) // 8))
        return spans

    # constructors

    @classmethod
    def timestamp(cls, timestamp: int, bases: BitString) -> PhaseMessage:
        return cls(Phase.TIMESTAMP, {"timestamp": timestamp, "bases": bases})

    @classmethod
    def settings(cls, bases: BitString) -> PhaseMessage:
        return cls(Phase.SETTINGS, {"bases": bases})

    @classmethod
    def ec_confirm(cls, matched: BitString, corrected: int) -> PhaseMessage:
        return cls(Phase.EC_CONFIRM, {"matched": matched, "corrected": corrected})

    @classmethod
    def pa_map(cls, out_len: int, seed: BitString) -> PhaseMessage:
        return cls(Phase.PA_MAP, {"out_len": out_len, "seed": seed})

    @classmethod
    def secret_hash_check(cls, check: BitString) -> PhaseMessage:
        return cls(Phase.SECRET_HASH_CHECK, {"check": check})


def spans_mask(total_bits: int, spans: Iterable[tuple[int, int]]) -> BitString:
    """Bit mask of length ``total_bits`` with ones over the given spans."""
    v = 0
    for start, length in spans:
        v |= ((1 << length) - 1) << (total_bits - start - length)
    return BitString(v, total_bits)


@dataclass(frozen=True)
class Wire:
    """A message in transit: content plus its tags (None when postponed).

    ``message`` is None for the terminal tag record of postponed mode.
    """

    direction: Direction
    message: Optional[PhaseMessage]
    tags: Optional[tuple[BitString, ...]]

    @property
    def bits(self) -> BitString:
        return self.message.to_bits() if self.message is not None else BitString()

    @property
    def phase_label(self) -> str:
        return self.message.phase.label if self.message is not None else "terminal_tag"


@dataclass(frozen=True)
class TranscriptEntry:
    direction: Direction
    message: Optional[PhaseMessage]
    tags: Optional[tuple[BitString, ...]]

    def record(self) -> dict:
        tag_hex = None
        if self.tags is not None:
            joined = BitString()
            for t in self.tags:
                joined = joined + t
            tag_hex = joined.hex()
        return {
            "direction": self.direction.value,
            "phase": self.message.phase.label if self.message else "terminal_tag",
            "payload": self.message.encode().hex() if self.message else "",
            "tag": tag_hex,
        }


@dataclass
class Transcript:
    """Messages as delivered to their receivers, in order."""

    entries: list[TranscriptEntry] = field(default_factory=list)

    def append(self, wire: Wire) -> None:
        self.entries.append(TranscriptEntry(wire.direction, wire.message, wire.tags))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def to_lines(self) -> str:
        return "".join(json.dumps(e.record(), sort_keys=True) + "\n" for e in self.entries)


# ---------------------------------------------------------------------------
# quantum layer and sifting


@dataclass(frozen=True)
class QuantumRecord:
    alice_bits: BitString
    alice_bases: BitString
    bob_bases: BitString
    bob_bits: BitString


def _bits(arr: np.ndarray) -> BitString:
    arr = np.asarray(arr, dtype=np.uint8)
    if arr.size == 0:
        return BitString()
    return BitString(int.from_bytes(np.packbits(arr).tobytes(), "big") >> ((-arr.size) % 8), int(arr.size))


def _array(bits: BitString) -> np.ndarray:
    return np.array(bits.to_list(), dtype=np.uint8)


def sift_positions(own_bases: BitString, peer_bases: BitString) -> list[int]:
    if len(own_bases) != len(peer_bases):
        raise LengthMismatch(f"basis strings differ in length: {len(own_bases)} vs {len(peer_bases)}")
    return (~(own_bases ^ peer_bases)).positions()


def sift(own_bases: BitString, peer_bases: BitString, own_bits: BitString) -> BitString:
    """Keep ``own_bits`` where the two basis strings agree, in order."""
    if len(own_bits) != len(own_bases):
        raise LengthMismatch(f"{len(own_bits)} bits for {len(own_bases)} bases")
    return own_bits.select(sift_positions(own_bases, peer_bases))


# ---------------------------------------------------------------------------
# one-way error correction


@dataclass(frozen=True)
class EcMaps:
    perm_seed: int
    key_bits: int
    block_bits: int
    matrices: tuple[np.ndarray, ...]
    syndromes: tuple[BitString, ...]

    @property
    def leaked_bits(self) -> int:
        return sum(len(s) for s in self.syndromes)

    def permutation(self) -> np.ndarray:
        return block_permutation(self.perm_seed, self.key_bits)

    def block_positions(self) -> list[np.ndarray]:
        perm = self.permutation()
        b = self.block_bits
        return [perm[i:i + b] for i in range(0, self.key_bits, b)]

    def to_message(self) -> PhaseMessage:
        blocks = tuple((_bits(h.reshape(-1)), s) for h, s in zip(self.matrices, self.syndromes))
        return PhaseMessage(Phase.EC_MAPS, {"perm_seed": self.perm_seed, "key_bits": self.key_bits,
                                            "block_bits": self.block_bits, "blocks": blocks})

    @classmethod
    def from_message(cls, msg: PhaseMessage) -> EcMaps:
        """Rebuild maps from a message; raises ContractViolation when malformed."""
        if msg.phase != Phase.EC_MAPS:
            raise ContractViolation(f"expected ec_maps, got {msg.phase.label}")
        key_bits, b = msg["key_bits"], msg["block_bits"]
        if b < 1 or key_bits < 1:
            raise ContractViolation("ec_maps with empty key or blocks")
        sizes = [min(b, key_bits - i) for i in range(0, key_bits, b)]
        if len(sizes) != len(msg["blocks"]):
            raise ContractViolation("ec_maps block count does not match key length")
        matrices, syndromes = [], []
        for size, (matrix, syndrome) in zip(sizes, msg["blocks"]):
            rows = -(-size // 2)
            if len(matrix) != rows * size or len(syndrome) != rows:
                raise ContractViolation("ec_maps block has wrong dimensions")
            matrices.append(_array(matrix).reshape(rows, size))
            syndromes.append(syndrome)
        return cls(msg["perm_seed"], key_bits, b, tuple(matrices), tuple(syndromes))


@dataclass(frozen=True)
class EcResult:
    corrected_key: BitString
    matched: BitString
    corrected_bits: int

    @property
    def failed_blocks(self) -> int:
        return len(self.matched) - self.matched.weight()


def block_permutation(perm_seed: int, length: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(perm_seed)).permutation(length)


def _syndrome(matrix: np.ndarray, block: np.ndarray) -> BitString:
    return _bits((matrix.astype(np.int64) @ block.astype(np.int64)) % 2)


def _block_values(key: BitString, maps: EcMaps) -> list[np.ndarray]:
    arr = _array(key)
    return [arr[pos] for pos in maps.block_positions()]


def ec_build(alice_key: BitString, block_bits: int, rng: np.random.Generator) -> EcMaps:
    """Seeded public permutation, then one random ceil(b/2) x b parity check per block."""
    if len(alice_key) == 0:
        raise ContractViolation("cannot build error-correction maps for an empty key")
    perm_seed = int(rng.integers(0, 1 << 32))
    maps = EcMaps(perm_seed, len(alice_key), block_bits, (), ())
    matrices, syndromes = [], []
    for block in _block_values(alice_key, maps):
        size = block.size
        matrix = rng.integers(0, 2, size=(-(-size // 2), size), dtype=np.uint8)
        matrices.append(matrix)
        syndromes.append(_syndrome(matrix, block))
    return replace(maps, matrices=tuple(matrices), syndromes=tuple(syndromes))


def _column_ints(matrix: np.ndarray) -> list[int]:
    rows = matrix.shape[0]
    weights = 1 << np.arange(rows - 1, -1, -1, dtype=np.int64)
    return [int(v) for v in weights @ matrix.astype(np.int64)]


def decode_block(matrix: np.ndarray, diff: int, max_weight: int = 2) -> Optional[list[int]]:
    """Positions of the minimum-weight error pattern e with H e = diff, or None.

    Among patterns of equal weight the smallest as a bit string wins, i.e.
    the one whose ones sit furthest to the right.
    """
    if diff == 0:
        return []
    cols = _column_ints(matrix)
    size = len(cols)
    if max_weight >= 1:
        for p in range(size - 1, -1, -1):
            if cols[p] == diff:
                return [p]
    if max_weight >= 2:
        last: dict[int, int] = {}
        for q in range(size):
            last[cols[q]] = q
        for p in range(size - 2, -1, -1):
            need = diff ^ cols[p]
            q = last.get(need, -1)
            if q > p:
                return [p, q]
            # a later duplicate column may still sit right of p
            if q != -1 and q <= p:
                for q2 in range(size - 1, p, -1):
                    if cols[q2] == need:
                        return [p, q2]
    return None


def ec_apply(bob_key: BitString, maps: EcMaps, max_weight: int = 2) -> EcResult:
    if len(bob_key) != maps.key_bits:
        raise LengthMismatch(f"maps cover {maps.key_bits} bits, key has {len(bob_key)}")
    arr = _array(bob_key)
    matched = []
    corrected = 0
    for pos, matrix, syndrome in zip(maps.block_positions(), maps.matrices, maps.syndromes):
        block = arr[pos]
        diff = _syndrome(matrix, block).value ^ syndrome.value
        fix = decode_block(matrix, diff, max_weight)
        if fix is None:
            matched.append(0)
            continue
        matched.append(1)
        corrected += len(fix)
        for p in fix:
            arr[pos[p]] ^= 1
    return EcResult(_bits(arr), BitString.from_bits(matched), corrected)


def reconciled_key(key: BitString, maps: EcMaps, matched: BitString) -> BitString:
    """Concatenate the blocks flagged in ``matched``, in permuted order."""
    if len(matched) != len(maps.syndromes):
        raise LengthMismatch("block mask length differs from block count")
    arr = _array(key)
    keep = [arr[pos] for pos, ok in zip(maps.block_positions(), matched) if ok]
    return _bits(np.concatenate(keep)) if keep else BitString()


def kept_leakage(maps: EcMaps, matched: BitString) -> int:
    return sum(len(s) for s, ok in zip(maps.syndromes, matched) if ok)


def qber_estimate(maps: EcMaps, matched: BitString, corrected: int) -> float:
    """Corrected bits plus half of every failed block, over the key length."""
    failed = sum(-(-h.shape[1] // 2) for h, ok in zip(maps.matrices, matched) if not ok)
    return (corrected + failed) / maps.key_bits


# ---------------------------------------------------------------------------
# privacy amplification and the secret-key check


def privacy_amplify(key: BitString, pa_seed: BitString, out_len: int) -> BitString:
    if not 0 <= out_len <= len(key):
        raise ContractViolation(f"out_len {out_len} outside 0..{len(key)}")
    return toeplitz_multiply(pa_seed, key, out_len)


def secret_hash_value(key: BitString, key_material: BitString, n_bits: int) -> BitString:
    """Affine Toeplitz hash of the whole reconciled key, keyed from the secret pool."""
    a_len = n_bits + len(key) - 1
    if len(key_material) != a_len + n_bits:
        raise LengthMismatch(f"need {a_len + n_bits} key bits, got {len(key_material)}")
    return toeplitz_multiply(key_material[:a_len], key, n_bits) ^ key_material[a_len:]


def secret_hash_check(alice_key: BitString, bob_key: BitString, alice_pool: KeyPool,
                      bob_pool: KeyPool, n_bits: int) -> bool:
    """True (Pass) iff both sides' check values agree."""
    va = secret_hash_value(alice_key, alice_pool.draw(2 * n_bits + len(alice_key) - 1), n_bits)
    vb = secret_hash_value(bob_key, bob_pool.draw(2 * n_bits + len(bob_key) - 1), n_bits)
    return va == vb


# ---------------------------------------------------------------------------
# session


COMPLETED = "completed"
ABORTED_AUTH = "aborted_auth"
ABORTED_QBER = "aborted_qber"
ABORTED_CHECK = "aborted_check"


@dataclass
class SessionOutcome:
    status: str = COMPLETED
    alice_final_key: Optional[BitString] = None
    bob_final_key: Optional[BitString] = None
    eve_key_with_alice: Optional[BitString] = None
    eve_key_with_bob: Optional[BitString] = None
    # per tag: chunks whose content differed from what the sender tagged
    forgeries_attempted: int = 0
    forgeries_accepted: int = 0
    # per message: times the adversary tried to get its own content accepted
    eve_opportunities: int = 0
    eve_successes: int = 0
    sifting_forged: bool = False
    qber_estimate: Optional[float] = None
    abort_phase: Optional[str] = None
    alice_key_consumed: int = 0
    bob_key_consumed: int = 0
    tags_sent: int = 0
    leaked_bits: int = 0
    reconciled_bits: int = 0
    out_len: int = 0
    check_detected: bool = False
    transcript: Transcript = field(default_factory=Transcript)
    forgery_log: list = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    @property
    def keys_agree(self) -> bool:
        return self.completed and self.alice_final_key == self.bob_final_key

    @property
    def eve_agrees_with_alice(self) -> bool:
        return self.completed and self.eve_key_with_alice is not None and \
            self.eve_key_with_alice == self.alice_final_key

    @property
    def eve_agrees_with_bob(self) -> bool:
        return self.completed and self.eve_key_with_bob is not None and \
            self.eve_key_with_bob == self.bob_final_key

    @property
    def mitm_completed(self) -> bool:
        return self.eve_agrees_with_alice and self.eve_agrees_with_bob


class _Abort(Exception):
    def __init__(self, status: str, phase: str):
        super().__init__(status, phase)
        self.status = status
        self.phase = phase


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


class _Session:
    def __init__(self, config: ProtocolConfig, interceptor):
        self.cfg = config
        self.scheme = config.scheme
        self.eve = interceptor
        self.out = SessionOutcome()
        self.alice_pool = KeyPool(config.seed, config.key_pool_bits)
        self.bob_pool = KeyPool(config.seed, config.key_pool_bits)
        self.postponed = config.auth_mode == "postponed"
        # postponed mode: encodings sent/received per direction
        self.sent = {Direction.A_TO_B: BitString(), Direction.B_TO_A: BitString()}
        self.received = {Direction.A_TO_B: BitString(), Direction.B_TO_A: BitString()}
        self.pending_successes = 0
        self.last_claimed = False

    def pools(self, direction: Direction) -> tuple[KeyPool, KeyPool]:
        if direction == Direction.A_TO_B:
            return self.alice_pool, self.bob_pool
        return self.bob_pool, self.alice_pool

    def _deliver_tags(self, direction, sent_bits, tags, got_bits, got_tags, phase_label):
        """Verify tags on the receiver side and account for forged chunks."""
        _, recv_pool = self.pools(direction)
        verdicts = verify_bits(self.scheme, recv_pool, got_bits, got_tags)
        m = self.scheme.space.m_bits
        sent_chunks = sent_bits.chunks(m)
        got_chunks = got_bits.chunks(m)
        for i, ok in enumerate(verdicts):
            differs = (len(sent_chunks) != len(got_chunks) or sent_chunks[i] != got_chunks[i]
                       or tags[i] != got_tags[i]) if i < len(got_chunks) else True
            if differs:
                self.out.forgeries_attempted += 1
                self.out.forgeries_accepted += int(ok)
        return all(verdicts)

    def send(self, message: PhaseMessage) -> PhaseMessage:
        direction = PHASE_DIRECTION[message.phase]
        send_pool, _ = self.pools(direction)
        bits = message.to_bits()
        if self.postponed:
            tags = None
            self.sent[direction] = self.sent[direction] + bits
        else:
            tags = tuple(tag_bits(self.scheme, send_pool, bits))
            self.out.tags_sent += len(tags)
        wire = Wire(direction, message, tags)
        got = self.eve.intercept(wire) if self.eve is not None else wire
        self.out.transcript.append(got)
        claimed = bool(getattr(got, "eve_content", False))
        self.last_claimed = claimed
        if getattr(got, "opportunity", False):
            self.out.eve_opportunities += 1
        if got.message is None:
            raise _Abort(ABORTED_AUTH, message.phase.label)
        if self.postponed:
            self.received[direction] = self.received[direction] + got.bits
        else:
            ok = self._deliver_tags(direction, bits, tags, got.bits, got.tags or (),
                                    message.phase.label)
            if not ok:
                raise _Abort(ABORTED_AUTH, message.phase.label)
        if claimed:
            # postponed content only counts once the terminal tags pass
            if self.postponed:
                self.pending_successes += 1
            else:
                self.out.eve_successes += 1
        return got.message

    def finish_postponed(self) -> None:
        for direction in (Direction.A_TO_B, Direction.B_TO_A):
            send_pool, _ = self.pools(direction)
            bits = self.sent[direction]
            tags = tuple(tag_bits(self.scheme, send_pool, bits))
            self.out.tags_sent += len(tags)
            wire = Wire(direction, None, tags)
            got = self.eve.intercept(wire) if self.eve is not None else wire
            self.out.transcript.append(got)
            if not self._deliver_tags(direction, bits, tags, self.received[direction],
                                      got.tags or (), "terminal_tag"):
                raise _Abort(ABORTED_AUTH, "terminal_tag")
        self.out.eve_successes += self.pending_successes

    def run(self) -> SessionOutcome:
        cfg = self.cfg
        if "otp_reconciliation" in cfg.countermeasures:
            raise Unimplemented("one-time-pad reconciliation has no specified procedure")
        try:
            self._run()
        except _Abort as stop:
            self.out.status = stop.status
            self.out.abort_phase = stop.phase
            self.out.alice_final_key = self.out.bob_final_key = None
        self.out.alice_key_consumed = self.alice_pool.consumed
        self.out.bob_key_consumed = self.bob_pool.consumed
        if self.eve is not None:
            self.out.forgery_log = list(self.eve.forgery_log)
            if self.out.status == COMPLETED:
                self.out.eve_key_with_alice, self.out.eve_key_with_bob = self.eve.final_keys()
        return self.out

    def _run(self) -> None:
        cfg = self.cfg
        N = cfg.num_qubits
        rng_a = _rng(cfg.seed, _STREAM_ALICE)
        rng_b = _rng(cfg.seed, _STREAM_BOB)
        rng_ch = _rng(cfg.seed, _STREAM_CHANNEL)
        alice_bits = rng_a.integers(0, 2, N, dtype=np.uint8)
        alice_bases = rng_a.integers(0, 2, N, dtype=np.uint8)
        bob_bases = rng_b.integers(0, 2, N, dtype=np.uint8)
        coins = rng_ch.integers(0, 2, N, dtype=np.uint8)
        noise = (rng_ch.random(N) < cfg.channel_error_rate).astype(np.uint8)

        src_bases, src_bits = alice_bases, alice_bits
        if self.eve is not None:
            resent = self.eve.on_quantum(_bits(alice_bits), _bits(alice_bases))
            if resent is not None:
                src_bases, src_bits = _array(resent[0]), _array(resent[1])
        bob_bits = np.where(bob_bases == src_bases, src_bits, coins) ^ noise
        rec = QuantumRecord(_bits(alice_bits), _bits(alice_bases), _bits(bob_bases), _bits(bob_bits))
        self.record = rec

        # Bob closes the quantum frame and announces his measurement bases
        ts = self.send(PhaseMessage.timestamp(cfg.seed & 0xFFFFFFFF, rec.bob_bases))
        alice_peer_bases = ts["bases"]
        got_settings = self.send(PhaseMessage.settings(rec.alice_bases))
        self.out.sifting_forged = self.last_claimed
        if len(alice_peer_bases) != N or len(got_settings["bases"]) != N:
            raise _Abort(ABORTED_CHECK, Phase.SETTINGS.label)
        S = cfg.sifted_key_bits
        alice_sifted = sift(rec.alice_bases, alice_peer_bases, rec.alice_bits)
        bob_sifted = sift(rec.bob_bases, got_settings["bases"], rec.bob_bits)
        if len(alice_sifted) < S or len(bob_sifted) < S:
            raise _Abort(ABORTED_QBER, Phase.SETTINGS.label)
        alice_sifted, bob_sifted = alice_sifted[:S], bob_sifted[:S]

        maps = ec_build(alice_sifted, cfg.ec_block_bits, _rng(cfg.seed, _STREAM_EC))
        got_maps = self.send(maps.to_message())
        try:
            bob_maps = EcMaps.from_message(got_maps)
            if bob_maps.key_bits != len(bob_sifted):
                raise ContractViolation("maps do not cover Bob's key")
        except ContractViolation:
            raise _Abort(ABORTED_CHECK, Phase.EC_MAPS.label)
        bob_ec = ec_apply(bob_sifted, bob_maps)

        got_confirm = self.send(PhaseMessage.ec_confirm(bob_ec.matched, bob_ec.corrected_bits))
        matched_a = got_confirm["matched"]
        if len(matched_a) != len(maps.syndromes):
            raise _Abort(ABORTED_CHECK, Phase.EC_CONFIRM.label)
        qber = qber_estimate(maps, matched_a, got_confirm["corrected"])
        self.out.qber_estimate = qber
        if qber > cfg.qber_abort_threshold:
            raise _Abort(ABORTED_QBER, Phase.EC_CONFIRM.label)
        alice_rec = reconciled_key(alice_sifted, maps, matched_a)
        bob_rec = reconciled_key(bob_ec.corrected_key, bob_maps, bob_ec.matched)
        leaked = kept_leakage(maps, matched_a)
        out_len = len(alice_rec) - leaked - cfg.pa_security_margin_bits
        self.out.leaked_bits = leaked
        self.out.reconciled_bits = len(alice_rec)
        if out_len <= 0:
            raise _Abort(ABORTED_QBER, Phase.PA_MAP.label)
        self.out.out_len = out_len

        rng_pa = _rng(cfg.seed, _STREAM_PA)
        pa_seed = _bits(rng_pa.integers(0, 2, out_len + len(alice_rec) - 1, dtype=np.uint8))
        got_pa = self.send(PhaseMessage.pa_map(out_len, pa_seed))
        bob_out = got_pa["out_len"]
        if bob_out > len(bob_rec) or len(got_pa["seed"]) != bob_out + len(bob_rec) - 1:
            raise _Abort(ABORTED_CHECK, Phase.PA_MAP.label)
        alice_final = privacy_amplify(alice_rec, pa_seed, out_len)
        bob_final = privacy_amplify(bob_rec, got_pa["seed"], bob_out)

        if "secret_hash_check" in cfg.countermeasures:
            n = cfg.space.n_bits
            # both sides take the check key before the message's tag keys
            material = self.alice_pool.draw(2 * n + len(alice_rec) - 1)
            bob_material = self.bob_pool.draw(2 * n + len(bob_rec) - 1)
            got_check = self.send(PhaseMessage.secret_hash_check(
                secret_hash_value(alice_rec, material, n)))
            if len(bob_rec) != len(alice_rec) or \
                    secret_hash_value(bob_rec, bob_material, n) != got_check["check"]:
                self.out.check_detected = True
                raise _Abort(ABORTED_CHECK, Phase.SECRET_HASH_CHECK.label)

        if self.postponed:
            self.finish_postponed()
        self.out.alice_final_key = alice_final
        self.out.bob_final_key = bob_final


def run_session(config: ProtocolConfig, adversary=None) -> SessionOutcome:
    """Run one full session.  ``adversary`` is an AdversaryStrategy, an
    interceptor object, or None for an undisturbed channel.
    """
    interceptor = adversary
    if adversary is not None and not hasattr(adversary, "intercept"):
        from .adversary import orchestrate
        interceptor = orchestrate(config, adversary)
    return _Session(config, interceptor).run()

"""Eve: tag guessing, collision forging on the settings phase, and the full
man-in-the-middle that keeps separate keys with Alice and with Bob.

Every forged message except in ``guess_tag`` mode travels with the tags
Alice or Bob computed for the intercepted original.  Under the two-step
scheme those tags verify whenever each m-bit chunk of the forgery has the
same public hash as the corresponding original chunk.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .auth import TWO_STEP
from .bits import BitString
from .errors import ConfigError, ContractViolation
from .hash_core import PublicHashDescriptor, collision_order, find_collision_in_ball
from .protocol import (
    Direction,
    EcMaps,
    EcResult,
    Phase,
    PhaseMessage,
    ProtocolConfig,
    Wire,
    _array,
    _bits,
    _column_ints,
    _syndrome,
    decode_block,
    ec_apply,
    privacy_amplify,
    qber_estimate,
    reconciled_key,
    sift_positions,
    spans_mask,
)

__all__ = [
    "AdversaryStrategy",
    "CollisionList",
    "ForgeryRecord",
    "MitmState",
    "Eve",
    "build_list",
    "intercept_resend",
    "forge_stream",
    "forge_settings",
    "forge_ec",
    "forge_pa",
    "erasure_decode",
    "orchestrate",
]

KINDS = ("absent", "guess_tag", "fixed_message", "ball_search", "list", "full_mitm")
SEARCH_MODES = ("ball_search", "list", "full_list")
EVE_STREAM = 0x657665


@dataclass(frozen=True)
class AdversaryStrategy:
    """What Eve does.

    ``max_radius`` applies to ``ball_search`` and ``list_size`` to ``list``,
    both for the settings-only kinds and as the full MITM's ``search_mode``.
    """

    kind: str = "absent"
    search_mode: str = "full_list"
    max_radius: int = 4
    list_size: int = 0
    seed: int = 0
    eve_bases: str = "random"
    allow_key_edits: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown adversary kind {self.kind!r}")
        if self.search_mode not in SEARCH_MODES:
            raise ConfigError(f"unknown search mode {self.search_mode!r}")
        if self.max_radius < 0:
            raise ConfigError("max_radius must be nonnegative")
        if self.list_size < 0:
            raise ConfigError("list size L must be nonnegative")
        if self.eve_bases not in ("random", "zeros"):
            raise ConfigError("eve_bases must be 'random' or 'zeros'")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> AdversaryStrategy:
        """Parse ``absent``, ``guess_tag``, ``fixed_message``, ``ball_search:R``,
        ``list:L``, ``full_mitm:full_list``, ``full_mitm:ball_search:R`` or
        ``full_mitm:list:L``."""
        parts = text.strip().split(":")
        kind = parts[0]
        try:
            if kind in ("absent", "guess_tag", "fixed_message") and len(parts) == 1:
                return cls(kind, seed=seed)
            if kind == "ball_search" and len(parts) <= 2:
                return cls(kind, max_radius=int(parts[1]) if len(parts) == 2 else 4, seed=seed)
            if kind == "list" and len(parts) == 2:
                return cls(kind, list_size=int(parts[1]), seed=seed)
            if kind == "full_mitm":
                mode = parts[1] if len(parts) > 1 else "full_list"
                if mode == "full_list" and len(parts) <= 2:
                    return cls(kind, "full_list", seed=seed)
                if mode == "ball_search" and len(parts) <= 3:
                    r = int(parts[2]) if len(parts) == 3 else 4
                    return cls(kind, "ball_search", max_radius=r, seed=seed)
                if mode == "list" and len(parts) == 3:
                    return cls(kind, "list", list_size=int(parts[2]), seed=seed)
        except ValueError:
            pass
        raise ConfigError(f"cannot parse adversary {text!r}")

    def describe(self) -> str:
        if self.kind == "ball_search":
            return f"ball_search:{self.max_radius}"
        if self.kind == "list":
            return f"list:{self.list_size}"
        if self.kind == "full_mitm":
            if self.search_mode == "ball_search":
                return f"full_mitm:ball_search:{self.max_radius}"
            if self.search_mode == "list":
                return f"full_mitm:list:{self.list_size}"
            return "full_mitm:full_list"
        return self.kind

    def with_seed(self, seed: int) -> AdversaryStrategy:
        from dataclasses import replace
        return replace(self, seed=seed)

    @property
    def effective_mode(self) -> tuple[str, int]:
        """(search mode, budget) used for collision searches."""
        if self.kind == "fixed_message":
            return "ball_search", 0
        if self.kind == "ball_search":
            return "ball_search", self.max_radius
        if self.kind == "list":
            return "list", self.list_size
        if self.kind == "full_mitm":
            if self.search_mode == "ball_search":
                return "ball_search", self.max_radius
            if self.search_mode == "list":
                return "list", self.list_size
        return "full_list", -1


# ---------------------------------------------------------------------------
# precomputed collision lists


@dataclass(frozen=True)
class CollisionList:
    base: BitString
    entries: dict
    distances: dict
    exhausted: bool = False

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, z: BitString) -> Optional[BitString]:
        return self.entries.get(z)


def build_list(f: PublicHashDescriptor, m_e: BitString, size: int, seed: int = 0,
               allowed=None) -> CollisionList:
    """First ``size`` distinct images met by an expanding Hamming ball around ``m_e``.

    Witnesses are the closest, then lexicographically smallest, messages.
    ``exhausted`` is set when fewer than ``size`` images are reachable.  The
    enumeration is deterministic, so ``seed`` only exists for interface parity.
    """
    if not 0 <= size <= 1 << f.r_bits:
        raise ContractViolation(f"list size {size} outside 0..2^{f.r_bits}")
    entries: dict = {}
    distances: dict = {}
    if size:
        for dist, witness, z in collision_order(f, m_e, f.m_bits, allowed):
            entries[z] = witness
            distances[z] = dist
            if len(entries) == size:
                break
    return CollisionList(m_e, entries, distances, len(entries) < size)


# ---------------------------------------------------------------------------
# intercept-resend


def intercept_resend(alice_bases: BitString, alice_bits: BitString, seed: int = 0,
                     eve_bases: Optional[BitString] = None) -> dict:
    """Eve measures every qubit and resends it in her basis with her result.

    Matching bases reproduce Alice's bit; mismatched ones give a seeded
    coin.  ``eve_bases`` defaults to seeded uniform bases.
    """
    n = len(alice_bases)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, EVE_STREAM, 1])))
    chosen = rng.integers(0, 2, n, dtype=np.uint8)
    coins = rng.integers(0, 2, n, dtype=np.uint8)
    bases = _array(eve_bases) if eve_bases is not None else chosen
    a_bases, a_bits = _array(alice_bases), _array(alice_bits)
    measured = np.where(bases == a_bases, a_bits, coins)
    return {"eve_bases": _bits(bases), "eve_bits": _bits(measured),
            "resent_bases": _bits(bases), "resent_bits": _bits(measured)}


# ---------------------------------------------------------------------------
# collision forging over chunked encodings


Searcher = Callable[[BitString, BitString, BitString], Optional[BitString]]


def _ball_searcher(f: PublicHashDescriptor, radius: int) -> Searcher:
    def search(center, target, allowed):
        return find_collision_in_ball(f, center, target, min(radius, f.m_bits), allowed)
    return search


def _list_searcher(f: PublicHashDescriptor, size: int) -> Searcher:
    cache: dict = {}

    def search(center, target, allowed):
        key = (center, allowed)
        if key not in cache:
            cache[key] = build_list(f, center, size, allowed=allowed)
        return cache[key].lookup(target)
    return search


def make_searcher(f: PublicHashDescriptor, mode: str, budget: int) -> Searcher:
    if mode == "ball_search":
        return _ball_searcher(f, budget)
    if mode == "list":
        return _list_searcher(f, budget)
    return _ball_searcher(f, f.m_bits)


@dataclass(frozen=True)
class StreamForgery:
    bits: BitString
    distance: int


def forge_stream(f: Optional[PublicHashDescriptor], m_bits: int, original: BitString,
                 candidate: BitString, tiers: Sequence[BitString], search: Optional[Searcher]
                 ) -> Optional[StreamForgery]:
    """Edit ``candidate`` so that each m-bit chunk hashes like ``original``'s.

    Chunks identical to the original with no editable position are kept.
    For every other chunk each
    allowed-position mask in ``tiers`` is tried in turn; with no tiers,
    ``search`` is called as ``search(chunk_index, chunk, target)`` and picks
    its own positions.  Returns None
    (give up) when the chunk counts differ or a chunk has no witness.  With
    ``f`` None (full-message hashing) the candidate is returned unedited.
    """
    if len(original.chunks(m_bits)) != len(candidate.chunks(m_bits)):
        return None
    if f is None:
        return StreamForgery(candidate, 0)
    count = len(candidate.chunks(m_bits))
    orig_chunks = original.chunks(m_bits)
    cand_chunks = candidate.chunks(m_bits)
    tier_chunks = [t.pad_to(count * m_bits).chunks(m_bits) for t in tiers]
    out = []
    distance = 0
    for i, (oc, cc) in enumerate(zip(orig_chunks, cand_chunks)):
        # an identical chunk stands unless it is editable, in which case the
        # searcher decides (an empty list accepts nothing)
        if oc == cc and tiers and not any(t[i].weight() for t in tier_chunks):
            out.append(cc)
            continue
        target = f(oc)
        found = None
        if not tiers:
            found = search(i, cc, target)
        for tc in tier_chunks:
            found = search(cc, target, tc[i])
            if found is not None:
                break
        if found is None:
            return None
        distance += found.hamming(cc)
        out.append(found)
    joined = BitString()
    for c in out:
        joined = joined + c
    forged = joined[:len(candidate)]
    if joined[len(candidate):].weight():
        raise ContractViolation("forgery touched chunk padding")
    for oc, fc in zip(orig_chunks, forged.chunks(m_bits)):
        assert f(oc) == f(fc), "forgery does not collide with the intercepted chunk"
    return StreamForgery(forged, distance)


# ---------------------------------------------------------------------------
# erasure decoding for Eve's Alice-side key


def erasure_decode(matrix: np.ndarray, diff: int, unknown: Sequence[int]) -> Optional[list[int]]:
    """Error positions among ``unknown`` whose columns xor to ``diff``.

    Solves the GF(2) system by elimination; free variables are set to 0.
    Returns None when the system has no solution.
    """
    cols = _column_ints(matrix)
    pivots: list[tuple[int, int, int]] = []  # (top bit, vector, combination mask)
    for idx, p in enumerate(unknown):
        v, comb = cols[p], 1 << idx
        for top, pv, pc in pivots:
            if (v >> top) & 1:
                v ^= pv
                comb ^= pc
        if v:
            top = v.bit_length() - 1
            pivots = [(t, pv ^ v, pc ^ comb) if (pv >> top) & 1 else (t, pv, pc)
                      for t, pv, pc in pivots]
            pivots.append((top, v, comb))
    comb = 0
    rest = diff
    for top, pv, pc in pivots:
        if (rest >> top) & 1:
            rest ^= pv
            comb ^= pc
    if rest:
        return None
    return [p for idx, p in enumerate(unknown) if (comb >> idx) & 1]


# ---------------------------------------------------------------------------
# Eve's bookkeeping


@dataclass
class ForgeryRecord:
    phase: str
    direction: str
    original_hex: str
    forged_hex: Optional[str]
    distance: int
    reused_tag_hex: Optional[str]
    induced_noise: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "direction": self.direction,
            "original": self.original_hex,
            "forged": self.forged_hex,
            "distance": self.distance,
            "reused_tag": self.reused_tag_hex,
            "induced_noise": self.induced_noise,
            "note": self.note,
        }


def forgery_log_lines(records: Sequence[ForgeryRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in records)


@dataclass
class MitmState:
    eve_bases: Optional[BitString] = None
    eve_bits: Optional[BitString] = None
    resent_bases: Optional[BitString] = None
    resent_bits: Optional[BitString] = None
    bob_bases: Optional[BitString] = None
    alice_bases: Optional[BitString] = None
    announced_to_alice: Optional[BitString] = None
    announced_to_bob: Optional[BitString] = None
    sifted_with_alice: Optional[BitString] = None
    unknown_with_alice: tuple = ()
    sifted_with_bob: Optional[BitString] = None
    unknown_with_bob: tuple = ()
    maps_alice: Optional[EcMaps] = None
    maps_bob: Optional[EcMaps] = None
    corrected_with_alice: Optional[BitString] = None
    alice_corrections: int = 0
    bob_view: Optional[EcResult] = None
    reconciled_with_alice: Optional[BitString] = None
    reconciled_with_bob: Optional[BitString] = None
    key_with_alice: Optional[BitString] = None
    key_with_bob: Optional[BitString] = None
    buffered: dict = field(default_factory=dict)
    forgery_log: list = field(default_factory=list)


class ForgedWire(Wire):
    """A wire carrying Eve's bookkeeping flags for the session's counters."""

    def __init__(self, direction, message, tags, opportunity=False, eve_content=False):
        object.__setattr__(self, "direction", direction)
        object.__setattr__(self, "message", message)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "opportunity", opportunity)
        object.__setattr__(self, "eve_content", eve_content)


def _bits_tuple_hex(tags) -> Optional[str]:
    if tags is None:
        return None
    joined = BitString()
    for t in tags:
        joined = joined + t
    return joined.hex()


# ---------------------------------------------------------------------------
# phase-level forging routines


def _reduce(v: int, basis: dict[int, int]) -> int:
    """Canonical representative of v modulo the span of ``basis`` (keyed by top bit)."""
    for top in sorted(basis, reverse=True):
        if (v >> top) & 1:
            v ^= basis[top]
    return v


def min_cost_collision(f: PublicHashDescriptor, center: BitString, target: BitString,
                       free: BitString, costly: BitString) -> Optional[BitString]:
    """Collision witness that flips as few ``costly`` positions as possible.

    Flips at ``free`` positions cost nothing.  Working modulo the span of the
    free images, a breadth-first search over the quotient finds the smallest
    set T of costly positions that cancels the hash difference (earlier
    positions are explored first); the witness is then the closest message
    using free | T.
    """
    delta = f(center).value ^ target.value
    if delta == 0:
        return center
    cols = f.columns
    basis: dict[int, int] = {}
    for p in free.positions():
        v = _reduce(cols[p], basis)
        if v:
            basis[v.bit_length() - 1] = v
    need = _reduce(delta, basis)
    chosen: list[int] = []
    if need:
        options: dict[int, int] = {}
        for p in costly.positions():
            v = _reduce(cols[p], basis)
            if v and v not in options:
                options[v] = p
        parent: dict[int, tuple[int, int]] = {0: (0, -1)}
        frontier = [0]
        while frontier and need not in parent:
            nxt = []
            for state in frontier:
                for v, p in options.items():
                    w = _reduce(state ^ v, basis)
                    if w not in parent:
                        parent[w] = (state, p)
                        nxt.append(w)
            frontier = nxt
        if need not in parent:
            return None
        state = need
        while state:
            state, p = parent[state]
            chosen.append(p)
    allowed = free
    for p in chosen:
        allowed = allowed | BitString.unit(p, len(free))
    return find_collision_in_ball(f, center, target, f.m_bits, allowed)


def forge_settings(m_a: PhaseMessage, candidate: PhaseMessage, f, m_bits: int, search: Searcher,
                   silent: Optional[BitString] = None, prefix: BitString = BitString(),
                   max_radius: Optional[int] = None) -> Optional[StreamForgery]:
    """Forge Eve's settings (or timestamp) message against Alice's ``m_a``.

    Only the bases payload may be edited.  When ``silent`` flags the bases
    whose flip costs Eve nothing, each chunk first looks for the collision
    using the fewest other bases, then falls back to ``search`` over all of
    them; ``max_radius`` bounds the cheap pass.  ``prefix`` is the
    already-sent part of the stream in postponed mode.
    """
    span = candidate.field_spans()["bases"]
    total = len(candidate.to_bits())
    payload = spans_mask(total, span)
    if silent is None or f is None:
        return _forge_with_prefix(m_a, candidate, f, m_bits, [payload], search, prefix)
    start, _ = span[0]
    quiet = spans_mask(total, [(start + i, 1) for i in silent.positions()])
    # a flipped chunk index selects the matching quiet and noisy masks
    n_prefix = len(prefix)
    count = -(-(n_prefix + total) // m_bits)
    quiet_c = (BitString.zeros(n_prefix) + quiet).pad_to(count * m_bits).chunks(m_bits)
    loud_c = (BitString.zeros(n_prefix) + (payload & ~quiet)).pad_to(count * m_bits).chunks(m_bits)

    def cheap_first(i, center, target):
        found = min_cost_collision(f, center, target, quiet_c[i], loud_c[i])
        if found is not None and max_radius is not None and found.hamming(center) > max_radius:
            found = None
        if found is None:
            found = search(center, target, quiet_c[i] | loud_c[i])
        return found

    return _forge_with_prefix(m_a, candidate, f, m_bits, [], cheap_first, prefix)


def _forge_with_prefix(original: PhaseMessage, candidate: PhaseMessage, f, m_bits, tiers, search,
                       prefix: BitString, predicate=None) -> Optional[StreamForgery]:
    o_bits, c_bits = prefix + original.to_bits(), prefix + candidate.to_bits()
    full_tiers = [BitString.zeros(len(prefix)) + t for t in tiers]
    result = forge_stream(f, m_bits, o_bits, c_bits, full_tiers, search)
    if result is None:
        return None
    forged = StreamForgery(result.bits[len(prefix):], result.distance)
    if predicate is not None and not predicate(PhaseMessage.from_bits(forged.bits)):
        return None
    return forged


def _matrix_tier(maps_msg: PhaseMessage, maps: EcMaps, reference: BitString) -> BitString:
    """Matrix entries in columns where ``reference`` is 0: flipping them keeps
    every syndrome of ``reference`` unchanged."""
    spans = maps_msg.field_spans()
    total = len(maps_msg.to_bits())
    ref = _array(reference)
    free = []
    for j, pos in enumerate(maps.block_positions()):
        start, _ = spans[f"matrix[{j}]"][0]
        rows, size = maps.matrices[j].shape
        zero_cols = [c for c in range(size) if ref[pos[c]] == 0]
        for row in range(rows):
            free.extend((start + row * size + c, 1) for c in zero_cols)
    return spans_mask(total, free)


def _seed_alternatives(maps_a: EcMaps, f, m_bits: int, prefix: BitString,
                       limit: int = 64) -> list[int]:
    """Permutation seeds whose encoding hashes like Alice's, nearest first.

    For linear f, flipping two seed bits that fall in the same chunk with
    equal images leaves that chunk's hash unchanged.
    """
    seeds = [maps_a.perm_seed]
    if f is None:
        return seeds
    offset = len(prefix) + 8
    cols = f.columns
    bits = [(offset + i) for i in range(32)]
    for a in range(32):
        for b in range(a + 1, 32):
            pa, pb = bits[a], bits[b]
            if pa // m_bits == pb // m_bits and cols[pa % m_bits] == cols[pb % m_bits]:
                seeds.append(maps_a.perm_seed ^ (1 << (31 - a)) ^ (1 << (31 - b)))
                if len(seeds) > limit:
                    return seeds
    return seeds


def _forge_maps(maps_a: EcMaps, ref: BitString, f, m_bits: int, search: Searcher,
                prefix: BitString, perm_seed: Optional[int] = None) -> Optional[StreamForgery]:
    original = prefix + maps_a.to_message().to_bits()
    ref_arr = _array(ref)
    layout = EcMaps(maps_a.perm_seed if perm_seed is None else perm_seed, maps_a.key_bits,
                    maps_a.block_bits, maps_a.matrices, maps_a.syndromes)
    positions = layout.block_positions()
    syn = tuple(_syndrome(h, ref_arr[p]) for h, p in zip(maps_a.matrices, positions))
    cand_bits = EcMaps(layout.perm_seed, maps_a.key_bits, maps_a.block_bits,
                       maps_a.matrices, syn).to_message()
    if f is None:
        return StreamForgery(cand_bits.to_bits(), 0)
    spans = cand_bits.field_spans()
    cand_bits = cand_bits.to_bits()
    base = len(prefix)
    total = base + len(cand_bits)
    count = -(-total // m_bits)
    width = count * m_bits
    full = (1 << m_bits) - 1

    def bit(pos):
        return 1 << (width - 1 - pos)

    # zero_mask: matrix entries whose flip leaves H x unchanged
    # comp[(j, row)]: entries whose flip toggles syndrome bit (j, row)
    zero_mask = 0
    syn_pos: dict[int, tuple[int, int]] = {}
    comp: dict[tuple[int, int], list[int]] = {}
    for j, (pos, h) in enumerate(zip(positions, maps_a.matrices)):
        ms, _ = spans[f"matrix[{j}]"][0]
        ss, _ = spans[f"syndrome[{j}]"][0]
        rows, size = h.shape
        ones = [c for c in range(size) if ref_arr[pos[c]]]
        for row in range(rows):
            row_start = base + ms + row * size
            for c in range(size):
                if not ref_arr[pos[c]]:
                    zero_mask |= bit(row_start + c)
            if ones:
                comp[(j, row)] = [row_start + c for c in ones]
                syn_pos[base + ss + row] = (j, row)
    syn_mask = 0
    for sp in syn_pos:
        syn_mask |= bit(sp)

    orig_v = original.pad_to(width).value
    w = (prefix + cand_bits).pad_to(width).value

    def chunk(v, k):
        return BitString((v >> (width - (k + 1) * m_bits)) & full, m_bits)

    def dirty(k):
        return f(chunk(w, k)) != f(chunk(orig_v, k))

    pending = {k for k in range(count) if dirty(k)}
    budget = 4 * count
    while pending:
        k = min(pending)
        pending.discard(k)
        if not dirty(k):
            continue
        budget -= 1
        if budget < 0:
            return None
        center, target = chunk(w, k), f(chunk(orig_v, k))
        found = search(center, target, chunk(zero_mask, k))
        if found is None:
            found = search(center, target, chunk(zero_mask | syn_mask, k))
            if found is None:
                return None
        shift = width - (k + 1) * m_bits
        w ^= (found ^ center).value << shift
        for q in (found ^ center).positions():
            sp = k * m_bits + q
            if sp not in syn_pos:
                continue
            # keep H'x = s' by flipping one entry of that row in a one-column,
            # preferring one whose chunk zero-column edits can still repair
            options = comp[syn_pos[sp]]
            other = options[0]
            for e in options:
                kk = e // m_bits
                if kk == k:
                    continue
                trial = w ^ bit(e)
                center_kk = chunk(trial, kk)
                target_kk = f(chunk(orig_v, kk))
                if f(center_kk) == target_kk or \
                        search(center_kk, target_kk, chunk(zero_mask, kk)) is not None:
                    other = e
                    break
            w ^= bit(other)
            pending.add(other // m_bits)
    forged = BitString(w >> (width - total), total)[base:]
    fm = EcMaps.from_message(PhaseMessage.from_bits(forged))
    for h, s, pos in zip(fm.matrices, fm.syndromes, fm.block_positions()):
        assert _syndrome(h, ref_arr[pos]) == s, "forged maps inconsistent with Eve's key"
    return StreamForgery(forged, forged.hamming(cand_bits))


def forge_ec(maps_a: EcMaps, reference: BitString, f, m_bits: int, search: Searcher,
             allow_key_edits: bool = True, prefix: BitString = BitString(),
             accept: Optional[Callable[[StreamForgery, BitString], bool]] = None
             ) -> tuple[Optional[StreamForgery], BitString, int]:
    """Non-random maps for Bob whose encoding collides with Alice's ``maps_a``.

    The block layout is Alice's, or another permutation seed with the same
    hash when ``accept`` rejects it (the first forgery is kept if every
    layout is rejected); syndromes come from Eve's Bob-side key
    ``reference``.  Matrix entries in columns where the key is
    0 are edited first, since they leave every syndrome intact.  A chunk
    that needs more may also flip syndrome bits; each such flip is paired
    with a matrix flip in a column where the key is 1 so the maps stay
    consistent with ``reference``.  If that fails and ``allow_key_edits`` is
    set, single key bits are flipped in order and the search repeated.
    ``accept`` can veto a forgery.  Returns the forgery (or None), the
    possibly edited key, and the number of key edits.
    """
    def usable(found, ref):
        return found is not None and (accept is None or accept(found, ref))

    first = None
    for seed in _seed_alternatives(maps_a, f, m_bits, prefix):
        found = _forge_maps(maps_a, reference, f, m_bits, search, prefix, seed)
        if usable(found, reference):
            return found, reference, 0
        first = first or found
        if accept is None:
            break
    if first is not None:
        # no layout is safe for every unknown bit; take the odds
        return first, reference, 0
    if not allow_key_edits:
        return None, reference, 0
    for p in range(len(reference)):
        edited = reference.flip(p)
        found = _forge_maps(maps_a, edited, f, m_bits, search, prefix)
        if usable(found, edited):
            return found, edited, 1
    return None, reference, 0


def forge_pa(pa_a: PhaseMessage, bob_key_bits: int, f, m_bits: int, search: Searcher,
             prefix: BitString = BitString()) -> tuple[Optional[StreamForgery], bool]:
    """Reuse Alice's map verbatim when Bob's reconciled key has Alice's
    length; otherwise resize the seed and search over its bits.  Returns the
    forgery and whether it was a verbatim reuse."""
    out_len = pa_a["out_len"]
    seed = pa_a["seed"]
    if len(seed) == out_len + bob_key_bits - 1:
        return StreamForgery(pa_a.to_bits(), 0), True
    want = out_len + bob_key_bits - 1
    if out_len > bob_key_bits or want <= 0:
        return None, False
    new_seed = seed[:want] if want <= len(seed) else seed.pad_to(want)
    cand = PhaseMessage.pa_map(out_len, new_seed)
    tiers = [spans_mask(len(cand.to_bits()), cand.field_spans()["seed"])]
    return _forge_with_prefix(pa_a, cand, f, m_bits, tiers, search, prefix), False


# ---------------------------------------------------------------------------
# the interceptor


_EARLY = (Phase.TIMESTAMP, Phase.SETTINGS, Phase.EC_MAPS)


class Eve:
    """Channel interceptor installed by :func:`orchestrate`."""

    def __init__(self, config: ProtocolConfig, strategy: AdversaryStrategy):
        self.cfg = config
        self.strategy = strategy
        self.scheme = config.scheme
        self.f = config.scheme.f if config.scheme.kind == TWO_STEP else None
        self.m = config.space.m_bits
        self.postponed = config.auth_mode == "postponed"
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([strategy.seed, EVE_STREAM])))
        mode, budget = strategy.effective_mode
        self.mode = mode
        self.radius = budget if mode == "ball_search" else None
        self.search = make_searcher(self.f, mode, budget) if self.f is not None else None
        self.state = MitmState()
        self.sent_prefix = {Direction.A_TO_B: BitString(), Direction.B_TO_A: BitString()}
        self.attack = self._attack_phases()

    @property
    def forgery_log(self) -> list:
        return self.state.forgery_log

    def _attack_phases(self) -> frozenset:
        kind = self.strategy.kind
        if kind == "absent":
            return frozenset()
        if kind != "full_mitm":
            return frozenset() if self.postponed else frozenset({Phase.SETTINGS})
        if not self.postponed:
            return frozenset({Phase.TIMESTAMP, Phase.SETTINGS, Phase.EC_MAPS, Phase.EC_CONFIRM,
                              Phase.PA_MAP})
        # only the last message of each direction is still open to change
        last_ab = Phase.PA_MAP if "secret_hash_check" not in self.cfg.countermeasures \
            else Phase.SECRET_HASH_CHECK
        return frozenset({Phase.EC_CONFIRM, last_ab} - {Phase.SECRET_HASH_CHECK})

    # hooks called by the session

    def on_quantum(self, alice_bits: BitString, alice_bases: BitString):
        if self.strategy.kind == "absent":
            return None
        fixed = BitString.zeros(len(alice_bases)) if self.strategy.eve_bases == "zeros" else None
        rec = intercept_resend(alice_bases, alice_bits, self.strategy.seed, fixed)
        st = self.state
        st.eve_bases, st.eve_bits = rec["eve_bases"], rec["eve_bits"]
        st.resent_bases, st.resent_bits = rec["resent_bases"], rec["resent_bits"]
        return st.resent_bases, st.resent_bits

    def intercept(self, wire: Wire) -> Wire:
        if wire.message is None or self.strategy.kind == "absent":
            return wire
        phase = wire.message.phase
        handler = getattr(self, f"_on_{phase.name.lower()}")
        try:
            out = handler(wire, phase in self.attack)
        except ContractViolation:
            # inconsistent views (e.g. an earlier give-up); stop interfering
            self.attack = frozenset()
            out = wire
        if self.postponed:
            self.sent_prefix[wire.direction] = self.sent_prefix[wire.direction] + out.bits
        return out

    def final_keys(self) -> tuple[Optional[BitString], Optional[BitString]]:
        return self.state.key_with_alice, self.state.key_with_bob

    # helpers

    def _prefix(self, direction: Direction) -> BitString:
        return self.sent_prefix[direction] if self.postponed else BitString()

    def _emit(self, wire: Wire, candidate: PhaseMessage, forgery: Optional[StreamForgery],
              induced: int = 0, note: str = "") -> Wire:
        original_hex = wire.message.encode().hex()
        tags_hex = _bits_tuple_hex(wire.tags)
        if forgery is None:
            self.state.forgery_log.append(ForgeryRecord(
                wire.message.phase.label, wire.direction.value, original_hex, None, 0, tags_hex,
                0, note or "gave up"))
            return ForgedWire(wire.direction, wire.message, wire.tags, opportunity=True)
        msg = PhaseMessage.from_bits(forgery.bits)
        self.state.forgery_log.append(ForgeryRecord(
            wire.message.phase.label, wire.direction.value, original_hex, msg.encode().hex(),
            forgery.distance, tags_hex, induced, note))
        return ForgedWire(wire.direction, msg, wire.tags, opportunity=True, eve_content=True)

    def _guess(self, wire: Wire, candidate: PhaseMessage) -> Wire:
        """Send ``candidate`` with fresh random tags on every changed chunk."""
        if candidate == wire.message:
            start, _ = candidate.field_spans()["bases"][0]
            candidate = PhaseMessage.from_bits(candidate.to_bits().flip(start))
        n = self.cfg.space.n_bits
        o_chunks = wire.message.to_bits().chunks(self.m)
        c_chunks = candidate.to_bits().chunks(self.m)
        if len(o_chunks) != len(c_chunks) or wire.tags is None:
            return self._emit(wire, candidate, None, note="chunk count changed")
        tags = tuple(t if oc == cc else BitString(int(self.rng.integers(0, 1 << n)), n)
                     for t, oc, cc in zip(wire.tags, o_chunks, c_chunks))
        self.state.forgery_log.append(ForgeryRecord(
            wire.message.phase.label, wire.direction.value, wire.message.encode().hex(),
            candidate.encode().hex(), wire.message.to_bits().hamming(candidate.to_bits()),
            None, 0, "guessed tags"))
        return ForgedWire(wire.direction, candidate, tags, opportunity=True, eve_content=True)

    # phase handlers

    def _on_timestamp(self, wire: Wire, attack: bool) -> Wire:
        st = self.state
        st.bob_bases = wire.message["bases"]
        out = wire
        if attack:
            cand = PhaseMessage.timestamp(wire.message["timestamp"], st.eve_bases)
            forgery = forge_settings(wire.message, cand, self.f, self.m, self.search,
                                     prefix=self._prefix(wire.direction))
            out = self._emit(wire, cand, forgery)
        st.announced_to_alice = out.message["bases"]
        return out

    def _on_settings(self, wire: Wire, attack: bool) -> Wire:
        st = self.state
        st.alice_bases = wire.message["bases"]
        out = wire
        if attack:
            cand = PhaseMessage.settings(st.resent_bases)
            if self.strategy.kind == "guess_tag":
                out = self._guess(wire, cand)
            else:
                silent = None
                if self.mode != "list" and st.bob_bases is not None:
                    silent = self._silent_flips()
                forgery = forge_settings(wire.message, cand, self.f, self.m, self.search,
                                         silent=silent, prefix=self._prefix(wire.direction),
                                         max_radius=self.radius)
                induced = 0
                if forgery is not None and silent is not None:
                    got = PhaseMessage.from_bits(forgery.bits)["bases"]
                    induced = ((got ^ st.resent_bases) & ~silent).weight()
                out = self._emit(wire, cand, forgery, induced)
        st.announced_to_bob = out.message["bases"]
        if self.strategy.kind == "full_mitm":
            self._sift_views()
        return out

    def _silent_flips(self) -> BitString:
        """Bases Eve can flip toward Bob without adding an unknown bit to his key.

        A flip at i makes Bob drop i when his basis matched the resent one.
        Elsewhere he would keep i with a coin-flip bit, which is harmless
        only past the end of his truncated sifted key; a margin covers the
        positions that earlier flips make him drop.
        """
        st = self.state
        same = ~(st.bob_bases ^ st.resent_bases)
        kept = same.positions()
        margin = self.cfg.sifted_key_bits + len(kept) // 4
        if margin < len(kept):
            cutoff = kept[margin]
            tail = BitString(((1 << (len(same) - cutoff - 1)) - 1), len(same))
            same = same | tail
        return same

    def _sift_views(self) -> None:
        st = self.state
        S = self.cfg.sifted_key_bits
        a_pos = sift_positions(st.alice_bases, st.announced_to_alice)[:S]
        b_pos = sift_positions(st.bob_bases, st.announced_to_bob)[:S]
        st.sifted_with_alice = st.eve_bits.select(a_pos)
        st.unknown_with_alice = tuple(k for k, p in enumerate(a_pos)
                                      if st.eve_bases[p] != st.alice_bases[p])
        st.sifted_with_bob = st.resent_bits.select(b_pos)
        st.unknown_with_bob = tuple(k for k, p in enumerate(b_pos)
                                    if st.bob_bases[p] != st.resent_bases[p])

    def _on_ec_maps(self, wire: Wire, attack: bool) -> Wire:
        st = self.state
        if self.strategy.kind != "full_mitm" or st.sifted_with_alice is None:
            return wire
        maps_a = EcMaps.from_message(wire.message)
        st.maps_alice = maps_a
        if len(st.sifted_with_alice) != maps_a.key_bits:
            raise ContractViolation("Eve's Alice-side key does not match the maps")
        self._decode_alice_side(maps_a)
        out = wire
        if attack and len(st.sifted_with_bob) == maps_a.key_bits:
            forgery, ref, edits = forge_ec(maps_a, st.sifted_with_bob, self.f, self.m, self.search,
                                           self.strategy.allow_key_edits,
                                           prefix=self._prefix(wire.direction),
                                           accept=self._bob_decodes_to)
            if forgery is not None:
                st.sifted_with_bob = ref
            out = self._emit(wire, wire.message, forgery, induced=edits)
        st.maps_bob = EcMaps.from_message(out.message)
        if len(st.sifted_with_bob) == st.maps_bob.key_bits:
            st.bob_view = ec_apply(st.sifted_with_bob, st.maps_bob)
        return out

    def _bob_decodes_to(self, forgery: StreamForgery, ref: BitString) -> bool:
        """Whether Bob lands on ``ref`` for every value of his unknown bits."""
        unknown = self.state.unknown_with_bob
        if not unknown or len(unknown) > 8:
            return True
        maps = EcMaps.from_message(PhaseMessage.from_bits(forgery.bits))
        for v in range(1, 1 << len(unknown)):
            y = ref
            for j, p in enumerate(unknown):
                if (v >> j) & 1:
                    y = y.flip(p)
            if ec_apply(y, maps).corrected_key != ref:
                return False
        return True

    def _decode_alice_side(self, maps: EcMaps) -> None:
        st = self.state
        arr = _array(st.sifted_with_alice)
        unknown = set(st.unknown_with_alice)
        corrections = 0
        for pos, h, syn in zip(maps.block_positions(), maps.matrices, maps.syndromes):
            diff = _syndrome(h, arr[pos]).value ^ syn.value
            local_unknown = [j for j, p in enumerate(pos) if int(p) in unknown]
            fix = erasure_decode(h, diff, local_unknown)
            if fix is None:
                fix = decode_block(h, diff) or []
            for j in fix:
                arr[pos[j]] ^= 1
            corrections += len(fix)
        st.corrected_with_alice = _bits(arr)
        st.alice_corrections = corrections

    def _on_ec_confirm(self, wire: Wire, attack: bool) -> Wire:
        st = self.state
        if self.strategy.kind != "full_mitm" or st.maps_alice is None:
            return wire
        mask_b = wire.message["matched"]
        st.buffered["ec_confirm"] = wire
        if st.bob_view is not None and len(mask_b) == len(st.maps_bob.syndromes):
            st.reconciled_with_bob = reconciled_key(st.bob_view.corrected_key, st.maps_bob, mask_b)
        out = wire
        if attack:
            cand = PhaseMessage.ec_confirm(mask_b, st.alice_corrections)
            maps_a = st.maps_alice
            limit = self.cfg.qber_abort_threshold

            def acceptable(msg):
                return len(msg["matched"]) == len(maps_a.syndromes) and \
                    qber_estimate(maps_a, msg["matched"], msg["corrected"]) <= limit

            tiers = [spans_mask(len(cand.to_bits()), cand.field_spans()["corrected"])]
            forgery = _forge_with_prefix(wire.message, cand, self.f, self.m, tiers, self.search,
                                         self._prefix(wire.direction), predicate=acceptable)
            note = "" if forgery is not None else "no acceptable collision; forwarded Bob's confirm"
            out = self._emit(wire, cand, forgery, note=note)
        matched = out.message["matched"]
        if len(matched) == len(st.maps_alice.syndromes):
            st.reconciled_with_alice = reconciled_key(st.corrected_with_alice, st.maps_alice, matched)
        return out

    def _on_pa_map(self, wire: Wire, attack: bool) -> Wire:
        st = self.state
        if self.strategy.kind != "full_mitm" or st.reconciled_with_alice is None:
            return wire
        pa = wire.message
        if pa["out_len"] <= len(st.reconciled_with_alice) and \
                len(pa["seed"]) == pa["out_len"] + len(st.reconciled_with_alice) - 1:
            st.key_with_alice = privacy_amplify(st.reconciled_with_alice, pa["seed"], pa["out_len"])
        out = wire
        if attack and st.reconciled_with_bob is not None:
            forgery, reused = forge_pa(pa, len(st.reconciled_with_bob), self.f, self.m,
                                       self.search, self._prefix(wire.direction))
            out = self._emit(wire, pa, forgery, note="verbatim reuse" if reused else "")
        got = out.message
        if st.reconciled_with_bob is not None and got["out_len"] <= len(st.reconciled_with_bob) \
                and len(got["seed"]) == got["out_len"] + len(st.reconciled_with_bob) - 1:
            st.key_with_bob = privacy_amplify(st.reconciled_with_bob, got["seed"], got["out_len"])
        return out

    def _on_secret_hash_check(self, wire: Wire, attack: bool) -> Wire:
        # Eve cannot compute a check value without the pre-shared key
        return wire


def orchestrate(config: ProtocolConfig, strategy: AdversaryStrategy) -> Optional[Eve]:
    """Build the channel interceptor for ``strategy`` (None when Eve is absent)."""
    if strategy.kind == "absent":
        return None
    return Eve(config, strategy)

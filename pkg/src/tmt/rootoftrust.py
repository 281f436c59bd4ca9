"""Bit-exact codec for the block root of trust.

Layout, most significant bit first::

    bit 0     root hash T                     256
    bit 256   n - 1, m                        12 + 12
    bit 280   flags                           8
                bits 0-1  bitmap mode (plain, compressed, list, empty)
                bit  2    codeword width (0: 4, 1: 8)
                bits 3-7  extra permutation rounds
    bit 288   bitmap payload                  L <= 1024
    bit L+288 redundancy, all zero            32

followed by zero bits up to a byte boundary.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np

from . import tunstall
from .shuffleshift import MAX_EXTRA_ROUNDS, apply_round, permute_array, round_values
from .smt import HASH_BYTES, ceil_log2

MAX_USERS = 4096
MAX_PAYLOAD_BITS = 1024
HEADER_BITS = 288
REDUNDANCY_BITS = 32
ZERO_DIGEST = bytes(HASH_BYTES)


class Mode(enum.IntEnum):
    PLAIN = 0
    COMPRESSED = 1
    LIST = 2
    EMPTY = 3


class RotError(ValueError):
    """Raised when a root-of-trust message is rejected."""


@functools.lru_cache(maxsize=4096)
def codebook_for(m: int, n: int, w: int) -> tunstall.TunstallCodebook:
    return tunstall.build_codebook(m / n, w)


def list_width(n: int) -> int:
    return ceil_log2(n)


@dataclass(frozen=True)
class RootOfTrust:
    root: bytes
    n: int
    m: int
    mode: Mode
    payload: str = ""
    w: int = 4
    extra_rounds: int = 0

    @property
    def flags(self) -> int:
        return int(self.mode) | (self.w == 8) << 2 | self.extra_rounds << 3

    @property
    def payload_bits(self) -> int:
        return len(self.payload)

    @property
    def bit_length(self) -> int:
        return self.payload_bits + HEADER_BITS + REDUNDANCY_BITS

    @property
    def byte_length(self) -> int:
        return (self.bit_length + 7) // 8

    @functools.cached_property
    def bitmap(self) -> str:
        """The n-bit occupancy bitmap carried by the payload, in permuted positions."""
        return _payload_to_bitmap(self.n, self.m, self.mode, self.w, self.payload)

    def validate(self) -> None:
        if len(self.root) != HASH_BYTES:
            raise RotError("root hash must be 32 bytes")
        if not 1 <= self.n <= MAX_USERS:
            raise RotError(f"n must be in [1, {MAX_USERS}], got {self.n}")
        if not 0 <= self.m <= min(self.n, MAX_USERS - 1):
            raise RotError(f"m={self.m} out of range for n={self.n}")
        if self.w not in tunstall.WIDTHS:
            raise RotError(f"codeword width {self.w} not supported")
        if not 0 <= self.extra_rounds <= MAX_EXTRA_ROUNDS:
            raise RotError("extra_rounds must fit in 5 bits")
        if len(self.payload) > MAX_PAYLOAD_BITS:
            raise RotError(f"bitmap payload of {len(self.payload)} bits exceeds {MAX_PAYLOAD_BITS}")
        if self.payload.strip("01"):
            raise RotError("payload must be a bit string")
        bm = self.bitmap
        if len(bm) != self.n or bm.count("1") != self.m:
            raise RotError("payload does not describe an n-bit bitmap with m ones")


def _payload_to_bitmap(n: int, m: int, mode: Mode, w: int, payload: str) -> str:
    if mode == Mode.EMPTY:
        if m or payload:
            raise RotError("empty mode requires m = 0 and no payload")
        return "0" * n
    if m == 0:
        raise RotError("m = 0 requires empty mode")
    if mode == Mode.PLAIN:
        if len(payload) != n:
            raise RotError("plain payload length must equal n")
        return payload
    if mode == Mode.LIST:
        width = list_width(n)
        if width == 0:
            raise RotError("list mode needs n > 1")
        if len(payload) != m * width:
            raise RotError("list payload length must equal m * ceil(log2 n)")
        positions = [int(payload[i * width:(i + 1) * width], 2) for i in range(m)]
        if any(b <= a for a, b in zip(positions, positions[1:])) or positions[-1] >= n:
            raise RotError("list positions must be strictly increasing and below n")
        out = bytearray(b"0" * n)
        for pos in positions:
            out[pos] = ord("1")
        return out.decode()
    if m >= n:
        raise RotError("compressed mode needs 0 < m < n")
    codebook = codebook_for(m, n, w)
    try:
        bits, used = tunstall.decode_prefix(payload, n, codebook)
    except tunstall.MalformedStream as exc:
        raise RotError(str(exc)) from None
    if used != len(payload):
        raise RotError("compressed payload has trailing codewords")
    if "1" in bits[n:]:
        raise RotError("compressed padding must be zero bits")
    return bits[:n]


def encode_rot(rot: RootOfTrust) -> bytes:
    rot.validate()
    value = int.from_bytes(rot.root, "big")
    value = value << 12 | (rot.n - 1)
    value = value << 12 | rot.m
    value = value << 8 | rot.flags
    if rot.payload:
        value = value << len(rot.payload) | int(rot.payload, 2)
    value <<= REDUNDANCY_BITS
    pad = -rot.bit_length % 8
    return (value << pad).to_bytes(rot.byte_length, "big")


def decode_rot(data: bytes) -> RootOfTrust:
    """Parse and validate a root of trust.

    Trailing zero bytes beyond the message are accepted (cipher padding); any
    other bit after the payload, including the redundancy field, rejects.
    """
    total = 8 * len(data)
    if total < HEADER_BITS + REDUNDANCY_BITS:
        raise RotError("message shorter than the fixed fields")
    value = int.from_bytes(data, "big")
    # the message always ends in at least the 32 redundancy zeros; check before any parsing work
    if value & ((1 << REDUNDANCY_BITS) - 1):
        raise RotError("redundancy field is not zero")

    def field(offset: int, width: int) -> int:
        return (value >> (total - offset - width)) & ((1 << width) - 1)

    root = data[:HASH_BYTES]
    n = field(256, 12) + 1
    m = field(268, 12)
    flags = field(280, 8)
    mode = Mode(flags & 3)
    w = 8 if flags & 4 else 4
    extra = flags >> 3
    if m > n:
        raise RotError(f"m={m} exceeds n={n}")

    if mode == Mode.EMPTY:
        length = 0
    elif mode == Mode.PLAIN:
        length = n
    elif mode == Mode.LIST:
        length = m * list_width(n)
    else:
        if not 0 < m < n:
            raise RotError("compressed mode needs 0 < m < n")
        rest = total - HEADER_BITS - REDUNDANCY_BITS
        avail = min(rest, MAX_PAYLOAD_BITS)
        tail = format(field(HEADER_BITS, avail), f"0{avail}b") if avail > 0 else ""
        try:
            _, length = tunstall.decode_prefix(tail, n, codebook_for(m, n, w))
        except tunstall.MalformedStream as exc:
            raise RotError(str(exc)) from None
    if length > MAX_PAYLOAD_BITS:
        raise RotError("payload longer than the format allows")
    end = HEADER_BITS + length
    if end + REDUNDANCY_BITS > total:
        raise RotError("message truncated")
    if value & ((1 << (total - end)) - 1):
        raise RotError("redundancy field is not zero")
    payload = format(field(HEADER_BITS, length), f"0{length}b") if length else ""
    rot = RootOfTrust(root, n, m, mode, payload, w, extra)
    rot.validate()
    return rot


def bits_from_positions(positions, n: int) -> str:
    arr = np.zeros(n, dtype=np.uint8)
    arr[np.asarray(positions, dtype=np.int64)] = 1
    return arr.tobytes().translate(_TO_ASCII).decode()


_TO_ASCII = bytes.maketrans(b"\x00\x01", b"01")


def compressed_payload(bitmap: str, m: int, w: int) -> str:
    codewords, _ = tunstall.encode(bitmap, codebook_for(m, len(bitmap), w))
    return "".join(format(c, f"0{w}b") for c in codewords)


def _candidate_lengths(n: int, m: int, bitmap: str) -> list[tuple[int, Mode, int]]:
    """(payload bits, mode, w) per encodable option, in tie-break order."""
    if m == 0:
        return [(0, Mode.EMPTY, 4)]
    cands = [(n, Mode.PLAIN, 4)]
    if list_width(n):
        cands.append((m * list_width(n), Mode.LIST, 4))
    if m < n:
        for w in tunstall.WIDTHS:
            codewords, _ = tunstall.encode(bitmap, codebook_for(m, n, w))
            cands.append((len(codewords) * w, Mode.COMPRESSED, w))
    return cands


def make_payload(bitmap: str, m: int, mode: Mode, w: int) -> str:
    if mode == Mode.EMPTY:
        return ""
    if mode == Mode.PLAIN:
        return bitmap
    if mode == Mode.LIST:
        width = list_width(len(bitmap))
        return "".join(format(i, f"0{width}b") for i, b in enumerate(bitmap) if b == "1")
    return compressed_payload(bitmap, m, w)


def choose_mode(n: int, m: int, bitmap: str) -> tuple[Mode, int, str]:
    """Shortest payload; earlier candidates win ties (plain, list, compressed w=4, w=8)."""
    if len(bitmap) != n or bitmap.count("1") != m:
        raise ValueError("bitmap must have length n and popcount m")
    _, mode, w = min(_candidate_lengths(n, m, bitmap), key=lambda c: c[0])
    return mode, w, make_payload(bitmap, m, mode, w)


@dataclass(frozen=True)
class Encoding:
    extra_rounds: int
    mode: Mode
    w: int
    payload: str
    bitmap: str


def search_extra_rounds(n: int, raw_bitmap: str, block_number: int, base_t: int) -> Encoding:
    """Try no permutation and 1..31 extra rounds; keep the shortest payload (smallest extra on ties)."""
    if len(raw_bitmap) != n:
        raise ValueError("bitmap must have length n")
    m = raw_bitmap.count("1")
    best_len, mode, w = min(_candidate_lengths(n, m, raw_bitmap), key=lambda c: c[0])
    best = (best_len, 0, mode, w, raw_bitmap)
    if m and n >= 2 and not n & (n - 1):
        d = ceil_log2(n)
        ids = [i for i, b in enumerate(raw_bitmap) if b == "1"]
        # rounds base_t + e extend rounds base_t + e - 1 by one more LCG step
        vs = round_values(block_number, base_t + MAX_EXTRA_ROUNDS, n)
        pos = permute_array(ids, d, block_number, base_t)
        for extra in range(1, MAX_EXTRA_ROUNDS + 1):
            pos = apply_round(pos, vs[base_t + extra - 1], d)
            bitmap = bits_from_positions(pos, n)
            length, mode, w = min(_candidate_lengths(n, m, bitmap), key=lambda c: c[0])
            if length < best[0]:
                best = (length, extra, mode, w, bitmap)
    _, extra, mode, w, bitmap = best
    return Encoding(extra, mode, w, make_payload(bitmap, m, mode, w), bitmap)

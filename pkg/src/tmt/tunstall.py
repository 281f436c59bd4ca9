"""Variable-to-fixed Tunstall coding of sparse bitmaps.

Bit strings are Python ``str`` objects over ``"01"``.  Both ends rebuild the
dictionary from ``(p, w)`` alone, so construction must be fully
deterministic:

* node likelihoods are kept as (ones, zeros) counts; the log-likelihood is a
  pure function of the counts, so chunks with equal counts tie exactly;
* ties go to the leaf created first, and the 0-child is created before the
  1-child;
* codewords are assigned in prefix order, 0-edge first.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

WIDTHS = (4, 8)


def entropy(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@dataclass(frozen=True)
class TunstallCodebook:
    p: float
    w: int
    chunks: tuple[str, ...]  # indexed by codeword
    # node transition tables; entry >= 0 is an internal node, ~c marks leaf codeword c
    _child0: tuple[int, ...] = field(repr=False)
    _child1: tuple[int, ...] = field(repr=False)
    # (state, 8-bit substring) -> (codewords emitted, next state), filled lazily
    _steps: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @property
    def decode_table(self) -> tuple[str, ...]:
        return self.chunks

    def neg_log2_likelihood(self, codeword: int) -> float:
        chunk = self.chunks[codeword]
        ones = chunk.count("1")
        return -(ones * math.log2(self.p) + (len(chunk) - ones) * math.log2(1 - self.p))

    def rows(self) -> list[tuple[str, float, str]]:
        """(codeword bits, -log2 p_c, chunk) per codeword."""
        return [(format(c, f"0{self.w}b"), self.neg_log2_likelihood(c), ch) for c, ch in enumerate(self.chunks)]


def build_codebook(p: float, w: int) -> TunstallCodebook:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if w not in WIDTHS:
        raise ValueError(f"codeword width must be one of {WIDTHS}, got {w}")
    lp1, lp0 = math.log2(p), math.log2(1 - p)

    # node: [ones, zeros, child0, child1]; children None while a leaf
    nodes = [[0, 0, None, None]]
    heap: list[tuple[float, int]] = []
    seq = 0

    def split(i: int) -> None:
        nonlocal seq
        ones, zeros = nodes[i][0], nodes[i][1]
        for bit in (0, 1):
            child = [ones + bit, zeros + 1 - bit, None, None]
            nodes.append(child)
            nodes[i][2 + bit] = len(nodes) - 1
            ll = child[0] * lp1 + child[1] * lp0
            heapq.heappush(heap, (-ll, seq, len(nodes) - 1))
            seq += 1

    split(0)
    leaves = 2
    while leaves < 1 << w:
        _, _, i = heapq.heappop(heap)
        split(i)
        leaves += 1

    # prefix-order numbering
    code_of: dict[int, int] = {}
    chunks: list[str] = []
    stack = [(0, "")]
    while stack:
        i, prefix = stack.pop()
        if nodes[i][2] is None:
            code_of[i] = len(chunks)
            chunks.append(prefix)
        else:
            stack.append((nodes[i][3], prefix + "1"))
            stack.append((nodes[i][2], prefix + "0"))

    internal = [i for i, nd in enumerate(nodes) if nd[2] is not None]
    slot = {i: s for s, i in enumerate(internal)}

    def target(i: int) -> int:
        return slot[i] if i in slot else ~code_of[i]

    child0 = tuple(target(nodes[i][2]) for i in internal)
    child1 = tuple(target(nodes[i][3]) for i in internal)
    return TunstallCodebook(p, w, tuple(chunks), child0, child1)


def _walk(codebook: TunstallCodebook, node: int, bits: str) -> tuple[tuple[int, ...], int]:
    c0, c1 = codebook._child0, codebook._child1
    out = []
    for b in bits:
        nxt = c1[node] if b == "1" else c0[node]
        if nxt < 0:
            out.append(~nxt)
            node = 0
        else:
            node = nxt
    return tuple(out), node


def encode(bits: str, codebook: TunstallCodebook) -> tuple[list[int], int]:
    """Parse ``bits`` into codewords; a trailing partial chunk is completed with 0-bits."""
    steps = codebook._steps
    out: list[int] = []
    node = 0
    full = len(bits) - len(bits) % 8
    for i in range(0, full, 8):
        key = (node, bits[i:i + 8])
        hit = steps.get(key)
        if hit is None:
            hit = steps[key] = _walk(codebook, node, key[1])
        out.extend(hit[0])
        node = hit[1]
    tail, node = _walk(codebook, node, bits[full:])
    out.extend(tail)
    pad = 0
    while node:
        pad += 1
        nxt = codebook._child0[node]
        if nxt < 0:
            out.append(~nxt)
            break
        node = nxt
    return out, pad


class MalformedStream(ValueError):
    pass


def decode(codewords, pad_bits: int, n_bits: int, codebook: TunstallCodebook) -> str:
    table = codebook.chunks
    try:
        bits = "".join([table[c] for c in codewords])
    except (IndexError, TypeError) as exc:
        raise MalformedStream(f"invalid codeword in stream: {exc}") from None
    if len(bits) - pad_bits < n_bits:
        raise MalformedStream(f"stream decodes to {len(bits) - pad_bits} bits, expected {n_bits}")
    return bits[:n_bits]


def decode_prefix(payload: str, n_bits: int, codebook: TunstallCodebook) -> tuple[str, int]:
    """Decode whole codewords from ``payload`` until ``n_bits`` are produced.

    Returns the decoded bits (including any padding past ``n_bits``) and the
    number of payload bits consumed.
    """
    w, table = codebook.w, codebook.chunks
    parts = []
    produced = 0
    pos = 0
    while produced < n_bits:
        if pos + w > len(payload):
            raise MalformedStream("payload ends before the bitmap is complete")
        chunk = table[int(payload[pos:pos + w], 2)]
        parts.append(chunk)
        produced += len(chunk)
        pos += w
    return "".join(parts), pos


@dataclass(frozen=True)
class CompressionReport:
    n: int
    r: int
    w: int
    p: float
    kappa: float
    h0: float
    rho: float


def bernoulli_bits(p: float, n_bits: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    ones = rng.random(n_bits) < p
    return ones.astype(np.uint8).tobytes().translate(bytes.maketrans(b"\x00\x01", b"01")).decode()


def measure(p: float, w: int, n_bits: int, seed: int = 0) -> CompressionReport:
    codebook = build_codebook(p, w)
    codewords, _ = encode(bernoulli_bits(p, n_bits, seed), codebook)
    r = len(codewords)
    kappa = r * w / n_bits
    h0 = entropy(p)
    return CompressionReport(n_bits, r, w, p, kappa, h0, (kappa - h0) / h0)

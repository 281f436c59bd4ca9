"""NULL-aware binary Merkle trees with mask-controlled adjunct paths.

A label is either a ``bytes`` digest or ``None`` (the NULL label).  NULL is
never serialized; proofs carry a presence mask instead.

Two tree shapes share the same machinery:

* the sparse tree, indexed by raw user id, where absent users are NULL leaves;
* the truncated tree, indexed by local id, with ``m`` contiguous occupied
  leaves followed by NULL padding up to the next power of two.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

HASH_BYTES = 32

Digest = Optional[bytes]


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def flip(x: bytes) -> bytes:
    """Bitwise complement of ``x``."""
    return (int.from_bytes(x, "big") ^ ((1 << (8 * len(x))) - 1)).to_bytes(len(x), "big")


def combine(left: Digest, right: Digest) -> Digest:
    """Parent label of two children.

    A NULL child is replaced by the complement of its sibling, so swapping
    children along a NULL path changes the parent label.
    """
    if left is None:
        if right is None:
            return None
        return H(flip(right) + right)
    if right is None:
        return H(left + flip(left))
    return H(left + right)


def ceil_log2(m: int) -> int:
    if m < 1:
        raise ValueError(f"ceil_log2 undefined for {m}")
    return (m - 1).bit_length()


@dataclass(frozen=True)
class AdjunctPath:
    """Leaf proof: bit k of ``mask`` is set iff the level-k sibling is non-NULL.

    ``adjuncts`` holds the non-NULL siblings, leaf to root.
    """

    leaf_index: int
    mask: int
    adjuncts: tuple[bytes, ...]

    @property
    def weight(self) -> int:
        return len(self.adjuncts)


class MerkleTree:
    """Immutable binary Merkle tree of height ``h`` over ``2**h`` labels."""

    def __init__(self, leaves: Sequence[Digest]):
        n = len(leaves)
        if n < 1 or n & (n - 1):
            raise ValueError(f"leaf count must be a power of two, got {n}")
        levels = [tuple(leaves)]
        while len(levels[-1]) > 1:
            below = levels[-1]
            levels.append(tuple(combine(below[i], below[i + 1]) for i in range(0, len(below), 2)))
        self.levels: tuple[tuple[Digest, ...], ...] = tuple(levels)

    @property
    def height(self) -> int:
        return len(self.levels) - 1

    @property
    def leaves(self) -> tuple[Digest, ...]:
        return self.levels[0]

    def root(self) -> Digest:
        return self.levels[-1][0]

    def node(self, level: int, index: int) -> Digest:
        return self.levels[level][index]

    def __len__(self) -> int:
        return len(self.levels[0])

    def __repr__(self) -> str:
        occupied = sum(x is not None for x in self.leaves)
        return f"MerkleTree(height={self.height}, occupied={occupied}/{len(self)})"


def build_sparse(leaves: Sequence[Digest]) -> MerkleTree:
    """Sparse tree over ``n = 2**h`` slots; ``None`` marks an unoccupied slot."""
    return MerkleTree(leaves)


def build_truncated(record_hashes: Sequence[bytes]) -> MerkleTree:
    """Dense tree of height ceil(log2 m) with NULLs padding the right end."""
    m = len(record_hashes)
    if m == 0:
        raise ValueError("truncated tree needs at least one record; use the empty root-of-trust mode")
    size = 1 << ceil_log2(m)
    return MerkleTree(list(record_hashes) + [None] * (size - m))


def prove(tree: MerkleTree, leaf_index: int) -> tuple[Digest, AdjunctPath]:
    if not 0 <= leaf_index < len(tree):
        raise IndexError(f"leaf index {leaf_index} outside [0, {len(tree)})")
    mask = 0
    adjuncts = []
    idx = leaf_index
    for k in range(tree.height):
        sibling = tree.levels[k][idx ^ 1]
        if sibling is not None:
            mask |= 1 << k
            adjuncts.append(sibling)
        idx >>= 1
    return tree.leaves[leaf_index], AdjunctPath(leaf_index, mask, tuple(adjuncts))


def fold(leaf_index: int, leaf: Digest, mask: int, adjuncts: Sequence[bytes], h: int) -> Digest:
    """Recompute the root from a leaf and its mask-controlled path.

    Raises ValueError when the path is structurally inconsistent.
    """
    if not 0 <= leaf_index < (1 << h) or not 0 <= mask < (1 << h):
        raise ValueError("index or mask wider than the tree")
    if bin(mask).count("1") != len(adjuncts):
        raise ValueError("adjunct count does not match mask")
    label = leaf
    it = iter(adjuncts)
    for k in range(h):
        sibling = next(it) if mask >> k & 1 else None
        if sibling is not None and len(sibling) != HASH_BYTES:
            raise ValueError("adjunct of wrong width")
        if leaf_index >> k & 1:
            label = combine(sibling, label)
        else:
            label = combine(label, sibling)
    return label


def verify(root: Digest, leaf_index: int, leaf: Digest, path: AdjunctPath, h: int) -> bool:
    """True iff ``leaf`` at ``leaf_index`` folds up to ``root``; never raises on bad proofs."""
    try:
        if path.leaf_index != leaf_index:
            return False
        return fold(leaf_index, leaf, path.mask, path.adjuncts, h) == root
    except (ValueError, TypeError):
        return False


def shape_mask(m: int, leaf_index: int) -> int:
    """Mask of the truncated tree over ``m`` leaves, derived from ``m`` alone."""
    if m < 1:
        raise ValueError("m must be positive")
    h = ceil_log2(m)
    if not 0 <= leaf_index < (1 << h):
        raise IndexError(f"leaf index {leaf_index} outside the truncated tree for m={m}")
    mask = 0
    for k in range(h):
        # the level-k sibling subtree starts at leaf ((index >> k) ^ 1) << k
        if ((leaf_index >> k) ^ 1) << k < m:
            mask |= 1 << k
    return mask

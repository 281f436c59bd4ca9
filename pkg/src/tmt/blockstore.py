"""Block building on the server, a simulated CAS, and client-side lookups.

The CAS is untrusted: it returns leaf digests and adjuncts without any
authentication, and every answer is checked against the root hash carried
by the root of trust.
"""
from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .rootoftrust import ZERO_DIGEST, RootOfTrust, decode_rot, encode_rot, search_extra_rounds
from .shuffleshift import DEFAULT_ROUNDS, PermParams, invert, permute, permute_many
from .smt import (
    HASH_BYTES,
    H,
    AdjunctPath,
    MerkleTree,
    build_sparse,
    build_truncated,
    ceil_log2,
    prove,
    shape_mask,
    verify,
)

BLOCK_MAGIC = b"TMTB"


def record_digest(record: bytes) -> bytes:
    """Leaf label of a record: hash of its length-prefixed serialization."""
    return H(struct.pack(">I", len(record)) + record)


def perm_params(n: int, block_number: int, base_t: int, extra_rounds: int) -> PermParams:
    if extra_rounds == 0:
        return PermParams(max(1, ceil_log2(n)), block_number, base_t, 0)
    if n < 2 or n & (n - 1):
        raise ValueError("id permutation needs n to be a power of two")
    return PermParams(ceil_log2(n), block_number, base_t, extra_rounds)


@dataclass(frozen=True)
class Block:
    number: int
    n: int
    base_t: int
    records: Mapping[int, bytes]
    bitmap_raw: str
    order: tuple[int, ...]  # raw ids in local-id order
    tree: Optional[MerkleTree]
    rot: RootOfTrust

    @property
    def m(self) -> int:
        return len(self.order)

    @property
    def params(self) -> PermParams:
        return perm_params(self.n, self.number, self.base_t, self.rot.extra_rounds)

    def to_bytes(self) -> bytes:
        rot = encode_rot(self.rot)
        parts = [BLOCK_MAGIC, struct.pack(">QH", self.number, len(rot)), rot]
        for raw_id in self.order:
            rec = self.records[raw_id]
            parts.append(struct.pack(">I", len(rec)))
            parts.append(rec)
        return b"".join(parts)


def parse_block(data: bytes) -> tuple[int, RootOfTrust, list[bytes]]:
    """Split stored block bytes into (number, root of trust, records in local-id order)."""
    if data[:4] != BLOCK_MAGIC:
        raise ValueError("not a block")
    try:
        number, rot_len = struct.unpack_from(">QH", data, 4)
        pos = 14
        rot = decode_rot(data[pos:pos + rot_len])
        pos += rot_len
        records = []
        while pos < len(data):
            (size,) = struct.unpack_from(">I", data, pos)
            pos += 4
            records.append(data[pos:pos + size])
            pos += size
    except struct.error:
        raise ValueError("block is truncated") from None
    if pos != len(data) or len(records) != rot.m:
        raise ValueError("corrupt block body")
    return number, rot, records


def build_block(number: int, records: Union[Mapping[int, bytes], Iterable[tuple[int, bytes]]], n: int,
                base_t: int = DEFAULT_ROUNDS, cas: Optional["CasStore"] = None) -> Block:
    """Renumber contributors, build the truncated tree and the root of trust.

    When ``cas`` is given the block bytes are stored and indexed under ``number``.
    """
    pairs = list(records.items()) if isinstance(records, Mapping) else list(records)
    recs: dict[int, bytes] = {}
    for raw_id, rec in pairs:
        if not 0 <= raw_id < n:
            raise ValueError(f"user id {raw_id} outside [0, {n})")
        if raw_id in recs:
            raise ValueError(f"duplicate user id {raw_id}")
        recs[raw_id] = bytes(rec)

    raw = bytearray(b"0" * n)
    for raw_id in recs:
        raw[raw_id] = ord("1")
    bitmap_raw = raw.decode()

    enc = search_extra_rounds(n, bitmap_raw, number, base_t)
    ids = sorted(recs)
    if recs:
        positions = permute_many(ids, perm_params(n, number, base_t, enc.extra_rounds))
        # local id = number of ones before the user's bit in the broadcast bitmap
        order = tuple(ids[i] for i in np.argsort(positions, kind="stable"))
        tree = build_truncated([record_digest(recs[i]) for i in order])
        root = tree.root()
    else:
        order, tree, root = (), None, ZERO_DIGEST
    rot = RootOfTrust(root, n, len(recs), enc.mode, enc.payload, enc.w, enc.extra_rounds)
    block = Block(number, n, base_t, recs, bitmap_raw, order, tree, rot)
    if cas is not None:
        cas.publish(block)
    return block


class CasError(Exception):
    pass


class CasUnavailable(CasError):
    """Transport failure; distinct from a proof that fails verification."""


class CasMissing(CasError, KeyError):
    pass


class CasStore:
    """Content-addressed block store with a per-block index for path queries.

    With ``directory`` set, each blob is a file named by its hex digest and the
    block-number index lives in ``index.json``.  Many readers may query while
    a single producer publishes.
    """

    def __init__(self, directory: Union[str, Path, None] = None):
        self.directory = Path(directory) if directory is not None else None
        self._blobs: dict[bytes, bytes] = {}
        self._index: dict[int, bytes] = {}
        self._trees: dict[int, tuple[MerkleTree, list[bytes]]] = {}
        self._write = threading.Lock()
        self.online = True
        self.bytes_served = 0
        self.requests = 0
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            idx = self.directory / "index.json"
            if idx.exists():
                self._index = {int(k): bytes.fromhex(v) for k, v in json.loads(idx.read_text()).items()}

    def put(self, data: bytes) -> bytes:
        key = H(data)
        with self._write:
            if self.directory is not None:
                path = self.directory / key.hex()
                if not path.exists():
                    path.write_bytes(data)
            else:
                self._blobs[key] = data
        return key

    def overwrite(self, key: bytes, data: bytes) -> None:
        """Replace a stored blob without rehashing, as a dishonest store would."""
        with self._write:
            if self.directory is not None:
                (self.directory / key.hex()).write_bytes(data)
            else:
                self._blobs[key] = data
            for number, k in self._index.items():
                if k == key:
                    self._trees.pop(number, None)

    def get(self, key: bytes) -> bytes:
        if self.directory is not None:
            path = self.directory / key.hex()
            if not path.exists():
                raise CasMissing(key.hex())
            return path.read_bytes()
        try:
            return self._blobs[key]
        except KeyError:
            raise CasMissing(key.hex()) from None

    def publish(self, block: Block) -> bytes:
        key = self.put(block.to_bytes())
        with self._write:
            self._index[block.number] = key
            self._trees.pop(block.number, None)
            if self.directory is not None:
                idx = {str(k): v.hex() for k, v in sorted(self._index.items())}
                (self.directory / "index.json").write_text(json.dumps(idx, indent=1))
        return key

    def block_key(self, block_number: int) -> bytes:
        try:
            return self._index[block_number]
        except KeyError:
            raise CasMissing(f"block {block_number}") from None

    def block_numbers(self) -> list[int]:
        return sorted(self._index)

    def _tree(self, block_number: int) -> tuple[MerkleTree, list[bytes]]:
        cached = self._trees.get(block_number)
        if cached is None:
            _, _, records = parse_block(self.get(self.block_key(block_number)))
            if not records:
                raise CasMissing(f"block {block_number} is empty")
            cached = (build_truncated([record_digest(r) for r in records]), records)
            with self._write:
                self._trees[block_number] = cached
        return cached

    def _serve(self, size: int) -> None:
        with self._write:
            self.requests += 1
            self.bytes_served += size

    def get_path(self, block_number: int, local_index: int) -> tuple[bytes, list[bytes]]:
        """Leaf digest and non-NULL adjuncts, leaf to root; no mask is sent."""
        if not self.online:
            raise CasUnavailable("CAS unreachable")
        tree, records = self._tree(block_number)
        if not 0 <= local_index < len(records):
            raise IndexError(f"local index {local_index} outside [0, {len(records)})")
        leaf, path = prove(tree, local_index)
        self._serve(HASH_BYTES * (1 + len(path.adjuncts)))
        return leaf, list(path.adjuncts)

    def get_record(self, block_number: int, local_index: int) -> bytes:
        if not self.online:
            raise CasUnavailable("CAS unreachable")
        _, records = self._tree(block_number)
        if not 0 <= local_index < len(records):
            raise IndexError(f"local index {local_index} outside [0, {len(records)})")
        rec = records[local_index]
        self._serve(len(rec))
        return rec


@dataclass(frozen=True)
class Absent:
    position: int
    bytes_exchanged: int = 0
    present = False


@dataclass(frozen=True)
class Present:
    position: int
    local_index: int
    record_digest: bytes
    path: AdjunctPath
    verified: bool
    bytes_exchanged: int
    record: Optional[bytes] = field(default=None, repr=False)
    present = True


LookupResult = Union[Absent, Present]


def _locate(rot: RootOfTrust, position: int, cas, block_number: int, with_record: bool) -> LookupResult:
    bitmap = rot.bitmap
    if bitmap[position] == "0":
        return Absent(position)
    local = bitmap.count("1", 0, position)
    leaf, adjuncts = cas.get_path(block_number, local)
    sent = HASH_BYTES * (1 + len(adjuncts))
    path = AdjunctPath(local, shape_mask(rot.m, local), tuple(adjuncts))
    ok = verify(rot.root, local, leaf, path, ceil_log2(rot.m))
    record = None
    if with_record:
        record = cas.get_record(block_number, local)
        sent += len(record)
        ok = ok and record_digest(record) == leaf
    return Present(position, local, leaf, path, ok, sent, record)


def client_lookup(rot: RootOfTrust, raw_id: int, cas: CasStore, block_number: int,
                  base_t: int = DEFAULT_ROUNDS, with_record: bool = False) -> LookupResult:
    """Find ``raw_id`` in a block whose root of trust is already authenticated.

    Absence is read off the bitmap with no CAS traffic.  Presence fetches the
    leaf and adjuncts and verifies them against the root hash, rebuilding the
    mask from ``m``.
    """
    if not 0 <= raw_id < rot.n:
        raise ValueError(f"user id {raw_id} outside [0, {rot.n})")
    position = permute(raw_id, perm_params(rot.n, block_number, base_t, rot.extra_rounds))
    return _locate(rot, position, cas, block_number, with_record)


def client_lookup_many(rot: RootOfTrust, raw_ids, cas: CasStore, block_number: int,
                       base_t: int = DEFAULT_ROUNDS, with_record: bool = False) -> list[LookupResult]:
    """``client_lookup`` for several ids with one vectorized permutation."""
    positions = permute_many(raw_ids, perm_params(rot.n, block_number, base_t, rot.extra_rounds))
    return [_locate(rot, int(pos), cas, block_number, with_record) for pos in positions]


def raw_ids_from_bitmap(rot: RootOfTrust, block_number: int, base_t: int = DEFAULT_ROUNDS) -> list[int]:
    """Raw user ids in local-id order, recovered by inverting the permutation."""
    params = perm_params(rot.n, block_number, base_t, rot.extra_rounds)
    return [invert(pos, params) for pos, b in enumerate(rot.bitmap) if b == "1"]


def comm_cost(result: LookupResult, framing: int = 0) -> int:
    """Bytes a client exchanged with CAS for one lookup."""
    if not result.present:
        return 0
    return HASH_BYTES * (1 + len(result.path.adjuncts)) + framing


def sparse_tree(block: Block) -> MerkleTree:
    """Baseline sparse tree indexed by raw user id."""
    size = 1 << max(1, ceil_log2(block.n))
    leaves = [None] * size
    for raw_id, rec in block.records.items():
        leaves[raw_id] = record_digest(rec)
    return build_sparse(leaves)


def sparse_cost(tree: MerkleTree, raw_id: int, framing: int = 0) -> int:
    """Bytes needed to prove presence or absence of ``raw_id`` on the sparse baseline."""
    leaf, path = prove(tree, raw_id)
    return HASH_BYTES * (len(path.adjuncts) + (leaf is not None)) + framing

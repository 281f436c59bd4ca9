"""Block-keyed shuffle-shift permutation of user ids.

One round maps ``i`` to ``rotl(i + v mod n)`` on ``d`` bits, with the round
values ``v`` drawn from an LCG seeded with the block number.  Integer-only, so
results are identical on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LCG_MULTIPLIER = 0x5EED
DEFAULT_ROUNDS = 200
MAX_EXTRA_ROUNDS = 31


@dataclass(frozen=True)
class PermParams:
    """Permutation parameters for one block.

    ``extra_rounds == 0`` disables the permutation entirely; any other value
    is added to ``base_rounds``.
    """

    d: int
    block_number: int
    base_rounds: int = DEFAULT_ROUNDS
    extra_rounds: int = 0

    def __post_init__(self):
        if not 1 <= self.d <= 16:
            raise ValueError(f"domain bits d must be in [1, 16], got {self.d}")
        if not 0 <= self.extra_rounds <= MAX_EXTRA_ROUNDS:
            raise ValueError(f"extra_rounds must be in [0, {MAX_EXTRA_ROUNDS}], got {self.extra_rounds}")
        if self.base_rounds < 0 or self.block_number < 0:
            raise ValueError("base_rounds and block_number must be non-negative")

    @property
    def n(self) -> int:
        return 1 << self.d

    @property
    def enabled(self) -> bool:
        return self.extra_rounds != 0

    @property
    def rounds(self) -> int:
        return self.base_rounds + self.extra_rounds


def sigma(i: int, d: int) -> int:
    """Rotate ``i`` left by one on ``d`` bits; the top bit moves to bit 0."""
    if not 0 <= i < 1 << d:
        raise ValueError(f"{i} is not a {d}-bit value")
    return ((i << 1) | (i >> (d - 1))) & ((1 << d) - 1)


def sigma_inv(i: int, d: int) -> int:
    if not 0 <= i < 1 << d:
        raise ValueError(f"{i} is not a {d}-bit value")
    return (i >> 1) | ((i & 1) << (d - 1))


def tau(i: int, v: int, n: int) -> int:
    if not 0 <= i < n:
        raise ValueError(f"{i} outside [0, {n})")
    return (i + v) % n


def lcg_next(v: int, n: int) -> int:
    return (LCG_MULTIPLIER * v + 1) % n


def round_values(block_number: int, rounds: int, n: int) -> list[int]:
    """v_0 .. v_{rounds-1}, with v_0 the block number reduced mod n."""
    vs = []
    v = block_number % n
    for _ in range(rounds):
        vs.append(v)
        v = lcg_next(v, n)
    return vs


def _check_id(x: int, n: int) -> None:
    if not 0 <= x < n:
        raise ValueError(f"id {x} outside [0, {n})")


def permute(x: int, params: PermParams) -> int:
    n, d = params.n, params.d
    _check_id(x, n)
    if not params.enabled:
        return x
    mask = n - 1
    top = d - 1
    for v in round_values(params.block_number, params.rounds, n):
        x = (x + v) & mask
        x = ((x << 1) | (x >> top)) & mask
    return x


def invert(y: int, params: PermParams) -> int:
    n, d = params.n, params.d
    _check_id(y, n)
    if not params.enabled:
        return y
    mask = n - 1
    top = d - 1
    for v in reversed(round_values(params.block_number, params.rounds, n)):
        y = (y >> 1) | ((y & 1) << top)
        y = (y - v) & mask
    return y


def permute_array(xs, d: int, block_number: int, rounds: int) -> np.ndarray:
    """Vectorized ``rounds`` shuffle-shift rounds applied to every element of ``xs``."""
    n = 1 << d
    x = np.asarray(xs, dtype=np.int64)
    if x.size and (x.min() < 0 or x.max() >= n):
        raise ValueError(f"ids outside [0, {n})")
    for v in round_values(block_number, rounds, n):
        x = apply_round(x, v, d)
    return x


def apply_round(x: np.ndarray, v: int, d: int) -> np.ndarray:
    mask = (1 << d) - 1
    x = (x + v) & mask
    return ((x << 1) | (x >> (d - 1))) & mask


def permute_many(xs, params: PermParams) -> np.ndarray:
    if not params.enabled:
        x = np.asarray(xs, dtype=np.int64)
        if x.size and (x.min() < 0 or x.max() >= params.n):
            raise ValueError(f"ids outside [0, {params.n})")
        return x.copy()
    return permute_array(xs, params.d, params.block_number, params.rounds)


def permutation_table(params: PermParams) -> np.ndarray:
    """Image of every id in ``[0, n)``."""
    return permute_many(np.arange(params.n), params)


@dataclass(frozen=True)
class AvalancheReport:
    d: int
    t: int
    samples: int
    K: np.ndarray
    delta: float


def avalanche(d: int, t: int, block_samples: int = 50, seed: int = 0, block_range: int = 10000) -> AvalancheReport:
    """Bit-flip correlation matrix averaged over all inputs and sampled block numbers.

    ``K[k, l]`` is the frequency with which flipping input bit ``k`` flips
    output bit ``l``; ``delta = max(K - 1/2)``.
    """
    rng = np.random.default_rng(seed)
    blocks = rng.integers(0, block_range + 1, size=block_samples)
    n = 1 << d
    xs = np.arange(n)
    K = np.zeros((d, d))
    bits = np.arange(d)
    for b in blocks:
        image = permute_array(xs, d, int(b), t)
        for k in range(d):
            diff = image ^ image[xs ^ (1 << k)]
            K[k] += ((diff[:, None] >> bits) & 1).sum(axis=0)
    K /= n * block_samples
    return AvalancheReport(d, t, block_samples, K, float((K - 0.5).max()))

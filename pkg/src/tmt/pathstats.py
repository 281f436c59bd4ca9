"""Path-weight statistics of the sparse Merkle tree.

Leaves are occupied independently with probability ``p``.  The weight of a
leaf path is the number of non-NULL adjuncts, i.e. the number of proof hashes
beyond the leaf itself.

Two recurrences are provided:

``pdf``
    The exact law for a tree of height ``k`` (``2**k`` leaves).  The sibling
    subtree at level ``j`` holds ``2**j`` leaves and is NULL with probability
    ``alpha(j, p)``.  This agrees with enumeration and simulation.

``pdf_tabulated``
    The same recurrence with the level index counted from one at the leaves,
    which applies the single-leaf term twice.  It gives the widely quoted
    grid (mean 6.083 at k = 10, p = 0.1) and is what ``tmt stats`` prints
    by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .smt import ceil_log2, shape_mask


@dataclass(frozen=True)
class WeightPdf:
    level: int
    p: float
    probs: tuple[float, ...]

    def __getitem__(self, i: int) -> float:
        return self.probs[i] if 0 <= i < len(self.probs) else 0.0


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"occupancy probability must lie in (0, 1), got {p}")


def alpha(k: int, p: float) -> float:
    """Probability that a subtree rooted at level ``k`` is entirely NULL."""
    _check_p(p)
    if k < 0:
        raise ValueError("level must be non-negative")
    # (1-p)**(2**k) underflows gracefully in log space
    return math.exp(math.ldexp(math.log1p(-p), k))


def _mix(probs: list[float], a: float) -> list[float]:
    out = [0.0] * (len(probs) + 1)
    for i, v in enumerate(probs):
        out[i] += a * v
        out[i + 1] += (1.0 - a) * v
    return out


def pdf(k: int, p: float) -> WeightPdf:
    if k < 1:
        raise ValueError("k must be at least 1")
    probs = [1.0 - p, p]
    for j in range(1, k):
        probs = _mix(probs, alpha(j, p))
    return WeightPdf(k, p, tuple(probs))


def pdf_tabulated(k: int, p: float) -> WeightPdf:
    if k < 1:
        raise ValueError("k must be at least 1")
    probs = [1.0 - p, p]
    for j in range(1, k):
        probs = _mix(probs, alpha(j - 1, p))
    return WeightPdf(k, p, tuple(probs))


def mean_weight(d: WeightPdf) -> float:
    return sum(i * v for i, v in enumerate(d.probs))


def std_weight(d: WeightPdf) -> float:
    mu = mean_weight(d)
    return math.sqrt(sum((i - mu) ** 2 * v for i, v in enumerate(d.probs)))


def tail_prob(d: WeightPdf, l_max: int) -> float:
    """Pr(weight > l_max)."""
    return sum(d.probs[l_max + 1:])


def enumerate_pdf(k: int, p: float) -> WeightPdf:
    """Brute force over all ``2**(2**k)`` occupancy patterns, weighting each by its likelihood.

    Only practical for ``k <= 4``.
    """
    _check_p(p)
    n = 1 << k
    probs = [0.0] * (k + 1)
    for occ in product((0, 1), repeat=n):
        ones = sum(occ)
        like = p**ones * (1 - p) ** (n - ones)
        probs[_weight_of_leaf0(occ, k)] += like
    return WeightPdf(k, p, tuple(probs))


def _weight_of_leaf0(occ, k: int) -> int:
    # sibling of leaf 0's path at level j covers leaves [2**j, 2**(j+1))
    return sum(1 for j in range(k) if any(occ[1 << j:2 << j]))


def monte_carlo_pdf(k: int, p: float, trials: int, rng_seed: int = 0) -> WeightPdf:
    """Empirical weight law of leaf 0 over randomly occupied ``2**k``-leaf trees."""
    if trials < 1:
        raise ValueError("trials must be positive")
    _check_p(p)
    rng = np.random.default_rng(rng_seed)
    weights = np.zeros(trials, dtype=np.int64)
    # the level-j sibling subtree of leaf 0 is non-NULL iff one of its 2**j leaves is occupied
    chunk = max(1, (1 << 22) >> k)
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        occ = rng.random((t, 1 << k)) < p
        w = np.zeros(t, dtype=np.int64)
        for j in range(k):
            w += occ[:, 1 << j:2 << j].any(axis=1)
        weights[done:done + t] = w
        done += t
    counts = np.bincount(weights, minlength=k + 1)
    return WeightPdf(k, p, tuple(float(c) / trials for c in counts))


def total_variation(a: WeightPdf, b: WeightPdf) -> float:
    size = max(len(a.probs), len(b.probs))
    return 0.5 * sum(abs(a[i] - b[i]) for i in range(size))


def truncated_mean_weight(n: int, p: float) -> float:
    """Mean path weight over the occupied leaves of a truncated tree with round(n*p) leaves."""
    _check_p(p)
    if n < 1 or n & (n - 1):
        raise ValueError("n must be a power of two")
    m = round(n * p)
    if m == 0:
        return 0.0
    return sum(bin(shape_mask(m, i)).count("1") for i in range(m)) / m


def sparse_mean_weight(n: int, p: float) -> float:
    """Mean path weight of the sparse tree over ``n`` leaves, exact law."""
    if n == 1:
        return 0.0
    return mean_weight(pdf(ceil_log2(n), p))


def comparison_curve(n: int, ps) -> list[tuple[float, float, float]]:
    """Rows of (p, sparse mean, truncated mean)."""
    return [(p, sparse_mean_weight(n, p), truncated_mean_weight(n, p)) for p in ps]

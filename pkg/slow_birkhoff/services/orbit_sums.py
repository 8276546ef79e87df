"""
Orbit sums over windows of the odometer.
sum_{t=a}^{b-1} g(t) for a digit diagram g read at 2-adic integers t. Splitting
t = 2t' + digit halves the window at every level, so the cost depends on the
diagram height and not on the window length.
"""
import logging
from fractions import Fraction
from typing import Dict, List, Tuple

import numpy as np

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.utils.errors import PreconditionViolated

logger = logging.getLogger(__name__)

# int64 headroom for window endpoints
_INDEX_LIMIT = 1 << 62


def window_sum(node: dd.DigitNode, first: int, stop: int) -> Fraction:
    """Exact sum of node(t) for first <= t < stop."""
    memo: Dict[Tuple[int, int, int], Fraction] = {}

    def walk(g: dd.DigitNode, a: int, b: int) -> Fraction:
        if b <= a:
            return Fraction(0)
        if g.is_leaf:
            return g.value * (b - a)
        key = (id(g), a, b)
        if key not in memo:
            memo[key] = walk(g.zero, (a + 1) // 2, (b + 1) // 2) + walk(g.one, a // 2, b // 2)
        return memo[key]

    return walk(node, first, stop)


def _merge(parts: List[Tuple[np.ndarray, ...]]) -> Tuple[np.ndarray, ...]:
    if len(parts) == 1:
        return parts[0]
    idx = np.concatenate([p[0] for p in parts])
    a = np.concatenate([p[1] for p in parts])
    b = np.concatenate([p[2] for p in parts])
    mult = np.concatenate([p[3] for p in parts])
    keys, inverse = np.unique(np.stack([idx, a, b], axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    merged = np.zeros(len(keys), dtype=np.int64)
    np.add.at(merged, inverse, mult)
    return keys[:, 0], keys[:, 1], keys[:, 2], merged


def window_sums(node: dd.DigitNode, firsts, count: int) -> Tuple[np.ndarray, int]:
    """Sums of node(t) over first <= t < first + count, for many firsts at once.

    Returns:
        (sums, scale): an object array of Python ints and the integer scale, so that
        sums[i] / scale is the exact sum for firsts[i]
    """
    firsts = np.asarray(firsts, dtype=np.int64).reshape(-1)
    size = firsts.size
    scale = dd.scale(node)
    totals = np.zeros(size, dtype=object)
    if count <= 0 or size == 0:
        return totals, scale
    if int(firsts.min()) <= -_INDEX_LIMIT or int(firsts.max()) + count >= _INDEX_LIMIT:
        raise PreconditionViolated(f"Orbit window of length {count} leaves the int64 range")
    if node.is_leaf:
        totals[:] = int(node.value * scale) * count
        return totals, scale

    pending: Dict[int, List[Tuple[np.ndarray, ...]]] = {}
    by_height: Dict[int, Dict[int, dd.DigitNode]] = {}
    leaf_counts: Dict[int, Tuple[dd.DigitNode, np.ndarray]] = {}

    def push(g: dd.DigitNode, idx, a, b, mult):
        keep = b > a
        if not keep.any():
            return
        if g is dd.ZERO:
            return
        by_height.setdefault(g.height, {})[id(g)] = g
        pending.setdefault(id(g), []).append((idx[keep], a[keep], b[keep], mult[keep]))

    push(node, np.arange(size, dtype=np.int64), firsts, firsts + count, np.ones(size, dtype=np.int64))

    for height in range(node.height, -1, -1):
        for key, g in by_height.pop(height, {}).items():
            idx, a, b, mult = _merge(pending.pop(key))
            if g.is_leaf:
                _, counts = leaf_counts.setdefault(key, (g, np.zeros(size, dtype=np.int64)))
                np.add.at(counts, idx, (b - a) * mult)
                continue
            push(g.zero, idx, (a + 1) // 2, (b + 1) // 2, mult)
            push(g.one, idx, a // 2, b // 2, mult)

    for g, counts in leaf_counts.values():
        totals += counts.astype(object) * int(g.value * scale)
    return totals, scale

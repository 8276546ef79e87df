"""
Binary digit diagrams.
Reduced, hash-consed decision diagrams over the binary digits of x in [0,1).
A node branches on the next digit of x (digit 1, the most significant, first);
leaves carry exact rationals. Any step function with dyadic breakpoints is a
diagram, and identical sub-functions share one node.

Reading the digits b1 b2 ... of x as the 2-adic integer r = b1 + 2*b2 + 4*b3 + ...
turns the odometer into r -> r + 1, so the digit diagram of g o T^k is the
diagram of g read at r + k (see shift).
"""
import logging
import weakref
from fractions import Fraction
from math import lcm
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from slow_birkhoff.utils.errors import MaterializationLimitExceeded

logger = logging.getLogger(__name__)


class DigitNode:
    """A diagram node. Build nodes with leaf() and branch(), never directly."""

    __slots__ = ("zero", "one", "value", "height", "_mean", "_scale", "__weakref__")

    def __init__(self, zero: Optional["DigitNode"], one: Optional["DigitNode"], value: Optional[Fraction]):
        self.zero = zero
        self.one = one
        self.value = value
        self.height = 0 if value is not None else 1 + max(zero.height, one.height)
        self._mean: Optional[Fraction] = None
        self._scale: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def child(self, digit: int) -> "DigitNode":
        if self.is_leaf:
            return self
        return self.one if digit else self.zero

    def __repr__(self) -> str:
        if self.is_leaf:
            return f"DigitNode(leaf={self.value})"
        return f"DigitNode(height={self.height}, id={id(self):#x})"


# ==========================================
# CONSTRUCTION
# ==========================================

_leaves: "weakref.WeakValueDictionary[Fraction, DigitNode]" = weakref.WeakValueDictionary()
_branches: "weakref.WeakValueDictionary[Tuple[int, int], DigitNode]" = weakref.WeakValueDictionary()


def leaf(value) -> DigitNode:
    """The unique leaf with the given rational value."""
    value = Fraction(value)
    node = _leaves.get(value)
    if node is None:
        node = DigitNode(None, None, value)
        _leaves[value] = node
    return node


def branch(zero: DigitNode, one: DigitNode) -> DigitNode:
    """The unique node reading digit 0 into `zero` and digit 1 into `one`.

    Only equal leaves collapse; an inner child shared by both halves still reads this digit.
    """
    if zero is one and zero.is_leaf:
        return zero
    key = (id(zero), id(one))
    node = _branches.get(key)
    if node is None:
        node = DigitNode(zero, one, None)
        _branches[key] = node
    return node


ZERO = leaf(0)
ONE = leaf(1)


def table_size() -> int:
    return len(_leaves) + len(_branches)


# ==========================================
# POINTWISE OPERATIONS
# ==========================================

_BINARY_OPS: Dict[str, Callable[[Fraction, Fraction], Fraction]] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "min": min,
    "max": max,
}

# entries hold their operands so the id keys stay valid
_apply_memo: Dict[Tuple[str, int, int], Tuple[DigitNode, DigitNode, DigitNode]] = {}


def apply(op: str, a: DigitNode, b: DigitNode) -> DigitNode:
    """Combine two diagrams pointwise with one of add, sub, mul, min, max."""
    fn = _BINARY_OPS[op]

    def walk(x: DigitNode, y: DigitNode) -> DigitNode:
        if x.is_leaf and y.is_leaf:
            return leaf(fn(x.value, y.value))
        if op == "mul":
            if x is ZERO or y is ZERO:
                return ZERO
            if x is ONE:
                return y
            if y is ONE:
                return x
        key = (op, id(x), id(y))
        hit = _apply_memo.get(key)
        if hit is not None:
            return hit[2]
        node = branch(walk(x.child(0), y.child(0)), walk(x.child(1), y.child(1)))
        _apply_memo[key] = (x, y, node)
        return node

    return walk(a, b)


def scale_by(node: DigitNode, factor) -> DigitNode:
    """Multiply every leaf by a rational factor."""
    return apply("mul", node, leaf(factor))


# ==========================================
# QUERIES
# ==========================================

def mean(node: DigitNode) -> Fraction:
    """Exact Lebesgue integral of the diagram over [0,1)."""
    if node.is_leaf:
        return node.value
    if node._mean is None:
        node._mean = (mean(node.zero) + mean(node.one)) / 2
    return node._mean


def scale(node: DigitNode) -> int:
    """Least common multiple of the leaf denominators."""
    if node.is_leaf:
        return node.value.denominator
    if node._scale is None:
        node._scale = lcm(scale(node.zero), scale(node.one))
    return node._scale


def leaf_values(node: DigitNode) -> List[Fraction]:
    """Distinct leaf values reachable from node, sorted."""
    seen = set()
    values = set()
    stack = [node]
    while stack:
        current = stack.pop()
        if id(current) in seen:
            continue
        seen.add(id(current))
        if current.is_leaf:
            values.add(current.value)
        else:
            stack.extend((current.zero, current.one))
    return sorted(values)


def evaluate(node: DigitNode, r: int) -> Fraction:
    """Value at the point whose digits are the 2-adic integer r (digit 1 is the lowest bit)."""
    while not node.is_leaf:
        node = node.one if r & 1 else node.zero
        r >>= 1
    return node.value


def cells(node: DigitNode, limit: Optional[int] = None) -> Iterator[Tuple[int, int, Fraction]]:
    """Yield (index, depth, value) for the leaf cells [index/2^depth, (index+1)/2^depth) in x order.

    Raises:
        MaterializationLimitExceeded: once more than `limit` cells have been produced
    """
    produced = 0
    stack = [(node, 0, 0)]
    while stack:
        current, index, depth = stack.pop()
        if current.is_leaf:
            produced += 1
            if limit is not None and produced > limit:
                raise MaterializationLimitExceeded(
                    f"Explicit form needs more than {limit} cells (diagram height {node.height})"
                )
            yield index, depth, current.value
            continue
        # one pushed first so the lower half comes out first
        stack.append((current.one, 2 * index + 1, depth + 1))
        stack.append((current.zero, 2 * index, depth + 1))


# ==========================================
# SETS AND RUNS
# ==========================================

def interval_indicator(lo: int, hi: int, exponent: int) -> DigitNode:
    """Indicator of [lo/2^exponent, hi/2^exponent) with 0 <= lo <= hi <= 2^exponent."""
    memo: Dict[Tuple[int, int, int], DigitNode] = {}

    def build(a: int, b: int, bits: int) -> DigitNode:
        size = 1 << bits
        a, b = max(a, 0), min(b, size)
        if a >= b:
            return ZERO
        if a == 0 and b == size:
            return ONE
        key = (a, b, bits)
        if key not in memo:
            half = size >> 1
            memo[key] = branch(build(a, b, bits - 1), build(a - half, b - half, bits - 1))
        return memo[key]

    return build(lo, hi, exponent)


def residue_run(lo: int, hi: int, bits: int) -> DigitNode:
    """Indicator of {r : lo <= r mod 2^bits < hi} for 0 <= lo <= hi <= 2^bits."""
    memo: Dict[Tuple[int, int, int], DigitNode] = {}

    def build(a: int, b: int, j: int) -> DigitNode:
        if a >= b:
            return ZERO
        if a <= 0 and b >= 1 << j:
            return ONE
        key = (a, b, j)
        if key not in memo:
            # r = 2r' + digit
            even = build((a + 1) // 2, (b + 1) // 2, j - 1)
            odd = build(a // 2, b // 2, j - 1)
            memo[key] = branch(even, odd)
        return memo[key]

    return build(lo, hi, bits)


def cyclic_run(start: int, length: int, bits: int) -> DigitNode:
    """Indicator of {r : (r - start) mod 2^bits < length}."""
    period = 1 << bits
    if length >= period:
        return ONE
    if length <= 0:
        return ZERO
    s = start % period
    if s + length <= period:
        return residue_run(s, s + length, bits)
    return apply("add", residue_run(s, period, bits), residue_run(0, s + length - period, bits))


# ==========================================
# ODOMETER PULLBACK
# ==========================================

_shift_memo: Dict[Tuple[int, int], Tuple[DigitNode, DigitNode]] = {}


def shift(node: DigitNode, k: int) -> DigitNode:
    """Diagram of x -> node(T^k x) for any integer k."""

    def walk(g: DigitNode, j: int) -> DigitNode:
        if j == 0 or g.is_leaf:
            return g
        key = (id(g), j)
        hit = _shift_memo.get(key)
        if hit is not None:
            return hit[1]
        half, carry = j >> 1, j & 1
        if carry == 0:
            result = branch(walk(g.zero, half), walk(g.one, half))
        else:
            # r = 2r' + b: digit 0 lands on 1, digit 1 carries into r' + half + 1
            result = branch(walk(g.one, half), walk(g.zero, half + 1))
        _shift_memo[key] = (g, result)
        return result

    return walk(node, k)


def clear_memos() -> None:
    """Drop operation memos; hash-consed nodes stay valid."""
    _apply_memo.clear()
    _shift_memo.clear()
    logger.debug(f"Cleared diagram memos, {table_size()} nodes in table")


# ==========================================
# DIGIT ORDER
# ==========================================

def reverse_bits(value: int, width: int) -> int:
    """Reverse the low `width` bits of a non-negative integer."""
    if width <= 0:
        return 0
    return int(format(value, f"0{width}b")[::-1], 2)

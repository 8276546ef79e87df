"""
Dyadic Sets
Exact dyadic rationals, canonical finite unions of half-open intervals in [0,1)
and disjoint box sets in [0,1)^n, with exact measure.
"""
import bisect
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from itertools import product
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.utils.config import get_settings
from slow_birkhoff.utils.errors import RankCapExceeded
from slow_birkhoff.utils.rationals import parse_rational

logger = logging.getLogger(__name__)

_INTERVAL_TEXT = re.compile(r"\[\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)")


# ==========================================
# POINTS
# ==========================================

@total_ordering
@dataclass(frozen=True)
class Dyadic:
    """The rational numerator / 2^exponent, kept in canonical form."""

    numerator: int
    exponent: int = 0

    def __post_init__(self):
        n, e = int(self.numerator), int(self.exponent)
        if e < 0:
            raise ValueError(f"Dyadic exponent must be non-negative, got {e}")
        if n == 0:
            e = 0
        elif e > 0:
            trailing = min((n & -n).bit_length() - 1, e)
            n, e = n >> trailing, e - trailing
        object.__setattr__(self, "numerator", n)
        object.__setattr__(self, "exponent", e)

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.exponent)

    def __lt__(self, other):
        if not isinstance(other, Dyadic):
            return NotImplemented
        # compare n1 * 2^e2 with n2 * 2^e1 without building Fractions
        return self.numerator << other.exponent < other.numerator << self.exponent

    def __float__(self) -> float:
        return self.numerator / (1 << self.exponent)

    def __str__(self) -> str:
        return f"{self.numerator}/2^{self.exponent}"

    @property
    def is_point(self) -> bool:
        """True if the value lies in the phase space [0,1)."""
        return 0 <= self.numerator < (1 << self.exponent)

    def scaled(self, exponent: int) -> int:
        """Numerator over 2^exponent (exponent must be at least self.exponent)."""
        if exponent < self.exponent:
            raise ValueError(f"{self} is not a multiple of 2^-{exponent}")
        return self.numerator << (exponent - self.exponent)

    @classmethod
    def from_fraction(cls, value) -> "Dyadic":
        """Build from a rational whose denominator is a power of two."""
        q = parse_rational(value)
        d = q.denominator
        if d & (d - 1):
            raise ValueError(f"{q} is not a dyadic rational")
        return check_rank(cls(q.numerator, d.bit_length() - 1))

    @classmethod
    def parse(cls, text: str) -> "Dyadic":
        """Parse "num/2^exp", "p/q" with q a power of two, or an integer."""
        return cls.from_fraction(text)


def as_dyadic(value: Union["Dyadic", Fraction, int, str]) -> Dyadic:
    return value if isinstance(value, Dyadic) else Dyadic.from_fraction(value)


def check_rank(x: Dyadic, cap: Optional[int] = None) -> Dyadic:
    """Pass x through when it fits within the rank cap.

    Raises:
        RankCapExceeded: if x needs more binary digits than the rank cap
    """
    if cap is None:
        cap = get_settings().rank_cap
    if x.exponent > cap:
        raise RankCapExceeded(f"Dyadic {x} is deeper than rank cap {cap}")
    return x


# ==========================================
# INTERVALS
# ==========================================

@dataclass(frozen=True)
class DyadicInterval:
    """Half-open interval [lo, hi) inside [0,1]."""

    lo: Dyadic
    hi: Dyadic

    def __post_init__(self):
        lo, hi = as_dyadic(self.lo), as_dyadic(self.hi)
        if not (Dyadic(0) <= lo < hi <= Dyadic(1)):
            raise ValueError(f"Invalid interval [{lo},{hi}): need 0 <= lo < hi <= 1")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> Fraction:
        return self.hi.value - self.lo.value

    @property
    def rank(self) -> int:
        return max(self.lo.exponent, self.hi.exponent)

    def contains(self, x) -> bool:
        x = as_dyadic(x)
        return self.lo <= x < self.hi

    def intersect(self, other: "DyadicInterval") -> Optional["DyadicInterval"]:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        return DyadicInterval(lo, hi) if lo < hi else None

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi})"

    @classmethod
    def parse(cls, text: str) -> "DyadicInterval":
        match = _INTERVAL_TEXT.fullmatch(text.strip())
        if not match:
            raise ValueError(f"Not an interval of the form '[lo,hi)': {text!r}")
        return cls(Dyadic.parse(match.group(1)), Dyadic.parse(match.group(2)))


def _merge_intervals(intervals: Iterable[DyadicInterval]) -> Tuple[DyadicInterval, ...]:
    """Sort, then merge overlapping and touching intervals."""
    merged: List[DyadicInterval] = []
    start = stop = None
    for itv in sorted(intervals, key=lambda i: (i.lo, i.hi)):
        if start is None:
            start, stop = itv.lo, itv.hi
            continue
        if itv.lo > stop:
            merged.append(DyadicInterval(start, stop))
            start, stop = itv.lo, itv.hi
        elif itv.hi > stop:
            stop = itv.hi
    if start is not None:
        merged.append(DyadicInterval(start, stop))
    return tuple(merged)


def _sweep(a: Sequence[DyadicInterval], b: Sequence[DyadicInterval], op) -> List[DyadicInterval]:
    """Combine two canonical interval lists with a boolean membership rule."""
    a_points = [p for itv in a for p in (itv.lo, itv.hi)]
    b_points = [p for itv in b for p in (itv.lo, itv.hi)]
    sentinel = Dyadic(2)
    a_points.append(sentinel)
    b_points.append(sentinel)

    a_index = b_index = 0
    result: List[Dyadic] = []
    scan = min(a_points[0], b_points[0])
    while scan < sentinel:
        # inside iff strictly before an odd (closing) endpoint, or exactly on an even one
        in_a = (scan < a_points[a_index]) == (a_index % 2 == 1)
        in_b = (scan < b_points[b_index]) == (b_index % 2 == 1)
        if op(in_a, in_b) != (len(result) % 2 == 1):
            result.append(scan)
        if scan == a_points[a_index]:
            a_index += 1
        if scan == b_points[b_index]:
            b_index += 1
        scan = min(a_points[a_index], b_points[b_index])

    return [DyadicInterval(result[i], result[i + 1]) for i in range(0, len(result) - 1, 2)]


@dataclass(frozen=True)
class IntervalSet:
    """Canonical finite union of dyadic intervals: sorted, disjoint, maximally merged."""

    intervals: Tuple[DyadicInterval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", _merge_intervals(self.intervals))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls()

    @classmethod
    def full(cls) -> "IntervalSet":
        return cls((DyadicInterval(Dyadic(0), Dyadic(1)),))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple]) -> "IntervalSet":
        return cls(tuple(DyadicInterval(as_dyadic(lo), as_dyadic(hi)) for lo, hi in pairs))

    @classmethod
    def parse(cls, items: Iterable[str]) -> "IntervalSet":
        return cls(tuple(DyadicInterval.parse(item) for item in items))

    @classmethod
    def from_diagram(cls, node: dd.DigitNode, limit: Optional[int] = None) -> "IntervalSet":
        """Support of a digit diagram as explicit intervals."""
        settings = get_settings()
        if limit is None:
            limit = settings.interval_limit
        pieces = []
        for index, depth, value in dd.cells(node, limit):
            if depth > settings.rank_cap:
                raise RankCapExceeded(f"Set boundary at depth {depth} is deeper than rank cap {settings.rank_cap}")
            if value != 0:
                pieces.append(DyadicInterval(Dyadic(index, depth), Dyadic(index + 1, depth)))
        return cls(tuple(pieces))

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __str__(self) -> str:
        return "{" + ",".join(str(itv) for itv in self.intervals) + "}"

    def to_strings(self) -> List[str]:
        return [str(itv) for itv in self.intervals]

    @property
    def dimension(self) -> int:
        return 1

    @property
    def rank(self) -> int:
        return max((itv.rank for itv in self.intervals), default=0)

    def measure(self) -> Fraction:
        return sum((itv.length for itv in self.intervals), Fraction(0))

    def contains(self, x) -> bool:
        x = as_dyadic(x)
        i = bisect.bisect_right([itv.lo for itv in self.intervals], x) - 1
        return i >= 0 and x < self.intervals[i].hi

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self.intervals + other.intervals)

    def intersection(self, other: "IntervalSet") -> "IntervalSet":
        if not self.intervals or not other.intervals:
            return IntervalSet()
        return IntervalSet(tuple(_sweep(self.intervals, other.intervals, lambda a, b: a and b)))

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        if not self.intervals or not other.intervals:
            return self
        return IntervalSet(tuple(_sweep(self.intervals, other.intervals, lambda a, b: a and not b)))

    def complement(self) -> "IntervalSet":
        return IntervalSet.full().difference(self)

    def to_diagram(self) -> dd.DigitNode:
        """Indicator of the set as a digit diagram."""
        exponent = self.rank
        node = dd.ZERO
        for itv in self.intervals:
            part = dd.interval_indicator(itv.lo.scaled(exponent), itv.hi.scaled(exponent), exponent)
            node = dd.apply("add", node, part)
        return node


# ==========================================
# BOXES
# ==========================================

Box = Tuple[DyadicInterval, ...]


def _box_intersect(a: Box, b: Box) -> Optional[Box]:
    parts = []
    for x, y in zip(a, b):
        common = x.intersect(y)
        if common is None:
            return None
        parts.append(common)
    return tuple(parts)


def _complement_boxes(boxes: List[Box], dimension: int) -> List[Box]:
    """Disjoint boxes covering [0,1)^dimension minus the union of `boxes`."""
    if dimension == 1:
        rest = IntervalSet(tuple(box[0] for box in boxes)).complement()
        return [(itv,) for itv in rest]
    cuts = sorted({Dyadic(0), Dyadic(1)} | {p for box in boxes for p in (box[0].lo, box[0].hi)})
    result: List[Box] = []
    for lo, hi in zip(cuts, cuts[1:]):
        covering = [box[1:] for box in boxes if box[0].lo <= lo and hi <= box[0].hi]
        slab = DyadicInterval(lo, hi)
        result.extend((slab,) + tail for tail in _complement_boxes(covering, dimension - 1))
    return result


@dataclass(frozen=True)
class BoxSet:
    """Finite union of pairwise-disjoint dyadic boxes in [0,1)^n."""

    dimension: int
    boxes: Tuple[Box, ...] = field(default=())

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("BoxSet dimension must be at least 1")
        boxes = tuple(tuple(box) for box in self.boxes)
        for box in boxes:
            if len(box) != self.dimension:
                raise ValueError(f"Box {box} does not have dimension {self.dimension}")
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                if _box_intersect(a, b) is not None:
                    raise ValueError("BoxSet boxes must be pairwise disjoint")
        object.__setattr__(self, "boxes", tuple(sorted(boxes, key=lambda box: [(i.lo, i.hi) for i in box])))

    @classmethod
    def empty(cls, dimension: int) -> "BoxSet":
        return cls(dimension)

    @classmethod
    def full(cls, dimension: int) -> "BoxSet":
        unit = DyadicInterval(Dyadic(0), Dyadic(1))
        return cls(dimension, ((unit,) * dimension,))

    @classmethod
    def product(cls, sets: Sequence[IntervalSet]) -> "BoxSet":
        """The product set_1 x ... x set_n as disjoint boxes."""
        return cls(len(sets), tuple(product(*(s.intervals for s in sets))))

    @classmethod
    def parse(cls, items: Sequence[Sequence[str]], dimension: Optional[int] = None) -> "BoxSet":
        boxes = tuple(tuple(DyadicInterval.parse(text) for text in box) for box in items)
        if dimension is None:
            if not boxes:
                raise ValueError("Cannot infer the dimension of an empty box list")
            dimension = len(boxes[0])
        return cls(dimension, boxes)

    def to_strings(self) -> List[List[str]]:
        return [[str(itv) for itv in box] for box in self.boxes]

    def __iter__(self):
        return iter(self.boxes)

    def __len__(self) -> int:
        return len(self.boxes)

    def __bool__(self) -> bool:
        return bool(self.boxes)

    @property
    def rank(self) -> int:
        return max((itv.rank for box in self.boxes for itv in box), default=0)

    def measure(self) -> Fraction:
        total = Fraction(0)
        for box in self.boxes:
            volume = Fraction(1)
            for itv in box:
                volume *= itv.length
            total += volume
        return total

    def contains(self, point: Sequence) -> bool:
        point = [as_dyadic(x) for x in point]
        return any(all(itv.contains(x) for itv, x in zip(box, point)) for box in self.boxes)

    def _check_dimension(self, other: "BoxSet"):
        if other.dimension != self.dimension:
            raise ValueError(f"Dimension mismatch: {self.dimension} vs {other.dimension}")

    def intersection(self, other: "BoxSet") -> "BoxSet":
        self._check_dimension(other)
        parts = []
        for a in self.boxes:
            for b in other.boxes:
                common = _box_intersect(a, b)
                if common is not None:
                    parts.append(common)
        return BoxSet(self.dimension, tuple(parts))

    def complement(self) -> "BoxSet":
        return BoxSet(self.dimension, tuple(_complement_boxes(list(self.boxes), self.dimension)))

    def difference(self, other: "BoxSet") -> "BoxSet":
        return self.intersection(other.complement())

    def union(self, other: "BoxSet") -> "BoxSet":
        self._check_dimension(other)
        return BoxSet(self.dimension, self.boxes + other.difference(self).boxes)

    def to_diagrams(self) -> List[Tuple[dd.DigitNode, ...]]:
        """One tuple of per-coordinate interval indicators per box."""
        terms = []
        for box in self.boxes:
            nodes = []
            for itv in box:
                e = itv.rank
                nodes.append(dd.interval_indicator(itv.lo.scaled(e), itv.hi.scaled(e), e))
            terms.append(tuple(nodes))
        return terms


# ==========================================
# OPERATIONS
# ==========================================

def set_union(a, b):
    """Canonical union of two sets of the same kind."""
    return a.union(b)


def set_complement(a):
    """Complement within [0,1)^n."""
    return a.complement()


def measure(a) -> Fraction:
    """Exact Lebesgue measure of an IntervalSet, BoxSet or Region."""
    return a.measure()

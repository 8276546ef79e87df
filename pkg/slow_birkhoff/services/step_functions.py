"""
Step Functions
Non-negative piecewise-constant functions on [0,1)^n with dyadic breakpoints,
stored as sums of separable products of digit diagrams, and exact regions
built on them.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.dyadic_sets import BoxSet, Dyadic, DyadicInterval, IntervalSet, as_dyadic
from slow_birkhoff.utils.config import PieceConfig, get_settings
from slow_birkhoff.utils.errors import MaterializationLimitExceeded
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)

Term = Tuple[Fraction, Tuple[dd.DigitNode, ...]]


def _normalize(dimension: int, terms) -> Tuple[Term, ...]:
    if dimension == 1:
        node = dd.ZERO
        for coef, (g,) in terms:
            node = dd.apply("add", node, dd.scale_by(g, coef))
        return () if node is dd.ZERO else ((Fraction(1), (node,)),)

    combined: Dict[Tuple[int, ...], List] = {}
    for coef, nodes in terms:
        coef = Fraction(coef)
        factors = []
        for g in nodes:
            if g.is_leaf:
                coef *= g.value
                factors.append(dd.ONE)
            else:
                factors.append(g)
        if coef == 0:
            continue
        key = tuple(id(g) for g in factors)
        if key in combined:
            combined[key][0] += coef
        else:
            combined[key] = [coef, tuple(factors)]
    return tuple((coef, nodes) for coef, nodes in combined.values() if coef != 0)


@dataclass(frozen=True)
class StepFunction:
    """f(x) = sum over terms of coef * prod_j g_j(x_j)."""

    dimension: int
    terms: Tuple[Term, ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        for _, nodes in self.terms:
            if len(nodes) != self.dimension:
                raise ValueError(f"term has {len(nodes)} factors, expected {self.dimension}")
        object.__setattr__(self, "terms", _normalize(self.dimension, self.terms))

    # ---- construction ----

    @classmethod
    def constant(cls, value, dimension: int = 1) -> "StepFunction":
        return cls(dimension, ((parse_rational(value), (dd.ONE,) * dimension),))

    @classmethod
    def zero(cls, dimension: int = 1) -> "StepFunction":
        return cls(dimension)

    @classmethod
    def from_diagram(cls, node: dd.DigitNode) -> "StepFunction":
        return cls(1, ((Fraction(1), (node,)),))

    @classmethod
    def indicator(cls, region, dimension: Optional[int] = None) -> "StepFunction":
        """0/1 function of an IntervalSet, BoxSet or Region."""
        if isinstance(region, Region):
            return region.function
        if isinstance(region, IntervalSet):
            return cls.from_diagram(region.to_diagram())
        if isinstance(region, BoxSet):
            return cls(region.dimension, tuple((Fraction(1), nodes) for nodes in region.to_diagrams()))
        raise TypeError(f"Not a set: {region!r}")

    @classmethod
    def from_pieces(cls, pieces: Sequence[Tuple[object, object]], dimension: int) -> "StepFunction":
        """Build from (region, value) pairs whose regions partition [0,1)^n.

        Raises:
            ValueError: if a value is negative or the regions overlap or leave a gap
        """
        regions = []
        terms: List[Term] = []
        for region, value in pieces:
            value = parse_rational(value)
            if value < 0:
                raise ValueError(f"Step function values must be non-negative, got {format_rational(value)}")
            r = as_region(region, dimension)
            regions.append(r)
            terms.extend((coef * value, nodes) for coef, nodes in r.function.terms)

        total = Fraction(0)
        for i, a in enumerate(regions):
            total += a.measure()
            for b in regions[i + 1:]:
                if a.intersection(b).measure() != 0:
                    raise ValueError("Step function pieces overlap")
        if total != 1:
            raise ValueError(f"Step function pieces cover measure {format_rational(total)}, not 1")
        return cls(dimension, tuple(terms))

    # ---- arithmetic ----

    def _check(self, other: "StepFunction"):
        if other.dimension != self.dimension:
            raise ValueError(f"Dimension mismatch: {self.dimension} vs {other.dimension}")

    def __add__(self, other) -> "StepFunction":
        if not isinstance(other, StepFunction):
            other = StepFunction.constant(other, self.dimension)
        self._check(other)
        return StepFunction(self.dimension, self.terms + other.terms)

    __radd__ = __add__

    def __neg__(self) -> "StepFunction":
        return StepFunction(self.dimension, tuple((-c, nodes) for c, nodes in self.terms))

    def __sub__(self, other) -> "StepFunction":
        if not isinstance(other, StepFunction):
            other = StepFunction.constant(other, self.dimension)
        return self + (-other)

    def __rsub__(self, other) -> "StepFunction":
        return StepFunction.constant(other, self.dimension) - self

    def __mul__(self, other) -> "StepFunction":
        if not isinstance(other, StepFunction):
            factor = parse_rational(other)
            return StepFunction(self.dimension, tuple((c * factor, nodes) for c, nodes in self.terms))
        self._check(other)
        terms = []
        for c1, n1 in self.terms:
            for c2, n2 in other.terms:
                terms.append((c1 * c2, tuple(dd.apply("mul", a, b) for a, b in zip(n1, n2))))
        return StepFunction(self.dimension, tuple(terms))

    __rmul__ = __mul__

    # ---- queries ----

    @property
    def node(self) -> dd.DigitNode:
        """The single diagram of a one-dimensional function."""
        if self.dimension != 1:
            raise ValueError("node is only defined for dimension 1")
        return self.terms[0][1][0] if self.terms else dd.ZERO

    @property
    def rank(self) -> int:
        return max((g.height for _, nodes in self.terms for g in nodes), default=0)

    def integral(self) -> Fraction:
        """Exact integral over [0,1)^n."""
        total = Fraction(0)
        for coef, nodes in self.terms:
            part = coef
            for g in nodes:
                part *= dd.mean(g)
            total += part
        return total

    def evaluate(self, point) -> Fraction:
        """Exact value at a dyadic point (a Dyadic when n = 1, else a sequence)."""
        coords = [point] if self.dimension == 1 and not isinstance(point, (list, tuple)) else list(point)
        if len(coords) != self.dimension:
            raise ValueError(f"Point has {len(coords)} coordinates, expected {self.dimension}")
        digits = []
        for x in coords:
            x = as_dyadic(x)
            digits.append(dd.reverse_bits(x.numerator, x.exponent))
        total = Fraction(0)
        for coef, nodes in self.terms:
            part = coef
            for g, r in zip(nodes, digits):
                part *= dd.evaluate(g, r)
            total += part
        return total

    def value_bounds(self) -> Tuple[Fraction, Fraction]:
        """Exact (min, max) over [0,1)^n."""
        if self.dimension == 1:
            values = dd.leaf_values(self.node)
            return values[0], values[-1]
        values = [value for _, value in _grid_values(self)]
        return min(values), max(values)

    def restrict(self, region) -> "StepFunction":
        return self * StepFunction.indicator(region, self.dimension)

    def __repr__(self) -> str:
        return f"StepFunction(dimension={self.dimension}, terms={len(self.terms)}, rank={self.rank})"


def _coordinate_cuts(f: StepFunction, axis: int) -> List[Dyadic]:
    points = {Dyadic(0), Dyadic(1)}
    limit = get_settings().interval_limit
    for _, nodes in f.terms:
        for index, depth, _ in dd.cells(nodes[axis], limit):
            points.add(Dyadic(index, depth))
    return sorted(points)


def _grid_values(f: StepFunction):
    """Yield (cell, value) over the common refinement of all factor partitions."""
    cuts = [_coordinate_cuts(f, axis) for axis in range(f.dimension)]
    size = 1
    for c in cuts:
        size *= len(c) - 1
    limit = get_settings().interval_limit
    if size > limit:
        raise MaterializationLimitExceeded(f"Grid of {size} cells exceeds interval limit {limit}")

    # per term and axis, the factor value on each elementary interval
    tables = []
    for coef, nodes in f.terms:
        per_axis = []
        for axis, g in enumerate(nodes):
            per_axis.append([dd.evaluate(g, dd.reverse_bits(p.numerator, p.exponent)) for p in cuts[axis][:-1]])
        tables.append((coef, per_axis))

    for idx in product(*(range(len(c) - 1) for c in cuts)):
        value = Fraction(0)
        for coef, per_axis in tables:
            part = coef
            for axis, i in enumerate(idx):
                part *= per_axis[axis][i]
                if part == 0:
                    break
            value += part
        cell = tuple(DyadicInterval(cuts[axis][i], cuts[axis][i + 1]) for axis, i in enumerate(idx))
        yield cell, value


# ==========================================
# REGIONS
# ==========================================

@dataclass(frozen=True)
class Region:
    """Exact subset of [0,1)^n held as its 0/1 indicator function."""

    function: StepFunction

    @property
    def dimension(self) -> int:
        return self.function.dimension

    @classmethod
    def full(cls, dimension: int = 1) -> "Region":
        return cls(StepFunction.constant(1, dimension))

    @classmethod
    def empty(cls, dimension: int = 1) -> "Region":
        return cls(StepFunction.zero(dimension))

    @classmethod
    def product(cls, factors: Sequence[dd.DigitNode]) -> "Region":
        """Product of one-dimensional indicator diagrams."""
        return cls(StepFunction(len(factors), ((Fraction(1), tuple(factors)),)))

    def union(self, other) -> "Region":
        a, b = self.function, as_region(other, self.dimension).function
        return Region(a + b - a * b)

    def intersection(self, other) -> "Region":
        return Region(self.function * as_region(other, self.dimension).function)

    def complement(self) -> "Region":
        return Region(1 - self.function)

    def difference(self, other) -> "Region":
        return self.intersection(as_region(other, self.dimension).complement())

    def measure(self) -> Fraction:
        return self.function.integral()

    def contains(self, point) -> bool:
        return self.function.evaluate(point) != 0

    def to_interval_set(self, limit: Optional[int] = None) -> IntervalSet:
        if self.dimension != 1:
            raise ValueError("to_interval_set needs a one-dimensional region")
        return IntervalSet.from_diagram(self.function.node, limit)

    def to_box_set(self) -> BoxSet:
        """Explicit disjoint boxes (subject to the interval limit)."""
        if self.dimension == 1:
            return BoxSet(1, tuple((itv,) for itv in self.to_interval_set()))
        rows: Dict[Tuple[DyadicInterval, ...], List[DyadicInterval]] = {}
        for cell, value in _grid_values(self.function):
            if value != 0:
                rows.setdefault(cell[:-1], []).append(cell[-1])
        boxes = []
        for prefix, last in rows.items():
            boxes.extend(prefix + (itv,) for itv in IntervalSet(tuple(last)))
        return BoxSet(self.dimension, tuple(boxes))


def as_region(value, dimension: Optional[int] = None) -> Region:
    """Convert an IntervalSet, BoxSet or Region to a Region."""
    if isinstance(value, Region):
        region = value
    elif isinstance(value, IntervalSet):
        if dimension not in (None, 1):
            raise ValueError(f"IntervalSet used where dimension {dimension} is expected")
        region = Region(StepFunction.indicator(value))
    elif isinstance(value, BoxSet):
        region = Region(StepFunction.indicator(value))
    else:
        raise TypeError(f"Not a set: {value!r}")
    if dimension is not None and region.dimension != dimension:
        raise ValueError(f"Set has dimension {region.dimension}, expected {dimension}")
    return region


# ==========================================
# OPERATIONS
# ==========================================

def integral(f: StepFunction, over=None) -> Fraction:
    """Exact integral of f over a set (all of [0,1)^n when omitted)."""
    if over is None:
        return f.integral()
    return f.restrict(over).integral()


def restrict(f: StepFunction, region) -> StepFunction:
    """f on the region, 0 off it."""
    return f.restrict(region)


def parse_f0(spec: Union[str, Sequence[PieceConfig]], dimension: int) -> StepFunction:
    """Build f0 from "constant:<value>" or a list of pieces."""
    if isinstance(spec, str):
        if not spec.startswith("constant:"):
            raise ValueError(f"f0 must be 'constant:<value>' or a list of pieces, got {spec!r}")
        value = parse_rational(spec[len("constant:"):])
        if value < 0:
            raise ValueError("f0 values must be non-negative")
        return StepFunction.constant(value, dimension)

    pieces = []
    for piece in spec:
        if isinstance(piece, dict):
            piece = PieceConfig.model_validate(piece)
        if dimension == 1:
            if not piece.intervals:
                raise ValueError("one-dimensional f0 pieces must list intervals")
            region = IntervalSet.parse(piece.intervals)
        else:
            if not piece.boxes:
                raise ValueError(f"{dimension}-dimensional f0 pieces must list boxes")
            region = BoxSet.parse(piece.boxes, dimension)
        pieces.append((region, piece.value))
    return StepFunction.from_pieces(pieces, dimension)


def describe_f0(f: StepFunction) -> Union[str, List[PieceConfig]]:
    """The f0 description parse_f0 reads back into f.

    "constant:<value>" for a constant function, otherwise one piece per distinct value.
    """
    low, high = f.value_bounds()
    if low == high:
        return f"constant:{low}"
    if f.dimension == 1:
        regions: Dict[Fraction, List[DyadicInterval]] = {}
        for index, depth, value in dd.cells(f.node, get_settings().interval_limit):
            regions.setdefault(value, []).append(DyadicInterval(Dyadic(index, depth), Dyadic(index + 1, depth)))
        return [
            PieceConfig(value=value, intervals=IntervalSet(tuple(cells)).to_strings())
            for value, cells in sorted(regions.items())
        ]
    boxes: Dict[Fraction, List[List[str]]] = {}
    for cell, value in _grid_values(f):
        boxes.setdefault(value, []).append([str(itv) for itv in cell])
    return [PieceConfig(value=value, boxes=items) for value, items in sorted(boxes.items())]

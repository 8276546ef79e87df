"""
Rokhlin Towers
Exact towers for the odometer: a base [0,d) with levels T^1 B, ..., T^h B, and
the box analogue [0,d)^n with levels T^z B for z in {1..h}^n.

The base splits into aligned dyadic cells. A cell of size 2^-j is the set of
points whose 2-adic digit integer r has a fixed residue rho mod 2^j, so its
levels T^1..T^h form the cyclic run rho+1 .. rho+h of residues. Since d <= 2^-m
and h <= 2^m, all levels are pairwise disjoint.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Tuple

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.dyadic_sets import BoxSet, Dyadic, DyadicInterval, IntervalSet
from slow_birkhoff.services.step_functions import Region
from slow_birkhoff.utils.config import get_settings
from slow_birkhoff.utils.errors import MaterializationLimitExceeded, PreconditionViolated, TowerPrecisionError
from slow_birkhoff.utils.monitoring import track_operation
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)


def rank_floor_for(height: int) -> int:
    """Smallest m with 2^m >= height."""
    return (height - 1).bit_length()


def _base_cells(d: Dyadic) -> List[Tuple[int, int]]:
    """Aligned cells (j, index) with [0,d) the disjoint union of [index/2^j, (index+1)/2^j)."""
    cells = []
    p, c = d.exponent, d.numerator
    offset = 0
    for bit in reversed(range(c.bit_length())):
        if c >> bit & 1:
            j = p - bit
            cells.append((j, offset >> bit))
            offset += 1 << bit
    return cells


def _run_diagram(d: Dyadic, height: int) -> dd.DigitNode:
    """Indicator diagram of the one-dimensional tower with base [0,d)."""
    node = dd.ZERO
    for j, index in _base_cells(d):
        rho = dd.reverse_bits(index, j)
        node = dd.apply("add", node, dd.cyclic_run(rho + 1, height, j))
    return node


def _check_record_fields(d: Dyadic, height: int, rank_floor: int):
    if height < 1:
        raise ValueError(f"Tower height must be positive, got {height}")
    if (1 << rank_floor) < height:
        raise ValueError(f"rank_floor {rank_floor} too small for height {height}")
    if not Fraction(0) < d.value <= Fraction(1, 1 << rank_floor):
        raise ValueError(f"Base width {d} must lie in (0, 2^-{rank_floor}]")


@dataclass(frozen=True)
class Tower:
    """Tower over the base [0,d) with levels T^1 B .. T^height B."""

    d: Dyadic
    height: int
    rank_floor: int

    def __post_init__(self):
        _check_record_fields(self.d, self.height, self.rank_floor)

    dimension = 1

    @property
    def base(self) -> IntervalSet:
        return IntervalSet((DyadicInterval(Dyadic(0), self.d),))

    def measure(self) -> Fraction:
        return self.height * self.d.value

    def to_record(self) -> Dict[str, Any]:
        return {"d": str(self.d), "height": self.height, "rank_floor": self.rank_floor, "dimension": 1}


@dataclass(frozen=True)
class TowerZn:
    """Box tower over [0,d)^n with levels T^z B, z in {1..side}^n."""

    d: Dyadic
    side: int
    rank_floor: int
    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("Tower dimension must be at least 1")
        _check_record_fields(self.d, self.side, self.rank_floor)

    @property
    def height(self) -> int:
        return self.side

    @property
    def base(self) -> BoxSet:
        return BoxSet(self.dimension, ((DyadicInterval(Dyadic(0), self.d),) * self.dimension,))

    def measure(self) -> Fraction:
        return (self.side * self.d.value) ** self.dimension

    def to_record(self) -> Dict[str, Any]:
        return {"d": str(self.d), "height": self.side, "rank_floor": self.rank_floor, "dimension": self.dimension}


def tower_from_record(record: Dict[str, Any]):
    """Rebuild a Tower or TowerZn from its (d, height, rank_floor, dimension) record."""
    try:
        d = Dyadic.parse(str(record["d"]))
        height = int(record["height"])
        rank_floor = int(record["rank_floor"])
        dimension = int(record.get("dimension", 1))
    except (KeyError, TypeError) as e:
        raise ValueError(f"Incomplete tower record {record!r}: {e}") from e
    if dimension == 1:
        return Tower(d, height, rank_floor)
    return TowerZn(d, height, rank_floor, dimension)


def _iroot(x: int, n: int) -> int:
    """floor(x^(1/n)) for integers x >= 0."""
    if x < 2 or n == 1:
        return x
    r = 1 << -(-x.bit_length() // n)
    while True:
        s = ((n - 1) * r + x // r ** (n - 1)) // n
        if s >= r:
            return r
        r = s


def _check_build_inputs(height: int, target_measure: Fraction, precision: int) -> int:
    if height < 1:
        raise PreconditionViolated(f"Tower height must be positive, got {height}")
    if not 0 < target_measure < 1:
        raise PreconditionViolated(f"Target measure must lie in (0, 1), got {format_rational(target_measure)}")
    m = rank_floor_for(height)
    if precision < m:
        raise PreconditionViolated(f"Precision {precision} is below ceil(log2 h) = {m}")
    return m


@track_operation("build_tower")
def build_tower(height: int, target_measure, precision: int) -> Tower:
    """Tower of the given height whose measure h*d approaches target_measure from below.

    d is the largest dyadic of rank <= precision with d <= min(target/h, 2^-m), m = ceil(log2 h).

    Raises:
        TowerPrecisionError: if d would be 0
    """
    target = parse_rational(target_measure)
    m = _check_build_inputs(height, target, precision)
    bound = min(target / height, Fraction(1, 1 << m))
    numerator = math.floor(bound * (1 << precision))
    if numerator == 0:
        raise TowerPrecisionError(
            f"Target measure {format_rational(target)} too small for height {height} at precision {precision}"
        )
    tower = Tower(Dyadic(numerator, precision), height, m)
    logger.debug(f"Built tower h={height} d={tower.d} measure={format_rational(tower.measure())}")
    return tower


@track_operation("build_tower_zn")
def build_tower_zn(side: int, target_measure, precision: int, dimension: int) -> TowerZn:
    """Box tower with (side*d)^n <= target_measure, d maximal of rank <= precision and <= 2^-m.

    Raises:
        TowerPrecisionError: if d would be 0
    """
    if dimension < 1:
        raise PreconditionViolated("dimension must be at least 1")
    target = parse_rational(target_measure)
    m = _check_build_inputs(side, target, precision)
    # largest c with (side * c)^n <= target * 2^(p n)
    scaled = target * (1 << (precision * dimension)) / side ** dimension
    numerator = min(_iroot(math.floor(scaled), dimension), 1 << (precision - m))
    if numerator == 0:
        raise TowerPrecisionError(
            f"Target measure {format_rational(target)} too small for side {side} at precision {precision}"
        )
    tower = TowerZn(Dyadic(numerator, precision), side, m, dimension)
    logger.debug(f"Built box tower side={side} n={dimension} d={tower.d}")
    return tower


def tower_region(t) -> Region:
    """The exact union of all levels, for any height."""
    node = _run_diagram(t.d, t.height)
    return Region.product([node] * t.dimension)


def tower_set(t):
    """Explicit IntervalSet (or BoxSet) of the tower, subject to the interval limit."""
    limit = get_settings().interval_limit
    line = IntervalSet.from_diagram(_run_diagram(t.d, t.height), limit)
    if t.dimension == 1:
        return line
    if len(line) ** t.dimension > limit:
        raise MaterializationLimitExceeded(
            f"Box tower needs {len(line)}^{t.dimension} boxes, limit is {limit}"
        )
    return BoxSet.product([line] * t.dimension)


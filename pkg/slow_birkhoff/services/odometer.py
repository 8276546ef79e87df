"""
Odometer Systems
The dyadic adding machine on [0,1) and its n-fold product.

T adds 1/2 to x with the carry running toward the less significant digits.
Writing the digits b1 b2 ... bL of x as the integer r = b1 + 2*b2 + ... + 2^(L-1)*bL
(to_adic), T becomes r -> r + 1 and T^k becomes r -> r + k, which is how every
operation here is evaluated.
"""
import logging
from fractions import Fraction
from typing import List, Sequence, Tuple, Union

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.dyadic_sets import Dyadic, IntervalSet, as_dyadic
from slow_birkhoff.services.step_functions import Region, as_region
from slow_birkhoff.utils.config import get_settings
from slow_birkhoff.utils.errors import PreconditionViolated, RankCapExceeded

logger = logging.getLogger(__name__)


def to_adic(x) -> int:
    """The digits of a dyadic point x in [0,1), read as an integer with digit 1 lowest."""
    x = as_dyadic(x)
    if not x.is_point:
        raise PreconditionViolated(f"Point {x} is outside [0,1)")
    return dd.reverse_bits(x.numerator, x.exponent)


def from_adic(r: int) -> Dyadic:
    """Inverse of to_adic.

    Raises:
        RankCapExceeded: for negative r (the backward orbit of 0 has infinitely many
            1-digits) or r needing more digits than the rank cap
    """
    if r < 0:
        raise RankCapExceeded(f"Orbit point r={r} lies on the backward orbit of 0 and has no finite expansion")
    width = r.bit_length()
    cap = get_settings().rank_cap
    if width > cap:
        raise RankCapExceeded(f"Orbit point needs {width} digits, rank cap is {cap}")
    return Dyadic(dd.reverse_bits(r, width), width)


def step(x) -> Dyadic:
    """T(x)."""
    return from_adic(to_adic(x) + 1)


def iterate(x, k: int) -> Dyadic:
    """T^k(x) for any integer k (negative k applies the inverse map)."""
    return from_adic(to_adic(x) + k)


def step_zn(point: Sequence, z: Sequence[int]) -> Tuple[Dyadic, ...]:
    """T^z(x) for the product action: coordinate j moves by z_j steps."""
    if len(point) != len(z):
        raise PreconditionViolated(f"Point has {len(point)} coordinates but z has {len(z)}")
    return tuple(iterate(x, k) for x, k in zip(point, z))


def orbit(x, count: int, start: int = 1) -> List[Dyadic]:
    """T^start x, ..., T^(start+count-1) x."""
    r = to_adic(x)
    return [from_adic(r + i) for i in range(start, start + count)]


def pullback(region, k: Union[int, Sequence[int]]) -> Region:
    """The exact region {x : T^k x in region}.

    k is one integer applied to every coordinate, or one integer per coordinate
    (T^z for the product action).
    """
    region = as_region(region)
    shifts = [k] * region.dimension if isinstance(k, int) else list(k)
    if len(shifts) != region.dimension:
        raise PreconditionViolated(f"Region has dimension {region.dimension} but z has {len(shifts)} entries")
    terms = tuple(
        (coef, tuple(dd.shift(g, j) for g, j in zip(nodes, shifts)))
        for coef, nodes in region.function.terms
    )
    return Region(type(region.function)(region.dimension, terms))


def preimage(a: IntervalSet) -> IntervalSet:
    """T^-1(a) = {x : step(x) in a}."""
    if not a:
        return a
    return pullback(a, 1).to_interval_set()


class OdometerZn:
    """Coordinatewise product of n odometers as a Z^n-action."""

    def __init__(self, dimension: int):
        if dimension < 1:
            raise PreconditionViolated("dimension must be at least 1")
        self.dimension = dimension

    def act(self, point: Sequence, z: Sequence[int]) -> Tuple[Dyadic, ...]:
        """T^z x."""
        if len(point) != self.dimension:
            raise PreconditionViolated(f"Expected a point of dimension {self.dimension}")
        return step_zn(point, z)

    def pullback(self, region, z: Union[int, Sequence[int]]) -> Region:
        """{x : T^z x in region}."""
        return pullback(as_region(region, self.dimension), z)

    def unit_steps(self) -> List[Tuple[int, ...]]:
        return [tuple(int(i == j) for i in range(self.dimension)) for j in range(self.dimension)]

    def escape_measure(self, region) -> Fraction:
        """Largest m(region minus T^-e region) over the unit steps e.

        The mass of the region that leaves it in one step along some axis.
        """
        region = as_region(region, self.dimension)
        return max(region.difference(self.pullback(region, e)).measure() for e in self.unit_steps())


class OdometerZ(OdometerZn):
    """The binary odometer as a Z-action."""

    def __init__(self):
        super().__init__(1)

    def act(self, x, k: int) -> Dyadic:
        return iterate(x, k)


def odometer_for(dimension: int) -> OdometerZn:
    """OdometerZ for n = 1, the product action otherwise."""
    return OdometerZ() if dimension == 1 else OdometerZn(dimension)

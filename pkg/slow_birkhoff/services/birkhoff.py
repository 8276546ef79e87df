"""
Birkhoff Averages
A(x, N, f) = (1/N) * sum_{i=1..N} f(T^i x), its square and rectangular lattice
versions for the product action, exact deviation sets and Monte-Carlo
deviation probabilities.

The sum runs over i = 1..N, not 0..N-1.
"""
import logging
from fractions import Fraction
from math import lcm
from multiprocessing import Pool
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.dyadic_sets import Dyadic, DyadicInterval, IntervalSet
from slow_birkhoff.services.odometer import to_adic
from slow_birkhoff.services.orbit_sums import window_sum, window_sums
from slow_birkhoff.services.sampling import hoeffding_radius, reverse_bits_array, sample_points
from slow_birkhoff.services.step_functions import StepFunction
from slow_birkhoff.utils.config import McSettings, get_settings
from slow_birkhoff.utils.errors import ExactThresholdExceeded, LatticeBudgetExceeded, PreconditionViolated
from slow_birkhoff.utils.monitoring import track_operation
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)


class DeviationEstimate(BaseModel):
    """Measure of a deviation set, exact or estimated."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probability: Fraction
    method: Literal["exact", "monte-carlo"]
    sample_count: int = Field(default=0, ge=0)
    confidence_radius: float = Field(default=0.0, ge=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def check_consistency(self):
        if not 0 <= self.probability <= 1:
            raise ValueError(f"probability {self.probability} outside [0, 1]")
        if self.method == "exact" and (self.confidence_radius != 0 or self.sample_count != 0):
            raise ValueError("exact estimates carry no samples and no confidence radius")
        return self

    def passes(self, floor) -> bool:
        """Exact: probability > floor. Monte-Carlo: probability > floor - radius."""
        floor = parse_rational(floor)
        if self.method == "exact":
            return self.probability > floor
        return self.probability > floor - Fraction(self.confidence_radius)


# ==========================================
# SINGLE POINTS
# ==========================================

def _check_dimension(f: StepFunction, dimension: int):
    if f.dimension != dimension:
        raise PreconditionViolated(f"Function has dimension {f.dimension}, expected {dimension}")


def _check_lattice(points: int):
    budget = get_settings().max_lattice_points
    if points > budget:
        raise LatticeBudgetExceeded(f"{points} lattice points exceed the budget of {budget}")


def _box_sum(point: Sequence, sides: Sequence[int], f: StepFunction) -> Fraction:
    if any(n < 1 for n in sides):
        raise PreconditionViolated(f"Averaging lengths must be positive, got {list(sides)}")
    digits = [to_adic(x) for x in point]
    total = Fraction(0)
    for coef, nodes in f.terms:
        part = coef
        for g, r, n in zip(nodes, digits, sides):
            part *= window_sum(g, r + 1, r + n + 1)
            if part == 0:
                break
        total += part
    return total


def birkhoff_sum(x, N: int, f: StepFunction) -> Fraction:
    """sum_{i=1..N} f(T^i x), exact."""
    _check_dimension(f, 1)
    return _box_sum([x], [N], f)


def birkhoff_average(x, N: int, f: StepFunction) -> Fraction:
    """A(x, N, f), exact."""
    return birkhoff_sum(x, N, f) / N


def birkhoff_average_zn(point: Sequence, N: int, f: StepFunction, dimension: int) -> Fraction:
    """Average of f(T^z x) over the lattice cube z in {1..N}^n, exact."""
    _check_dimension(f, dimension)
    if len(point) != dimension:
        raise PreconditionViolated(f"Point has {len(point)} coordinates, expected {dimension}")
    return birkhoff_average_rect(point, [N] * dimension, f)


def birkhoff_average_rect(point: Sequence, sides: Sequence[int], f: StepFunction) -> Fraction:
    """Average of f(T^z x) over the box {1..N_1} x ... x {1..N_n}, exact."""
    _check_dimension(f, len(sides))
    if len(point) != len(sides):
        raise PreconditionViolated(f"Point has {len(point)} coordinates but there are {len(sides)} sides")
    volume = 1
    for n in sides:
        volume *= n
    _check_lattice(volume)
    return _box_sum(point, sides, f) / volume


# ==========================================
# MANY POINTS
# ==========================================

def scaled_averages(f: StepFunction, digits: np.ndarray, N: int) -> Tuple[np.ndarray, int]:
    """Lattice averages A(x, N, f) for rows of 2-adic digit integers.

    Returns:
        (numerators, denominator) with exact averages numerators[i] / denominator
    """
    digits = np.asarray(digits, dtype=np.int64).reshape(-1, f.dimension)
    parts = []
    for coef, nodes in f.terms:
        product = np.ones(len(digits), dtype=object)
        scale = 1
        for axis, g in enumerate(nodes):
            sums, d = window_sums(g, digits[:, axis] + 1, N)
            product = product * sums
            scale *= d
        parts.append((coef, product, scale))

    common = 1
    for coef, _, scale in parts:
        common = lcm(common, coef.denominator * scale)
    numerators = np.zeros(len(digits), dtype=object)
    for coef, product, scale in parts:
        numerators = numerators + product * (coef.numerator * (common // (coef.denominator * scale)))
    return numerators, common * N ** f.dimension


def deviation_mask(numerators: np.ndarray, denominator: int, center: Fraction, threshold: Fraction,
                   inclusive: bool = False) -> np.ndarray:
    """|numerators/denominator - center| > threshold (>= when inclusive), exactly."""
    gap = np.abs(numerators * center.denominator - denominator * center.numerator) * threshold.denominator
    bound = denominator * center.denominator * threshold.numerator
    mask = gap >= bound if inclusive else gap > bound
    return np.asarray(mask, dtype=bool)


def _exact_mask(N: int, f: StepFunction, center: Fraction, threshold: Fraction,
                inclusive: bool, exact_threshold: Optional[int]) -> Tuple[np.ndarray, int]:
    settings = get_settings()
    limit = settings.exact_threshold if exact_threshold is None else exact_threshold
    if f.dimension != 1:
        raise PreconditionViolated("Exact deviation sets are only available for the Z-action")
    if N < 1:
        raise PreconditionViolated(f"N must be positive, got {N}")
    if N > limit:
        raise ExactThresholdExceeded(f"N = {N} is above the exact threshold {limit}")
    rank = f.rank
    if 1 << rank > settings.exact_cell_limit:
        raise ExactThresholdExceeded(
            f"f has rank {rank}; 2^{rank} cells exceed the exact cell limit {settings.exact_cell_limit}"
        )
    # the average is constant on every rank-r cell of f; one representative each
    cell_digits = reverse_bits_array(np.arange(1 << rank, dtype=np.uint64), rank)
    numerators, denominator = scaled_averages(f, cell_digits, N)
    return deviation_mask(numerators, denominator, center, threshold, inclusive), rank


@track_operation("deviation_set_exact")
def deviation_set_exact(N: int, f: StepFunction, center, threshold, inclusive: bool = False,
                        exact_threshold: Optional[int] = None) -> IntervalSet:
    """{x : |A(x, N, f) - center| > threshold} as an exact IntervalSet (>= when inclusive)."""
    center, threshold = parse_rational(center), parse_rational(threshold)
    mask, rank = _exact_mask(N, f, center, threshold, inclusive, exact_threshold)
    cells = np.flatnonzero(mask)
    if cells.size == 0:
        return IntervalSet()
    breaks = np.flatnonzero(np.diff(cells) != 1)
    starts = np.concatenate([[cells[0]], cells[breaks + 1]])
    stops = np.concatenate([cells[breaks], [cells[-1]]]) + 1
    return IntervalSet(tuple(
        DyadicInterval(Dyadic(int(a), rank), Dyadic(int(b), rank)) for a, b in zip(starts, stops)
    ))


def _count_block(task) -> int:
    f, N, center, threshold, inclusive, seed, start, count, rank = task
    points = sample_points(seed, start, count, f.dimension, rank)
    digits = reverse_bits_array(points, rank)
    numerators, denominator = scaled_averages(f, digits, N)
    return int(deviation_mask(numerators, denominator, center, threshold, inclusive).sum())


@track_operation("deviation_prob_mc")
def deviation_prob_mc(N: int, f: StepFunction, center, threshold, samples: int, seed: int,
                      dimension: int = 1, alpha: float = 0.01, rank: int = 53,
                      block_size: int = 4096, workers: int = 1, inclusive: bool = False) -> DeviationEstimate:
    """Monte-Carlo estimate of m{x : |A(x, N, f) - center| > threshold} with a Hoeffding radius.

    The result depends only on (seed, samples, rank), not on block size or worker count.
    """
    _check_dimension(f, dimension)
    if samples < 1:
        raise PreconditionViolated("samples must be at least 1")
    if N < 1:
        raise PreconditionViolated(f"N must be positive, got {N}")
    if dimension > 1:
        _check_lattice(N ** dimension)
    center, threshold = parse_rational(center), parse_rational(threshold)

    tasks = [
        (f, N, center, threshold, inclusive, seed, start, min(block_size, samples - start), rank)
        for start in range(0, samples, block_size)
    ]
    if workers > 1 and len(tasks) > 1:
        with Pool(processes=min(workers, len(tasks))) as pool:
            counts = pool.map(_count_block, tasks)
    else:
        counts = [_count_block(task) for task in tasks]

    estimate = DeviationEstimate(
        probability=Fraction(sum(counts), samples),
        method="monte-carlo",
        sample_count=samples,
        confidence_radius=hoeffding_radius(samples, alpha),
        seed=seed,
    )
    logger.debug(
        f"MC N={N} threshold={format_rational(threshold)}: "
        f"{float(estimate.probability):.4f} +/- {estimate.confidence_radius:.4f}"
    )
    return estimate


def exact_available(N: int, f: StepFunction, exact_threshold: Optional[int] = None) -> bool:
    settings = get_settings()
    limit = settings.exact_threshold if exact_threshold is None else exact_threshold
    return f.dimension == 1 and N <= limit and (1 << f.rank) <= settings.exact_cell_limit


def deviation_probability(N: int, f: StepFunction, center, threshold, mc: McSettings,
                          exact_threshold: Optional[int] = None, inclusive: bool = False) -> DeviationEstimate:
    """Exact measure when the instance is small enough, Monte-Carlo otherwise."""
    if exact_available(N, f, exact_threshold):
        center, threshold = parse_rational(center), parse_rational(threshold)
        mask, rank = _exact_mask(N, f, center, threshold, inclusive, exact_threshold)
        estimate = DeviationEstimate(
            probability=Fraction(int(mask.sum()), 1 << rank),
            method="exact",
            seed=mc.seed,
        )
        logger.debug(f"Exact N={N} threshold={format_rational(threshold)}: {estimate.probability}")
        return estimate
    return deviation_prob_mc(
        N, f, center, threshold,
        samples=mc.samples, seed=mc.seed, dimension=f.dimension, alpha=mc.alpha,
        rank=mc.rank, block_size=mc.block_size, workers=mc.workers, inclusive=inclusive,
    )


# ==========================================
# TRACES
# ==========================================

def log_spaced_scales(n_max: int, per_octave: int = 4) -> List[int]:
    """Distinct rounded values of 2^(i/per_octave) up to n_max, always ending at n_max."""
    scales = set()
    i = 0
    while True:
        n = round(2 ** (i / per_octave))
        if n > n_max:
            break
        scales.add(n)
        i += 1
    scales.add(n_max)
    return sorted(scales)


def trace_averages(point, f: StepFunction, n_max: int, log_spaced: bool = False):
    """Yield (N, A(x, N, f)) for N = 1..n_max, or for a log-spaced subset.

    The full range is accumulated one orbit step at a time.
    """
    coords = list(point) if isinstance(point, (list, tuple)) else [point]
    _check_dimension(f, len(coords))
    if n_max < 1:
        raise PreconditionViolated(f"n_max must be positive, got {n_max}")
    if log_spaced:
        for N in log_spaced_scales(n_max):
            yield N, _box_sum(coords, [N] * f.dimension, f) / N ** f.dimension
        return

    digits = [to_adic(x) for x in coords]
    # running per-coordinate sums of every factor
    running = [[Fraction(0)] * f.dimension for _ in f.terms]
    for N in range(1, n_max + 1):
        total = Fraction(0)
        for t, (coef, nodes) in enumerate(f.terms):
            part = coef
            for axis, (g, r) in enumerate(zip(nodes, digits)):
                running[t][axis] += dd.evaluate(g, r + N)
                part *= running[t][axis]
            total += part
        yield N, total / N ** f.dimension

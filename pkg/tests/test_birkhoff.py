"""Tests for Birkhoff averages, deviation sets and Monte-Carlo estimates."""
import math
from fractions import Fraction

import numpy as np
import pytest
from pydantic import ValidationError

from slow_birkhoff.services import digit_diagrams as dd
from slow_birkhoff.services.birkhoff import (
    DeviationEstimate,
    birkhoff_average,
    birkhoff_average_rect,
    birkhoff_average_zn,
    birkhoff_sum,
    deviation_prob_mc,
    deviation_probability,
    deviation_set_exact,
    log_spaced_scales,
    trace_averages,
)
from slow_birkhoff.services.dyadic_sets import BoxSet, Dyadic, IntervalSet
from slow_birkhoff.services.odometer import iterate
from slow_birkhoff.services.sampling import hoeffding_radius, sample_points
from slow_birkhoff.services.step_functions import StepFunction
from slow_birkhoff.utils.config import McSettings, reload_settings
from slow_birkhoff.utils.errors import ExactThresholdExceeded, LatticeBudgetExceeded, PreconditionViolated

from tests.conftest import random_set


def iset(*pairs):
    return IntervalSet.from_pairs((Fraction(lo), Fraction(hi)) for lo, hi in pairs)


HALF = StepFunction.indicator(iset((0, "1/2")))


def random_function(rng, rank):
    """Non-negative step function of rank at most `rank`."""
    a, _ = random_set(rng, rank)
    b, _ = random_set(rng, max(rank - 1, 1))
    return StepFunction.indicator(a) * 2 + StepFunction.indicator(b) * Fraction(1, 3)


def diagram_from_cells(values) -> dd.DigitNode:
    """Diagram taking values[i] on the cell [i/2^m, (i+1)/2^m), len(values) = 2^m."""
    nodes = [dd.leaf(Fraction(int(v), 7)) for v in values]
    while len(nodes) > 1:
        # neighbouring cells differ in the last digit still unread
        nodes = [dd.branch(nodes[i], nodes[i + 1]) for i in range(0, len(nodes), 2)]
    return nodes[0]


# ── Single points ──────────────────────────────────────────────────

class TestAverages:

    def test_constant(self, rng):
        f = StepFunction.constant(1)
        for N in [1, 7, 1000]:
            assert birkhoff_average(Dyadic(int(rng.integers(0, 2 ** 10)), 10), N, f) == 1

    def test_half_indicator(self):
        assert birkhoff_average(Dyadic(0), 2, HALF) == Fraction(1, 2)
        assert birkhoff_sum(Dyadic(0), 1, HALF) == 0

    def test_sum_matches_orbit(self, rng):
        f = random_function(rng, 6)
        x = Dyadic(int(rng.integers(0, 2 ** 9)), 9)
        expected = sum((f.evaluate(iterate(x, i)) for i in range(1, 41)), Fraction(0))
        assert birkhoff_sum(x, 40, f) == expected

    def test_quarter_cycle(self, rng):
        f = StepFunction.indicator(iset((0, "1/4")))
        for value in rng.integers(0, 2 ** 16, size=10):
            assert birkhoff_average(Dyadic(int(value), 16), 4, f) == Fraction(1, 4)

    def test_exact_cycle_identity(self, rng):
        for _ in range(40):
            m = int(rng.integers(1, 9))
            f = random_function(rng, m)
            x = Dyadic(int(rng.integers(0, 2 ** 12)), 12)
            assert birkhoff_average(x, 2 ** m, f) == f.integral()

    @pytest.mark.slow
    def test_exact_cycle_identity_full_size(self, rng):
        for _ in range(100):
            m = int(rng.integers(1, 11))
            values = rng.integers(0, 50, size=2 ** m)
            f = StepFunction.from_diagram(diagram_from_cells(values))
            assert f.integral() == Fraction(int(values.sum()), 7 * 2 ** m)
            x = Dyadic(int(rng.integers(0, 2 ** 30)), 30)
            assert birkhoff_average(x, 2 ** m, f) == f.integral()

    def test_range(self, rng):
        for _ in range(20):
            f = random_function(rng, 5)
            low, high = f.value_bounds()
            x = Dyadic(int(rng.integers(0, 2 ** 8)), 8)
            N = int(rng.integers(1, 50))
            assert low <= birkhoff_average(x, N, f) <= high

    def test_bad_length(self):
        with pytest.raises(PreconditionViolated):
            birkhoff_average(Dyadic(0), 0, HALF)


class TestLatticeAverages:

    def test_constant(self):
        f = StepFunction.constant(Fraction(7, 3), dimension=3)
        point = (Dyadic(0), Dyadic(1, 2), Dyadic(5, 3))
        assert birkhoff_average_zn(point, 3, f, 3) == Fraction(7, 3)

    def test_first_coordinate_alternates(self):
        f = StepFunction.indicator(BoxSet.parse([["[0,1/2)", "[0,1)"]]))
        assert birkhoff_average_zn((Dyadic(0), Dyadic(0)), 2, f, 2) == Fraction(1, 2)

    def test_exact_cycle_identity(self, rng):
        for _ in range(15):
            m = int(rng.integers(1, 5))
            xs, _ = random_set(rng, m)
            ys, _ = random_set(rng, m)
            f = StepFunction.indicator(BoxSet.product([xs, ys])) * 3 + 1
            point = tuple(Dyadic(int(v), 10) for v in rng.integers(0, 2 ** 10, size=2))
            assert birkhoff_average_zn(point, 2 ** m, f, 2) == f.integral()

    @pytest.mark.slow
    def test_exact_cycle_identity_full_size(self, rng):
        for _ in range(25):
            m = int(rng.integers(1, 6))
            size = 2 ** m
            grid = rng.integers(0, 50, size=(size, size))
            terms = tuple(
                (Fraction(1), (dd.interval_indicator(i, i + 1, m), diagram_from_cells(grid[i])))
                for i in range(size)
            )
            f = StepFunction(2, terms)
            assert f.integral() == Fraction(int(grid.sum()), 7 * size * size)
            point = tuple(Dyadic(int(v), 30) for v in rng.integers(0, 2 ** 30, size=2))
            assert birkhoff_average_zn(point, size, f, 2) == f.integral()

    def test_rectangle(self):
        f = StepFunction.indicator(BoxSet.parse([["[0,1/2)", "[0,1)"]]))
        assert birkhoff_average_rect((Dyadic(0), Dyadic(0)), (2, 5), f) == Fraction(1, 2)

    def test_lattice_budget(self):
        reload_settings(max_lattice_points=10)
        f = StepFunction.constant(1, dimension=2)
        with pytest.raises(LatticeBudgetExceeded):
            birkhoff_average_zn((Dyadic(0), Dyadic(0)), 4, f, 2)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionViolated):
            birkhoff_average_zn((Dyadic(0),), 2, StepFunction.constant(1, 2), 2)


# ── Deviation sets ─────────────────────────────────────────────────

class TestDeviationSetExact:

    def test_examples(self):
        threshold = Fraction(2, 5)
        assert deviation_set_exact(5, StepFunction.constant(1), 1, Fraction(1, 10)) == IntervalSet.empty()
        assert deviation_set_exact(2, HALF, Fraction(1, 2), threshold) == IntervalSet.empty()
        assert deviation_set_exact(1, HALF, Fraction(1, 2), threshold) == IntervalSet.full()

    def test_matches_pointwise(self, rng):
        for _ in range(10):
            f = random_function(rng, 5)
            N = int(rng.integers(1, 40))
            center = f.integral()
            threshold = Fraction(int(rng.integers(1, 20)), 40)
            result = deviation_set_exact(N, f, center, threshold)
            for cell in range(2 ** f.rank):
                x = Dyadic(cell, f.rank)
                far = abs(birkhoff_average(x, N, f) - center) > threshold
                assert result.contains(x) == far

    def test_inclusive_boundary(self):
        # A(x, 2, 1_[0,1/4)) is 0 or 1/2; center 1/4 sits at distance exactly 1/4
        f = StepFunction.indicator(iset((0, "1/4")))
        assert deviation_set_exact(2, f, Fraction(1, 4), Fraction(1, 4)) == IntervalSet.empty()
        assert deviation_set_exact(2, f, Fraction(1, 4), Fraction(1, 4), inclusive=True) == IntervalSet.full()

    def test_threshold_exceeded(self):
        with pytest.raises(ExactThresholdExceeded):
            deviation_set_exact(5, HALF, 0, Fraction(1, 2), exact_threshold=4)

    def test_product_action_rejected(self):
        with pytest.raises(PreconditionViolated):
            deviation_set_exact(2, StepFunction.constant(1, 2), 1, Fraction(1, 2))


# ── Monte-Carlo ────────────────────────────────────────────────────

class TestMonteCarlo:

    def test_examples(self):
        estimate = deviation_prob_mc(3, StepFunction.constant(1), 1, Fraction(1, 100), samples=500, seed=1)
        assert estimate.probability == 0
        for seed in [0, 1, 99]:
            estimate = deviation_prob_mc(2, HALF, Fraction(1, 2), Fraction(2, 5), samples=500, seed=seed)
            assert estimate.probability == 0
            assert estimate.method == "monte-carlo"

    def test_deterministic(self, rng):
        f = random_function(rng, 6)
        args = (37, f, f.integral(), Fraction(1, 20))
        first = deviation_prob_mc(*args, samples=3000, seed=5)
        assert deviation_prob_mc(*args, samples=3000, seed=5) == first
        assert deviation_prob_mc(*args, samples=3000, seed=5, block_size=128) == first

    def test_worker_pool_matches_serial(self, rng):
        f = random_function(rng, 6)
        args = (21, f, f.integral(), Fraction(1, 10))
        serial = deviation_prob_mc(*args, samples=1000, seed=3, block_size=250)
        pooled = deviation_prob_mc(*args, samples=1000, seed=3, block_size=250, workers=2)
        assert pooled == serial

    def test_agrees_with_exact(self, rng):
        within = 0
        trials = 10
        for trial in range(trials):
            f = random_function(rng, int(rng.integers(2, 7)))
            N = int(rng.integers(1, 257))
            threshold = Fraction(int(rng.integers(1, 30)), 100)
            exact = deviation_set_exact(N, f, f.integral(), threshold).measure()
            estimate = deviation_prob_mc(N, f, f.integral(), threshold, samples=4000, seed=trial)
            if abs(float(estimate.probability - exact)) <= estimate.confidence_radius:
                within += 1
        assert within >= trials - 1

    @pytest.mark.slow
    def test_agrees_with_exact_full_size(self, rng):
        within = 0
        trials = 25
        for trial in range(trials):
            f = random_function(rng, int(rng.integers(2, 9)))
            N = int(rng.integers(1, 257))
            threshold = Fraction(int(rng.integers(1, 30)), 100)
            exact = deviation_set_exact(N, f, f.integral(), threshold).measure()
            estimate = deviation_prob_mc(N, f, f.integral(), threshold, samples=10 ** 4, seed=trial, alpha=0.01)
            if abs(float(estimate.probability - exact)) <= estimate.confidence_radius:
                within += 1
        assert within >= 24

    def test_product_action(self):
        f = StepFunction.indicator(BoxSet.parse([["[0,1/2)", "[0,1)"]]))
        estimate = deviation_prob_mc(2, f, Fraction(1, 2), Fraction(1, 10), samples=400, seed=0, dimension=2)
        assert estimate.probability == 0

    def test_dispatch(self, rng):
        f = random_function(rng, 5)
        mc = McSettings(samples=500, seed=2)
        assert deviation_probability(8, f, f.integral(), Fraction(1, 10), mc).method == "exact"
        assert deviation_probability(8, f, f.integral(), Fraction(1, 10), mc, exact_threshold=4).method == "monte-carlo"


class TestEstimates:

    def test_passes(self):
        exact = DeviationEstimate(probability=Fraction(1, 2), method="exact")
        assert not exact.passes(Fraction(1, 2))
        assert exact.passes(Fraction(49, 100))
        mc = DeviationEstimate(probability=Fraction(1, 2), method="monte-carlo", sample_count=100,
                               confidence_radius=0.1)
        assert mc.passes(Fraction(11, 20))
        assert not mc.passes(Fraction(13, 20))

    def test_exact_has_no_radius(self):
        with pytest.raises(ValidationError):
            DeviationEstimate(probability=Fraction(1, 2), method="exact", confidence_radius=0.1)

    def test_probability_range(self):
        with pytest.raises(ValidationError):
            DeviationEstimate(probability=Fraction(3, 2), method="exact")

    def test_hoeffding_radius(self):
        assert hoeffding_radius(10000, 0.01) == pytest.approx(math.sqrt(math.log(200) / 20000))
        assert hoeffding_radius(2000, 0.01) / hoeffding_radius(4000, 0.01) == pytest.approx(math.sqrt(2))


class TestSampling:

    def test_offsets_are_consistent(self):
        for dimension in [1, 2, 3]:
            full = sample_points(11, 0, 20, dimension, 40)
            part = sample_points(11, 7, 13, dimension, 40)
            assert np.array_equal(full[7:], part)

    def test_rank_bounds(self):
        points = sample_points(0, 0, 1000, 1, 10)
        assert points.max() < 2 ** 10
        with pytest.raises(ValueError):
            sample_points(0, 0, 10, 1, 61)


# ── Traces ─────────────────────────────────────────────────────────

class TestTrace:

    def test_constant(self):
        rows = list(trace_averages(Dyadic(3, 4), StepFunction.constant(2), 50))
        assert [N for N, _ in rows] == list(range(1, 51))
        assert all(value == 2 for _, value in rows)

    def test_incremental_matches_direct(self, rng):
        f = random_function(rng, 6)
        x = Dyadic(int(rng.integers(0, 2 ** 10)), 10)
        for N, value in trace_averages(x, f, 70):
            assert value == birkhoff_average(x, N, f)

    def test_log_spaced(self, rng):
        f = random_function(rng, 4)
        x = Dyadic(5, 6)
        rows = list(trace_averages(x, f, 1000, log_spaced=True))
        assert rows[-1][0] == 1000
        assert all(value == birkhoff_average(x, N, f) for N, value in rows)

    def test_scales(self):
        scales = log_spaced_scales(100)
        assert scales[0] == 1 and scales[-1] == 100
        assert all(a < b for a, b in zip(scales, scales[1:]))

"""Tests for the dyadic odometer and its product action."""
from fractions import Fraction

import pytest

from slow_birkhoff.services.dyadic_sets import BoxSet, Dyadic, IntervalSet
from slow_birkhoff.services.odometer import (
    OdometerZ,
    OdometerZn,
    from_adic,
    iterate,
    odometer_for,
    orbit,
    preimage,
    pullback,
    step,
    step_zn,
    to_adic,
)
from slow_birkhoff.utils.errors import PreconditionViolated, RankCapExceeded

from tests.conftest import random_set, sparse_random_set


def d(text):
    return Dyadic.parse(text)


def iset(*pairs):
    return IntervalSet.from_pairs((Fraction(lo), Fraction(hi)) for lo, hi in pairs)


def image(a: IntervalSet) -> IntervalSet:
    return pullback(a, -1).to_interval_set()


class TestStep:

    def test_carry_examples(self):
        assert step(0) == d("1/2")
        assert step(d("1/2")) == d("1/4")
        assert step(d("3/4")) == d("1/8")

    def test_adic_round_trip(self, rng):
        for value in rng.integers(0, 2 ** 20, size=50):
            x = Dyadic(int(value), 20)
            assert from_adic(to_adic(x)) == x

    def test_point_outside_unit_interval(self):
        with pytest.raises(PreconditionViolated):
            step(Dyadic(3, 1))

    def test_backward_orbit_of_zero(self):
        with pytest.raises(RankCapExceeded):
            iterate(0, -1)
        with pytest.raises(RankCapExceeded):
            from_adic(-3)


class TestIterate:

    def test_examples(self):
        assert iterate(0, 0) == Dyadic(0)
        assert iterate(0, 2) == d("1/4")
        result = iterate(d("5/8"), 2 ** 3)
        assert d("5/8") <= result < d("3/4")

    def test_group_law(self, rng):
        for _ in range(50):
            x = Dyadic(int(rng.integers(1, 2 ** 12)), 12)
            a, b = (int(v) for v in rng.integers(-300, 300, size=2))
            if to_adic(x) + a < 0 or to_adic(x) + a + b < 0:
                continue
            assert iterate(iterate(x, a), b) == iterate(x, a + b)

    def test_power_of_two_keeps_leading_digits(self, rng):
        for _ in range(50):
            m = int(rng.integers(1, 10))
            x = Dyadic(int(rng.integers(0, 2 ** 14)), 14)
            y = iterate(x, 2 ** m)
            assert (x.value * 2 ** m) // 1 == (y.value * 2 ** m) // 1

    def test_orbit(self):
        assert orbit(0, 3) == [d("1/2"), d("1/4"), d("3/4")]
        assert orbit(0, 2, start=0) == [Dyadic(0), d("1/2")]


class TestPreimage:

    def test_examples(self):
        assert preimage(IntervalSet.full()) == IntervalSet.full()
        assert preimage(iset(("1/2", 1))) == iset((0, "1/2"))
        assert preimage(iset((0, "1/4"))) == iset(("3/4", 1))
        assert preimage(IntervalSet.empty()) == IntervalSet.empty()

    def test_image_examples(self):
        assert image(iset((0, "1/4"))) == iset(("1/2", "3/4"))
        assert image(iset((0, "1/2"))) == iset(("1/2", 1))

    def test_membership(self, rng):
        for _ in range(20):
            a, _ = random_set(rng, 6)
            pre = preimage(a)
            for value in range(0, 2 ** 8, 3):
                x = Dyadic(value, 8)
                assert pre.contains(x) == a.contains(step(x))

    def test_measure_preserved(self, rng):
        for _ in range(200):
            a, _ = random_set(rng, int(rng.integers(1, 15)), density=float(rng.random()))
            assert preimage(a).measure() == a.measure()
            assert preimage(image(a)) == a

    @pytest.mark.slow
    def test_measure_preserved_full_size(self, rng):
        for _ in range(1000):
            a = sparse_random_set(rng, int(rng.integers(1, 21)))
            assert a.rank <= 20
            assert a.measure() + a.complement().measure() == 1
            assert preimage(a).measure() == a.measure()

    def test_odometer_z(self):
        odometer = odometer_for(1)
        assert isinstance(odometer, OdometerZ)
        assert odometer.act(0, 3) == d("3/4")
        assert odometer.pullback(iset((0, "1/2")), 1).to_interval_set() == iset(("1/2", 1))

    def test_escape_measure(self):
        odometer = OdometerZ()
        assert odometer.escape_measure(IntervalSet.full()) == 0
        assert odometer.escape_measure(iset((0, "1/2"))) == Fraction(1, 2)
        # T maps [1/4,1/2) onto [3/4,1); the rest of [0,3/4) stays inside
        assert odometer.escape_measure(iset((0, "3/4"))) == Fraction(1, 4)


class TestProductAction:

    def test_step_zn_examples(self):
        zero = Dyadic(0)
        assert step_zn((zero, zero), (0, 0)) == (zero, zero)
        assert step_zn((zero, zero), (1, 1)) == (d("1/2"), d("1/2"))
        assert step_zn((zero, d("1/2")), (2, 1)) == (d("1/4"), d("1/4"))

    def test_step_zn_length_mismatch(self):
        with pytest.raises(PreconditionViolated):
            step_zn((Dyadic(0),), (1, 1))

    def test_pullback_box(self):
        action = OdometerZn(2)
        left = BoxSet.parse([["[0,1/2)", "[0,1)"]])
        pulled = action.pullback(left, (1, 0))
        assert pulled.measure() == Fraction(1, 2)
        assert pulled.contains((d("3/4"), d("1/4")))
        assert not pulled.contains((d("1/4"), d("1/4")))
        assert action.act((Dyadic(0), Dyadic(0)), (1, 2)) == (d("1/2"), d("1/4"))

    def test_pullback_per_coordinate(self):
        box = BoxSet.parse([["[0,1/4)", "[0,1/2)"]])
        pulled = pullback(box, (-1, 0)).to_box_set()
        assert pulled == BoxSet.parse([["[1/2,3/4)", "[0,1/2)"]])
        with pytest.raises(PreconditionViolated):
            pullback(box, (1, 1, 1))

    def test_escape_measure(self):
        action = odometer_for(2)
        assert not isinstance(action, OdometerZ)
        left = BoxSet.parse([["[0,1/2)", "[0,1)"]])
        assert action.escape_measure(left) == Fraction(1, 2)
        assert action.escape_measure(BoxSet.full(2)) == 0

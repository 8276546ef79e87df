"""
Shared fixtures for the slow-birkhoff tests.
"""
import csv
from fractions import Fraction

import numpy as np
import pytest

from slow_birkhoff.services.dyadic_sets import IntervalSet
from slow_birkhoff.utils.config import reload_settings
from slow_birkhoff.utils.monitoring import run_metrics


@pytest.fixture(autouse=True)
def engine_settings():
    """Fresh default engine settings and metrics for every test."""
    run_metrics.reset()
    settings = reload_settings()
    yield settings
    reload_settings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mask_to_set(mask, rank: int) -> IntervalSet:
    """IntervalSet of the rank-`rank` cells flagged in a boolean mask."""
    return IntervalSet.from_pairs(
        (Fraction(int(i), 2 ** rank), Fraction(int(i) + 1, 2 ** rank)) for i in np.flatnonzero(mask)
    )


def random_set(rng, rank: int, density: float = 0.5):
    """A random IntervalSet at the given rank, with its cell mask."""
    mask = rng.random(2 ** rank) < density
    return mask_to_set(mask, rank), mask


def sparse_random_set(rng, rank: int, max_intervals: int = 20) -> IntervalSet:
    """A random IntervalSet with endpoints on the grid 2^-rank and at most `max_intervals` pieces."""
    count = int(rng.integers(1, max_intervals + 1))
    ends = np.unique(rng.integers(0, 2 ** rank + 1, size=2 * count))
    ends = ends[: len(ends) - len(ends) % 2]
    return IntervalSet.from_pairs(
        (Fraction(int(lo), 2 ** rank), Fraction(int(hi), 2 ** rank)) for lo, hi in zip(ends[::2], ends[1::2])
    )


def read_rows(path):
    """Rows of a written CSV report as dicts of strings."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


FAST_CONFIG = """\
dimension = 1
f0 = "constant:1"
deviations = ["1/16", "1/32"]
lower_scales = [3, 63]
budget = "1/4"
delta0 = "1/10"
precision = 40
safety = 2

[mc]
samples = 2000
seed = 7
"""


@pytest.fixture
def fast_config(tmp_path):
    """Two-stage construction that finishes in seconds."""
    path = tmp_path / "run.toml"
    path.write_text(FAST_CONFIG, encoding="utf-8")
    return path

"""
Counter-based sampling of dyadic points.
Sample i, coordinate j always comes from 64-bit word i*n + j of the Philox stream
keyed by the seed, so any block of samples can be drawn on its own.
"""
import math

import numpy as np

_ONE = np.uint64(1)


def sample_points(seed: int, start: int, count: int, dimension: int = 1, rank: int = 53) -> np.ndarray:
    """Numerators u of the sample points x = u / 2^rank, shape (count, dimension).

    Samples start .. start+count-1 of the stream for `seed`.
    """
    if not 1 <= rank <= 60:
        raise ValueError(f"rank must lie in 1..60, got {rank}")
    first_word = start * dimension
    skip = first_word % 4
    generator = np.random.Philox(key=seed, counter=first_word // 4)
    words = generator.random_raw(count * dimension + skip)[skip:]
    return (words >> np.uint64(64 - rank)).reshape(count, dimension)


def reverse_bits_array(values: np.ndarray, width: int) -> np.ndarray:
    """Vectorized digit reversal: the 2-adic integers r of points u / 2^width."""
    u = np.asarray(values, dtype=np.uint64).copy()
    r = np.zeros_like(u)
    for _ in range(width):
        r = (r << _ONE) | (u & _ONE)
        u >>= _ONE
    return r.astype(np.int64)


def hoeffding_radius(samples: int, alpha: float) -> float:
    """Two-sided Hoeffding radius sqrt(ln(2/alpha) / (2 * samples))."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * samples))

"""
Rational number parsing and formatting shared by config files, specs and reports.
"""
import re
from fractions import Fraction
from typing import Any

_DYADIC_TEXT = re.compile(r"(-?\d+)/2\^(\d+)")


def parse_rational(value: Any) -> Fraction:
    """Parse an exact rational.

    Accepts Fractions, integers, decimal floats (read from their literal),
    "p/q" strings, decimal strings and dyadic "num/2^exp" strings.

    Raises:
        ValueError: if the value is not a rational number
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"Not a rational number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        text = value.strip()
        match = _DYADIC_TEXT.fullmatch(text)
        if match:
            return Fraction(int(match.group(1)), 2 ** int(match.group(2)))
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"Not a rational number: {value!r}") from e
    raise ValueError(f"Not a rational number: {value!r}")


def format_rational(value: Fraction) -> str:
    """Serialize as "p/q" (integers keep the "/1")."""
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"

"""Exact rational parsing and formatting."""
from __future__ import annotations

from decimal import Decimal, InvalidOperation
from fractions import Fraction


def parse_rational(value) -> Fraction:
    """Read an int, a "p/q" string or a decimal string exactly.

    Binary floats are refused because they rarely mean what was typed.
    """
    if isinstance(value, bool):
        raise ValueError("boolean is not a number")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        raise ValueError("write %r as a string such as \"%s\" to keep it exact" % (value, value))
    if isinstance(value, str):
        text = value.strip()
        try:
            if "/" in text:
                num, den = text.split("/")
                return Fraction(int(num), int(den))
            return Fraction(Decimal(text))
        except (ValueError, ZeroDivisionError, InvalidOperation):
            raise ValueError("not a rational literal: %r" % value) from None
    raise ValueError("not a rational literal: %r" % (value,))


def fmt_rational(q) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else "%d/%d" % (q.numerator, q.denominator)


def fmt_decimal(q, digits: int = 12) -> str:
    """Twelve significant digits, no trailing zeros."""
    if isinstance(q, Fraction) and q.denominator == 1:
        return str(q.numerator)
    return "%.*g" % (digits, float(q))


def fmt_value(q, decimal: bool = False) -> str:
    if q is None:
        return ""
    if isinstance(q, float):
        return fmt_decimal(q)
    return fmt_decimal(q) if decimal else fmt_rational(q)

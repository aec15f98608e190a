"""Scaling exponent triple for each sub-diagonal sign pattern."""

from __future__ import annotations

from .errors import ValidationError

_EXPONENTS = {1: (1, 1, 1), 2: (1, 1, 2), 3: (1, 2, 2), 4: (1, 2, 3)}


def exponents_for_case(case: int) -> tuple[int, int, int]:
    """Coordinate scaling exponents (e1, e2, e3) for pattern ``case``.

    The scaled step process n^{-e_i} X_{floor(n t), i} converges to the
    pattern's limit system; the exponents coincide with the mean growth
    scales of the pattern.
    """
    try:
        return _EXPONENTS[case]
    except KeyError:
        raise ValidationError(f"case must be 1..4, got {case!r}") from None

"""Exact moment engine for lower-unipotent mean matrices.

For a lower triangular A with unit diagonal the nilpotent part C = A - I
satisfies C^p = 0, so every power of A is the finite binomial sum
``A^k = sum_m binom(k, m) C^m``.  Everything here flows from that identity:
the mean E X_k is a polynomial in k in the binomial basis, the growth
exponent of coordinate i is read off the positivity pattern of the powers of
C, and the leading asymptotic term comes from the first coordinate with
positive immigration mean.

Binomial coefficients are exact Python integers; integer-valued matrices are
computed in exact integer arithmetic, float matrices in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ValidationError
from .model import GwiModel, ZERO_TOL

__all__ = [
    "UnipotentMatrix",
    "unipotent_power",
    "mean_vector",
    "MeanPolynomial",
    "mean_polynomial",
    "conditional_covariance",
    "martingale_second_moment",
    "variance_matrix",
    "GrowthExponents",
    "growth_exponents",
    "leading_asymptotic",
    "moment_growth_targets",
]


class UnipotentMatrix:
    """A lower triangular matrix with unit diagonal, with cached nilpotent powers.

    ``c_powers[m]`` is (A - I)^m for m = 0..p-1; (A - I)^p = 0.  Integer input
    stays exact (object dtype holding Python ints); float input uses float64.
    """

    def __init__(self, a, tol: float = ZERO_TOL):
        arr = np.asarray(a)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError("matrix must be square")
        if np.any(np.abs(np.asarray(arr, dtype=float) - np.tril(np.asarray(arr, dtype=float))) > tol):
            raise ValidationError("matrix must be lower triangular")
        if np.any(np.abs(np.diag(np.asarray(arr, dtype=float)) - 1.0) > tol):
            raise ValidationError("diagonal entries must all be 1")

        self.exact = arr.dtype == object or np.issubdtype(arr.dtype, np.integer)
        if self.exact:
            work = np.array([[int(x) for x in row] for row in arr], dtype=object)
            eye = np.array(
                [[1 if i == j else 0 for j in range(arr.shape[0])] for i in range(arr.shape[0])],
                dtype=object,
            )
        else:
            work = np.tril(arr.astype(float))  # zero out round-off above the diagonal
            np.fill_diagonal(work, 1.0)
            eye = np.eye(arr.shape[0])
        self.a = work
        self.p = arr.shape[0]
        nilpotent = work - eye
        powers = [eye]
        for _ in range(1, self.p):
            powers.append(powers[-1] @ nilpotent)
        self.nilpotent = nilpotent
        self.c_powers = powers

    def power(self, k: int) -> np.ndarray:
        """A^k = sum_{m=0}^{p-1} binom(k, m) (A - I)^m, for integer k >= 0."""
        if k < 0 or k != int(k):
            raise ValidationError("exponent must be a nonnegative integer")
        k = int(k)
        total = self.c_powers[0].copy()
        for m in range(1, self.p):
            total = total + comb(k, m) * self.c_powers[m]
        return total

    def power_sum(self, k: int) -> np.ndarray:
        """sum_{l=0}^{k-1} A^l = sum_m binom(k, m+1) (A - I)^m (hockey-stick)."""
        if k < 0 or k != int(k):
            raise ValidationError("k must be a nonnegative integer")
        k = int(k)
        total = comb(k, 1) * self.c_powers[0]
        for m in range(1, self.p):
            total = total + comb(k, m + 1) * self.c_powers[m]
        return total


def unipotent_power(a, k: int) -> np.ndarray:
    """k-th power of a lower-unipotent matrix via the binomial expansion."""
    if k < 1:
        raise ValidationError("k must be a positive integer")
    return UnipotentMatrix(a).power(k)


def mean_vector(model: GwiModel, k: int) -> np.ndarray:
    """E X_k = sum_{j=0}^{k-1} A^j b for the process started at zero.

    Uses the closed unipotent form when A is lower-unipotent, otherwise the
    plain recursion E X_k = A E X_{k-1} + b.
    """
    if k < 0 or k != int(k):
        raise ValidationError("k must be a nonnegative integer")
    k = int(k)
    if model.is_lower_unipotent():
        return np.asarray(
            UnipotentMatrix(model.A).power_sum(k) @ model.b, dtype=float
        )
    out = np.zeros(model.p)
    for _ in range(k):
        out = model.A @ out + model.b
    return out


@dataclass(frozen=True)
class MeanPolynomial:
    """E X_{k, i} = sum_{m=1}^{p} coeffs[m-1] * binom(k, m) for one coordinate."""

    coordinate: int
    coeffs: tuple[float, ...]

    @property
    def degree(self) -> int:
        for m in range(len(self.coeffs), 0, -1):
            if self.coeffs[m - 1] != 0.0:
                return m
        return 0

    def __call__(self, k: int) -> float:
        return float(sum(c * comb(int(k), m + 1) for m, c in enumerate(self.coeffs)))


def mean_polynomial(model: GwiModel, i: int) -> MeanPolynomial:
    """Binomial-basis coefficients of E X_{k, i} (0-based coordinate ``i``)."""
    if not model.is_lower_unipotent():
        raise ValidationError("mean polynomial requires a lower-unipotent mean matrix")
    if not (0 <= i < model.p):
        raise ValidationError(f"coordinate must be in 0..{model.p - 1}")
    uni = UnipotentMatrix(model.A)
    coeffs = tuple(
        float(np.asarray(uni.c_powers[m], dtype=float)[i] @ model.b)
        for m in range(model.p)
    )
    return MeanPolynomial(coordinate=i, coeffs=coeffs)


def conditional_covariance(model: GwiModel, state) -> np.ndarray:
    """var(X_k | X_{k-1} = state) = V^(0) + sum_i state_i V^(i)."""
    state = np.asarray(state, dtype=float)
    if state.shape != (model.p,):
        raise ValidationError(f"state must be a {model.p}-vector")
    out = model.V[0].copy()
    for i in range(model.p):
        out += state[i] * model.V[i + 1]
    return out


def martingale_second_moment(model: GwiModel, k: int) -> np.ndarray:
    """E(M_k M_k^T) = V^(0) + sum_i E(X_{k-1, i}) V^(i), k >= 1."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    return conditional_covariance(model, mean_vector(model, k - 1))


def variance_matrix(model: GwiModel, k: int) -> np.ndarray:
    """var(X_k) = sum_{j=0}^{k-1} A^j E(M_{k-j} M_{k-j}^T) (A^T)^j, k >= 1."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    k = int(k)
    unipotent = model.is_lower_unipotent()
    uni = UnipotentMatrix(model.A) if unipotent else None
    total = np.zeros((model.p, model.p))
    a_power = np.eye(model.p)
    for j in range(k):
        mid = martingale_second_moment(model, k - j)
        total += a_power @ mid @ a_power.T
        if j + 1 < k:
            if unipotent:
                a_power = np.asarray(uni.power(j + 1), dtype=float)
            else:
                a_power = model.A @ a_power
    return total


@dataclass(frozen=True)
class GrowthExponents:
    """Polynomial growth scales of the mean, plus first-positive-immigration indices.

    ``degrees[i]`` is the largest m such that some entry of row i of
    (A - I)^(m-1) is positive; E X_{k, i} = O(k^degrees[i]).
    ``first_immigration[i]`` is the smallest coordinate r <= i (0-based) with
    b_r > 0, or 0 when there is none.
    """

    degrees: tuple[int, ...]
    first_immigration: tuple[int, ...]


def growth_exponents(a, b) -> GrowthExponents:
    """Read the growth degrees off the positivity pattern of the nilpotent powers."""
    uni = UnipotentMatrix(a)
    b = np.asarray(b, dtype=float)
    if b.shape != (uni.p,):
        raise ValidationError(f"b must be a {uni.p}-vector")
    if np.any(b < 0):
        raise ValidationError("b must be nonnegative")
    degrees = []
    for i in range(uni.p):
        best = 1
        for m in range(1, uni.p):
            row = np.asarray(uni.c_powers[m][i], dtype=float)
            if np.any(row > 0):
                best = m + 1
        degrees.append(best)
    first = []
    for i in range(uni.p):
        positive = [r for r in range(i + 1) if b[r] > 0]
        first.append(positive[0] if positive else 0)
    return GrowthExponents(degrees=tuple(degrees), first_immigration=tuple(first))


def leading_asymptotic(model: GwiModel, i: int) -> tuple[int, float]:
    """Dominant binomial term of E X_{k, i}: (degree, coefficient).

    With r the first coordinate <= i carrying positive immigration mean,
    E X_{k, i} = coefficient * binom(k, degree) + O(k^(degree - 1)) where
    degree = i - r + 1 and coefficient = b_r * ((A - I)^(i - r))[i, r].
    Returns (0, 0.0) when no coordinate <= i has positive immigration mean
    (then E X_{k, i} is identically zero).
    """
    if not model.is_lower_unipotent():
        raise ValidationError("leading asymptotic requires a lower-unipotent mean matrix")
    if not (0 <= i < model.p):
        raise ValidationError(f"coordinate must be in 0..{model.p - 1}")
    positive = [r for r in range(i + 1) if model.b[r] > 0]
    if not positive:
        return (0, 0.0)
    r = positive[0]
    uni = UnipotentMatrix(model.A)
    coefficient = float(model.b[r]) * float(uni.c_powers[i - r][i, r])
    return (i - r + 1, coefficient)


def moment_growth_targets(model: GwiModel) -> dict:
    """Target growth exponents for the Monte Carlo growth-fit battery.

    Per coordinate i with mean degree d_i: the cross moment
    |E(M_{k,i} M_{k,j})| grows like k^min(d_i, d_j), the running-sum sup
    square like n^(d_i + 1) and the linearly weighted one like n^(d_i + 3).
    E(M_{k,i}^4) = O(k^2) holds for coordinates whose row of A is a Kronecker
    delta row (they receive offspring from their own type only); other rows
    get no fourth-moment target.
    """
    if not model.is_lower_unipotent():
        raise ValidationError("growth targets require a lower-unipotent mean matrix")
    exps = growth_exponents(model.A, model.b)
    degrees = exps.degrees
    p = model.p
    delta_row = [
        bool(np.all(model.A[i] == np.eye(p)[i])) for i in range(p)
    ]
    return {
        "mean": list(degrees),
        "cross": [[min(degrees[i], degrees[j]) for j in range(p)] for i in range(p)],
        "fourth": [2 if delta_row[i] else None for i in range(p)],
        "sum_sup": [d + 1 for d in degrees],
        "weighted_sum_sup": [d + 3 for d in degrees],
    }

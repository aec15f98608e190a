"""Parametric laws over nonnegative-integer vectors.

A :class:`DistributionSpec` describes either the offspring vector of one
individual of a given type or the per-generation immigration vector.  Every
built-in kind has a closed-form mean vector and covariance matrix, finite
moments of all orders, and two sampling routines:

* ``sample(count, rng)`` draws ``count`` i.i.d. vectors;
* ``sample_sum(counts, rng)`` draws, for each entry ``m`` of ``counts``, the
  sum of ``m`` i.i.d. vectors.  By default this uses the exact closed-form sum
  distribution (sums of Poissons are Poisson, Bernoulli sums are Binomial,
  geometric sums are negative binomial, categorical counts are multinomial),
  distributionally identical to summing individual draws, just vectorized.
  Pass ``exact_sums=False`` to force the individual-by-individual path.

Parametric kinds have independent coordinates; correlated coordinates require
:class:`JointTable`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ValidationError

__all__ = [
    "DistributionSpec",
    "Deterministic",
    "Poisson",
    "Bernoulli",
    "Geometric",
    "JointTable",
    "spec_from_dict",
]

_WEIGHT_TOL = 1e-12


def _as_1d_float(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


class DistributionSpec:
    """Base class; concrete kinds implement moments and sampling."""

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        """Closed-form mean vector."""
        raise NotImplementedError

    def cov(self) -> np.ndarray:
        """Closed-form covariance matrix."""
        raise NotImplementedError

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``count`` i.i.d. vectors, shape ``(count, dim)``, int64."""
        raise NotImplementedError

    def sample_sum(
        self, counts, rng: np.random.Generator, *, exact_sums: bool = True
    ) -> np.ndarray:
        """Row r is the sum of ``counts[r]`` i.i.d. vectors, shape ``(len(counts), dim)``."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ValidationError("counts must be 1-d")
        if np.any(counts < 0):
            raise ValidationError("counts must be nonnegative")
        if exact_sums:
            return self._sum_closed_form(counts, rng)
        out = np.zeros((counts.size, self.dim), dtype=np.int64)
        for r, m in enumerate(counts):
            if m > 0:
                out[r] = self.sample(int(m), rng).sum(axis=0)
        return out

    def _sum_closed_form(self, counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Deterministic(DistributionSpec):
    """Point mass at a fixed nonnegative integer vector."""

    c: np.ndarray
    kind: str = field(default="deterministic", init=False)

    def __post_init__(self):
        arr = np.asarray(self.c)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("c must be a nonempty 1-d sequence")
        if np.any(arr < 0) or not np.all(arr == np.floor(arr)):
            raise ValidationError("c must have nonnegative integer entries")
        object.__setattr__(self, "c", np.asarray(arr, dtype=np.int64))
        self.c.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.c.size

    def mean(self) -> np.ndarray:
        return self.c.astype(float)

    def cov(self) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    def sample(self, count, rng):
        return np.tile(self.c, (count, 1))

    def _sum_closed_form(self, counts, rng):
        return counts[:, None] * self.c[None, :]

    def to_dict(self):
        return {"kind": self.kind, "params": {"c": self.c.tolist()}}


@dataclass(frozen=True, eq=False)
class Poisson(DistributionSpec):
    """Independent Poisson coordinates with rates ``lam`` (zero rate = a.s. zero)."""

    lam: np.ndarray
    kind: str = field(default="poisson", init=False)

    def __post_init__(self):
        arr = _as_1d_float(self.lam, "lam")
        if np.any(arr < 0):
            raise ValidationError("lam must be nonnegative")
        object.__setattr__(self, "lam", arr)
        self.lam.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.lam.size

    def mean(self) -> np.ndarray:
        return self.lam.copy()

    def cov(self) -> np.ndarray:
        return np.diag(self.lam)

    def sample(self, count, rng):
        return rng.poisson(self.lam, size=(count, self.dim)).astype(np.int64)

    def _sum_closed_form(self, counts, rng):
        return rng.poisson(counts[:, None] * self.lam[None, :]).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": {"lam": self.lam.tolist()}}


@dataclass(frozen=True, eq=False)
class Bernoulli(DistributionSpec):
    """Independent Bernoulli coordinates with success probabilities ``p``."""

    p: np.ndarray
    kind: str = field(default="bernoulli", init=False)

    def __post_init__(self):
        arr = _as_1d_float(self.p, "p")
        if np.any(arr < 0) or np.any(arr > 1):
            raise ValidationError("p must lie in [0, 1]")
        object.__setattr__(self, "p", arr)
        self.p.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.p.size

    def mean(self) -> np.ndarray:
        return self.p.copy()

    def cov(self) -> np.ndarray:
        return np.diag(self.p * (1.0 - self.p))

    def sample(self, count, rng):
        return rng.binomial(1, self.p, size=(count, self.dim)).astype(np.int64)

    def _sum_closed_form(self, counts, rng):
        return rng.binomial(counts[:, None], self.p[None, :]).astype(np.int64)

    def to_dict(self):
        return {"kind": self.kind, "params": {"p": self.p.tolist()}}


@dataclass(frozen=True, eq=False)
class Geometric(DistributionSpec):
    """Independent geometric coordinates on {0, 1, 2, ...}.

    Coordinate i counts failures before the first success of probability
    ``p[i]``, so the mean is (1-p)/p and the variance (1-p)/p^2.
    """

    p: np.ndarray
    kind: str = field(default="geometric", init=False)

    def __post_init__(self):
        arr = _as_1d_float(self.p, "p")
        if np.any(arr <= 0) or np.any(arr > 1):
            raise ValidationError("p must lie in (0, 1]")
        object.__setattr__(self, "p", arr)
        self.p.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.p.size

    def mean(self) -> np.ndarray:
        return (1.0 - self.p) / self.p

    def cov(self) -> np.ndarray:
        return np.diag((1.0 - self.p) / self.p**2)

    def sample(self, count, rng):
        # numpy's geometric lives on {1, 2, ...}; shift to count failures
        return (rng.geometric(self.p, size=(count, self.dim)) - 1).astype(np.int64)

    def _sum_closed_form(self, counts, rng):
        # sum of m geometrics is negative binomial; numpy rejects n = 0
        out = np.zeros((counts.size, self.dim), dtype=np.int64)
        positive = counts > 0
        if np.any(positive):
            n = counts[positive][:, None]
            out[positive] = rng.negative_binomial(n, self.p[None, :]).astype(np.int64)
        return out

    def to_dict(self):
        return {"kind": self.kind, "params": {"p": self.p.tolist()}}


@dataclass(frozen=True, eq=False)
class JointTable(DistributionSpec):
    """Finite law given by support vectors and simplex weights.

    The only kind with correlated coordinates.  Weights must sum to 1 within
    1e-12.
    """

    support: np.ndarray
    probs: np.ndarray
    kind: str = field(default="joint_table", init=False)

    def __post_init__(self):
        sup = np.asarray(self.support)
        if sup.ndim != 2 or sup.size == 0:
            raise ValidationError("support must be a nonempty list of vectors")
        if np.any(sup < 0) or not np.all(sup == np.floor(sup)):
            raise ValidationError("support must have nonnegative integer entries")
        probs = _as_1d_float(self.probs, "probs")
        if probs.size != sup.shape[0]:
            raise ValidationError("probs length must match support size")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError("probs must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > _WEIGHT_TOL:
            raise ValidationError(
                f"probs must sum to 1 within {_WEIGHT_TOL}, got {probs.sum()!r}"
            )
        object.__setattr__(self, "support", np.asarray(sup, dtype=np.int64))
        object.__setattr__(self, "probs", probs)
        self.support.setflags(write=False)
        self.probs.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    def cov(self) -> np.ndarray:
        mu = self.mean()
        second = (self.probs[:, None, None] * (
            self.support[:, :, None] * self.support[:, None, :]
        )).sum(axis=0)
        return second - np.outer(mu, mu)

    def sample(self, count, rng):
        idx = rng.choice(self.support.shape[0], size=count, p=self.probs)
        return self.support[idx]

    def _sum_closed_form(self, counts, rng):
        # multinomial category counts of m categorical draws, then weight by support
        table_counts = rng.multinomial(counts, self.probs)
        return table_counts @ self.support

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": {"support": self.support.tolist(), "probs": self.probs.tolist()},
        }


_KINDS = {
    "deterministic": lambda p: Deterministic(c=p["c"]),
    "poisson": lambda p: Poisson(lam=p["lam"]),
    "bernoulli": lambda p: Bernoulli(p=p["p"]),
    "geometric": lambda p: Geometric(p=p["p"]),
    "joint_table": lambda p: JointTable(support=p["support"], probs=p["probs"]),
}


def spec_from_dict(payload: dict[str, Any]) -> DistributionSpec:
    """Build a spec from its JSON form ``{"kind": ..., "params": {...}}``."""
    try:
        kind = payload["kind"]
        params = payload["params"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed distribution spec: {payload!r}") from exc
    if kind not in _KINDS:
        raise ValidationError(f"unknown distribution kind {kind!r}")
    try:
        return _KINDS[kind](params)
    except KeyError as exc:
        raise ValidationError(f"missing parameter for kind {kind!r}: {exc}") from exc

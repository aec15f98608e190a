"""Branching-with-immigration models and their structural classification.

A :class:`GwiModel` bundles the per-type offspring laws and the immigration
law of a p-type branching process with immigration, together with the derived
exact first/second-moment parameters: the offspring mean matrix ``A`` (column
i is the mean offspring vector of a type-i individual), the immigration mean
vector ``b``, and the covariance matrices ``V[0] = var(immigration)``,
``V[i] = var(offspring of type i)``.

The module also classifies criticality by spectral radius, computes the
reducible normal form (block lower triangular with irreducible diagonal
blocks, via strongly connected components of the accessibility digraph),
and detects which of the four sub-diagonal sign patterns a 3-type
lower-unipotent mean matrix falls into.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .distributions import DistributionSpec, spec_from_dict
from .errors import ValidationError

__all__ = [
    "GwiModel",
    "CaseId",
    "NormalForm",
    "build_model",
    "classify_criticality",
    "spectral_radius",
    "reducible_normal_form",
    "is_strongly_critical",
    "detect_case",
    "accessible",
    "load_model",
    "save_model",
]

ZERO_TOL = 1e-12
_RADIUS_TOL = 1e-10
_RADIUS_MAX_ITER = 100_000
_CRIT_TOL = 1e-8


def _check_square_nonneg(a, name: str = "A") -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValidationError(f"{name} must be a nonempty square matrix")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    if np.any(arr < 0):
        raise ValidationError(f"{name} must be entrywise nonnegative")
    return arr


@dataclass(frozen=True, eq=False)
class GwiModel:
    """Immutable model: offspring specs per type, immigration spec, derived moments."""

    offspring: tuple[DistributionSpec, ...]
    immigration: DistributionSpec
    A: np.ndarray
    b: np.ndarray
    V: tuple[np.ndarray, ...]

    @property
    def p(self) -> int:
        return self.b.size

    def is_lower_unipotent(self, tol: float = ZERO_TOL) -> bool:
        a = self.A
        if np.any(np.abs(np.diag(a) - 1.0) > tol):
            return False
        return not np.any(np.abs(np.triu(a, 1)) > tol)

    def to_dict(self):
        return {
            "p": self.p,
            "offspring": [s.to_dict() for s in self.offspring],
            "immigration": self.immigration.to_dict(),
        }


def build_model(offspring_specs, immigration_spec: DistributionSpec) -> GwiModel:
    """Derive A, b and V^(0..p) in closed form from the distribution specs.

    Column i of A is the mean of offspring spec i; b is the immigration mean.
    Verifies dimensional consistency and the structural-zero invariant: a zero
    mean entry of a nonnegative integer law forces the coordinate to be a.s.
    zero, hence the matching row/column of its covariance must vanish.
    """
    offspring = tuple(offspring_specs)
    if not offspring:
        raise ValidationError("need at least one offspring spec")
    p = len(offspring)
    for i, spec in enumerate(offspring):
        if spec.dim != p:
            raise ValidationError(
                f"offspring spec {i} emits {spec.dim}-dim vectors, expected {p}"
            )
    if immigration_spec.dim != p:
        raise ValidationError(
            f"immigration spec emits {immigration_spec.dim}-dim vectors, expected {p}"
        )

    A = np.column_stack([spec.mean() for spec in offspring])
    b = immigration_spec.mean().copy()
    V = [immigration_spec.cov()] + [spec.cov() for spec in offspring]

    for j, spec in enumerate(offspring):
        zero_rows = np.flatnonzero(A[:, j] == 0.0)
        cov = V[j + 1]
        if np.any(np.abs(cov[zero_rows, :]) > ZERO_TOL) or np.any(
            np.abs(cov[:, zero_rows]) > ZERO_TOL
        ):
            raise ValidationError(
                f"offspring spec {j} puts mass on a coordinate whose mean entry is zero"
            )
    for cov in V:
        if np.min(np.linalg.eigvalsh((cov + cov.T) / 2.0)) < -1e-9:
            raise ValidationError("covariance matrix is not positive semidefinite")

    A.setflags(write=False)
    b.setflags(write=False)
    for cov in V:
        cov.setflags(write=False)
    return GwiModel(offspring=offspring, immigration=immigration_spec, A=A, b=b, V=tuple(V))


def _is_triangular(a: np.ndarray) -> bool:
    return not np.any(np.tril(a, -1)) or not np.any(np.triu(a, 1))


def spectral_radius(a, tol: float = _RADIUS_TOL, max_iter: int = _RADIUS_MAX_ITER) -> float:
    """Spectral radius of a nonnegative square matrix.

    Triangular matrices are read off the diagonal exactly.  Otherwise power
    iteration runs on A + I (the shift keeps the Perron root dominant even for
    periodic matrices) and 1 is subtracted at the end.
    """
    a = _check_square_nonneg(a)
    if _is_triangular(a):
        return float(np.max(np.diag(a)))
    shifted = a + np.eye(a.shape[0])
    x = np.full(a.shape[0], 1.0 / np.sqrt(a.shape[0]))
    estimate = 0.0
    for _ in range(max_iter):
        y = shifted @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        new_estimate = float(x @ (shifted @ x))
        if abs(new_estimate - estimate) <= tol:
            return new_estimate - 1.0
        estimate = new_estimate
    return estimate - 1.0


def classify_criticality(a) -> str:
    """Return 'subcritical', 'critical' or 'supercritical' by spectral radius vs 1."""
    rho = spectral_radius(a)
    if abs(rho - 1.0) <= _CRIT_TOL:
        return "critical"
    return "subcritical" if rho < 1.0 else "supercritical"


@dataclass(frozen=True, eq=False)
class NormalForm:
    """Permutation to block lower triangular form with irreducible diagonal blocks.

    ``permutation[new] = old``: applying it as ``A[perm][:, perm]`` gives
    ``matrix``.  ``block_sizes`` lists the irreducible diagonal block sizes in
    order; ``n_blocks == 1`` with the identity permutation iff A is irreducible.
    """

    permutation: tuple[int, ...]
    block_sizes: tuple[int, ...]
    matrix: np.ndarray

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    def blocks(self):
        """Diagonal blocks of the permuted matrix, in order."""
        out = []
        start = 0
        for size in self.block_sizes:
            out.append(self.matrix[start : start + size, start : start + size])
            start += size
        return out


def reducible_normal_form(a) -> NormalForm:
    """Strongly-connected-component normal form of a nonnegative matrix.

    Types i, j communicate iff each is reachable from the other in the digraph
    with an edge j -> i whenever a[i, j] > 0.  The communicating classes are
    ordered topologically (producers before their descendants' classes, ties
    broken by smallest original index) so the permuted matrix is block lower
    triangular.
    """
    a = _check_square_nonneg(a)
    p = a.shape[0]
    # csgraph[u, v] != 0 means edge u -> v; our edge j -> i comes from a[i, j] > 0
    n_comp, labels = connected_components(
        (a > 0).T.astype(np.int8), directed=True, connection="strong"
    )
    members: list[list[int]] = [[] for _ in range(n_comp)]
    for idx, lab in enumerate(labels):
        members[lab].append(idx)

    succ: list[set[int]] = [set() for _ in range(n_comp)]
    indeg = [0] * n_comp
    for i in range(p):
        for j in range(p):
            if a[i, j] > 0 and labels[i] != labels[j]:
                if labels[i] not in succ[labels[j]]:
                    succ[labels[j]].add(labels[i])
                    indeg[labels[i]] += 1

    ready = sorted(
        (c for c in range(n_comp) if indeg[c] == 0), key=lambda c: members[c][0]
    )
    order: list[int] = []
    while ready:
        comp = ready.pop(0)
        order.append(comp)
        released = []
        for nxt in succ[comp]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                released.append(nxt)
        if released:
            ready = sorted(ready + released, key=lambda c: members[c][0])

    permutation = tuple(idx for comp in order for idx in members[comp])
    block_sizes = tuple(len(members[comp]) for comp in order)
    perm = np.asarray(permutation)
    matrix = a[np.ix_(perm, perm)]
    matrix.setflags(write=False)
    return NormalForm(permutation=permutation, block_sizes=block_sizes, matrix=matrix)


def is_strongly_critical(a) -> bool:
    """True iff every irreducible diagonal block of the normal form has radius 1."""
    form = reducible_normal_form(a)
    return all(abs(spectral_radius(block) - 1.0) <= _CRIT_TOL for block in form.blocks())


@dataclass(frozen=True)
class CaseId:
    """One of the four sub-diagonal sign patterns, with a normalizing permutation.

    ``permutation[new] = old`` (0-based): the process with coordinates
    reordered by it has a mean matrix matching pattern ``value`` exactly.
    The permutation is the identity except for the two patterns that
    normalize to pattern 2 (only a32 > 0: swap types 1 and 2; only
    a21 > 0: swap types 2 and 3).
    """

    value: int
    permutation: tuple[int, int, int] = (0, 1, 2)

    def __post_init__(self):
        if self.value not in (1, 2, 3, 4):
            raise ValidationError(f"case must be 1..4, got {self.value}")
        if sorted(self.permutation) != [0, 1, 2]:
            raise ValidationError("permutation must be a bijection of {0, 1, 2}")

    @property
    def is_identity(self) -> bool:
        return self.permutation == (0, 1, 2)

    def apply_matrix(self, a) -> np.ndarray:
        """P A P^T for the stored permutation."""
        a = np.asarray(a, dtype=float)
        perm = np.asarray(self.permutation)
        return a[np.ix_(perm, perm)]

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v)[np.asarray(self.permutation)]


def detect_case(a, tol: float = ZERO_TOL) -> CaseId:
    """Classify a 3x3 lower-unipotent mean matrix into patterns 1-4.

    The two sign patterns not in the table (only a32 positive, only a21
    positive) are normalized to pattern 2 by the returned coordinate swap.
    """
    a = _check_square_nonneg(a)
    if a.shape != (3, 3):
        raise ValidationError("detect_case needs a 3x3 matrix")
    if np.any(np.abs(np.diag(a) - 1.0) > tol):
        raise ValidationError("diagonal entries must all be 1")
    if np.any(np.abs(np.triu(a, 1)) > tol):
        raise ValidationError("matrix must be lower triangular (upper entries zero)")

    a21, a31, a32 = a[1, 0] > tol, a[2, 0] > tol, a[2, 1] > tol
    if not a21 and not a31 and not a32:
        return CaseId(1)
    if not a21 and a31:
        return CaseId(2)
    if a21 and a31 and not a32:
        return CaseId(3)
    if a21 and a32:
        return CaseId(4)
    if not a21 and not a31 and a32:
        return CaseId(2, permutation=(1, 0, 2))
    # a21 only
    return CaseId(2, permutation=(0, 2, 1))


def accessible(a, i: int, j: int) -> bool:
    """True iff type ``j`` (0-based) is reachable from type ``i``.

    Reachability means (A^l)[j, i] > 0 for some l in 1..p; paths of length at
    most p suffice.
    """
    a = _check_square_nonneg(a)
    p = a.shape[0]
    if not (0 <= i < p and 0 <= j < p):
        raise ValidationError(f"type indices must be in 0..{p - 1}")
    reach = (a > 0).astype(np.int64)
    power = reach.copy()
    for _ in range(p):
        if power[j, i] > 0:
            return True
        power = np.minimum(power @ reach, 1)
    return False


def load_model(path) -> GwiModel:
    """Read a model from its JSON file form (see README for the schema)."""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(payload)


def model_from_dict(payload: dict) -> GwiModel:
    try:
        offspring = [spec_from_dict(s) for s in payload["offspring"]]
        immigration = spec_from_dict(payload["immigration"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from exc
    model = build_model(offspring, immigration)
    declared = payload.get("p")
    if declared is not None and declared != model.p:
        raise ValidationError(f"declared p={declared} but specs are {model.p}-dimensional")
    return model


def save_model(model: GwiModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")

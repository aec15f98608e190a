"""The four limit diffusion systems and their analytic moments.

Coordinate 1 is always a squared Bessel process started at zero,

    dX_1 = b_1 dt + sqrt(v_1 max(X_1, 0)) dW,

simulated with Euler-Maruyama: the positive part sits inside the square root
exactly as in the SDE, and each step is clamped at zero so paths stay
nonnegative.  Depending on the sub-diagonal pattern, the remaining
coordinates are further independent squared Bessel processes or (iterated)
time integrals accumulated with the trapezoidal rule on the same grid:

* pattern 1: three independent squared Bessel coordinates;
* pattern 2: two independent squared Bessel, X_3 integrates a31 X_1 + a32 X_2;
* pattern 3: X_2 = a21 * int X_1, X_3 = a31 * int X_1;
* pattern 4: X_2 = a21 * int X_1, X_3 = a32 * int X_2 (a 2-fold iterated
  integral of X_1, also expressible through the kernels (t - s) and
  (t - s)^2 / 2; see :func:`kernel_representation_check`).

The squared Bessel marginal at time t started from zero is
Gamma(shape 2 b / v, scale v t / 2), which serves as the exact reference law
for distributional tests on the first coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._cases import exponents_for_case
from .errors import DegenerateLawError, ValidationError
from .model import GwiModel, detect_case

__all__ = [
    "LimitSystem",
    "SdePath",
    "GammaLaw",
    "KernelResiduals",
    "make_grid",
    "simulate_squared_bessel",
    "squared_bessel_marginals",
    "simulate_limit_system",
    "limit_system_marginals",
    "limit_mean_vector",
    "exact_first_coordinate_law",
    "kernel_representation_check",
]


@dataclass(frozen=True)
class LimitSystem:
    """Drift/diffusion parameters of one limit system.

    ``b[i]`` is the immigration mean of coordinate i+1, ``v[i]`` the offspring
    variance of type i+1 in its own coordinate; a21/a31/a32 are the
    sub-diagonal mean-matrix entries.  The sign pattern must match ``case``,
    and ``exponents`` is the scaling triple of that pattern.
    """

    case: int
    b: tuple[float, float, float]
    v: tuple[float, float, float]
    a21: float = 0.0
    a31: float = 0.0
    a32: float = 0.0
    exponents: tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        if self.case not in (1, 2, 3, 4):
            raise ValidationError(f"case must be 1..4, got {self.case}")
        if any(x < 0 for x in (*self.b, *self.v, self.a21, self.a31, self.a32)):
            raise ValidationError("all limit-system parameters must be nonnegative")
        patterns = {
            1: (self.a21 == 0 and self.a31 == 0 and self.a32 == 0),
            2: (self.a21 == 0 and self.a31 > 0),
            3: (self.a21 > 0 and self.a31 > 0 and self.a32 == 0),
            4: (self.a21 > 0 and self.a32 > 0),
        }
        if not patterns[self.case]:
            raise ValidationError(
                f"(a21, a31, a32) = ({self.a21}, {self.a31}, {self.a32}) "
                f"does not match pattern {self.case}"
            )
        object.__setattr__(self, "exponents", exponents_for_case(self.case))

    @classmethod
    def from_model(cls, model: GwiModel) -> "LimitSystem":
        """Derive the limit system of a 3-type lower-unipotent model.

        Applies the normalizing coordinate permutation first when the model's
        sign pattern needs one, so the returned system always refers to the
        normalized coordinate order.
        """
        if model.p != 3:
            raise ValidationError("limit systems are defined for 3-type models")
        cid = detect_case(model.A)
        perm = list(cid.permutation)
        a = cid.apply_matrix(model.A)
        b = cid.apply_vector(model.b)
        v = tuple(float(model.V[perm[i] + 1][perm[i], perm[i]]) for i in range(3))
        return cls(
            case=cid.value,
            b=tuple(float(x) for x in b),
            v=v,
            a21=float(a[1, 0]),
            a31=float(a[2, 0]),
            a32=float(a[2, 1]),
        )


@dataclass(frozen=True, eq=False)
class SdePath:
    """Simulated paths on a grid: ``values[path, time, coordinate]``."""

    grid: np.ndarray
    values: np.ndarray
    seed: int


class GammaLaw(NamedTuple):
    shape: float
    scale: float


def make_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, 2 dt, ..., covering [0, horizon]."""
    if dt <= 0 or horizon <= 0:
        raise ValidationError("horizon and dt must be positive")
    steps = int(round(horizon / dt))
    if abs(steps * dt - horizon) > 1e-9 * max(1.0, horizon):
        steps = int(np.ceil(horizon / dt))
    return np.linspace(0.0, steps * dt, steps + 1)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValidationError("grid needs at least two points")
    if grid[0] != 0.0:
        raise ValidationError("grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid steps must be positive")
    return grid


def _besq_step(
    x: np.ndarray, b: float, v: float, dt: float, normals: np.ndarray
) -> np.ndarray:
    drift = x + b * dt
    if v == 0.0:
        return np.maximum(drift, 0.0)
    diffusion = np.sqrt(v * np.maximum(x, 0.0) * dt) * normals
    return np.maximum(drift + diffusion, 0.0)


def simulate_squared_bessel(
    b: float, v: float, grid, seed: int | np.random.SeedSequence, *, n_paths: int = 1
) -> np.ndarray:
    """Euler-Maruyama paths of dX = b dt + sqrt(v max(X,0)) dW, X(0) = 0.

    Returns shape ``(n_paths, len(grid))``; deterministic given the seed.
    """
    if b < 0 or v < 0:
        raise ValidationError("b and v must be nonnegative")
    grid = _check_grid(grid)
    rng = np.random.default_rng(seed)
    x = np.zeros((n_paths, grid.size))
    for m in range(grid.size - 1):
        dt = grid[m + 1] - grid[m]
        normals = rng.standard_normal(n_paths) if v > 0 else 0.0
        x[:, m + 1] = _besq_step(x[:, m], b, v, dt, normals)
    return x


def squared_bessel_marginals(
    b: float, v: float, t_points, dt: float, n_paths: int, seed: int
) -> np.ndarray:
    """Marginals at ``t_points`` only (streaming; no full-path storage).

    Returns shape ``(n_paths, len(t_points))``.
    """
    if b < 0 or v < 0:
        raise ValidationError("b and v must be nonnegative")
    indices = _grid_indices(t_points, dt)
    rng = np.random.default_rng(seed)
    x = np.zeros(n_paths)
    out = np.zeros((n_paths, indices.size))
    out[:, indices == 0] = 0.0
    for m in range(1, int(indices.max()) + 1):
        normals = rng.standard_normal(n_paths) if v > 0 else 0.0
        x = _besq_step(x, b, v, dt, normals)
        for h in np.flatnonzero(indices == m):
            out[:, h] = x
    return out


def _limit_system_stepper(system: LimitSystem, n_paths: int, rng: np.random.Generator):
    """Returns (state, step) where step(state, dt) advances all coordinates.

    Diffusive coordinates take an Euler-Maruyama step; integral coordinates
    accumulate their integrands by the trapezoidal rule on the same grid.
    """
    b, v = system.b, system.v
    a21, a31, a32 = system.a21, system.a31, system.a32
    state = np.zeros((n_paths, 3))

    def besq(i: int, x: np.ndarray, dt: float) -> np.ndarray:
        normals = rng.standard_normal(n_paths) if v[i] > 0 else 0.0
        return _besq_step(x, b[i], v[i], dt, normals)

    if system.case == 1:

        def step(s: np.ndarray, dt: float) -> np.ndarray:
            return np.column_stack([besq(0, s[:, 0], dt), besq(1, s[:, 1], dt), besq(2, s[:, 2], dt)])

    elif system.case == 2:

        def step(s: np.ndarray, dt: float) -> np.ndarray:
            x1 = besq(0, s[:, 0], dt)
            x2 = besq(1, s[:, 1], dt)
            old = a31 * s[:, 0] + a32 * s[:, 1]
            new = a31 * x1 + a32 * x2
            return np.column_stack([x1, x2, s[:, 2] + 0.5 * dt * (old + new)])

    elif system.case == 3:

        def step(s: np.ndarray, dt: float) -> np.ndarray:
            x1 = besq(0, s[:, 0], dt)
            trap = 0.5 * dt * (s[:, 0] + x1)
            return np.column_stack([x1, s[:, 1] + a21 * trap, s[:, 2] + a31 * trap])

    else:  # case 4: second coordinate integrates X1, third integrates X2

        def step(s: np.ndarray, dt: float) -> np.ndarray:
            x1 = besq(0, s[:, 0], dt)
            x2 = s[:, 1] + a21 * 0.5 * dt * (s[:, 0] + x1)
            x3 = s[:, 2] + a32 * 0.5 * dt * (s[:, 1] + x2)
            return np.column_stack([x1, x2, x3])

    return state, step


def simulate_limit_system(
    system: LimitSystem, grid, seed: int | np.random.SeedSequence, *, n_paths: int = 1
) -> SdePath:
    """Simulate the 3-coordinate limit system on a grid, all paths stored."""
    grid = _check_grid(grid)
    rng = np.random.default_rng(seed)
    state, step = _limit_system_stepper(system, n_paths, rng)
    values = np.zeros((n_paths, grid.size, 3))
    for m in range(grid.size - 1):
        state = step(state, grid[m + 1] - grid[m])
        values[:, m + 1, :] = state
    return SdePath(grid=grid, values=values, seed=seed)


def _grid_indices(t_points, dt: float) -> np.ndarray:
    t_points = np.asarray(t_points, dtype=float)
    if t_points.ndim != 1 or t_points.size == 0 or np.any(t_points < 0):
        raise ValidationError("t_points must be nonnegative and nonempty")
    if dt <= 0:
        raise ValidationError("dt must be positive")
    indices = np.round(t_points / dt).astype(int)
    if np.any(np.abs(indices * dt - t_points) > 1e-9):
        raise ValidationError("every t point must lie on the dt grid")
    return indices


def limit_system_marginals(
    system: LimitSystem, t_points, dt: float, n_paths: int, seed: int | np.random.SeedSequence
) -> np.ndarray:
    """Marginals of the limit system at ``t_points``, shape (n_paths, nt, 3).

    Streaming uniform-grid simulation; every requested time must sit on the
    grid (within 1e-9).
    """
    indices = _grid_indices(t_points, dt)
    rng = np.random.default_rng(seed)
    state, step = _limit_system_stepper(system, n_paths, rng)
    out = np.zeros((n_paths, indices.size, 3))
    out[:, indices == 0, :] = 0.0
    for m in range(1, int(indices.max()) + 1):
        state = step(state, dt)
        hit = np.flatnonzero(indices == m)
        for h in hit:
            out[:, h, :] = state
    return out


def limit_mean_vector(system: LimitSystem, t: float) -> np.ndarray:
    """Closed-form E[X_t] of the limit system (integrate the drift)."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    b1, b2, b3 = system.b
    if system.case == 1:
        return np.array([b1 * t, b2 * t, b3 * t])
    if system.case == 2:
        return np.array(
            [b1 * t, b2 * t, (system.a31 * b1 + system.a32 * b2) * t**2 / 2.0]
        )
    if system.case == 3:
        return np.array(
            [b1 * t, system.a21 * b1 * t**2 / 2.0, system.a31 * b1 * t**2 / 2.0]
        )
    return np.array(
        [
            b1 * t,
            system.a21 * b1 * t**2 / 2.0,
            system.a32 * system.a21 * b1 * t**3 / 6.0,
        ]
    )


def exact_first_coordinate_law(b: float, v: float, t: float) -> GammaLaw:
    """Gamma(shape 2b/v, scale vt/2): the zero-start squared Bessel marginal.

    Degenerate parameters raise :class:`DegenerateLawError` carrying the point
    mass the law collapses to.
    """
    if t <= 0:
        raise ValidationError("t must be positive")
    if v <= 0:
        raise DegenerateLawError(
            f"v = {v}: the path is deterministic, X(t) = b*t", point_mass=b * t
        )
    if b <= 0:
        raise DegenerateLawError(
            "b = 0: started from zero the process is absorbed at zero", point_mass=0.0
        )
    return GammaLaw(shape=2.0 * b / v, scale=v * t / 2.0)


@dataclass(frozen=True)
class KernelResiduals:
    """Pairwise gaps between equivalent discretizations of the integral coordinates.

    ``second_coordinate``: |a21 int_0^t X ds  -  a21 int_0^t (t-s) dX|.
    The three third-coordinate values compare the iterated integral, the
    (t - s)-kernel integral and the (t - s)^2/2 Stieltjes integral, all scaled
    by a32*a21.  ``path_sup`` is sup |X| on [0, t], for tolerance budgets of
    the form C * dt * path_sup.
    """

    second_coordinate: float
    iterated_vs_kernel: float
    iterated_vs_stieltjes: float
    kernel_vs_stieltjes: float
    path_sup: float


def kernel_representation_check(
    path: np.ndarray, grid, t: float, a21: float, a32: float
) -> KernelResiduals:
    """Cross-check the three representations of the iterated-integral coordinate.

    ``path`` holds first-coordinate values on ``grid``; ``t`` must be a grid
    point.  Time integrals use the trapezoidal rule; integrals against dX use
    the left-point (non-anticipating) Stieltjes sum.
    """
    grid = _check_grid(grid)
    path = np.asarray(path, dtype=float)
    if path.shape != grid.shape:
        raise ValidationError("path and grid must have equal length")
    hits = np.flatnonzero(np.abs(grid - t) <= 1e-12)
    if hits.size == 0:
        raise ValidationError(f"t = {t} is not a grid point")
    idx = int(hits[0])
    s = grid[: idx + 1]
    x = path[: idx + 1]
    dx = np.diff(x)

    single_trap = np.trapezoid(x, s)
    single_stieltjes = np.sum((t - s[:-1]) * dx)

    running = np.concatenate(
        [[0.0], np.cumsum(0.5 * np.diff(s) * (x[:-1] + x[1:]))]
    )
    iterated = np.trapezoid(running, s)
    kernel = np.trapezoid((t - s) * x, s)
    stieltjes2 = 0.5 * np.sum((t - s[:-1]) ** 2 * dx)

    c2 = a32 * a21
    return KernelResiduals(
        second_coordinate=abs(a21 * (single_trap - single_stieltjes)),
        iterated_vs_kernel=abs(c2 * (iterated - kernel)),
        iterated_vs_stieltjes=abs(c2 * (iterated - stieltjes2)),
        kernel_vs_stieltjes=abs(c2 * (kernel - stieltjes2)),
        path_sup=float(np.max(np.abs(x))),
    )

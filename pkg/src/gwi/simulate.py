"""Trajectory simulation, martingale increments, and exact sum identities.

The branching recursion draws, for each generation, the summed offspring of
every individual of each type plus one immigration vector:

    X_k = sum_i sum_{j <= X_{k-1, i}} xi_{k, j, i} + eps_k.

Two simulation paths are provided.  :func:`simulate_trajectory` gives each
trajectory its own generator keyed by ``(seed, replica)`` so replicas can run
in parallel with results that depend only on the seeds.
:func:`simulate_ensemble` advances many replicas in lock-step from a single
generator with vectorized draws, the fast path for large Monte Carlo
estimates; it is deterministic given its seed and indifferent to threading
because it never threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable, Sequence

import numpy as np

from .errors import ConsistencyError, OverflowGuardError, ValidationError
from .model import GwiModel

__all__ = [
    "Trajectory",
    "trajectory_rng",
    "simulate_trajectory",
    "simulate_replicas",
    "step_ensemble",
    "simulate_ensemble",
    "martingale_increments",
    "DecompositionComponents",
    "decomposition_components",
    "weighted_sum_identity_1",
    "weighted_sum_identity_2",
    "weighted_sum_identity_3",
]

_OVERFLOW_LIMIT = 2**63 - 1
# draws of summed offspring stay exact (and numpy-representable) well below this
_SAFE_LIMIT = 2**53


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Generation-indexed path of nonnegative integer state vectors.

    ``states[k]`` is X_k for k = 0..K; ``seed``/``replica`` identify the RNG
    stream that produced it.
    """

    states: np.ndarray
    seed: int
    replica: int
    model: GwiModel

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1


def trajectory_rng(seed: int, replica: int = 0) -> np.random.Generator:
    """The generator owned by one trajectory, keyed by (seed, replica)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))


def _check_initial(model: GwiModel, initial) -> np.ndarray:
    if initial is None:
        return np.zeros(model.p, dtype=np.int64)
    arr = np.asarray(initial)
    if arr.shape != (model.p,) or np.any(arr < 0) or not np.all(arr == np.floor(arr)):
        raise ValidationError(f"initial state must be a nonnegative integer {model.p}-vector")
    return arr.astype(np.int64)


def simulate_trajectory(
    model: GwiModel,
    steps: int,
    seed: int,
    *,
    replica: int = 0,
    initial=None,
    exact_sums: bool = True,
) -> Trajectory:
    """Simulate X_0..X_steps; deterministic given (model, steps, seed, replica).

    Raises :class:`OverflowGuardError` if any coordinate would exceed 2**63 - 1.
    """
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    rng = trajectory_rng(seed, replica)
    states = np.zeros((steps + 1, model.p), dtype=np.int64)
    states[0] = _check_initial(model, initial)
    current = states[0][None, :]
    for k in range(1, steps + 1):
        current = step_ensemble(model, current, rng, exact_sums=exact_sums)
        states[k] = current[0]
    states.setflags(write=False)
    return Trajectory(states=states, seed=seed, replica=replica, model=model)


def simulate_replicas(
    model: GwiModel,
    steps: int,
    seed: int,
    replicas: int,
    *,
    workers: int = 1,
    initial=None,
    exact_sums: bool = True,
) -> list[Trajectory]:
    """Independent trajectories for replica indices 0..replicas-1.

    Each replica owns its generator, so the result is identical for any
    ``workers`` count; the returned list is ordered by replica index.
    """
    if replicas < 1:
        raise ValidationError("replicas must be >= 1")

    def run(r: int) -> Trajectory:
        return simulate_trajectory(
            model, steps, seed, replica=r, initial=initial, exact_sums=exact_sums
        )

    if workers <= 1:
        return [run(r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(replicas)))


def step_ensemble(
    model: GwiModel,
    states: np.ndarray,
    rng: np.random.Generator,
    *,
    exact_sums: bool = True,
) -> np.ndarray:
    """One generation for a batch of replicas, shape (replicas, p) -> same.

    Draw order is fixed (types in order, then immigration) so results are
    reproducible for a given generator state.
    """
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[1] != model.p:
        raise ValidationError(f"states must have shape (replicas, {model.p})")
    if np.any(states > _SAFE_LIMIT):
        raise OverflowGuardError(f"population coordinate exceeded {_SAFE_LIMIT}")
    nxt = np.zeros_like(states)
    for i, spec in enumerate(model.offspring):
        nxt += spec.sample_sum(states[:, i], rng, exact_sums=exact_sums)
    nxt += model.immigration.sample(states.shape[0], rng)
    if np.any(nxt < 0) or np.any(nxt > _OVERFLOW_LIMIT - 1):
        raise OverflowGuardError(f"population coordinate exceeded {_OVERFLOW_LIMIT}")
    return nxt


def simulate_ensemble(
    model: GwiModel,
    steps: int,
    replicas: int,
    seed: int | np.random.SeedSequence,
    *,
    record_at: Sequence[int] | None = None,
    initial=None,
    reducer: Callable[[int, np.ndarray], None] | None = None,
) -> np.ndarray | None:
    """Vectorized lock-step simulation of many replicas from one generator.

    Returns states of shape (replicas, len(record_at), p) recorded at the
    requested generation indices (default: all of 0..steps).  When ``reducer``
    is given it is called as ``reducer(k, states)`` after every step instead,
    nothing is stored, and None is returned; this is the streaming mode for
    long-horizon moment estimation.
    """
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    if replicas < 1:
        raise ValidationError("replicas must be >= 1")
    rng = np.random.default_rng(seed)
    state = np.tile(_check_initial(model, initial), (replicas, 1))

    if reducer is not None:
        reducer(0, state)
        for k in range(1, steps + 1):
            state = step_ensemble(model, state, rng)
            reducer(k, state)
        return None

    record = sorted(set(int(k) for k in (record_at if record_at is not None else range(steps + 1))))
    if record and (record[0] < 0 or record[-1] > steps):
        raise ValidationError("record_at indices must lie in 0..steps")
    out = np.zeros((replicas, len(record), model.p), dtype=np.int64)
    positions = {k: idx for idx, k in enumerate(record)}
    if 0 in positions:
        out[:, positions[0], :] = state
    for k in range(1, steps + 1):
        state = step_ensemble(model, state, rng)
        if k in positions:
            out[:, positions[k], :] = state
    return out


def martingale_increments(trajectory: Trajectory) -> np.ndarray:
    """M_k = X_k - A X_{k-1} - b for k = 1..K, shape (K, p).

    The reconstruction X_k = A X_{k-1} + b + M_k then holds to round-off.
    """
    states = trajectory.states
    if states.shape[0] < 2:
        return np.zeros((0, trajectory.model.p))
    a, b = trajectory.model.A, trajectory.model.b
    return states[1:].astype(float) - states[:-1].astype(float) @ a.T - b


def _weighted_cumulatives(innovations: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Running sums of one innovation column with weights 1, (k-l), binom(k-l, 2).

    Index k of each returned array is the weighted sum over l = 1..k, so
    entry 0 is 0 and the arrays have length K+1.
    """
    plain = np.concatenate([[0.0], np.cumsum(innovations)])
    linear = np.concatenate([[0.0], np.cumsum(plain[:-1])])
    binomial = np.concatenate([[0.0], np.cumsum(linear[:-1])])
    return plain, linear, binomial


@dataclass(frozen=True, eq=False)
class DecompositionComponents:
    """Weighted innovation sums that rebuild a 3-type lower-unipotent path.

    With innovations g_i(l) = M_{l,i} + b_i, entry k of each array is:

    * ``sum1``, ``sum2``, ``sum3``: plain sums over l <= k of g_1, g_2, g_3;
    * ``lin1``, ``lin2``: sums of (k - l) g_1(l) and (k - l) g_2(l);
    * ``quad1``: sum of binom(k - l, 2) g_1(l).

    Reconstruction, exact up to round-off:

        X_{k,1} = sum1[k]
        X_{k,2} = a21 * lin1[k] + sum2[k]
        X_{k,3} = a32 * a21 * quad1[k] + a31 * lin1[k] + a32 * lin2[k] + sum3[k]

    (The linearly weighted type-1 sum plays both second-coordinate and
    third-coordinate roles, so it appears once.)
    """

    sum1: np.ndarray
    lin1: np.ndarray
    quad1: np.ndarray
    sum2: np.ndarray
    lin2: np.ndarray
    sum3: np.ndarray


def decomposition_components(
    trajectory: Trajectory, *, rtol: float = 1e-9
) -> DecompositionComponents:
    """Compute the weighted sums and verify they rebuild the trajectory.

    Raises :class:`ConsistencyError` if any reconstruction residual exceeds
    ``rtol`` relative to the state magnitude.
    """
    model = trajectory.model
    if model.p != 3 or not model.is_lower_unipotent():
        raise ValidationError("decomposition needs a 3-type lower-unipotent model")
    if np.any(trajectory.states[0] != 0):
        raise ValidationError("decomposition assumes the trajectory starts at zero")
    states = trajectory.states.astype(float)
    innov = martingale_increments(trajectory) + model.b  # M_l + b, shape (K, 3)
    sum1, lin1, quad1 = _weighted_cumulatives(innov[:, 0])
    sum2, lin2, _ = _weighted_cumulatives(innov[:, 1])
    sum3 = np.concatenate([[0.0], np.cumsum(innov[:, 2])])
    a21, a31, a32 = model.A[1, 0], model.A[2, 0], model.A[2, 1]

    recon = np.column_stack(
        [
            sum1,
            a21 * lin1 + sum2,
            a32 * a21 * quad1 + a31 * lin1 + a32 * lin2 + sum3,
        ]
    )
    scale = np.maximum(1.0, np.abs(states))
    residual = np.max(np.abs(recon - states) / scale)
    if residual > rtol:
        raise ConsistencyError(
            f"decomposition reconstruction residual {residual:.3e} exceeds {rtol:.1e}"
        )
    return DecompositionComponents(
        sum1=sum1, lin1=lin1, quad1=quad1, sum2=sum2, lin2=lin2, sum3=sum3
    )


def _panel_points(end: Fraction, n: int):
    """Panels [m/n, (m+1)/n) covering [0, end), clipped at end, as (m, width)."""
    m = 0
    while Fraction(m, n) < end:
        left = Fraction(m, n)
        right = min(Fraction(m + 1, n), end)
        yield m, right - left
        m += 1


def weighted_sum_identity_1(f: Callable[[int], float], k: int, n: int):
    """Plain sum vs step-function integral: both sides of

        sum_{l=0}^{k} f(l)  ==  n * integral_0^{(k+1)/n} f(floor(n s)) ds.

    The integral side is an exact rational panel sum, so integer-valued f
    gives exact equality.  Returns (lhs, rhs).
    """
    if k < 1 or n < 1:
        raise ValidationError("k and n must be >= 1")
    lhs = sum(f(l) for l in range(k + 1))
    rhs = sum(f(m) * width for m, width in _panel_points(Fraction(k + 1, n), n)) * n
    return lhs, rhs


def weighted_sum_identity_2(f: Callable[[int], float], k: int, n: int):
    """Linearly weighted sum vs integral of the running sum:

        sum_{l=1}^{k} (k - l) f(l)  ==  n * integral_0^{k/n} F(floor(n s)) ds

    with F(m) = sum_{l=1}^{m} f(l).  Returns (lhs, rhs), exact for integer f.
    """
    if k < 1 or n < 1:
        raise ValidationError("k and n must be >= 1")
    lhs = sum((k - l) * f(l) for l in range(1, k + 1))
    running = _running_sums(f, k)
    rhs = sum(running[m] * width for m, width in _panel_points(Fraction(k, n), n)) * n
    return lhs, rhs


def weighted_sum_identity_3(f: Callable[[int], float], k: int, n: int):
    """Binomially weighted sum vs the twice-iterated step integral:

        sum_{l=1}^{k} binom(k - l, 2) f(l)
            ==  n^2 * integral_0^{k/n} integral_0^{floor(n r)/n} F(floor(n s)) ds dr.

    Returns (lhs, rhs), exact for integer f.
    """
    if k < 1 or n < 1:
        raise ValidationError("k and n must be >= 1")
    lhs = sum(comb(k - l, 2) * f(l) for l in range(1, k + 1))
    running = _running_sums(f, k)
    inner_cache: dict[int, Fraction] = {}

    def inner(m: int):
        # integral_0^{m/n} F(floor(n s)) ds as an exact panel sum
        if m not in inner_cache:
            inner_cache[m] = sum(
                (running[h] * width for h, width in _panel_points(Fraction(m, n), n)),
                start=Fraction(0),
            )
        return inner_cache[m]

    rhs = sum(
        (inner(m) * width for m, width in _panel_points(Fraction(k, n), n)),
        start=Fraction(0),
    ) * n**2
    return lhs, rhs


def _running_sums(f: Callable[[int], float], k: int) -> list:
    """F(m) = sum_{l=1}^m f(l) for m = 0..k."""
    running = [0]
    for l in range(1, k + 1):
        running.append(running[-1] + f(l))
    return running

from __future__ import annotations

from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwi import (
    Deterministic,
    OverflowGuardError,
    Trajectory,
    ValidationError,
    build_model,
    decomposition_components,
    martingale_increments,
    mean_vector,
    simulate_ensemble,
    simulate_replicas,
    simulate_trajectory,
    weighted_sum_identity_1,
    weighted_sum_identity_2,
    weighted_sum_identity_3,
)
from util import deterministic_model, poisson_case_model, single_type_poisson


def test_no_immigration_stays_zero():
    model = poisson_case_model(4, immigration=(0, 0, 0))
    traj = simulate_trajectory(model, 30, seed=0)
    assert np.all(traj.states == 0)


def test_deterministic_replacement_grows_linearly():
    model = deterministic_model(b=(2, 1, 3))
    traj = simulate_trajectory(model, 10, seed=5)
    for k in range(11):
        assert np.array_equal(traj.states[k], [2 * k, k, 3 * k])


def test_single_type_poisson_mean():
    model = single_type_poisson()
    replicas = 100_000
    states = simulate_ensemble(model, 20, replicas, seed=17, record_at=[20])
    sample = states[:, 0, 0].astype(float)
    # E X_20 = 20, Var X_20 = 20 * 21 / 2 = 210
    se = sample.std(ddof=1) / np.sqrt(replicas)
    assert abs(sample.mean() - 20.0) <= 4.0 * se


def test_trajectory_determinism_and_replica_streams():
    model = poisson_case_model(4)
    a = simulate_trajectory(model, 40, seed=9)
    b = simulate_trajectory(model, 40, seed=9)
    assert np.array_equal(a.states, b.states)
    c = simulate_trajectory(model, 40, seed=9, replica=1)
    assert not np.array_equal(a.states, c.states)
    d = simulate_trajectory(model, 40, seed=10)
    assert not np.array_equal(a.states, d.states)


def test_replicas_order_is_worker_independent():
    model = poisson_case_model(4)
    serial = simulate_replicas(model, 25, seed=3, replicas=6, workers=1)
    threaded = simulate_replicas(model, 25, seed=3, replicas=6, workers=4)
    for a, b in zip(serial, threaded):
        assert a.replica == b.replica
        assert np.array_equal(a.states, b.states)


def test_ensemble_matches_moments():
    model = poisson_case_model(4)
    states = simulate_ensemble(model, 10, 50_000, seed=23, record_at=[10])
    sample = states[:, 0, :].astype(float)
    expected = mean_vector(model, 10)
    se = sample.std(axis=0, ddof=1) / np.sqrt(sample.shape[0])
    assert np.all(np.abs(sample.mean(axis=0) - expected) <= 4.0 * se)


def test_ensemble_reducer_streaming_matches_recorded():
    model = poisson_case_model(2)
    seen = {}

    def reducer(k, states):
        seen[k] = states.copy()

    simulate_ensemble(model, 5, 11, seed=4, reducer=reducer)
    recorded = simulate_ensemble(model, 5, 11, seed=4)
    for k in range(6):
        assert np.array_equal(seen[k], recorded[:, k, :])


def test_nonzero_initial_state():
    model = deterministic_model(b=(0, 0, 0))
    traj = simulate_trajectory(model, 4, seed=0, initial=[5, 1, 2])
    assert np.array_equal(traj.states[-1], [5, 1, 2])
    with pytest.raises(ValidationError):
        simulate_trajectory(model, 2, seed=0, initial=[-1, 0, 0])


def test_overflow_guard_trips():
    doubling = build_model([Deterministic([2])], Deterministic([1]))
    with pytest.raises(OverflowGuardError):
        simulate_trajectory(doubling, 80, seed=0)


def test_martingale_increments_reconstruction():
    model = poisson_case_model(4)
    traj = simulate_trajectory(model, 60, seed=31)
    increments = martingale_increments(traj)
    states = traj.states.astype(float)
    rebuilt = states[:-1] @ model.A.T + model.b + increments
    assert np.allclose(rebuilt, states[1:], rtol=1e-12, atol=1e-9)


def test_martingale_increments_deterministic_model_zero():
    traj = simulate_trajectory(deterministic_model(), 10, seed=2)
    assert np.allclose(martingale_increments(traj), 0.0)


def test_martingale_increments_hand_example():
    model = single_type_poisson()
    # path (0, 2, 1) with A = 1, b = 1: M = (1, -2)
    states = np.array([[0], [2], [1]], dtype=np.int64)
    traj = Trajectory(states=states, seed=0, replica=0, model=model)
    assert np.allclose(martingale_increments(traj), [[1.0], [-2.0]])


def test_empirical_martingale_property():
    model = poisson_case_model(4)
    replicas = 100_000
    states = simulate_ensemble(model, 10, replicas, seed=37, record_at=[9, 10])
    m = (
        states[:, 1, :].astype(float)
        - states[:, 0, :].astype(float) @ model.A.T
        - model.b
    )
    se = m.std(axis=0, ddof=1) / np.sqrt(replicas)
    assert np.all(np.abs(m.mean(axis=0)) <= 4.0 * se)


def test_decomposition_zero_model():
    model = poisson_case_model(4, immigration=(0, 0, 0))
    traj = simulate_trajectory(model, 15, seed=1)
    comp = decomposition_components(traj)
    for arr in (comp.sum1, comp.lin1, comp.quad1, comp.sum2, comp.lin2, comp.sum3):
        assert np.all(arr == 0.0)


def test_decomposition_identity_pattern_is_plain_sums():
    model = poisson_case_model(1)
    traj = simulate_trajectory(model, 40, seed=8)
    comp = decomposition_components(traj)
    states = traj.states.astype(float)
    assert np.allclose(comp.sum1, states[:, 0])
    assert np.allclose(comp.sum2, states[:, 1])
    assert np.allclose(comp.sum3, states[:, 2])


def test_decomposition_case4_reconstruction():
    model = poisson_case_model(4)
    for seed in range(10):
        traj = simulate_trajectory(model, 50, seed=seed)
        comp = decomposition_components(traj, rtol=1e-9)
        # the linearly weighted type-1 sum serves both roles
        k = traj.steps
        states = traj.states.astype(float)
        a21, a31, a32 = model.A[1, 0], model.A[2, 0], model.A[2, 1]
        assert states[k, 2] == pytest.approx(
            a32 * a21 * comp.quad1[k]
            + a31 * comp.lin1[k]
            + a32 * comp.lin2[k]
            + comp.sum3[k],
            rel=1e-9,
        )


def test_decomposition_direct_weighted_sum_oracle():
    model = poisson_case_model(4)
    traj = simulate_trajectory(model, 25, seed=77)
    comp = decomposition_components(traj)
    innov = martingale_increments(traj) + model.b
    for k in (1, 5, 25):
        direct_lin = sum((k - l) * innov[l - 1, 0] for l in range(1, k + 1))
        direct_quad = sum(comb(k - l, 2) * innov[l - 1, 0] for l in range(1, k + 1))
        assert comp.lin1[k] == pytest.approx(direct_lin, rel=1e-12, abs=1e-9)
        assert comp.quad1[k] == pytest.approx(direct_quad, rel=1e-12, abs=1e-9)


def test_decomposition_requires_three_types():
    with pytest.raises(ValidationError):
        decomposition_components(simulate_trajectory(single_type_poisson(), 5, seed=0))


@pytest.mark.parametrize(
    "identity, f, k, n, expected",
    [
        (weighted_sum_identity_1, lambda l: 1, 7, 3, 8),
        (weighted_sum_identity_1, lambda l: l, 4, 2, 10),
        (weighted_sum_identity_2, lambda l: 0, 5, 2, 0),
        (weighted_sum_identity_2, lambda l: l, 4, 2, 10),
        (weighted_sum_identity_2, lambda l: 1, 5, 4, 10),
        (weighted_sum_identity_3, lambda l: 0, 4, 3, 0),
        (weighted_sum_identity_3, lambda l: 1, 5, 3, 10),
    ],
)
def test_weighted_sum_identity_examples(identity, f, k, n, expected):
    lhs, rhs = identity(f, k, n)
    assert lhs == expected
    assert lhs == rhs


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.integers(-9, 9), min_size=2, max_size=101),
    n=st.sampled_from([1, 2, 3, 7, 64]),
)
def test_weighted_sum_identities_exact_property(values, n):
    k = len(values) - 1
    f = lambda l: values[l]  # noqa: E731
    for identity in (
        weighted_sum_identity_1,
        weighted_sum_identity_2,
        weighted_sum_identity_3,
    ):
        lhs, rhs = identity(f, k, n)
        assert lhs == rhs
        assert Fraction(rhs).denominator == 1


def test_weighted_sum_identities_validate_inputs():
    with pytest.raises(ValidationError):
        weighted_sum_identity_1(lambda l: 1, 0, 3)
    with pytest.raises(ValidationError):
        weighted_sum_identity_2(lambda l: 1, 2, 0)

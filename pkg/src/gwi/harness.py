"""Monte Carlo verification harness.

Builds the scaled random step processes t -> n^{-e_i} X_{floor(n t), i},
compares their marginals against simulated limit systems (moments,
two-sample Kolmogorov-Smirnov, Wasserstein-1, and the exact Gamma reference
for the first coordinate), and fits the polynomial growth exponents of the
martingale moment bounds on dyadic ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special, stats

from ._cases import exponents_for_case
from .errors import DegenerateLawError, ValidationError
from .model import GwiModel, detect_case
from .moments import mean_vector, moment_growth_targets
from .sde import (
    LimitSystem,
    exact_first_coordinate_law,
    limit_mean_vector,
    limit_system_marginals,
)
from .simulate import simulate_ensemble

__all__ = [
    "exponents_for_case",
    "ScaledStepProcess",
    "step_integral_functional",
    "ks_two_sample",
    "wasserstein1",
    "MarginalStats",
    "ConvergenceReport",
    "run_convergence_experiment",
    "GrowthFitResult",
    "growth_fit",
]


@dataclass(frozen=True, eq=False)
class ScaledStepProcess:
    """Piecewise-constant evaluator t -> n^{-e_i} X_{floor(n t), i}.

    Right-continuous in t; the trajectory must reach generation floor(n t).
    """

    n: int
    exponents: tuple[int, ...]
    states: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        k = math.floor(self.n * t)
        if t < 0 or k >= self.states.shape[0]:
            raise ValidationError(f"t = {t} needs generation {k}, trajectory is shorter")
        scale = np.asarray([float(self.n) ** -e for e in self.exponents])
        return self.states[k].astype(float) * scale


def step_integral_functional(step_values, n: int, t: float):
    """Value, integral and iterated integral of a step function at scale n.

    ``step_values[k]`` is f(k / n).  Returns the triple

        ( f(t),
          integral_0^{floor(nt)/n} f(floor(n s)) ds,
          integral_0^{floor(nt)/n} integral_0^{floor(nr)/n} f(floor(n s)) ds dr )

    computed as exact panel sums (integer inputs stay integer until the final
    division by n and n^2).
    """
    values = np.asarray(step_values)
    if values.ndim != 1 or values.size == 0:
        raise ValidationError("step_values must be a nonempty 1-d sequence")
    if n < 1 or t < 0:
        raise ValidationError("need n >= 1 and t >= 0")
    k = math.floor(n * t)
    if k >= values.size:
        raise ValidationError(f"t = {t} needs value index {k}, got {values.size - 1}")
    running = np.concatenate([[values[0] * 0], np.cumsum(values)])  # running[m] = sum_{h<m} f_h
    single = running[k]
    double = np.sum(running[:k])
    return values[k], single / n, double / n**2


def ks_two_sample(xs, ys) -> tuple[float, float]:
    """Classical two-sample KS statistic sup |F - G| with asymptotic p-value."""
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise ValidationError("samples must be nonempty")
    pooled = np.concatenate([xs, ys])
    cdf_x = np.searchsorted(xs, pooled, side="right") / xs.size
    cdf_y = np.searchsorted(ys, pooled, side="right") / ys.size
    statistic = float(np.max(np.abs(cdf_x - cdf_y)))
    en = math.sqrt(xs.size * ys.size / (xs.size + ys.size))
    p_value = float(special.kolmogorov(en * statistic))
    return statistic, p_value


def wasserstein1(xs, ys) -> float:
    """Mean absolute difference of order statistics (equal sizes).

    Unequal sizes are resampled deterministically onto the common quantile
    grid (i + 1/2) / m with m the larger size.
    """
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.size == 0 or ys.size == 0:
        raise ValidationError("samples must be nonempty")
    if xs.size != ys.size:
        m = max(xs.size, ys.size)
        q = (np.arange(m) + 0.5) / m
        xs = np.quantile(xs, q)
        ys = np.quantile(ys, q)
    return float(np.mean(np.abs(xs - ys)))


@dataclass(frozen=True)
class MarginalStats:
    """Scaled-marginal statistics for one (n, t, coordinate) cell."""

    n: int
    t: float
    coordinate: int
    replicas: int
    mean: float
    variance: float
    ci_low: float
    ci_high: float
    exact_scaled_mean: float
    limit_mean: float
    sde_mean: float
    ks_stat: float
    ks_pvalue: float
    wasserstein: float
    gamma_ks_stat: float | None = None
    gamma_ks_pvalue: float | None = None


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    """All per-(n, t, coordinate) statistics of one experiment plus trends."""

    case: int
    permutation: tuple[int, int, int]
    n_list: tuple[int, ...]
    t_points: tuple[float, ...]
    replicas: int
    sde_paths: int
    dt: float
    seed: int
    ci_level: float
    entries: tuple[MarginalStats, ...]
    trends: tuple[dict, ...] = field(default_factory=tuple)

    def entry(self, n: int, t: float, coordinate: int) -> MarginalStats:
        for e in self.entries:
            if e.n == n and e.t == t and e.coordinate == coordinate:
                return e
        raise KeyError((n, t, coordinate))

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "permutation": list(self.permutation),
            "n_list": list(self.n_list),
            "t_points": list(self.t_points),
            "replicas": self.replicas,
            "sde_paths": self.sde_paths,
            "dt": self.dt,
            "seed": self.seed,
            "ci_level": self.ci_level,
            "entries": [vars(e).copy() for e in self.entries],
            "trends": [dict(tr) for tr in self.trends],
        }

    CSV_FIELDS = (
        "n",
        "t",
        "coordinate",
        "replicas",
        "mean",
        "variance",
        "ci_low",
        "ci_high",
        "exact_scaled_mean",
        "limit_mean",
        "sde_mean",
        "ks_stat",
        "ks_pvalue",
        "wasserstein",
        "gamma_ks_stat",
        "gamma_ks_pvalue",
    )

    def rows(self):
        """Flat per-(n, t, coordinate) rows matching CSV_FIELDS."""
        for e in self.entries:
            yield [getattr(e, name) for name in self.CSV_FIELDS]


def _ci_halfwidth(variance: float, count: int, level: float) -> float:
    return float(stats.norm.ppf(0.5 + level / 2.0) * math.sqrt(max(variance, 0.0) / count))


DEFAULT_N_LIST = (125, 250, 500, 1000, 2000)
DEFAULT_T_POINTS = (0.25, 0.5, 1.0)


def run_convergence_experiment(
    model: GwiModel,
    case: int,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    replicas: int = 2000,
    t_points: Sequence[float] = DEFAULT_T_POINTS,
    sde_paths: int = 2000,
    seed: int = 0,
    *,
    dt: float = 1e-3,
    ci_level: float = 0.95,
) -> ConvergenceReport:
    """Scaled-marginal comparison of a model against its limit system.

    One ensemble of ``replicas`` trajectories runs to generation
    ceil(max(n) * max(t)) and is read at every (n, t) marginal, so the scaled
    samples across n are coupled (common random numbers); each marginal test
    stays valid on its own while distance-trend comparisons across n lose the
    independent resampling noise.  Marginals are compared to a simulated
    limit-system ensemble: moments with CIs, two-sample KS, Wasserstein-1,
    and the exact Gamma reference for the first coordinate.
    """
    if model.p != 3:
        raise ValidationError("convergence experiments need a 3-type model")
    cid = detect_case(model.A)
    if cid.value != case:
        raise ValidationError(f"model matches pattern {cid.value}, experiment asked for {case}")
    if replicas < 1000:
        raise ValidationError("need at least 1000 replicas for the stated CI levels")
    if sde_paths < 2:
        raise ValidationError("need at least 2 limit-system paths")
    n_list = [int(n) for n in n_list]
    t_points = [float(t) for t in t_points]
    if not n_list or any(n < 1 for n in n_list):
        raise ValidationError("n_list must be nonempty positive integers")
    if not t_points or any(t <= 0 for t in t_points):
        raise ValidationError("t_points must be nonempty and positive")

    system = LimitSystem.from_model(model)
    exps = np.asarray(exponents_for_case(case), dtype=float)
    perm = np.asarray(cid.permutation)

    root = np.random.SeedSequence(entropy=seed)
    gwi_seed, sde_seed = root.spawn(2)
    sde_samples = limit_system_marginals(system, t_points, dt, sde_paths, sde_seed)

    gamma_law = None
    try:
        gamma_law = exact_first_coordinate_law(system.b[0], system.v[0], 1.0)
    except DegenerateLawError:
        pass

    horizon = math.ceil(max(n_list) * max(t_points))
    record = sorted({math.floor(n * t) for n in n_list for t in t_points})
    recorded = simulate_ensemble(model, horizon, replicas, gwi_seed, record_at=record)
    position = {k: i for i, k in enumerate(record)}

    entries: list[MarginalStats] = []
    for n in n_list:
        for ti, t in enumerate(t_points):
            k = math.floor(n * t)
            raw = recorded[:, position[k], :].astype(float)[:, perm]
            scaled = raw / np.power(float(n), exps)
            exact_scaled = cid.apply_vector(mean_vector(model, k)) / np.power(float(n), exps)
            limit_mu = limit_mean_vector(system, t)
            for c in range(3):
                xs = scaled[:, c]
                ys = sde_samples[:, ti, c]
                mean = float(np.mean(xs))
                variance = float(np.var(xs, ddof=1))
                half = _ci_halfwidth(variance, replicas, ci_level)
                ks_stat, ks_p = ks_two_sample(xs, ys)
                gamma_stat = gamma_p = None
                if c == 0 and gamma_law is not None:
                    law = exact_first_coordinate_law(system.b[0], system.v[0], t)
                    res = stats.kstest(xs, stats.gamma(a=law.shape, scale=law.scale).cdf)
                    gamma_stat, gamma_p = float(res.statistic), float(res.pvalue)
                entries.append(
                    MarginalStats(
                        n=n,
                        t=t,
                        coordinate=c,
                        replicas=replicas,
                        mean=mean,
                        variance=variance,
                        ci_low=mean - half,
                        ci_high=mean + half,
                        exact_scaled_mean=float(exact_scaled[c]),
                        limit_mean=float(limit_mu[c]),
                        sde_mean=float(np.mean(ys)),
                        ks_stat=ks_stat,
                        ks_pvalue=ks_p,
                        wasserstein=wasserstein1(xs, ys),
                        gamma_ks_stat=gamma_stat,
                        gamma_ks_pvalue=gamma_p,
                    )
                )

    trends = []
    n_small, n_large = min(n_list), max(n_list)
    for t in t_points:
        for c in range(3):
            w_by_n = {e.n: e.wasserstein for e in entries if e.t == t and e.coordinate == c}
            trends.append(
                {
                    "t": t,
                    "coordinate": c,
                    "n_small": n_small,
                    "n_large": n_large,
                    "w_small": w_by_n[n_small],
                    "w_large": w_by_n[n_large],
                    "improved": w_by_n[n_large] < w_by_n[n_small],
                }
            )

    return ConvergenceReport(
        case=case,
        permutation=cid.permutation,
        n_list=tuple(n_list),
        t_points=tuple(t_points),
        replicas=replicas,
        sde_paths=sde_paths,
        dt=dt,
        seed=seed,
        ci_level=ci_level,
        entries=tuple(entries),
        trends=tuple(trends),
    )


_QUANTITIES = ("sup_sum_sq", "weighted_sup_sum_sq", "fourth_moment")


@dataclass(frozen=True, eq=False)
class GrowthFitResult:
    """Log-log growth fit of one Monte Carlo quantity across sizes.

    ``estimates[s, i]`` is the estimate at ``sizes[s]`` for coordinate i;
    ``slopes[i]`` is the fitted log-log slope (None when the coordinate is
    degenerate, i.e. some estimate is zero); ``targets[i]`` is the predicted
    exponent (None where no prediction applies).
    """

    quantity: str
    sizes: tuple[int, ...]
    estimates: np.ndarray
    slopes: tuple[float | None, ...]
    targets: tuple[float | None, ...]

    @property
    def degenerate(self) -> tuple[bool, ...]:
        return tuple(s is None for s in self.slopes)


def growth_fit(
    model: GwiModel,
    quantity: str,
    n_list: Sequence[int],
    replicas: int,
    seed: int,
) -> GrowthFitResult:
    """Monte Carlo growth-exponent fit for martingale moment quantities.

    * ``sup_sum_sq``: E sup_{k <= n} (sum_{l<=k} (M_{l,i} + b_i))^2, fitted
      across n in ``n_list``; predicted slope is the mean growth degree + 1.
    * ``weighted_sup_sum_sq``: same with weights (k - l); predicted degree + 3.
    * ``fourth_moment``: E M_{k,i}^4 across k in ``n_list``; predicted slope 2
      for coordinates fed by their own type only.
    """
    if quantity not in _QUANTITIES:
        raise ValidationError(f"quantity must be one of {_QUANTITIES}")
    if not model.is_lower_unipotent():
        raise ValidationError("growth fits require a lower-unipotent mean matrix")
    n_list = sorted(int(n) for n in n_list)
    if not n_list or n_list[0] < 1:
        raise ValidationError("n_list must be positive integers")
    if replicas < 2:
        raise ValidationError("need at least 2 replicas")

    targets_all = moment_growth_targets(model)
    if quantity == "sup_sum_sq":
        targets = tuple(float(e) for e in targets_all["sum_sup"])
        estimates = np.stack(
            [_sup_sum_estimate(model, n, replicas, seed, weighted=False) for n in n_list]
        )
    elif quantity == "weighted_sup_sum_sq":
        targets = tuple(float(e) for e in targets_all["weighted_sum_sup"])
        estimates = np.stack(
            [_sup_sum_estimate(model, n, replicas, seed, weighted=True) for n in n_list]
        )
    else:
        targets = tuple(
            float(e) if e is not None else None for e in targets_all["fourth"]
        )
        estimates = _fourth_moment_estimates(model, n_list, replicas, seed)

    slopes: list[float | None] = []
    log_sizes = np.log(np.asarray(n_list, dtype=float))
    for i in range(model.p):
        column = estimates[:, i]
        if np.any(column <= 0) or len(n_list) < 2:
            slopes.append(None)
        else:
            slope = np.polyfit(log_sizes, np.log(column), 1)[0]
            slopes.append(float(slope))
    return GrowthFitResult(
        quantity=quantity,
        sizes=tuple(n_list),
        estimates=estimates,
        slopes=tuple(slopes),
        targets=targets,
    )


def _sup_sum_estimate(
    model: GwiModel, n: int, replicas: int, seed: int, *, weighted: bool
) -> np.ndarray:
    """Mean over replicas of sup_{k<=n} S_k^2 (or W_k^2), streaming."""
    a_t = model.A.T
    prev = {}
    acc = {
        "sum": np.zeros((replicas, model.p)),
        "weighted": np.zeros((replicas, model.p)),
        "best": np.zeros((replicas, model.p)),
    }

    def reducer(k: int, states: np.ndarray) -> None:
        if k == 0:
            prev["states"] = states.astype(float)
            return
        innov = states.astype(float) - prev["states"] @ a_t  # M_k + b
        if weighted:
            acc["weighted"] += acc["sum"]
            acc["best"] = np.maximum(acc["best"], acc["weighted"] ** 2)
            acc["sum"] += innov
        else:
            acc["sum"] += innov
            acc["best"] = np.maximum(acc["best"], acc["sum"] ** 2)
        prev["states"] = states.astype(float)

    child = np.random.SeedSequence(entropy=seed, spawn_key=(n,))
    simulate_ensemble(model, n, replicas, child, reducer=reducer)
    return np.mean(acc["best"], axis=0)


def _fourth_moment_estimates(
    model: GwiModel, k_list: list[int], replicas: int, seed: int
) -> np.ndarray:
    """E M_k^4 per coordinate at each k in k_list, one streaming pass."""
    wanted = set(k_list)
    a_t = model.A.T
    prev = {}
    results: dict[int, np.ndarray] = {}

    def reducer(k: int, states: np.ndarray) -> None:
        if k == 0:
            prev["states"] = states.astype(float)
            return
        if k in wanted:
            m = states.astype(float) - prev["states"] @ a_t - model.b
            results[k] = np.mean(m**4, axis=0)
        prev["states"] = states.astype(float)

    child = np.random.SeedSequence(entropy=seed, spawn_key=(max(k_list),))
    simulate_ensemble(model, max(k_list), replicas, child, reducer=reducer)
    return np.stack([results[k] for k in k_list])

"""Empirical observables and Wasserstein distance estimators.

Moments are plain Monte Carlo averages with run-to-run standard errors.
For distances we keep a small-instance exact route (1-d quantile coupling
and optimal assignment) next to the scalable sliced surrogate, which is a
lower bound in d >= 2 and labeled as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

ASSIGNMENT_CAP = 64


@dataclass
class MomentSeries:
    times: list
    order_2k: int
    values: list
    stderr: list

    def __post_init__(self):
        if not (len(self.times) == len(self.values) == len(self.stderr)):
            raise ValueError("times, values and stderr must have equal length")

    def to_rows(self):
        return list(zip(self.times, self.values, self.stderr))


@dataclass
class DistanceEstimate:
    method: str  # exact-1d | assignment-exact | sliced | coupled-upper
    p: int
    value: float
    samples_per_side: int
    n_projections: int = 0
    resampled: bool = False


def _mc_mean(per_run: np.ndarray):
    """Mean and stderr over the run axis (axis 0)."""
    m = per_run.mean(axis=0)
    if per_run.shape[0] > 1:
        se = per_run.std(axis=0, ddof=1) / np.sqrt(per_run.shape[0])
    else:
        se = np.zeros_like(m)
    return m, se


def moment(positions: np.ndarray, order_2k: int, times=None) -> MomentSeries:
    """E |X^i|^{2k} averaged over particles and runs.

    positions: (runs, n, d) for a single time or (n_times, runs, n, d).
    """
    if order_2k < 2 or order_2k % 2:
        raise ValueError("order must be an even integer >= 2")
    x = np.asarray(positions, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    sq = np.sum(x * x, axis=-1)
    per_run = (sq ** (order_2k / 2)).mean(axis=-1)  # (n_times, runs)
    vals, ses = _mc_mean(per_run.T)
    if times is None:
        times = list(range(x.shape[0]))
    return MomentSeries(list(times), order_2k, [float(v) for v in vals], [float(s) for s in ses])


def pairwise_moment(positions: np.ndarray, order_2k: int, times=None) -> MomentSeries:
    """E |X^i - X^j|^{2k} averaged over ordered pairs i != j and runs."""
    if order_2k < 2 or order_2k % 2:
        raise ValueError("order must be an even integer >= 2")
    x = np.asarray(positions, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    n = x.shape[-2]
    diff = x[..., :, None, :] - x[..., None, :, :]
    sq = np.sum(diff * diff, axis=-1) ** (order_2k / 2)
    per_run = sq.sum(axis=(-2, -1)) / (n * (n - 1))  # (n_times, runs)
    vals, ses = _mc_mean(per_run.T)
    if times is None:
        times = list(range(x.shape[0]))
    return MomentSeries(list(times), order_2k, [float(v) for v in vals], [float(s) for s in ses])


def _as_points(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _match_counts(a: np.ndarray, b: np.ndarray, seed: int = 0):
    if a.shape[0] == b.shape[0]:
        return a, b, False
    m = max(a.shape[0], b.shape[0])
    rng = np.random.default_rng(seed)
    if a.shape[0] < m:
        a = a[rng.integers(0, a.shape[0], m)]
    if b.shape[0] < m:
        b = b[rng.integers(0, b.shape[0], m)]
    return a, b, True


def wasserstein_1d(samples_a, samples_b, p: int = 2) -> DistanceEstimate:
    """Quantile-coupling W_p for one-dimensional samples (exact for equal
    sample counts; unequal counts are matched by resampling, recorded)."""
    a = _as_points(samples_a)
    b = _as_points(samples_b)
    if a.shape[1] != 1 or b.shape[1] != 1:
        raise ValueError("wasserstein_1d requires one-dimensional samples")
    a, b, resampled = _match_counts(a, b)
    av = np.sort(a[:, 0])
    bv = np.sort(b[:, 0])
    value = float(np.mean(np.abs(av - bv) ** p) ** (1.0 / p))
    return DistanceEstimate("exact-1d", p, value, av.size, resampled=resampled)


def assignment_exact(samples_a, samples_b, p: int = 2) -> DistanceEstimate:
    """Exact optimal-transport distance between equal-weight empirical
    measures via minimum-cost perfect matching (count capped)."""
    a = _as_points(samples_a)
    b = _as_points(samples_b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("assignment_exact requires equal sample counts")
    if a.shape[0] > ASSIGNMENT_CAP:
        raise ValueError(
            f"assignment_exact capped at {ASSIGNMENT_CAP} samples; use sliced_w2"
        )
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1) ** p
    rows, cols = linear_sum_assignment(cost)
    value = float((cost[rows, cols].mean()) ** (1.0 / p))
    return DistanceEstimate("assignment-exact", p, value, a.shape[0])


def sliced_w2(samples_a, samples_b, n_projections: int = 64, seed: int = 0) -> DistanceEstimate:
    """Average of squared 1-d quantile distances over random directions.
    Lower-bounds W_2 in d >= 2."""
    a = _as_points(samples_a)
    b = _as_points(samples_b)
    d = a.shape[1]
    if d < 2:
        raise ValueError("sliced_w2 is for d >= 2; use wasserstein_1d")
    a, b, resampled = _match_counts(a, b, seed)
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(n_projections):
        theta = rng.normal(size=d)
        theta /= np.linalg.norm(theta)
        pa = np.sort(a @ theta)
        pb = np.sort(b @ theta)
        acc += float(np.mean((pa - pb) ** 2))
    value = float(np.sqrt(acc / n_projections))
    return DistanceEstimate(
        "sliced", 2, value, a.shape[0], n_projections=n_projections, resampled=resampled
    )


@dataclass
class ExpSquareMomentSeries:
    times: list
    delta: float
    values: list
    stderr: list
    heavy_tail_flags: list  # True when the max sample dominates the mean


def exp_square_moment(
    sq_distances: np.ndarray,
    delta: float,
    times=None,
    lambda_hat: float | None = None,
    diffusion_bound_A: float | None = None,
    dominance_fraction: float = 0.5,
) -> ExpSquareMomentSeries:
    """MC estimate of E exp(delta |X_t - Y_t|^2) from squared distances of
    independent coupled copies, shape (n_times, runs).

    Refuses deltas outside the contraction regime delta < lambda / (2 A)
    when the fitted constants are supplied; the bound being estimated only
    holds there.  (This A is the Hilbert-Schmidt diffusion bound, not the
    degenerate-convexity constant.)
    """
    if lambda_hat is not None and diffusion_bound_A is not None:
        if delta >= lambda_hat / (2.0 * diffusion_bound_A):
            raise ValueError(
                f"delta={delta} outside the bound regime: need delta < "
                f"lambda/(2 A) = {lambda_hat / (2.0 * diffusion_bound_A):.6g}"
            )
    z = np.asarray(sq_distances, dtype=float)
    if z.ndim == 1:
        z = z[None]
    w = np.exp(delta * z)
    vals = w.mean(axis=1)
    ses = w.std(axis=1, ddof=1) / np.sqrt(w.shape[1]) if w.shape[1] > 1 else np.zeros_like(vals)
    flags = (w.max(axis=1) / np.maximum(w.sum(axis=1), 1e-300)) > dominance_fraction
    if times is None:
        times = list(range(z.shape[0]))
    return ExpSquareMomentSeries(
        list(times), float(delta), [float(v) for v in vals], [float(s) for s in ses],
        [bool(f) for f in flags],
    )


def exp_square_moment_bound(delta: float, lam: float, C: float, diffusion_bound_A: float, dim: int) -> float:
    """Uniform-in-time bound 1 + (Ad+C+1) exp(delta (Ad+C+1)/(lambda-2 delta A))
    valid for delta < lambda / (2A)."""
    A = diffusion_bound_A
    if delta >= lam / (2.0 * A):
        raise ValueError("bound requires delta < lambda / (2 A)")
    k = A * dim + C + 1.0
    return 1.0 + k * np.exp(delta * k / (lam - 2.0 * delta * A))


def series_to_csv_rows(series, method: str = "", p: int = 0):
    """Rows for the `time,value,stderr,method,p` CSV layout."""
    rows = []
    for t, v, s in zip(series.times, series.values, series.stderr):
        rows.append((t, v, s, method, p))
    return rows

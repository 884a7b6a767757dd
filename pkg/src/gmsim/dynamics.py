"""Particle-system dynamics: drift evaluation, Euler-type steppers with
drift taming, the zero-mean projected system, and synchronous couplings.

All stepping arithmetic is vectorized and accepts a leading batch axis, so
independent Monte Carlo runs advance in lockstep through the same code
path; each run draws its noise from its own counter-based stream, which
makes results bit-identical whatever the batching or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .potentials import Potential, zero as zero_potential
from .rng import INIT_STEP, BrownianSource

EULER = "euler"
TAMED = "tamed"
ADAPTIVE = "adaptive"

SQRT2 = np.sqrt(2.0)


class IntegrationError(RuntimeError):
    """Non-finite state or gradient encountered while stepping."""


class StabilityError(IntegrationError):
    """Adaptive stepper hit dt_min without satisfying the drift cap."""


@dataclass(frozen=True)
class StepPolicy:
    scheme: str = TAMED
    dt: float = 0.01
    adaptive_drift_cap: float = 0.5
    dt_min: float = 1e-6

    def __post_init__(self):
        if self.scheme not in (EULER, TAMED, ADAPTIVE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.dt_min <= 0 or self.adaptive_drift_cap <= 0:
            raise ValueError("dt, dt_min and adaptive_drift_cap must be > 0")


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions of N particles in R^d at one time point."""

    positions: np.ndarray  # (n, dim)
    time: float = 0.0
    steps_taken: int = 0
    seed: int = 0
    stream: int = 0
    centered: bool = False

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution for the particle positions.

    kinds: gaussian (mean, sigma), uniform (half_width), two_point
    (point_a, point_b, weight), sample_file (path to a whitespace table of
    N x d floats).  center_to_zero shifts the drawn ensemble so its mean
    is exactly 0, matching the zero-center-of-mass normalization used when
    the confinement potential vanishes.
    """

    kind: str = "gaussian"
    mean: tuple = (0.0,)
    sigma: float = 1.0
    half_width: float = 1.0
    point_a: tuple = (0.0,)
    point_b: tuple = (1.0,)
    weight: float = 0.5
    path: str = ""
    center_to_zero: bool = False

    def sample(self, source: BrownianSource, stream: int, n: int, dim: int) -> np.ndarray:
        if self.kind == "gaussian":
            xi = source.normals(stream, INIT_STEP, n * dim).reshape(n, dim)
            x = np.broadcast_to(np.asarray(self.mean, float), (n, dim)) + self.sigma * xi
        elif self.kind == "uniform":
            u = source.uniforms(stream, INIT_STEP, n * dim).reshape(n, dim)
            x = (2.0 * u - 1.0) * self.half_width
        elif self.kind == "two_point":
            u = source.uniforms(stream, INIT_STEP, n).reshape(n, 1)
            a = np.broadcast_to(np.asarray(self.point_a, float), (n, dim))
            b = np.broadcast_to(np.asarray(self.point_b, float), (n, dim))
            x = np.where(u < self.weight, a, b).astype(float)
        elif self.kind == "sample_file":
            x = np.loadtxt(self.path, ndmin=2)
            if x.shape != (n, dim):
                raise ValueError(
                    f"sample file {self.path!r} has shape {x.shape}, expected {(n, dim)}"
                )
        else:
            raise ValueError(f"unknown initial law kind {self.kind!r}")
        x = np.array(x, dtype=float)
        if self.center_to_zero:
            x -= x.mean(axis=-2, keepdims=True)
        return x


def drift(positions: np.ndarray, V: Potential, W: Potential) -> np.ndarray:
    """Mean-field drift rows -grad V(x_i) - (1/N) sum_j grad W(x_i - x_j).

    positions may carry leading batch axes: (..., N, d).  The j = i term
    contributes grad W(0) = 0 for every built-in kind.
    """
    x = np.asarray(positions, dtype=float)
    diff = x[..., :, None, :] - x[..., None, :, :]
    g = W.grad(diff)
    b = -g.mean(axis=-2)
    if not V.is_zero:
        b = b - V.grad(x)
    if not np.all(np.isfinite(b)):
        bad = np.argwhere(~np.isfinite(b))
        raise IntegrationError(f"non-finite drift at entry {tuple(bad[0])}")
    return b


def noise_block(
    source: BrownianSource, stream: int, step_index: int, n: int, dim: int, offset: int = 0
) -> np.ndarray:
    """Standard normal increments for one step of one run, shape (n, dim).

    The block is a pure function of (seed, stream, step_index); offset
    selects later draws inside the same block (adaptive sub-steps)."""
    vals = source.normals(stream, step_index, offset + n * dim)
    return vals[offset:].reshape(n, dim)


def project_noise(xi: np.ndarray) -> np.ndarray:
    """Remove the ensemble-mean component of the increments, realizing the
    projected system's driving noise sqrt(2)(dB^i - mean_j dB^j)."""
    return xi - xi.mean(axis=-2, keepdims=True)


def apply_scheme(x: np.ndarray, b: np.ndarray, xi: np.ndarray, dt: float, scheme: str) -> np.ndarray:
    if scheme == EULER:
        return x + b * dt + np.sqrt(2.0 * dt) * xi
    if scheme == TAMED:
        bnorm = np.linalg.norm(b, axis=-1, keepdims=True)
        return x + b * dt / (1.0 + dt * bnorm) + np.sqrt(2.0 * dt) * xi
    raise ValueError(f"apply_scheme does not handle {scheme!r}")


def step(
    ensemble: ParticleEnsemble,
    V: Potential,
    W: Potential,
    policy: StepPolicy,
    source: BrownianSource,
    projected: bool = False,
) -> ParticleEnsemble:
    """Advance one time step of size policy.dt."""
    x = ensemble.positions
    k = ensemble.steps_taken
    if policy.scheme == ADAPTIVE:
        x_new = _adaptive_step(x, V, W, policy, source, ensemble.stream, k, projected)
    else:
        xi = noise_block(source, ensemble.stream, k, ensemble.n, ensemble.dim)
        if projected:
            xi = project_noise(xi)
        b = drift(x, V, W)
        x_new = apply_scheme(x, b, xi, policy.dt, policy.scheme)
    if not np.all(np.isfinite(x_new)):
        bad = np.argwhere(~np.isfinite(x_new))
        raise IntegrationError(
            f"non-finite position at particle {int(bad[0][0])}, "
            f"t={ensemble.time + policy.dt:.6g}"
        )
    if projected:
        x_new = x_new - x_new.mean(axis=-2, keepdims=True)
    return replace(
        ensemble,
        positions=x_new,
        time=ensemble.time + policy.dt,
        steps_taken=k + 1,
        centered=projected,
    )


def _adaptive_step(x, V, W, policy, source, stream, step_index, projected):
    n, dim = x.shape[-2], x.shape[-1]
    t_done = 0.0
    offset = 0
    while t_done < policy.dt * (1.0 - 1e-12):
        b = drift(x, V, W)
        bmax = float(np.max(np.linalg.norm(b, axis=-1)))
        dt_loc = policy.dt
        while bmax * dt_loc > policy.adaptive_drift_cap and dt_loc / 2.0 >= policy.dt_min:
            dt_loc /= 2.0
        if bmax * dt_loc > policy.adaptive_drift_cap:
            worst = int(np.argmax(np.linalg.norm(b, axis=-1).ravel()))
            raise StabilityError(
                f"adaptive step hit dt_min={policy.dt_min} with |b|={bmax:.3g} "
                f"at particle {worst}"
            )
        dt_loc = min(dt_loc, policy.dt - t_done)
        xi = noise_block(source, stream, step_index, n, dim, offset=offset)
        offset += n * dim
        if projected:
            xi = project_noise(xi)
        x = x + b * dt_loc + np.sqrt(2.0 * dt_loc) * xi
        t_done += dt_loc
    return x


def project(ensemble: ParticleEnsemble) -> ParticleEnsemble:
    """Subtract the ensemble mean from every particle (idempotent)."""
    x = ensemble.positions - ensemble.positions.mean(axis=-2, keepdims=True)
    return replace(ensemble, positions=x, centered=True)


def observation_steps(obs_times, dt: float) -> list[int]:
    """Snap observation times to the step grid (nearest step not after)."""
    return [int(np.floor(t / dt + 1e-9)) for t in obs_times]


def default_observables(x: np.ndarray) -> dict:
    sq = np.sum(x * x, axis=-1)
    diff = x[..., :, None, :] - x[..., None, :, :]
    pair_sq = np.sum(diff * diff, axis=-1)
    n = x.shape[-2]
    off = pair_sq.sum(axis=(-2, -1)) / (n * (n - 1))
    return {
        "mean_sq": float(np.mean(sq)),
        "pairwise_mean_sq": float(np.mean(off)),
        "mean_position_norm": float(np.linalg.norm(np.mean(x, axis=-2))),
    }


def simulate(config, run: int = 0):
    """Generator over (time, ParticleEnsemble, observables) snapshots for
    one run of a validated SimConfig."""
    source = BrownianSource(config.seed)
    stream = config.stream_for_run(run)
    projected = config.mode == "projected"
    x0 = config.initial_law.sample(source, stream, config.n, config.dim)
    if projected:
        x0 = x0 - x0.mean(axis=-2, keepdims=True)
    ens = ParticleEnsemble(
        positions=x0, time=0.0, steps_taken=0, seed=config.seed, stream=stream,
        centered=projected,
    )
    policy = config.step_policy
    obs = observation_steps(config.observation_times, policy.dt)
    last_step = max(obs) if obs else 0
    pending = dict(zip(obs, config.observation_times))
    if ens.steps_taken in pending:
        yield pending[ens.steps_taken], ens, default_observables(ens.positions)
    while ens.steps_taken < last_step:
        ens = step(ens, config.potential_V, config.potential_W, policy, source, projected)
        if ens.steps_taken in pending:
            yield pending[ens.steps_taken], ens, default_observables(ens.positions)


def batch_noise(source: BrownianSource, streams, step_index: int, n: int, dim: int) -> np.ndarray:
    """Per-run noise blocks stacked to (runs, n, dim); run r's block depends
    only on its own stream, never on the batch composition."""
    xi = np.empty((len(streams), n, dim))
    for r, s in enumerate(streams):
        xi[r] = noise_block(source, s, step_index, n, dim)
    return xi


def step_batch(
    x: np.ndarray,
    V: Potential,
    W: Potential,
    policy: StepPolicy,
    source: BrownianSource,
    streams,
    step_index: int,
    projected: bool = False,
) -> np.ndarray:
    """One step for a batch of independent runs, positions (runs, N, d).
    Row r is bit-identical to stepping run r alone (euler/tamed only)."""
    runs, n, dim = x.shape
    if policy.scheme == ADAPTIVE:
        x_new = np.stack(
            [
                _adaptive_step(x[r], V, W, policy, source, streams[r], step_index, projected)
                for r in range(runs)
            ]
        )
    else:
        xi = batch_noise(source, streams, step_index, n, dim)
        if projected:
            xi = project_noise(xi)
        b = drift(x, V, W)
        x_new = apply_scheme(x, b, xi, policy.dt, policy.scheme)
    if not np.all(np.isfinite(x_new)):
        bad = np.argwhere(~np.isfinite(x_new))
        raise IntegrationError(
            f"non-finite position in run {int(bad[0][0])}, particle {int(bad[0][1])}, "
            f"step {step_index + 1}"
        )
    if projected:
        x_new = x_new - x_new.mean(axis=-2, keepdims=True)
    return x_new


def coupled_step_batch(
    xa: np.ndarray,
    xb: np.ndarray,
    V: Potential,
    W: Potential,
    policy: StepPolicy,
    source: BrownianSource,
    streams,
    step_index: int,
    projected: bool = False,
):
    """Advance two batches of ensembles (runs, N, d) with identical
    Brownian increments per run; the difference process sees no noise."""
    if policy.scheme == ADAPTIVE:
        # Sub-step counts would differ between the copies and break the
        # shared-increment contract.
        raise ValueError("synchronous coupling supports the euler and tamed schemes only")
    runs, n, dim = xa.shape
    xi = np.empty_like(xa)
    for r in range(runs):
        xi[r] = noise_block(source, streams[r], step_index, n, dim)
    if projected:
        xi = project_noise(xi)
    ba = drift(xa, V, W)
    bb = drift(xb, V, W)
    xa_new = apply_scheme(xa, ba, xi, policy.dt, policy.scheme)
    xb_new = apply_scheme(xb, bb, xi, policy.dt, policy.scheme)
    if projected:
        xa_new = xa_new - xa_new.mean(axis=-2, keepdims=True)
        xb_new = xb_new - xb_new.mean(axis=-2, keepdims=True)
    return xa_new, xb_new


def couple_initial(
    law_a: InitialLaw,
    law_b: InitialLaw,
    source: BrownianSource,
    stream_a: int,
    stream_b: int,
    n: int,
    dim: int,
    coupling: str = "comonotone-1d",
):
    """Draw a coupled pair of initial ensembles.

    independent: draws from separate streams.  comonotone-1d (d = 1 only):
    sorts both draws, realizing the quantile coupling that is optimal for
    convex costs in one dimension.  optimal-small-n: matches the draws by
    a minimum-cost assignment (exact for the empirical measures).
    """
    xa = law_a.sample(source, stream_a, n, dim)
    xb = law_b.sample(source, stream_b, n, dim)
    if coupling == "independent":
        return xa, xb
    if coupling == "comonotone-1d":
        if dim != 1:
            raise ValueError("comonotone-1d coupling requires dim == 1")
        return np.sort(xa, axis=0), np.sort(xb, axis=0)
    if coupling == "optimal-small-n":
        from scipy.optimize import linear_sum_assignment

        cost = np.sum((xa[:, None, :] - xb[None, :, :]) ** 2, axis=-1)
        rows, cols = linear_sum_assignment(cost)
        return xa[rows], xb[cols]
    raise ValueError(f"unknown coupling {coupling!r}")


def coupled_simulate(config, law_a: InitialLaw, law_b: InitialLaw, coupling: str = "comonotone-1d"):
    """Generator over (time, (ensemble_a, ensemble_b), xi) snapshots where
    xi = (1/N) sum_i |Y_i - Y'_i|^2, for run 0 of the config."""
    source = BrownianSource(config.seed)
    stream = config.stream_for_run(0)
    projected = config.mode == "projected"
    xa, xb = couple_initial(
        law_a, law_b, source, stream, stream + 1, config.n, config.dim, coupling
    )
    if projected:
        xa = xa - xa.mean(axis=-2, keepdims=True)
        xb = xb - xb.mean(axis=-2, keepdims=True)
    xa = xa[None]
    xb = xb[None]
    policy = config.step_policy
    obs = observation_steps(config.observation_times, policy.dt)
    pending = dict(zip(obs, config.observation_times))
    k = 0
    last_step = max(obs) if obs else 0

    def emit(t):
        ea = ParticleEnsemble(xa[0], t, k, config.seed, stream, projected)
        eb = ParticleEnsemble(xb[0], t, k, config.seed, stream, projected)
        return t, (ea, eb), float(np.mean(np.sum((xa[0] - xb[0]) ** 2, axis=-1)))

    if k in pending:
        yield emit(pending[k])
    while k < last_step:
        xa, xb = coupled_step_batch(
            xa, xb, config.potential_V, config.potential_W, policy, source, [stream], k,
            projected,
        )
        k += 1
        if k in pending:
            yield emit(pending[k])

"""Confinement/interaction potentials and numerical assumption checkers.

A :class:`Potential` bundles an analytic gradient with the structural
constants the theory asks for (polynomial growth degree m, convexity at
infinity (lambda, C), degenerate convexity (A, alpha)).  The checkers
probe the corresponding inequalities on a finite sample of point pairs and
report the worst violation; they are surrogates for global statements and
are labeled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

POWER_LAW = "power_law"
QUADRATIC = "quadratic"
UNIFORM_PLUS_BUMP = "uniform_plus_bump"
ZERO = "zero"
SAMPLED = "sampled"

_KINDS = (POWER_LAW, QUADRATIC, UNIFORM_PLUS_BUMP, ZERO, SAMPLED)


class PotentialDomainError(ValueError):
    """Raised when a tabulated potential is queried outside its grid."""


@dataclass(frozen=True)
class Potential:
    """Radially symmetric potential with an analytic gradient.

    kind selects the functional form; params holds its numeric parameters.
    The declared_* fields carry the constants the user asserts for the
    structural conditions; checkers verify them, they are never inferred.
    """

    kind: str
    params: dict = field(default_factory=dict)
    growth_exponent_m: int = 1
    declared_lambda: float = 0.0
    declared_C: float = 0.0
    declared_A: float = 0.0
    declared_alpha: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == POWER_LAW and self.params["p"] < 2:
            raise ValueError("power_law exponent must be >= 2")
        if self.kind == QUADRATIC and self.params["kappa"] <= 0:
            raise ValueError("quadratic stiffness must be > 0")

    @property
    def is_zero(self) -> bool:
        return self.kind == ZERO

    def grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient at x, shape (..., d).  Odd in x for every built-in kind."""
        x = np.asarray(x, dtype=float)
        if self.kind == ZERO:
            return np.zeros_like(x)
        if self.kind == QUADRATIC:
            return 2.0 * self.params["kappa"] * x
        if self.kind == POWER_LAW:
            p = self.params["p"]
            r = np.linalg.norm(x, axis=-1, keepdims=True)
            # 0**0 == 1 under numpy, so p == 2 falls out exactly; for p > 2
            # the prefactor vanishes at the origin.
            return p * r ** (p - 2.0) * x
        if self.kind == UNIFORM_PLUS_BUMP:
            kappa = self.params["kappa"]
            a = self.params["amplitude"]
            rho = self.params["radius"]
            s = np.sum(x * x, axis=-1, keepdims=True) / rho**2
            inside = s < 1.0
            bump = np.where(inside, -(6.0 * a / rho**2) * (1.0 - s) ** 2, 0.0)
            return 2.0 * kappa * x + bump * x
        if self.kind == SAMPLED:
            return self._grad_sampled(x)
        raise AssertionError(self.kind)

    def _grad_sampled(self, x: np.ndarray) -> np.ndarray:
        # Radial derivative tabulated on a regular grid in r >= 0; symmetry
        # of W is enforced by construction (gradient is slope(r) * x / r,
        # an odd function), not trusted from the input.
        r_max = self.params["r_max"]
        table = np.asarray(self.params["slopes"], dtype=float)
        r = np.linalg.norm(x, axis=-1, keepdims=True)
        if np.any(r > r_max):
            bad = np.argwhere(np.squeeze(r > r_max, axis=-1))
            raise PotentialDomainError(
                f"sampled potential queried at radius > {r_max} "
                f"(first offending entry index {tuple(bad[0])})"
            )
        grid = np.linspace(0.0, r_max, table.size)
        slope = np.interp(np.squeeze(r, axis=-1), grid, table)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0.0, x / r, 0.0)
        return slope * unit

    def value(self, x: np.ndarray) -> np.ndarray:
        """Potential value at x (smooth built-in kinds only)."""
        x = np.asarray(x, dtype=float)
        if self.kind == ZERO:
            return np.zeros(x.shape[:-1])
        if self.kind == QUADRATIC:
            return self.params["kappa"] * np.sum(x * x, axis=-1)
        if self.kind == POWER_LAW:
            r = np.linalg.norm(x, axis=-1)
            return r ** self.params["p"]
        if self.kind == UNIFORM_PLUS_BUMP:
            kappa = self.params["kappa"]
            a = self.params["amplitude"]
            rho = self.params["radius"]
            s = np.sum(x * x, axis=-1) / rho**2
            bump = np.where(s < 1.0, a * (1.0 - s) ** 3, 0.0)
            return kappa * np.sum(x * x, axis=-1) + bump
        raise NotImplementedError(f"no closed-form value for kind {self.kind!r}")


def power_law(p: float, **declared) -> Potential:
    """W(x) = |x|^p, p >= 2."""
    return Potential(POWER_LAW, {"p": float(p)}, **declared)


def quadratic(kappa: float = 1.0, **declared) -> Potential:
    """W(x) = kappa |x|^2, gradient 2 kappa x."""
    return Potential(QUADRATIC, {"kappa": float(kappa)}, **declared)


def zero() -> Potential:
    return Potential(ZERO)


def uniform_plus_bump(kappa: float, amplitude: float, radius: float, **declared) -> Potential:
    """kappa |x|^2 plus a compactly supported C^2 bump of the given
    amplitude and radius (negative amplitude digs a well at the origin)."""
    return Potential(
        UNIFORM_PLUS_BUMP,
        {"kappa": float(kappa), "amplitude": float(amplitude), "radius": float(radius)},
        **declared,
    )


def sampled(slopes, r_max: float, **declared) -> Potential:
    """Radial derivative W'(r) tabulated on a regular grid over [0, r_max]."""
    return Potential(SAMPLED, {"slopes": tuple(float(s) for s in slopes), "r_max": float(r_max)}, **declared)


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of probing one structural condition on a finite point set.

    worst_violation is the max over probes of (required lower bound -
    observed value); the condition is deemed satisfied on the probe set
    when it does not exceed the tolerance.
    """

    condition_name: str
    fitted_constants: dict
    worst_violation: float
    probe_count: int
    probe_extent: float
    tolerance: float

    @property
    def satisfied(self) -> bool:
        return self.worst_violation <= self.tolerance

    def to_json(self) -> dict:
        return {
            "condition_name": self.condition_name,
            "fitted_constants": dict(self.fitted_constants),
            "worst_violation": self.worst_violation,
            "probe_count": self.probe_count,
            "probe_extent": self.probe_extent,
            "tolerance": self.tolerance,
            "satisfied": self.satisfied,
        }


def default_tolerance(bound_scale: float = 0.0) -> float:
    # Relative so that exact equality cases (quadratic) pass in floats.
    return 1e-9 * (1.0 + abs(bound_scale))


def _probe_pairs(dim: int, probes: int, extent: float, probe_seed: int):
    """Low-discrepancy (x, y) pairs in the box, augmented with
    near-diagonal pairs y = x + delta e_k where degenerate convexity
    concentrates.  Deterministic given probe_seed."""
    eng = qmc.Sobol(d=2 * dim, scramble=True, seed=probe_seed)
    pts = eng.random(probes) * (2.0 * extent) - extent
    x = pts[:, :dim]
    y = pts[:, dim:]
    extra_x = []
    extra_y = []
    base = x[: max(1, probes // 4)]
    for delta in (1e-3, 1e-2, 1e-1):
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = delta * extent
            extra_x.append(base)
            extra_y.append(base + e)
    x = np.concatenate([x] + extra_x, axis=0)
    y = np.concatenate([y] + extra_y, axis=0)
    return x, y


def _pair_products(potential: Potential, x: np.ndarray, y: np.ndarray):
    gx = potential.grad(x)
    gy = potential.grad(y)
    diff = x - y
    sq = np.sum(diff * diff, axis=-1)
    dot = np.sum(diff * (gx - gy), axis=-1)
    return sq, dot


def check_condition_C(
    potential: Potential,
    A: float,
    alpha: float,
    probes: int = 1024,
    extent: float = 4.0,
    eps_grid=(0.05, 0.1, 0.25, 0.5, 0.75, 0.95),
    probe_seed: int = 0,
    tolerance: float | None = None,
) -> ConditionReport:
    """Probe (x-y).(grad W(x)-grad W(y)) >= A eps^alpha (|x-y|^2 - eps^2)."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if extent <= 0:
        raise ValueError("extent must be > 0")
    eps = np.asarray(eps_grid, dtype=float)
    if np.any((eps <= 0) | (eps >= 1)):
        raise ValueError("every eps must lie in (0, 1)")
    x, y = _probe_pairs(_dim_of(potential), probes, extent, probe_seed)
    sq, dot = _pair_products(potential, x, y)
    # bound[e, pair] = A eps^alpha (|x-y|^2 - eps^2)
    bound = A * eps[:, None] ** alpha * (sq[None, :] - eps[:, None] ** 2)
    violation = bound - dot[None, :]
    worst = float(np.max(violation))
    tol = default_tolerance(float(np.max(np.abs(bound)))) if tolerance is None else tolerance
    return ConditionReport(
        condition_name="C_A_alpha",
        fitted_constants={"A": float(A), "alpha": float(alpha)},
        worst_violation=worst,
        probe_count=x.shape[0],
        probe_extent=float(extent),
        tolerance=tol,
    )


def check_convexity_at_infinity(
    potential: Potential,
    probes: int = 1024,
    extent: float = 4.0,
    probe_seed: int = 0,
    lambda_grid=None,
    slack_fraction: float = 0.05,
    tolerance: float | None = None,
) -> ConditionReport:
    """Fit (lambda, C) with (x-y).(grad W(x)-grad W(y)) >= lambda|x-y|^2 - C
    on the probe set.

    For each candidate lambda, C(lambda) is the smallest admissible offset.
    The reported lambda is the largest candidate whose offset stays below
    slack_fraction * lambda * extent^2, which keeps the fit empirically
    meaningful: the zero potential gets lambda = 0 rather than a huge C.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    x, y = _probe_pairs(_dim_of(potential), probes, extent, probe_seed)
    sq, dot = _pair_products(potential, x, y)
    if lambda_grid is None:
        lambda_grid = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 121)])
    best_lambda = 0.0
    best_C = max(0.0, float(np.max(-dot)))
    for lam in lambda_grid:
        if lam == 0.0:
            continue
        C_lam = max(0.0, float(np.max(lam * sq - dot)))
        if C_lam <= slack_fraction * lam * extent**2:
            if lam > best_lambda:
                best_lambda = lam
                best_C = C_lam
    bound = best_lambda * sq - best_C
    worst = float(np.max(bound - dot))
    tol = default_tolerance(float(np.max(np.abs(bound)))) if tolerance is None else tolerance
    return ConditionReport(
        condition_name="A4_conv_at_infinity",
        fitted_constants={"lambda": float(best_lambda), "C": float(best_C)},
        worst_violation=worst,
        probe_count=x.shape[0],
        probe_extent=float(extent),
        tolerance=tol,
    )


def check_polynomial_growth(
    potential: Potential,
    m: int,
    probes: int = 1024,
    extent: float = 4.0,
    probe_seed: int = 0,
    growth_margin: float = 1.25,
    tolerance: float | None = None,
) -> ConditionReport:
    """Fit the smallest C with
    |grad W(x) - grad W(y)| <= C (|x-y| ^ 1)(1 + |x|^m + |y|^m).

    A declared m that is too small shows up as the fitted constant growing
    with the probe extent; we detect it by comparing the fit at full extent
    with the fit restricted to the inner half box.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    x, y = _probe_pairs(_dim_of(potential), probes, extent, probe_seed)
    gx = potential.grad(x)
    gy = potential.grad(y)
    num = np.linalg.norm(gx - gy, axis=-1)
    dist = np.linalg.norm(x - y, axis=-1)
    den = np.minimum(dist, 1.0) * (
        1.0 + np.linalg.norm(x, axis=-1) ** m + np.linalg.norm(y, axis=-1) ** m
    )
    keep = dist > 1e-12
    ratio = num[keep] / den[keep]
    c_full = float(np.max(ratio)) if ratio.size else 0.0
    inner = keep & (np.linalg.norm(x, axis=-1) <= extent / 2) & (
        np.linalg.norm(y, axis=-1) <= extent / 2
    )
    ratio_inner = num[inner] / den[inner]
    c_inner = float(np.max(ratio_inner)) if ratio_inner.size else c_full
    worst = c_full - growth_margin * c_inner
    tol = default_tolerance(c_full) if tolerance is None else tolerance
    return ConditionReport(
        condition_name="A3",
        fitted_constants={"C_hat": c_full, "C_hat_inner": c_inner, "m": float(m)},
        worst_violation=worst,
        probe_count=x.shape[0],
        probe_extent=float(extent),
        tolerance=tol,
    )


def check_declared(potential: Potential, probes: int = 256, extent: float = 4.0, probe_seed: int = 0):
    """Reports for whichever structural constants the potential declares."""
    reports = []
    if potential.declared_A > 0.0:
        reports.append(
            check_condition_C(
                potential, potential.declared_A, potential.declared_alpha,
                probes=probes, extent=extent, probe_seed=probe_seed,
            )
        )
    if potential.declared_lambda > 0.0:
        x, y = _probe_pairs(_dim_of(potential), probes, extent, probe_seed)
        sq, dot = _pair_products(potential, x, y)
        bound = potential.declared_lambda * sq - potential.declared_C
        worst = float(np.max(bound - dot))
        reports.append(
            ConditionReport(
                condition_name="A4_conv_at_infinity",
                fitted_constants={
                    "lambda": potential.declared_lambda,
                    "C": potential.declared_C,
                },
                worst_violation=worst,
                probe_count=x.shape[0],
                probe_extent=float(extent),
                tolerance=default_tolerance(float(np.max(np.abs(bound)))),
            )
        )
    if potential.growth_exponent_m >= 0 and potential.kind != ZERO:
        reports.append(
            check_polynomial_growth(
                potential, potential.growth_exponent_m,
                probes=probes, extent=extent, probe_seed=probe_seed,
            )
        )
    return reports


def _dim_of(potential: Potential, default: int = 1) -> int:
    return int(potential.params.get("dim", default))


def with_dim(potential: Potential, dim: int) -> Potential:
    """Tag the probe dimension used by the condition checkers."""
    params = dict(potential.params)
    params["dim"] = int(dim)
    return replace(potential, params=params)


def condition_constants_for_drift(lambda_W: float, C_W: float, n: int) -> tuple[float, float]:
    """Contraction constants of the N-particle projected drift inherited
    from the single-potential constants: on the zero-mean hyperplane
    (x-y).(b(x)-b(y)) <= -lambda |x-y|^2 + C N / 2."""
    return float(lambda_W), float(C_W) * n / 2.0

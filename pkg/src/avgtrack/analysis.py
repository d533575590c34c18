"""Closed-form predictions and validity checks: parameter ranges, expected
steady states, the mean-dynamics spectrum, the tracking-error bound, stage
sizing, and the tracking-error metric.

Everything here is a pure function of the expected network and the scenario
constants; nothing consumes simulation output except ``tracking_error``,
which reduces recorded trajectories to the reported error metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import ControlGains
from .graphs import ConfigurationError, WeightedLaplacian, connected_pattern, symmetric_eigen

__all__ = [
    "ParamCheck",
    "ParamReport",
    "SteadyStatePrediction",
    "BoundReport",
    "TrackingError",
    "validate_params",
    "steady_state",
    "theorem_bound",
    "stages_for_target",
    "convergence_matrix_spectrum",
    "spectral_radius",
    "tracking_error",
]

# Eigenvalues inside this band around zero are treated as the structural
# zero mode of a Laplacian.
_ZERO_BAND = 1e-10


@dataclass(frozen=True)
class ParamCheck:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class ParamReport:
    """Outcome of the gain-range checks against the expected network."""

    d_max_expected: float
    checks: tuple[ParamCheck, ...]
    ok: bool

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.ok]


@dataclass(frozen=True)
class SteadyStatePrediction:
    """Expected stationary states of every stage.

    x_star[p - 1] is the length-N stage-p stationary mean; stages pull the
    reference expectations toward their average, one contraction per stage.
    """

    r_star: np.ndarray
    r_bar: float
    r_tilde_norm: float
    x_star: np.ndarray  # (n_stages, N)


@dataclass(frozen=True)
class BoundReport:
    """Geometric tracking-error bound and the realized stationary error."""

    lambda2: float
    ratio: float
    bound: float
    r_tilde_norm: float
    steady_error: float


@dataclass(frozen=True)
class TrackingError:
    """Distance of final-stage states from the instantaneous reference
    average, per step: the 2-norm and the per-agent signed errors."""

    norms: np.ndarray  # (K+1,)
    per_agent: np.ndarray  # (K+1, N)


def validate_params(
    gains: ControlGains,
    k_x: float,
    k_r: float,
    expected: WeightedLaplacian,
) -> ParamReport:
    """Check the gain ranges that guarantee a stable mean recursion.

    The consensus gain must stay below 1/(2 d_max) of the expected network,
    the tracking gain below 1 - epsilon * d_max, and both predictor gains
    strictly inside (0, 1); all intervals are open.  Raises on a
    disconnected expected network, for which no gain choice can work.
    """
    if not connected_pattern(expected.entries):
        raise ConfigurationError("expected network is disconnected; the scenario is invalid")
    d_max = expected.max_diagonal()
    eps_hi = math.inf if d_max == 0.0 else 1.0 / (2.0 * d_max)
    alpha_hi = 1.0 - gains.epsilon * d_max
    checks = (
        ParamCheck(
            "epsilon",
            0.0 < gains.epsilon < eps_hi,
            f"epsilon={gains.epsilon!r} must lie in (0, {eps_hi!r})",
        ),
        ParamCheck(
            "alpha",
            0.0 < gains.alpha < alpha_hi,
            f"alpha={gains.alpha!r} must lie in (0, {alpha_hi!r})",
        ),
        ParamCheck("k_x", 0.0 < k_x < 1.0, f"k_x={k_x!r} must lie in (0, 1)"),
        ParamCheck("k_r", 0.0 < k_r < 1.0, f"k_r={k_r!r} must lie in (0, 1)"),
    )
    return ParamReport(d_max, checks, all(c.ok for c in checks))


def steady_state(
    expected: WeightedLaplacian,
    gains: ControlGains,
    r_star: np.ndarray,
) -> SteadyStatePrediction:
    """Expected stationary states, one linear solve per stage.

    Stage p solves (alpha I + epsilon L) y_p = alpha y_{p-1} starting from
    the reference expectations; repeated solves are better conditioned than
    an explicit matrix power and are verified by residual.
    """
    r_star = np.asarray(r_star, dtype=float)
    n = expected.size
    if r_star.shape != (n,):
        raise ValueError(f"r_star must have shape ({n},), got {r_star.shape}")
    system = gains.alpha * np.eye(n) + gains.epsilon * expected.entries
    stages = np.empty((gains.n_stages, n))
    previous = r_star
    for p in range(gains.n_stages):
        rhs = gains.alpha * previous
        solution = np.linalg.solve(system, rhs)
        residual = float(np.linalg.norm(system @ solution - rhs))
        if residual > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
            raise ArithmeticError(f"stationary-state solve residual {residual} is too large")
        stages[p] = solution
        previous = solution
    r_bar = float(r_star.mean())
    r_tilde_norm = float(np.linalg.norm(r_star - r_bar))
    return SteadyStatePrediction(r_star=r_star, r_bar=r_bar, r_tilde_norm=r_tilde_norm, x_star=stages)


def theorem_bound(
    expected: WeightedLaplacian,
    gains: ControlGains,
    r_star: np.ndarray,
) -> BoundReport:
    """Geometric bound on the stationary tracking error.

    ratio = alpha / (alpha + epsilon * lambda2) where lambda2 is the
    second-smallest eigenvalue of the expected network; the final-stage
    stationary error is bounded by ratio**n_stages times the spread of the
    reference expectations.  The realized stationary error is computed and
    checked against the bound as a sanity invariant.
    """
    values = np.asarray(symmetric_eigen(expected))
    values = np.where(np.abs(values) <= _ZERO_BAND, 0.0, values)
    if expected.size < 2:
        raise ConfigurationError("the bound needs at least two agents")
    lambda2 = float(values[1])
    if lambda2 <= _ZERO_BAND:
        raise ConfigurationError(
            "expected network has a repeated zero eigenvalue (disconnected)"
        )
    prediction = steady_state(expected, gains, r_star)
    ratio = gains.alpha / (gains.alpha + gains.epsilon * lambda2)
    bound = ratio**gains.n_stages * prediction.r_tilde_norm
    steady_error = float(
        np.linalg.norm(prediction.r_bar * np.ones(expected.size) - prediction.x_star[-1])
    )
    if steady_error > bound + 1e-9:
        raise ArithmeticError(
            f"stationary error {steady_error} exceeds its bound {bound}; "
            "gains are likely outside their valid ranges"
        )
    return BoundReport(
        lambda2=lambda2,
        ratio=ratio,
        bound=bound,
        r_tilde_norm=prediction.r_tilde_norm,
        steady_error=steady_error,
    )


def stages_for_target(delta: float, ratio: float, r_tilde_norm: float) -> int:
    """Smallest stage count with ratio**n * r_tilde_norm <= delta."""
    if delta <= 0.0:
        raise ValueError(f"target must be positive, got {delta}")
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"contraction ratio must lie in (0, 1), got {ratio}")
    if r_tilde_norm <= delta:
        return 0
    n = math.ceil(math.log(delta / r_tilde_norm) / math.log(ratio))
    # log rounding can land one off on exact-power boundaries; settle by test.
    while n > 0 and ratio ** (n - 1) * r_tilde_norm <= delta:
        n -= 1
    while ratio**n * r_tilde_norm > delta:
        n += 1
    return n


def convergence_matrix_spectrum(
    expected: WeightedLaplacian,
    gains: ControlGains,
    k_x: float,
    k_r: float,
) -> np.ndarray:
    """Eigenvalues of the block-triangular mean-dynamics matrix, ascending.

    The blocks are (1 - alpha) I - epsilon L, (1 - k_x) I, and (1 - k_r) I,
    so the spectrum is their union: each network eigenvalue mapped through
    1 - alpha - epsilon * lambda, plus N copies each of 1 - k_x and 1 - k_r.
    """
    lam = np.asarray(symmetric_eigen(expected))
    n = expected.size
    spectrum = np.concatenate(
        [
            1.0 - gains.alpha - gains.epsilon * lam,
            np.full(n, 1.0 - k_x),
            np.full(n, 1.0 - k_r),
        ]
    )
    return np.sort(spectrum)


def spectral_radius(eigenvalues: np.ndarray) -> float:
    return float(np.abs(np.asarray(eigenvalues)).max())


def tracking_error(final_stage: np.ndarray, references: np.ndarray) -> TrackingError:
    """Reduce trajectories to the tracking-error metric.

    Inputs are (K+1, N) single-run arrays or (M, K+1, N) ensembles; an
    ensemble is averaged across runs first, so the metric estimates the
    error of the expected trajectory rather than the expected error.
    """
    xn = np.asarray(final_stage, dtype=float)
    refs = np.asarray(references, dtype=float)
    if xn.shape != refs.shape:
        raise ValueError(f"shape mismatch: states {xn.shape} vs references {refs.shape}")
    if xn.ndim == 3:
        xn = xn.mean(axis=0)
        refs = refs.mean(axis=0)
    if xn.ndim != 2:
        raise ValueError(f"expected (K+1, N) or (M, K+1, N) arrays, got shape {xn.shape}")
    r_bar = refs.mean(axis=1, keepdims=True)
    per_agent = r_bar - xn
    norms = np.linalg.norm(per_agent, axis=1)
    return TrackingError(norms=norms, per_agent=per_agent)

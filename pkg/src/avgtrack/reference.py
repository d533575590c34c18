"""Noisy scalar reference processes and their per-agent Kalman estimators.

Each agent owns one random-walk reference driven by a known deterministic
input and Gaussian process noise, observed through a noisy gain-h sensor.
A scalar Kalman filter tracks it: a time update (propagate estimate and
variance) followed by a measurement update (gain, correction, variance
shrink).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .graphs import ConfigurationError

__all__ = [
    "InputProfile",
    "ReferenceParams",
    "ReferenceState",
    "initial_reference_state",
    "reference_step",
    "kalman_step",
    "estimate_bias",
]


@dataclass(frozen=True)
class InputProfile:
    """Deterministic drive v(k) for a reference process.

    Kinds:
      zero        v(k) = 0
      geometric   v(k) = amplitude * decay**k, 0 < decay < 1
      ramp        v(k) = amplitude for k < cutoff, then 0

    Every kind is absolutely summable, so the reference mean settles to a
    constant; ``total`` is the limit shift it contributes.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    decay: float = 0.0
    cutoff: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "geometric", "ramp"):
            raise ConfigurationError(f"unknown input profile kind {self.kind!r}")
        if self.kind == "geometric" and not (0.0 < self.decay < 1.0):
            raise ConfigurationError("geometric profile needs decay in (0, 1)")
        if self.kind == "ramp" and self.cutoff < 0:
            raise ConfigurationError("ramp profile needs a nonnegative cutoff")

    @classmethod
    def zero(cls) -> "InputProfile":
        return cls("zero")

    @classmethod
    def geometric(cls, amplitude: float, decay: float) -> "InputProfile":
        return cls("geometric", amplitude=amplitude, decay=decay)

    @classmethod
    def ramp(cls, amplitude: float, cutoff: int) -> "InputProfile":
        return cls("ramp", amplitude=amplitude, cutoff=cutoff)

    def value(self, k: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "geometric":
            return self.amplitude * self.decay**k
        return self.amplitude if k < self.cutoff else 0.0

    def values(self, count: int) -> np.ndarray:
        return np.array([self.value(k) for k in range(count)])

    def total(self) -> float:
        """Sum of v(k) over all k >= 0: the limit shift of the reference mean."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "geometric":
            return self.amplitude / (1.0 - self.decay)
        return self.amplitude * self.cutoff


@dataclass(frozen=True)
class ReferenceParams:
    """Constants of one reference process and its filter.

    phi and psi are the per-step process and measurement noise variances.
    The convergence theory assumes both stay within positive bounds; zero is
    accepted here so deterministic runs can be exercised.  Optional bounds,
    when set, are enforced on the per-step variances fed to ``kalman_step``.
    """

    h: float
    phi: float
    psi: float
    profile: InputProfile = InputProfile.zero()
    phi_bounds: "tuple[float, float] | None" = None
    psi_bounds: "tuple[float, float] | None" = None

    def __post_init__(self) -> None:
        if self.h <= 0.0:
            raise ConfigurationError(f"measurement gain must be positive, got {self.h}")
        if self.phi < 0.0 or self.psi < 0.0:
            raise ConfigurationError("noise variances must be nonnegative")
        for name, bounds in (("phi", self.phi_bounds), ("psi", self.psi_bounds)):
            if bounds is not None:
                lo, hi = bounds
                if not (0.0 < lo <= hi):
                    raise ConfigurationError(f"{name} bounds must satisfy 0 < low <= high")


@dataclass(frozen=True, slots=True)
class ReferenceState:
    """One reference process plus its filter state.

    r is the true state, z the latest measurement; r_hat_minus / p_minus are
    the estimate and error variance before the measurement update, r_hat / p
    after it, and gain is the last correction gain.
    """

    r: float
    z: float
    r_hat_minus: float
    r_hat: float
    p_minus: float
    p: float
    gain: float


def initial_reference_state(r0: float, r_hat0: float, p0: float, h: float) -> ReferenceState:
    """State at time zero.  The initial measurement is taken noise-free
    (the recursion only defines measurements from step one onward)."""
    if p0 < 0.0:
        raise ConfigurationError(f"initial error variance must be nonnegative, got {p0}")
    return ReferenceState(
        r=float(r0),
        z=float(h * r0),
        r_hat_minus=float(r_hat0),
        r_hat=float(r_hat0),
        p_minus=float(p0),
        p=float(p0),
        gain=0.0,
    )


def reference_step(
    state: ReferenceState,
    params: ReferenceParams,
    v: float,
    noise: "tuple[float, float]",
) -> ReferenceState:
    """Advance the true process one step: r' = r + v + w, z' = h r' + theta,
    with w and theta scaled from the two standard-normal draws supplied."""
    n_process, n_measure = noise
    w = math.sqrt(params.phi) * n_process
    theta = math.sqrt(params.psi) * n_measure
    r_new = state.r + v + w
    z_new = params.h * r_new + theta
    return replace(state, r=r_new, z=z_new)


def kalman_step(
    state: ReferenceState,
    params: ReferenceParams,
    v: float,
    z_new: float,
    phi_k: "float | None" = None,
    psi_k: "float | None" = None,
) -> ReferenceState:
    """One filter cycle: time update with the known input, then measurement
    update against z_new.

    phi_k / psi_k default to the configured constants; when explicit bounds
    are configured, per-step values outside them are rejected.
    """
    phi_k = params.phi if phi_k is None else float(phi_k)
    psi_k = params.psi if psi_k is None else float(psi_k)
    if params.phi_bounds is not None:
        lo, hi = params.phi_bounds
        if not (lo <= phi_k <= hi):
            raise ConfigurationError(f"phi_k={phi_k} outside configured bounds [{lo}, {hi}]")
    if params.psi_bounds is not None:
        lo, hi = params.psi_bounds
        if not (lo <= psi_k <= hi):
            raise ConfigurationError(f"psi_k={psi_k} outside configured bounds [{lo}, {hi}]")
    h = params.h
    r_hat_minus = state.r_hat + v
    p_minus = state.p + phi_k
    denom = h * h * p_minus + psi_k
    if denom <= 0.0:
        if p_minus == 0.0 and psi_k == 0.0:
            # Perfect prior observed through a noise-free sensor: no
            # correction is needed and none is defined; keep the prior.
            gain = 0.0
        else:
            raise ArithmeticError(
                "filter update denominator is not positive; check noise variances"
            )
    else:
        gain = h * p_minus / denom
    r_hat = r_hat_minus + gain * (z_new - h * r_hat_minus)
    p = (1.0 - gain * h) * p_minus
    return replace(
        state,
        r_hat_minus=r_hat_minus,
        r_hat=r_hat,
        p_minus=p_minus,
        p=p,
        gain=gain,
    )


def estimate_bias(runs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Per-step ensemble mean of (estimate - truth).

    ``runs`` holds (truth trajectory, estimate trajectory) pairs of equal
    length; at least two runs are required.
    """
    if len(runs) < 2:
        raise ValueError("estimate_bias needs at least two runs")
    diffs = []
    horizon = None
    for r_traj, r_hat_traj in runs:
        r_arr = np.asarray(r_traj, dtype=float)
        hat_arr = np.asarray(r_hat_traj, dtype=float)
        if r_arr.shape != hat_arr.shape:
            raise ValueError("truth and estimate trajectories must have equal shapes")
        if horizon is None:
            horizon = r_arr.shape
        elif r_arr.shape != horizon:
            raise ValueError("all runs must share the same horizon")
        diffs.append(hat_arr - r_arr)
    return np.mean(np.stack(diffs, axis=0), axis=0)

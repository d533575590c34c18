"""One-step predictor filters, multi-step roll-forward, and input delay lines.

Inputs act on the plant a fixed number of ticks after they are computed, so
the controller steers predicted states.  Each agent keeps a one-step
filtered estimate per stage, blended toward the latest available
measurement, plus the same construction for its reference estimate; rolling
the filtered value forward across the inputs still sitting in the delay
line yields the prediction the control law consumes.

The filter adds exactly the increment that drives the tracked sequence, so
the prediction error contracts geometrically at rate (1 - gain) in every
run, noise and drops included.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .graphs import ConfigurationError

__all__ = [
    "DelayLine",
    "PredictorState",
    "predictor_filter_update",
    "reference_filter_update",
    "roll_forward",
    "roll_forward_reference",
    "push_input",
]


@dataclass
class DelayLine:
    """FIFO of the last tau inputs awaiting application, oldest first.

    Each entry carries all stages of one agent (a length-n vector).  Inputs
    at negative time are zero, so the line starts filled with zeros; depth 0
    degenerates to pass-through.
    """

    depth: int
    buffer: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ConfigurationError(f"delay depth must be nonnegative, got {self.depth}")
        if len(self.buffer) != self.depth:
            raise ConfigurationError(
                f"delay line must hold exactly {self.depth} entries, got {len(self.buffer)}"
            )

    @classmethod
    def zeros(cls, depth: int, n_stages: int) -> "DelayLine":
        return cls(depth, deque(np.zeros(n_stages) for _ in range(depth)))

    def head(self) -> np.ndarray:
        """The oldest entry: the input the plant applies this tick."""
        if self.depth == 0:
            raise ConfigurationError("a depth-0 delay line has no head")
        return self.buffer[0]

    def pending(self) -> list:
        """Entries after the head: inputs applied on later ticks, in order."""
        return list(self.buffer)[1:]

    def push(self, u: np.ndarray):
        """Append u; evict and return the oldest entry for application."""
        if self.depth == 0:
            return u
        self.buffer.append(u)
        return self.buffer.popleft()


def push_input(line: DelayLine, u: np.ndarray):
    """Push one per-stage input; returns the evicted entry to apply now."""
    return line.push(u)


@dataclass(frozen=True)
class PredictorState:
    """Filtered one-step-ahead estimates for one agent.

    x_hat_filt holds the per-stage state branch; r_hat_filt the scalar
    reference branch.  Gains in (0, 1] blend toward the latest measured
    value; 1 - gain is the per-step error contraction factor.
    """

    k_x: float
    k_r: float
    x_hat_filt: np.ndarray
    r_hat_filt: float

    def __post_init__(self) -> None:
        for name, gain in (("k_x", self.k_x), ("k_r", self.k_r)):
            if not (0.0 < gain <= 1.0):
                raise ConfigurationError(f"predictor gain {name} must lie in (0, 1], got {gain}")
        object.__setattr__(self, "x_hat_filt", np.asarray(self.x_hat_filt, dtype=float))


def predictor_filter_update(
    state: PredictorState,
    measured_state: np.ndarray,
    delayed_input: np.ndarray,
) -> PredictorState:
    """Blend the state branch toward the measured per-stage state and add the
    input leaving the delay line this tick."""
    measured = np.asarray(measured_state, dtype=float)
    new_filt = (state.x_hat_filt + state.k_x * (measured - state.x_hat_filt)) + delayed_input
    return replace(state, x_hat_filt=new_filt)


def reference_filter_update(
    state: PredictorState,
    measured_estimate: float,
    increment: float,
) -> PredictorState:
    """Blend the reference branch toward the latest filtered reference
    estimate and add the realized increment of that estimate."""
    new_filt = (
        state.r_hat_filt + state.k_r * (measured_estimate - state.r_hat_filt)
    ) + increment
    return replace(state, r_hat_filt=new_filt)


def roll_forward(state: PredictorState, line: DelayLine) -> np.ndarray:
    """Predict the current per-stage state from the filtered estimate by
    folding in the pending delayed inputs, oldest first.

    With the filter error at zero the result equals the true state exactly
    for any input sequence.
    """
    prediction = state.x_hat_filt.copy()
    for u in line.pending():
        prediction = prediction + u
    return prediction


def roll_forward_reference(state: PredictorState, future_drives: Iterable[float]) -> float:
    """Reference analog of roll_forward: fold the known deterministic drive
    values over the remaining delay interval."""
    prediction = state.r_hat_filt
    for v in future_drives:
        prediction = prediction + v
    return prediction

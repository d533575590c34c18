"""Closed-loop stepper: cascaded consensus control over sampled lossy links,
with delay-compensating predictors and per-reference Kalman filtering.

One global tick advances the world from time t to t+1:

  1. advance every true reference and its Kalman filter;
  2. update the predictor filters: the state branch consumes the input
     leaving the delay line this tick, the reference branch the realized
     increment of the filtered reference estimate;
  3. roll predictions forward across the pending delayed inputs;
  4. sample one Bernoulli draw per undirected edge;
  5. evaluate the control law on the predictions and push it into the delay
     lines;
  6. apply the input leaving the delay lines to the plant.

This order makes every tick-t quantity well defined and keeps the predictor
error contraction exact pathwise.  In naive mode step 5 consumes the raw
(stale) states and raw scaled measurements instead of the predictions; that
baseline loses stability once the delay is large enough.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graphs import ConfigurationError, DropModel, Graph, normalize_edge
from .prediction import (
    DelayLine,
    PredictorState,
    predictor_filter_update,
    reference_filter_update,
    roll_forward,
    roll_forward_reference,
)
from .reference import (
    ReferenceParams,
    ReferenceState,
    initial_reference_state,
    kalman_step,
    reference_step,
)

__all__ = [
    "ControlGains",
    "LinkRealization",
    "AgentState",
    "RunOutput",
    "World",
    "sample_links",
    "control_input",
]


@dataclass(frozen=True)
class ControlGains:
    """Consensus gain, tracking gain, stage count, and input delay.

    Structural fields are validated here; the theorem-range checks on the
    gains live in analysis.validate_params so that deliberately divergent
    experiments stay expressible.
    """

    epsilon: float
    alpha: float
    n_stages: int
    tau: int

    def __post_init__(self) -> None:
        if self.n_stages < 1:
            raise ConfigurationError(f"need at least one stage, got {self.n_stages}")
        if self.tau < 0:
            raise ConfigurationError(f"input delay must be nonnegative, got {self.tau}")
        if not (np.isfinite(self.epsilon) and np.isfinite(self.alpha)):
            raise ConfigurationError("gains must be finite")


@dataclass(frozen=True)
class LinkRealization:
    """Per-step link outcomes: 1 where the transmission succeeded, 0 where it
    dropped.  Keyed on (low, high) edges; absent pairs are not links."""

    theta: dict

    def weight(self, i: int, j: int) -> int:
        return self.theta.get(normalize_edge(i, j), 0)


def sample_links(drops: DropModel, rng) -> LinkRealization:
    """Draw one Bernoulli outcome per undirected edge: 0 with the edge's drop
    probability, else 1.

    ``rng`` is either a single numpy Generator (edges drawn in sorted order)
    or a mapping from edge to its own Generator, which keeps the draws
    attached to edges under relabeling.
    """
    theta: dict = {}
    if isinstance(rng, Mapping):
        for edge in sorted(drops.probabilities):
            draw = rng[edge].random()
            theta[edge] = 0 if draw < drops.probabilities[edge] else 1
    else:
        for edge in sorted(drops.probabilities):
            draw = rng.random()
            theta[edge] = 0 if draw < drops.probabilities[edge] else 1
    return LinkRealization(theta)


def control_input(
    predicted_states: np.ndarray,
    predicted_refs: np.ndarray,
    links: LinkRealization,
    gains: ControlGains,
) -> np.ndarray:
    """Per-agent, per-stage control: a consensus term over the surviving
    links plus a tracking term toward the stage driver.

    Stage 1 tracks the predicted reference estimate; stage p > 1 tracks the
    same agent's predicted stage p-1 state.  Arguments are the (n_stages, N)
    predicted states and the length-N predicted references.
    """
    pred = np.asarray(predicted_states, dtype=float)
    refs = np.asarray(predicted_refs, dtype=float)
    if pred.ndim != 2:
        raise ValueError(f"predicted states must be 2-D (stages, agents), got shape {pred.shape}")
    n_stages, n_agents = pred.shape
    if n_stages != gains.n_stages:
        raise ValueError(f"expected {gains.n_stages} stages, got {n_stages}")
    if refs.shape != (n_agents,):
        raise ValueError(f"expected {n_agents} reference predictions, got shape {refs.shape}")
    consensus = np.zeros_like(pred)
    for (i, j), theta in links.theta.items():
        if theta:
            diff = pred[:, i] - pred[:, j]
            consensus[:, i] += diff
            consensus[:, j] -= diff
    drivers = np.vstack([refs, pred[:-1]])
    return -gains.epsilon * consensus + gains.alpha * (drivers - pred)


@dataclass
class AgentState:
    """Everything one agent carries through a run."""

    stages: np.ndarray
    predictor: PredictorState
    delay_line: DelayLine
    reference: ReferenceState
    params: ReferenceParams


@dataclass
class RunOutput:
    """Trajectories of one run; row count is horizon + 1."""

    states: np.ndarray  # (K+1, n_stages, N)
    reference_truth: np.ndarray  # (K+1, N)
    reference_estimate: np.ndarray  # (K+1, N)
    link_draws: "np.ndarray | None" = None  # (K, E) when recorded
    state_errors: "np.ndarray | None" = None  # (K, n_stages, N) when recorded
    reference_errors: "np.ndarray | None" = None  # (K, N) when recorded
    predictions: "np.ndarray | None" = None  # (K, n_stages, N) when recorded


class World:
    """One closed-loop realization.

    ``agent_noise`` is one numpy Generator per agent (two standard-normal
    draws per tick); ``link_rng`` is a Generator or an edge-keyed mapping of
    Generators passed straight to sample_links.  ``horizon`` bounds how many
    ticks may be taken (the deterministic drive is precomputed up to it).
    """

    def __init__(
        self,
        graph: Graph,
        drops: DropModel,
        gains: ControlGains,
        k_x: float,
        k_r: float,
        reference_params: Sequence[ReferenceParams],
        r0: np.ndarray,
        r_hat0: np.ndarray,
        p0: float,
        x0: np.ndarray,
        agent_noise: Sequence,
        link_rng,
        horizon: int,
        mode: str = "compensated",
        predictor_state_offset: float = 0.0,
        predictor_reference_offset: float = 0.0,
    ):
        if mode not in ("compensated", "naive"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        if not drops.covers(graph):
            raise ConfigurationError("drop model must cover exactly the graph edges")
        if gains.epsilon <= 0.0 or gains.alpha <= 0.0:
            raise ConfigurationError("the stepper requires positive gains")
        n = graph.node_count
        if len(reference_params) != n or len(agent_noise) != n:
            raise ConfigurationError("per-agent parameter and generator counts must match the graph")
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (gains.n_stages, n)).copy()
        r0 = np.broadcast_to(np.asarray(r0, dtype=float), (n,)).copy()
        r_hat0 = np.broadcast_to(np.asarray(r_hat0, dtype=float), (n,)).copy()

        self.graph = graph
        self.drops = drops
        self.gains = gains
        self.mode = mode
        self.horizon = int(horizon)
        self.link_rng = link_rng
        self.agent_noise = list(agent_noise)
        self.t = 0
        self.agents: list[AgentState] = []
        for i in range(n):
            params = reference_params[i]
            predictor = PredictorState(
                k_x=k_x,
                k_r=k_r,
                x_hat_filt=x0[:, i] - predictor_state_offset,
                r_hat_filt=float(r_hat0[i]) - predictor_reference_offset,
            )
            self.agents.append(
                AgentState(
                    stages=x0[:, i].copy(),
                    predictor=predictor,
                    delay_line=DelayLine.zeros(gains.tau, gains.n_stages),
                    reference=initial_reference_state(r0[i], r_hat0[i], p0, params.h),
                    params=params,
                )
            )
        # Deterministic drive per agent, far enough ahead for the roll-forward.
        self._drive = [
            p.profile.values(self.horizon + gains.tau + 1) for p in reference_params
        ]
        # Per-tick diagnostics, refreshed by step().
        self.last_links: "LinkRealization | None" = None
        self.last_state_errors: "np.ndarray | None" = None
        self.last_reference_errors: "np.ndarray | None" = None
        self.last_predictions: "np.ndarray | None" = None

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    def state_matrix(self) -> np.ndarray:
        """Current per-stage states as an (n_stages, N) array."""
        return np.stack([a.stages for a in self.agents], axis=1)

    def reference_truths(self) -> np.ndarray:
        return np.array([a.reference.r for a in self.agents])

    def reference_estimates(self) -> np.ndarray:
        return np.array([a.reference.r_hat for a in self.agents])

    def step(self) -> None:
        """Advance one tick; see the module docstring for the schedule."""
        t = self.t
        if t >= self.horizon:
            raise ConfigurationError(f"world was built for {self.horizon} ticks")
        gains = self.gains
        tau = gains.tau
        n = self.node_count

        r_hat_prev = np.empty(n)
        z_prev = np.empty(n)
        for i, agent in enumerate(self.agents):
            r_hat_prev[i] = agent.reference.r_hat
            z_prev[i] = agent.reference.z
            v_t = float(self._drive[i][t])
            rng = self.agent_noise[i]
            draws = (float(rng.standard_normal()), float(rng.standard_normal()))
            advanced = reference_step(agent.reference, agent.params, v_t, draws)
            agent.reference = kalman_step(advanced, agent.params, v_t, advanced.z)

        predictions = np.empty((gains.n_stages, n))
        ref_predictions = np.empty(n)
        state_errors = np.empty((gains.n_stages, n))
        ref_errors = np.empty(n)
        for i, agent in enumerate(self.agents):
            if tau >= 1:
                head = agent.delay_line.head()
                state_errors[:, i] = agent.stages - agent.predictor.x_hat_filt
                agent.predictor = predictor_filter_update(agent.predictor, agent.stages, head)
                ref_errors[i] = r_hat_prev[i] - agent.predictor.r_hat_filt
                increment = agent.reference.r_hat - r_hat_prev[i]
                agent.predictor = reference_filter_update(
                    agent.predictor, float(r_hat_prev[i]), float(increment)
                )
                predictions[:, i] = roll_forward(agent.predictor, agent.delay_line)
                ref_predictions[i] = roll_forward_reference(
                    agent.predictor, self._drive[i][t + 1 : t + tau]
                )
            else:
                # No delay: the controller sees current states directly.
                state_errors[:, i] = 0.0
                ref_errors[i] = 0.0
                predictions[:, i] = agent.stages
                ref_predictions[i] = r_hat_prev[i]

        links = sample_links(self.drops, self.link_rng)

        if self.mode == "naive":
            h = np.array([a.params.h for a in self.agents])
            u_new = control_input(self.state_matrix(), z_prev / h, links, gains)
        else:
            u_new = control_input(predictions, ref_predictions, links, gains)

        for i, agent in enumerate(self.agents):
            applied = agent.delay_line.push(u_new[:, i].copy())
            agent.stages = agent.stages + applied

        self.t = t + 1
        self.last_links = links
        self.last_state_errors = state_errors
        self.last_reference_errors = ref_errors
        self.last_predictions = predictions

    def run(
        self,
        steps: "int | None" = None,
        record_links: bool = False,
        record_errors: bool = False,
        record_predictions: bool = False,
    ) -> RunOutput:
        """Drive the world ``steps`` ticks (default: the full horizon) and
        record trajectories; must be called on a fresh world."""
        if self.t != 0:
            raise ConfigurationError("run() must start from tick 0")
        steps = self.horizon if steps is None else int(steps)
        if steps > self.horizon:
            raise ConfigurationError(f"world was built for {self.horizon} ticks")
        n = self.node_count
        n_stages = self.gains.n_stages
        edges = sorted(self.drops.probabilities)
        states = np.empty((steps + 1, n_stages, n))
        truth = np.empty((steps + 1, n))
        estimate = np.empty((steps + 1, n))
        link_draws = np.empty((steps, len(edges)), dtype=np.uint8) if record_links else None
        state_errors = np.empty((steps, n_stages, n)) if record_errors else None
        ref_errors = np.empty((steps, n)) if record_errors else None
        predictions = np.empty((steps, n_stages, n)) if record_predictions else None

        states[0] = self.state_matrix()
        truth[0] = self.reference_truths()
        estimate[0] = self.reference_estimates()
        for k in range(steps):
            self.step()
            states[k + 1] = self.state_matrix()
            truth[k + 1] = self.reference_truths()
            estimate[k + 1] = self.reference_estimates()
            if record_links:
                link_draws[k] = [self.last_links.theta[e] for e in edges]
            if record_errors:
                state_errors[k] = self.last_state_errors
                ref_errors[k] = self.last_reference_errors
            if record_predictions:
                predictions[k] = self.last_predictions
        return RunOutput(
            states=states,
            reference_truth=truth,
            reference_estimate=estimate,
            link_draws=link_draws,
            state_errors=state_errors,
            reference_errors=ref_errors,
            predictions=predictions,
        )

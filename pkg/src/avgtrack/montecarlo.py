"""Seeded Monte Carlo orchestration and file emission.

Randomness is derived from numpy SeedSequence entropy tuples
(master_seed, run_index, stream_kind, entity_index), one PCG64 generator
per agent or edge.  Runs therefore own independent streams: executing them
in any order, or skipping some, never changes another run's draws, and the
same scenario plus master seed reproduces byte-identical outputs.

Stream kinds: 0 agent noise, 1 link draws, 2 agent state init,
3 reference-estimate init.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import (
    BoundReport,
    ParamReport,
    convergence_matrix_spectrum,
    spectral_radius,
    steady_state,
    theorem_bound,
    tracking_error,
    validate_params,
)
from .controller import RunOutput, World
from .graphs import ConfigurationError, expected_laplacian
from .scenario import Scenario

__all__ = [
    "STREAM_AGENT_NOISE",
    "STREAM_LINKS",
    "STREAM_STATE_INIT",
    "STREAM_ESTIMATE_INIT",
    "AnalysisSummary",
    "EnsembleResult",
    "make_agent_streams",
    "make_link_streams",
    "build_world",
    "run_monte_carlo",
    "analysis_summary",
    "emit_outputs",
    "read_trajectories_csv",
    "read_error_csv",
]

STREAM_AGENT_NOISE = 0
STREAM_LINKS = 1
STREAM_STATE_INIT = 2
STREAM_ESTIMATE_INIT = 3


def _stream(master_seed: int, run_index: int, kind: int, entity: int):
    entropy = (master_seed, run_index, kind, entity)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def make_agent_streams(master_seed: int, run_index: int, n_agents: int) -> list:
    return [_stream(master_seed, run_index, STREAM_AGENT_NOISE, i) for i in range(n_agents)]


def make_link_streams(master_seed: int, run_index: int, edges: Sequence) -> dict:
    return {
        edge: _stream(master_seed, run_index, STREAM_LINKS, idx)
        for idx, edge in enumerate(sorted(edges))
    }


@dataclass(frozen=True)
class AnalysisSummary:
    """Closed-form numbers recomputable from the scenario alone."""

    params: ParamReport
    bound: BoundReport
    spectral_radius: float
    r_star: np.ndarray
    r_bar: float
    x_star_final: np.ndarray


@dataclass
class EnsembleResult:
    """Aggregated Monte Carlo output plus the per-run trajectories kept."""

    scenario: Scenario
    mode: str
    runs: int
    master_seed: int
    mean_final_stage: np.ndarray  # (K+1, N): ensemble mean of the last stage
    mean_reference: np.ndarray  # (K+1, N)
    error_norms: np.ndarray  # (K+1,)
    error_per_agent: np.ndarray  # (K+1, N)
    error_stderr: np.ndarray  # (K+1,)
    saved_runs: list  # RunOutput for run indices < save_runs
    analysis: AnalysisSummary

    def tail_error(self, fraction: float = 0.1) -> float:
        """Mean tracking error over the trailing window: the steady value."""
        window = max(1, int(round(fraction * (len(self.error_norms) - 1))))
        return float(self.error_norms[-window:].mean())


def analysis_summary(scenario: Scenario) -> AnalysisSummary:
    expected = expected_laplacian(scenario.graph, scenario.drops)
    params = validate_params(scenario.gains, scenario.k_x, scenario.k_r, expected)
    r_star = scenario.r_star()
    bound = theorem_bound(expected, scenario.gains, r_star)
    spectrum = convergence_matrix_spectrum(expected, scenario.gains, scenario.k_x, scenario.k_r)
    prediction = steady_state(expected, scenario.gains, r_star)
    return AnalysisSummary(
        params=params,
        bound=bound,
        spectral_radius=spectral_radius(spectrum),
        r_star=r_star,
        r_bar=prediction.r_bar,
        x_star_final=prediction.x_star[-1],
    )


def build_world(
    scenario: Scenario,
    run_index: int,
    mode: "str | None" = None,
    predictor_state_offset: float = 0.0,
    predictor_reference_offset: float = 0.0,
) -> World:
    """World for one run, with every stream keyed to (seed, run, kind, entity)."""
    n = scenario.graph.node_count
    seed = scenario.master_seed
    x0 = scenario.x0.realize(
        (scenario.gains.n_stages, n), _stream(seed, run_index, STREAM_STATE_INIT, 0)
    )
    r_hat0 = scenario.kalman_r0.realize(
        (n,), _stream(seed, run_index, STREAM_ESTIMATE_INIT, 0)
    )
    return World(
        graph=scenario.graph,
        drops=scenario.drops,
        gains=scenario.gains,
        k_x=scenario.k_x,
        k_r=scenario.k_r,
        reference_params=scenario.reference_params(),
        r0=scenario.r0,
        r_hat0=r_hat0,
        p0=scenario.kalman_p0,
        x0=x0,
        agent_noise=make_agent_streams(seed, run_index, n),
        link_rng=make_link_streams(seed, run_index, scenario.graph.edges),
        horizon=scenario.horizon,
        mode=scenario.mode if mode is None else mode,
        predictor_state_offset=predictor_state_offset,
        predictor_reference_offset=predictor_reference_offset,
    )


def run_monte_carlo(
    scenario: Scenario,
    runs: "int | None" = None,
    mode: "str | None" = None,
    save_runs: int = 1,
    run_order: "Sequence[int] | None" = None,
) -> EnsembleResult:
    """Execute the ensemble and aggregate.

    ``run_order`` only permutes execution; each run's streams depend on its
    index alone and the aggregation is order-insensitive, so results are
    identical for any order.  ``save_runs`` bounds how many full per-run
    trajectories are retained (run indices below that count).
    """
    runs = scenario.runs if runs is None else int(runs)
    mode = scenario.mode if mode is None else mode
    indices = list(range(runs)) if run_order is None else list(run_order)
    if sorted(indices) != list(range(runs)):
        raise ConfigurationError("run_order must be a permutation of range(runs)")
    k_rows = scenario.horizon + 1
    n = scenario.graph.node_count
    sum_xn = np.zeros((k_rows, n))
    sum_r = np.zeros((k_rows, n))
    sum_d = np.zeros((k_rows, n))
    sum_d2 = np.zeros((k_rows, n))
    saved: dict[int, RunOutput] = {}
    for run_index in indices:
        world = build_world(scenario, run_index, mode=mode)
        output = world.run()
        xn = output.states[:, -1, :]
        r = output.reference_truth
        d = r.mean(axis=1, keepdims=True) - xn
        sum_xn += xn
        sum_r += r
        sum_d += d
        sum_d2 += d * d
        if run_index < save_runs:
            saved[run_index] = output

    if runs == 0:
        mean_xn = np.zeros((k_rows, n))
        mean_r = np.zeros((k_rows, n))
        error_norms = np.zeros(k_rows)
        per_agent = np.zeros((k_rows, n))
        stderr = np.zeros(k_rows)
    else:
        mean_xn = sum_xn / runs
        mean_r = sum_r / runs
        metric = tracking_error(mean_xn, mean_r)
        error_norms = metric.norms
        per_agent = metric.per_agent
        if runs > 1:
            variance = (sum_d2 - sum_d * sum_d / runs) / (runs - 1)
            stderr = np.sqrt(np.clip(variance, 0.0, None).sum(axis=1) / runs)
        else:
            stderr = np.zeros(k_rows)
    return EnsembleResult(
        scenario=scenario,
        mode=mode,
        runs=runs,
        master_seed=scenario.master_seed,
        mean_final_stage=mean_xn,
        mean_reference=mean_r,
        error_norms=error_norms,
        error_per_agent=per_agent,
        error_stderr=stderr,
        saved_runs=[saved[i] for i in sorted(saved)],
        analysis=analysis_summary(scenario),
    )


def _fmt(x: float) -> str:
    """Full-precision, locale-independent decimal text (round-trip exact)."""
    return repr(float(x))


def _header_comment(result: EnsembleResult) -> str:
    flags = " ".join(
        f"{c.name}={'ok' if c.ok else 'FAIL'}" for c in result.analysis.params.checks
    )
    return (
        f"# scenario={result.scenario.name} mode={result.mode} runs={result.runs} "
        f"seed={result.master_seed} gains_valid={result.analysis.params.ok} {flags}"
    )


def emit_outputs(result: EnsembleResult, out_dir) -> list[Path]:
    """Write trajectories.csv, error.csv, and analysis.txt.

    error.csv doubles as the error-versus-bound overlay data: the bound
    column carries the closed-form stationary bound.  CSV floats use
    shortest round-trip formatting, so re-parsing reproduces the arrays
    exactly.  A '#' comment line atop each CSV records the validity verdict.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []

    traj_path = out / "trajectories.csv"
    with open(traj_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header_comment(result) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "run", "agent", "stage", "x", "r_true", "r_hat"])
        for run_index, output in enumerate(result.saved_runs):
            k_rows, n_stages, n = output.states.shape
            for k in range(k_rows):
                for agent in range(n):
                    r_true = _fmt(output.reference_truth[k, agent])
                    r_hat = _fmt(output.reference_estimate[k, agent])
                    for stage in range(n_stages):
                        writer.writerow(
                            [k, run_index, agent + 1, stage + 1,
                             _fmt(output.states[k, stage, agent]), r_true, r_hat]
                        )
    written.append(traj_path)

    error_path = out / "error.csv"
    with open(error_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_header_comment(result) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "mean_error_norm", "bound", "stderr"])
        if result.runs > 0:
            bound = _fmt(result.analysis.bound.bound)
            for k in range(len(result.error_norms)):
                writer.writerow(
                    [k, _fmt(result.error_norms[k]), bound, _fmt(result.error_stderr[k])]
                )
    written.append(error_path)

    analysis_path = out / "analysis.txt"
    with open(analysis_path, "w", encoding="utf-8", newline="") as fh:
        for key, value in analysis_lines(result):
            fh.write(f"{key} = {value}\n")
    written.append(analysis_path)
    return written


def analysis_lines(result: EnsembleResult) -> list[tuple[str, str]]:
    """Key-value pairs of the analysis report (scenario echo included)."""
    summary = result.analysis
    lines = list(result.scenario.describe())
    lines.append(("run.mode", result.mode))
    lines.append(("run.runs", str(result.runs)))
    lines.append(("run.seed", str(result.master_seed)))
    lines.append(("gains_valid", str(summary.params.ok)))
    for check in summary.params.checks:
        lines.append((f"check.{check.name}", "ok" if check.ok else f"FAIL ({check.detail})"))
    lines.append(("d_max_expected", _fmt(summary.params.d_max_expected)))
    lines.append(("lambda2", _fmt(summary.bound.lambda2)))
    lines.append(("contraction_ratio", _fmt(summary.bound.ratio)))
    lines.append(("bound", _fmt(summary.bound.bound)))
    lines.append(("r_tilde_norm", _fmt(summary.bound.r_tilde_norm)))
    lines.append(("steady_error", _fmt(summary.bound.steady_error)))
    lines.append(("spectral_radius", _fmt(summary.spectral_radius)))
    lines.append(("r_star", " ".join(_fmt(v) for v in summary.r_star)))
    lines.append(("r_bar", _fmt(summary.r_bar)))
    lines.append(("x_star_final", " ".join(_fmt(v) for v in summary.x_star_final)))
    return lines


def read_trajectories_csv(path) -> dict:
    """Parse trajectories.csv back into arrays keyed by run index.

    Returns {run: {"states": (K+1, n, N), "r_true": (K+1, N),
    "r_hat": (K+1, N)}}; exact inverse of the writer.
    """
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if header != ["k", "run", "agent", "stage", "x", "r_true", "r_hat"]:
            raise ConfigurationError(f"{path}: unexpected trajectories header {header}")
        for row in reader:
            rows.append(
                (int(row[0]), int(row[1]), int(row[2]), int(row[3]),
                 float(row[4]), float(row[5]), float(row[6]))
            )
    out: dict = {}
    if not rows:
        return out
    for run in sorted({r[1] for r in rows}):
        subset = [r for r in rows if r[1] == run]
        k_max = max(r[0] for r in subset)
        n = max(r[2] for r in subset)
        n_stages = max(r[3] for r in subset)
        states = np.empty((k_max + 1, n_stages, n))
        r_true = np.empty((k_max + 1, n))
        r_hat = np.empty((k_max + 1, n))
        for k, _, agent, stage, x, rt, rh in subset:
            states[k, stage - 1, agent - 1] = x
            r_true[k, agent - 1] = rt
            r_hat[k, agent - 1] = rh
        out[run] = {"states": states, "r_true": r_true, "r_hat": r_hat}
    return out


def read_error_csv(path) -> dict:
    """Parse error.csv back into arrays (exact inverse of the writer)."""
    ks, norms, bounds, stderrs = [], [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader)
        if header != ["k", "mean_error_norm", "bound", "stderr"]:
            raise ConfigurationError(f"{path}: unexpected error header {header}")
        for row in reader:
            ks.append(int(row[0]))
            norms.append(float(row[1]))
            bounds.append(float(row[2]))
            stderrs.append(float(row[3]))
    return {
        "k": np.array(ks, dtype=int),
        "mean_error_norm": np.array(norms),
        "bound": np.array(bounds),
        "stderr": np.array(stderrs),
    }

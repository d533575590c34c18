"""Command-line entry point.

Verbs:
  run               simulate a scenario file and emit CSV / analysis outputs
  analyze           closed-form analysis of a scenario, no simulation
  reproduce-paper   run the bundled four-node benchmark in both modes at 10
                    and 100 stages, emitting one output directory per case

Exit status is 0 on success and nonzero with a diagnostic on stderr for any
error.  No environment variables are consulted.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .graphs import ConfigurationError
from .montecarlo import analysis_lines, emit_outputs, run_monte_carlo
from .scenario import Scenario, load_scenario

__all__ = ["main"]

_BUNDLED_SCENARIO = "paper_sec6.cfg"
# Stage counts exercised by the bundled benchmark reproduction.
_REPRODUCE_STAGES = (10, 100)
# Ensemble size for reproduce-paper; deliberately modest so both modes and
# stage counts finish quickly.  Raise with --runs for tighter statistics.
_REPRODUCE_RUNS = 20


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avgtrack",
        description="Multi-stage distributed average tracking over lossy, delayed networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario and write outputs")
    run_p.add_argument("--config", required=True, help="scenario file")
    run_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    run_p.add_argument("--runs", type=int, default=None, help="override the run count")
    run_p.add_argument("--out", default="out", help="output directory (default: out)")
    run_p.add_argument("--mode", choices=("compensated", "naive"), default=None)
    run_p.add_argument("--save-runs", type=int, default=1,
                       help="how many full per-run trajectories to keep (default: 1)")

    analyze_p = sub.add_parser("analyze", help="closed-form analysis only, no simulation")
    analyze_p.add_argument("--config", required=True, help="scenario file")
    analyze_p.add_argument("--out", default=None, help="also write analysis.txt here")

    repro_p = sub.add_parser(
        "reproduce-paper",
        help="run the bundled benchmark in both modes at 10 and 100 stages",
    )
    repro_p.add_argument("--out", default="paper-out", help="output directory")
    repro_p.add_argument("--seed", type=int, default=None, help="override the master seed")
    repro_p.add_argument("--runs", type=int, default=_REPRODUCE_RUNS,
                         help=f"ensemble size per case (default: {_REPRODUCE_RUNS})")
    return parser


def _apply_overrides(scenario: Scenario, seed: "int | None", runs: "int | None") -> Scenario:
    if seed is not None:
        scenario.master_seed = int(seed)
    if runs is not None:
        if runs < 0:
            raise ConfigurationError(f"run count must be nonnegative, got {runs}")
        scenario.runs = int(runs)
    return scenario


def _cmd_run(args) -> int:
    scenario = _apply_overrides(load_scenario(args.config), args.seed, args.runs)
    result = run_monte_carlo(scenario, mode=args.mode, save_runs=args.save_runs)
    files = emit_outputs(result, args.out)
    if not result.analysis.params.ok:
        print(
            f"warning: gains outside their valid ranges ({', '.join(result.analysis.params.failed())}); "
            "run executed anyway and flagged in outputs",
            file=sys.stderr,
        )
    print(f"ran {result.runs} runs of {scenario.name} in {result.mode} mode")
    print(f"final tracking error {result.error_norms[-1]!r} (bound {result.analysis.bound.bound!r})")
    for path in files:
        print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    scenario = load_scenario(args.config)
    # A zero-run result carries the full analysis block.
    result = run_monte_carlo(scenario, runs=0)
    lines = analysis_lines(result)
    for key, value in lines:
        print(f"{key} = {value}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "analysis.txt"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for key, value in lines:
                fh.write(f"{key} = {value}\n")
        print(f"wrote {path}", file=sys.stderr)
    return 0


def bundled_scenario_path():
    """Context manager yielding a real filesystem path to the bundled
    scenario (its graph file resolves relative to it)."""
    return resources.as_file(resources.files("avgtrack") / "scenarios" / _BUNDLED_SCENARIO)


def _cmd_reproduce(args) -> int:
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summary: list[str] = []
    with bundled_scenario_path() as cfg_path:
        for mode in ("compensated", "naive"):
            for stages in _REPRODUCE_STAGES:
                scenario = _apply_overrides(load_scenario(cfg_path), args.seed, args.runs)
                scenario.gains = type(scenario.gains)(
                    epsilon=scenario.gains.epsilon,
                    alpha=scenario.gains.alpha,
                    n_stages=stages,
                    tau=scenario.gains.tau,
                )
                scenario.name = f"{scenario.name}_{mode}_n{stages}"
                result = run_monte_carlo(scenario, mode=mode)
                case_dir = out_root / f"{mode}_n{stages}"
                emit_outputs(result, case_dir)
                line = (
                    f"{mode} n={stages}: final error {result.error_norms[-1]!r}, "
                    f"steady (tail mean) {result.tail_error()!r}, "
                    f"bound {result.analysis.bound.bound!r}"
                )
                summary.append(line)
                print(line)
    summary_path = out_root / "summary.txt"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        for line in summary:
            fh.write(line + "\n")
    print(f"wrote {summary_path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "analyze": _cmd_analyze,
        "reproduce-paper": _cmd_reproduce,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

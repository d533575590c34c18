"""Scenario files: a flat key-value format with [section] headers.

The format is deliberately small so that diffs stay readable and parse
errors can name the exact field and line.  See the bundled
``scenarios/paper_sec6.cfg`` and the README for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import ControlGains
from .graphs import ConfigurationError, DropModel, Graph, load_graph_file, normalize_edge
from .reference import InputProfile, ReferenceParams

__all__ = ["InitSpec", "Scenario", "load_scenario", "parse_scenario_text"]

_SECTIONS = ("graph", "gains", "reference", "simulation")
_MODES = ("compensated", "naive")


@dataclass(frozen=True)
class InitSpec:
    """Initial-value rule: fixed values or a uniform interval sampled once
    per run from a dedicated stream."""

    kind: str  # "fixed" | "uniform"
    values: "np.ndarray | None" = None
    low: float = 0.0
    high: float = 0.0

    @classmethod
    def fixed(cls, values) -> "InitSpec":
        return cls("fixed", values=np.atleast_1d(np.asarray(values, dtype=float)))

    @classmethod
    def uniform(cls, low: float, high: float) -> "InitSpec":
        if not high >= low:
            raise ConfigurationError(f"uniform interval needs low <= high, got [{low}, {high}]")
        return cls("uniform", low=float(low), high=float(high))

    def realize(self, shape, rng) -> np.ndarray:
        if self.kind == "fixed":
            return np.broadcast_to(self.values, shape).copy()
        return rng.uniform(self.low, self.high, size=shape)

    def describe(self) -> str:
        if self.kind == "fixed":
            return " ".join(repr(float(v)) for v in self.values)
        return f"uniform {self.low!r} {self.high!r}"


@dataclass
class Scenario:
    """Full experiment description, validated and with defaults applied."""

    graph: Graph
    drops: DropModel
    gains: ControlGains
    k_x: float
    k_r: float
    h: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    profile: InputProfile
    r0: np.ndarray
    kalman_r0: InitSpec
    kalman_p0: float
    x0: InitSpec
    horizon: int
    runs: int
    master_seed: int
    mode: str
    name: str = "scenario"

    def reference_params(self) -> list[ReferenceParams]:
        return [
            ReferenceParams(h=float(self.h[i]), phi=float(self.phi[i]), psi=float(self.psi[i]), profile=self.profile)
            for i in range(self.graph.node_count)
        ]

    def r_star(self) -> np.ndarray:
        """Limit of the reference expectations: initial values plus the
        total deterministic drive."""
        return self.r0 + self.profile.total()

    def describe(self) -> list[tuple[str, str]]:
        """Effective configuration including applied defaults, as ordered
        key-value pairs ready for the analysis report."""
        def floats(arr) -> str:
            return " ".join(repr(float(v)) for v in np.atleast_1d(arr))

        edges = " ".join(f"{i + 1}-{j + 1}" for i, j in self.graph.edges)
        drops = " ".join(
            f"{i + 1}-{j + 1}:{self.drops.probabilities[(i, j)]!r}" for i, j in self.graph.edges
        )
        profile = self.profile
        if profile.kind == "zero":
            profile_text = "zero"
        elif profile.kind == "geometric":
            profile_text = f"geometric {profile.amplitude!r} {profile.decay!r}"
        else:
            profile_text = f"ramp {profile.amplitude!r} {profile.cutoff}"
        return [
            ("scenario.name", self.name),
            ("scenario.nodes", str(self.graph.node_count)),
            ("scenario.edges", edges),
            ("scenario.drop_probabilities", drops),
            ("scenario.epsilon", repr(self.gains.epsilon)),
            ("scenario.alpha", repr(self.gains.alpha)),
            ("scenario.stages", str(self.gains.n_stages)),
            ("scenario.delay", str(self.gains.tau)),
            ("scenario.k_x", repr(self.k_x)),
            ("scenario.k_r", repr(self.k_r)),
            ("scenario.h", floats(self.h)),
            ("scenario.phi", floats(self.phi)),
            ("scenario.psi", floats(self.psi)),
            ("scenario.input", profile_text),
            ("scenario.r0", floats(self.r0)),
            ("scenario.kalman_r0", self.kalman_r0.describe()),
            ("scenario.kalman_p0", repr(self.kalman_p0)),
            ("scenario.x0", self.x0.describe()),
            ("scenario.horizon", str(self.horizon)),
            ("scenario.runs", str(self.runs)),
            ("scenario.seed", str(self.master_seed)),
            ("scenario.mode", self.mode),
        ]


class _Entry:
    __slots__ = ("value", "line", "used")

    def __init__(self, value: str, line: int):
        self.value = value
        self.line = line
        self.used = False


def _parse_sections(text: str, source: str) -> dict[str, dict[str, _Entry]]:
    sections: dict[str, dict[str, _Entry]] = {}
    current: "dict[str, _Entry] | None" = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current_name = line[1:-1].strip().lower()
            if current_name not in _SECTIONS:
                raise ConfigurationError(
                    f"{source}:{lineno}: unknown section [{current_name}]"
                )
            if current_name in sections:
                raise ConfigurationError(f"{source}:{lineno}: duplicate section [{current_name}]")
            current = {}
            sections[current_name] = current
            continue
        if current is None:
            raise ConfigurationError(f"{source}:{lineno}: key outside any [section]")
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if key in current:
            raise ConfigurationError(
                f"{source}:{lineno}: duplicate key {key!r} in [{current_name}]"
            )
        current[key] = _Entry(value.strip(), lineno)
    if not sections:
        raise ConfigurationError(f"{source}: empty scenario file")
    return sections


class _SectionReader:
    def __init__(self, source: str, name: str, entries: dict[str, _Entry]):
        self.source = source
        self.name = name
        self.entries = entries

    def _fail(self, key: str, entry: "_Entry | None", message: str):
        where = f"{self.source}:{entry.line}" if entry is not None else self.source
        raise ConfigurationError(f"{where}: [{self.name}] {key}: {message}")

    def raw(self, key: str, default: "str | None" = None) -> "str | None":
        entry = self.entries.get(key)
        if entry is None:
            if default is None and key not in self.entries:
                return None
            return default
        entry.used = True
        return entry.value

    def require(self, key: str) -> str:
        entry = self.entries.get(key)
        if entry is None:
            raise ConfigurationError(f"{self.source}: [{self.name}] missing required key {key!r}")
        entry.used = True
        return entry.value

    def floats(self, key: str, count: int, default: "str | None" = None) -> np.ndarray:
        text = self.raw(key, default)
        if text is None:
            self._fail(key, None, "is required")
        entry = self.entries.get(key)
        try:
            values = np.array([float(tok) for tok in text.split()])
        except ValueError:
            self._fail(key, entry, f"expected numbers, got {text!r}")
        if values.size == 1:
            return np.full(count, float(values[0]))
        if values.size != count:
            self._fail(key, entry, f"expected 1 or {count} values, got {values.size}")
        return values

    def number(self, key: str, default: "str | None" = None) -> float:
        text = self.raw(key, default)
        if text is None:
            self._fail(key, None, "is required")
        try:
            return float(text)
        except ValueError:
            self._fail(key, self.entries.get(key), f"expected a number, got {text!r}")

    def integer(self, key: str, default: "str | None" = None) -> int:
        text = self.raw(key, default)
        if text is None:
            self._fail(key, None, "is required")
        try:
            return int(text)
        except ValueError:
            self._fail(key, self.entries.get(key), f"expected an integer, got {text!r}")

    def unused(self) -> list[tuple[str, int]]:
        return [(k, e.line) for k, e in self.entries.items() if not e.used]


def _parse_init(reader: _SectionReader, key: str, count: int, default: str) -> InitSpec:
    text = reader.raw(key, default)
    tokens = text.split()
    entry = reader.entries.get(key)
    if tokens and tokens[0].lower() == "uniform":
        if len(tokens) != 3:
            reader._fail(key, entry, "uniform spec is 'uniform LOW HIGH'")
        try:
            return InitSpec.uniform(float(tokens[1]), float(tokens[2]))
        except ValueError:
            reader._fail(key, entry, f"expected numbers, got {text!r}")
    try:
        values = np.array([float(tok) for tok in tokens])
    except ValueError:
        reader._fail(key, entry, f"expected numbers or 'uniform LOW HIGH', got {text!r}")
    if values.size not in (1, count):
        reader._fail(key, entry, f"expected 1 or {count} values, got {values.size}")
    return InitSpec.fixed(values if values.size == count else np.full(count, float(values[0])))


def _parse_profile(reader: _SectionReader) -> InputProfile:
    text = reader.raw("input", "zero")
    tokens = text.split()
    entry = reader.entries.get("input")
    kind = tokens[0].lower() if tokens else "zero"
    try:
        if kind == "zero":
            if len(tokens) > 1:
                reader._fail("input", entry, "zero profile takes no arguments")
            return InputProfile.zero()
        if kind == "geometric":
            if len(tokens) != 3:
                reader._fail("input", entry, "geometric spec is 'geometric AMPLITUDE DECAY'")
            return InputProfile.geometric(float(tokens[1]), float(tokens[2]))
        if kind == "ramp":
            if len(tokens) != 3:
                reader._fail("input", entry, "ramp spec is 'ramp AMPLITUDE CUTOFF'")
            return InputProfile.ramp(float(tokens[1]), int(tokens[2]))
    except ValueError:
        reader._fail("input", entry, f"bad profile arguments in {text!r}")
    except ConfigurationError as exc:
        reader._fail("input", entry, str(exc))
    reader._fail("input", entry, f"unknown profile kind {kind!r}")


def _parse_graph(reader: _SectionReader, base_dir: Path) -> tuple[Graph, DropModel]:
    file_value = reader.raw("file")
    nodes_value = reader.raw("nodes")
    if file_value is not None and nodes_value is not None:
        reader._fail("file", reader.entries.get("file"), "give either 'file' or inline 'nodes'/'edges', not both")
    if file_value is not None:
        path = base_dir / file_value
        if not path.exists():
            reader._fail("file", reader.entries.get("file"), f"graph file {path} not found")
        graph, file_drops = load_graph_file(path)
    elif nodes_value is not None:
        count = reader.integer("nodes")
        if count < 1:
            reader._fail("nodes", reader.entries.get("nodes"), "node count must be positive")
        edges_text = reader.require("edges")
        edges = []
        for token in edges_text.split():
            parts = token.split("-")
            if len(parts) != 2:
                reader._fail("edges", reader.entries.get("edges"), f"bad edge token {token!r}; use I-J")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                reader._fail("edges", reader.entries.get("edges"), f"bad edge token {token!r}")
            if not (1 <= i <= count and 1 <= j <= count):
                reader._fail("edges", reader.entries.get("edges"), f"edge {token} references a missing node")
            edges.append(normalize_edge(i - 1, j - 1))
        try:
            graph = Graph.from_edges(count, edges)
        except ConfigurationError as exc:
            reader._fail("edges", reader.entries.get("edges"), str(exc))
        file_drops = None
    else:
        raise ConfigurationError(f"{reader.source}: [graph] needs either 'file' or 'nodes'/'edges'")

    drop_value = reader.raw("drop_prob")
    if drop_value is not None and file_drops is not None:
        reader._fail(
            "drop_prob",
            reader.entries.get("drop_prob"),
            "graph file already carries per-edge drop probabilities",
        )
    if drop_value is not None:
        try:
            p = float(drop_value)
        except ValueError:
            reader._fail("drop_prob", reader.entries.get("drop_prob"), f"expected a number, got {drop_value!r}")
        try:
            drops = DropModel.uniform(graph, p)
        except ConfigurationError as exc:
            reader._fail("drop_prob", reader.entries.get("drop_prob"), str(exc))
    elif file_drops is not None:
        drops = file_drops
    else:
        drops = DropModel.uniform(graph, 0.0)
    return graph, drops


def parse_scenario_text(text: str, source: str = "<string>", base_dir: "Path | None" = None, name: str = "scenario") -> Scenario:
    """Parse and validate a scenario; defaults are applied here so that the
    result can be echoed field by field."""
    base_dir = Path(".") if base_dir is None else base_dir
    sections = _parse_sections(text, source)
    for required in _SECTIONS:
        if required not in sections:
            raise ConfigurationError(f"{source}: missing required section [{required}]")
    graph_r = _SectionReader(source, "graph", sections["graph"])
    gains_r = _SectionReader(source, "gains", sections["gains"])
    ref_r = _SectionReader(source, "reference", sections["reference"])
    sim_r = _SectionReader(source, "simulation", sections["simulation"])

    graph, drops = _parse_graph(graph_r, base_dir)
    n = graph.node_count

    try:
        gains = ControlGains(
            epsilon=gains_r.number("epsilon"),
            alpha=gains_r.number("alpha"),
            n_stages=gains_r.integer("stages"),
            tau=gains_r.integer("delay"),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: [gains] {exc}") from None
    k_x = gains_r.number("k_x")
    k_r = gains_r.number("k_r")
    if not (0.0 < k_x <= 1.0 and 0.0 < k_r <= 1.0):
        raise ConfigurationError(f"{source}: [gains] predictor gains must lie in (0, 1]")

    h = ref_r.floats("h", n, default="1.0")
    phi = ref_r.floats("phi", n)
    psi = ref_r.floats("psi", n)
    if np.any(h <= 0.0):
        ref_r._fail("h", ref_r.entries.get("h"), "measurement gains must be positive")
    if np.any(phi < 0.0) or np.any(psi < 0.0):
        ref_r._fail("phi", ref_r.entries.get("phi"), "noise variances must be nonnegative")
    profile = _parse_profile(ref_r)
    r0 = ref_r.floats("r0", n)
    kalman_r0 = _parse_init(ref_r, "kalman_r0", n, default="0.0")
    kalman_p0 = ref_r.number("kalman_p0", default="1.0")
    if kalman_p0 < 0.0:
        ref_r._fail("kalman_p0", ref_r.entries.get("kalman_p0"), "initial variance must be nonnegative")

    horizon = sim_r.integer("horizon")
    if horizon < 1:
        sim_r._fail("horizon", sim_r.entries.get("horizon"), "horizon must be positive")
    runs = sim_r.integer("runs", default="1")
    if runs < 0:
        sim_r._fail("runs", sim_r.entries.get("runs"), "run count must be nonnegative")
    master_seed = sim_r.integer("seed")
    mode = sim_r.raw("mode", "compensated").lower()
    if mode not in _MODES:
        sim_r._fail("mode", sim_r.entries.get("mode"), f"mode must be one of {_MODES}")
    x0 = _parse_init(sim_r, "x0", n, default="0.0")

    for reader in (graph_r, gains_r, ref_r, sim_r):
        for key, line in reader.unused():
            raise ConfigurationError(f"{source}:{line}: unknown key {key!r} in [{reader.name}]")

    return Scenario(
        graph=graph,
        drops=drops,
        gains=gains,
        k_x=k_x,
        k_r=k_r,
        h=h,
        phi=phi,
        psi=psi,
        profile=profile,
        r0=r0,
        kalman_r0=kalman_r0,
        kalman_p0=kalman_p0,
        x0=x0,
        horizon=horizon,
        runs=runs,
        master_seed=master_seed,
        mode=mode,
        name=name,
    )


def load_scenario(path) -> Scenario:
    """Load a scenario file; relative graph paths resolve against it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from None
    return parse_scenario_text(text, source=str(path), base_dir=path.parent, name=path.stem)

"""YAML scenario files for the command-line front end.

A scenario file is a mapping with these sections (units in brackets)::

    graph:      kind (path|complete|pcycle|custom), n, p (pcycle radius),
                edge_list (file path, relative to the scenario file) or
                edges ([[i, j, w], ...]) for custom graphs
    noise:      b [state / sqrt(time)], tau [time]
    risk:       c [state], epsilon (probability), delta_max [state] (optional)
    failures:   agents (1-based labels), values (one value [state] or a list)
    sequence:   length, y_f [state]
    sweep:      points (list of failure blocks) and/or counts + placement
                (contiguous|spread) + y_f [state]
    simulation: dt, horizon, burn_in [time], trials, batches, block_trials,
                workers, initial_history [state], trajectories (bool)
    validation: z_max, oracle_count, band [state], method, min_fraction
    seed:       integer, overridden by ``--seed``

:func:`load_config` checks everything it can before any computation and
raises :class:`ConfigError` listing every violation found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError, DelayRiskError
from .graphs import WeightedGraph, build_graph, laplacian, max_stable_delay, read_edge_list, spectral
from .risk import RiskParams
from .simulation import SimConfig
from .stats import FailureScenario, NoiseDelayConfig

PLACEMENTS = ("contiguous", "spread")
METHODS = ("sequential", "brute")
SECTIONS = ("graph", "noise", "risk", "failures", "sequence", "sweep", "simulation", "validation", "seed")


@dataclass(frozen=True)
class GraphSpec:
    kind: str
    n: int
    p: int | None = None
    edge_list: str | None = None
    edges: tuple | None = None

    def build(self, base_dir: Path | None = None) -> WeightedGraph:
        if self.edge_list is not None:
            path = Path(self.edge_list)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            g = read_edge_list(path)
            if g.n != self.n:
                raise ConfigError([f"graph.n={self.n} but {self.edge_list} declares n={g.n}"])
            return g
        return build_graph(self.kind, self.n, p=self.p, edges=self.edges)


@dataclass(frozen=True)
class SequenceSpec:
    length: int
    y_f: float


@dataclass(frozen=True)
class SweepSpec:
    points: tuple[FailureScenario, ...] = ()
    counts: tuple[int, ...] = ()
    placement: str = "contiguous"
    y_f: float | None = None

    def expand(self, n: int) -> list[FailureScenario]:
        """Explicit points first, then one scenario per requested failure count."""
        out = list(self.points)
        for k in self.counts:
            out.append(FailureScenario.uniform(placement_indices(n, k, self.placement), self.y_f))
        return out


@dataclass(frozen=True)
class SimSettings:
    dt: float
    horizon: float
    burn_in: float
    trials: int = 1
    batches: int = 20
    block_trials: int = 50
    workers: int = 1
    initial_history: float | tuple | None = None
    trajectories: bool = False

    def to_sim_config(self, seed: int, trajectory_dir: str | None = None) -> SimConfig:
        return SimConfig(
            dt=self.dt,
            horizon=self.horizon,
            burn_in=self.burn_in,
            trials=self.trials,
            seed=seed,
            initial_history=self.initial_history,
            batches=self.batches,
            block_trials=self.block_trials,
            workers=self.workers,
            trajectory_dir=trajectory_dir if self.trajectories else None,
        )


@dataclass(frozen=True)
class ValidationSpec:
    z_max: float = 3.0
    oracle_count: int = 1_000_000
    band: float | None = None
    method: str = "sequential"
    min_fraction: float = 0.9


@dataclass(frozen=True)
class ScenarioConfig:
    graph: GraphSpec
    noise: NoiseDelayConfig
    risk: RiskParams
    failures: FailureScenario = field(default_factory=FailureScenario)
    sequence: SequenceSpec | None = None
    sweep: SweepSpec | None = None
    simulation: SimSettings | None = None
    validation: ValidationSpec = field(default_factory=ValidationSpec)
    seed: int = 0
    base_dir: Path | None = field(default=None, compare=False)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def build_graph(self) -> WeightedGraph:
        return self.graph.build(self.base_dir)


def placement_indices(n: int, k: int, placement: str) -> list[int]:
    """``k`` failure labels: a centred block or evenly spaced agents."""
    if placement == "contiguous":
        start = (n - k) // 2 + 1
        return list(range(start, start + k))
    return [1 + (i * n) // k for i in range(k)]


class _Collector:
    def __init__(self):
        self.errors = []

    def add(self, where, msg):
        self.errors.append(f"{where}: {msg}")

    def section(self, raw, name, required):
        value = raw.get(name)
        if value is None:
            if required:
                self.add(name, "missing section")
            return None
        if not isinstance(value, dict):
            self.add(name, "must be a mapping")
            return None
        return value

    def number(self, sec, where, key, required=True, integer=False, default=None):
        if key not in sec or sec[key] is None:
            if required:
                self.add(f"{where}.{key}", "required")
            return default
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.add(f"{where}.{key}", f"must be a number, got {v!r}")
            return default
        if integer:
            if float(v) != int(v):
                self.add(f"{where}.{key}", f"must be an integer, got {v!r}")
                return default
            return int(v)
        if not math.isfinite(v):
            self.add(f"{where}.{key}", f"must be finite, got {v!r}")
            return default
        return float(v)

    def unknown(self, sec, where, allowed):
        for key in sec:
            if key not in allowed:
                self.add(f"{where}.{key}", "unknown key")

    def attempt(self, where, fn):
        try:
            return fn()
        except ConfigError as err:
            self.errors.extend(f"{where}: {e}" for e in err.errors)
        except DelayRiskError as err:
            self.add(where, str(err))
        return None


def _failure_block(col, sec, where, default_value=None):
    col.unknown(sec, where, ("agents", "values"))
    agents = sec.get("agents", [])
    if not isinstance(agents, list) or not all(isinstance(a, int) and not isinstance(a, bool) for a in agents):
        col.add(f"{where}.agents", f"must be a list of integer labels, got {agents!r}")
        return None
    values = sec.get("values", default_value)
    if values is None:
        if agents:
            col.add(f"{where}.values", "required when agents are listed")
            return None
        values = []
    if isinstance(values, (int, float)) and not isinstance(values, bool):
        values = [float(values)] * len(agents)
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        col.add(f"{where}.values", f"must be a number or a list of numbers, got {values!r}")
        return None
    if len(values) != len(agents):
        col.add(f"{where}.values", f"{len(values)} values for {len(agents)} agents")
        return None
    if len(set(agents)) != len(agents):
        col.add(f"{where}.agents", "duplicate labels")
        return None
    pairs = sorted(zip(agents, (float(v) for v in values)))
    return col.attempt(where, lambda: FailureScenario(tuple(a for a, _ in pairs), tuple(v for _, v in pairs)))


def parse_config(raw, base_dir: Path | None = None) -> ScenarioConfig:
    """Validate a decoded YAML mapping; every problem is reported at once."""
    col = _Collector()
    if not isinstance(raw, dict):
        raise ConfigError(["scenario file must contain a mapping at the top level"])
    col.unknown(raw, "config", SECTIONS)

    graph = None
    g_sec = col.section(raw, "graph", True)
    if g_sec is not None:
        col.unknown(g_sec, "graph", ("kind", "n", "p", "edge_list", "edges"))
        kind = g_sec.get("kind")
        n = col.number(g_sec, "graph", "n", integer=True)
        p = col.number(g_sec, "graph", "p", required=False, integer=True)
        edges = g_sec.get("edges")
        if edges is not None:
            if not isinstance(edges, list) or not all(isinstance(e, list) and len(e) == 3 for e in edges):
                col.add("graph.edges", "must be a list of [i, j, weight] triples")
                edges = None
            else:
                edges = tuple(tuple(e) for e in edges)
        edge_list = g_sec.get("edge_list")
        if kind is None:
            col.add("graph.kind", "required")
        elif n is not None:
            graph = GraphSpec(kind, n, p, None if edge_list is None else str(edge_list), edges)

    noise = None
    n_sec = col.section(raw, "noise", True)
    if n_sec is not None:
        col.unknown(n_sec, "noise", ("b", "tau"))
        b, tau = col.number(n_sec, "noise", "b"), col.number(n_sec, "noise", "tau")
        if b is not None and tau is not None:
            noise = col.attempt("noise", lambda: NoiseDelayConfig(b, tau))

    risk = None
    r_sec = col.section(raw, "risk", True)
    if r_sec is not None:
        col.unknown(r_sec, "risk", ("c", "epsilon", "delta_max"))
        c, eps = col.number(r_sec, "risk", "c"), col.number(r_sec, "risk", "epsilon")
        dmax = col.number(r_sec, "risk", "delta_max", required=False)
        if c is not None and eps is not None:
            risk = col.attempt("risk", lambda: RiskParams(c, eps, dmax))

    failures = FailureScenario()
    f_sec = col.section(raw, "failures", False)
    if f_sec is not None:
        failures = _failure_block(col, f_sec, "failures")

    sequence = None
    s_sec = col.section(raw, "sequence", False)
    if s_sec is not None:
        col.unknown(s_sec, "sequence", ("length", "y_f"))
        length = col.number(s_sec, "sequence", "length", integer=True)
        y_f = col.number(s_sec, "sequence", "y_f")
        if length is not None and y_f is not None:
            sequence = SequenceSpec(length, y_f)

    sweep = None
    w_sec = col.section(raw, "sweep", False)
    if w_sec is not None:
        col.unknown(w_sec, "sweep", ("points", "counts", "placement", "y_f"))
        y_f = col.number(w_sec, "sweep", "y_f", required=False)
        points = []
        raw_points = w_sec.get("points", [])
        if not isinstance(raw_points, list):
            col.add("sweep.points", "must be a list of failure blocks")
            raw_points = []
        for i, pt in enumerate(raw_points):
            if not isinstance(pt, dict):
                col.add(f"sweep.points[{i}]", "must be a mapping")
                continue
            sc = _failure_block(col, pt, f"sweep.points[{i}]", y_f)
            if sc is not None:
                points.append(sc)
        counts = w_sec.get("counts", [])
        if not isinstance(counts, list) or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 0 for k in counts):
            col.add("sweep.counts", f"must be a list of non-negative integers, got {counts!r}")
            counts = []
        placement = w_sec.get("placement", "contiguous")
        if placement not in PLACEMENTS:
            col.add("sweep.placement", f"must be one of {PLACEMENTS}, got {placement!r}")
        if counts and y_f is None:
            col.add("sweep.y_f", "required with counts")
        if not points and not counts:
            col.add("sweep", "needs points or counts")
        sweep = SweepSpec(tuple(points), tuple(counts), placement, y_f)

    simulation = None
    m_sec = col.section(raw, "simulation", False)
    if m_sec is not None:
        keys = ("dt", "horizon", "burn_in", "trials", "batches", "block_trials", "workers", "initial_history", "trajectories")
        col.unknown(m_sec, "simulation", keys)
        vals = {k: col.number(m_sec, "simulation", k) for k in ("dt", "horizon", "burn_in")}
        for k, d in (("trials", 1), ("batches", 20), ("block_trials", 50), ("workers", 1)):
            vals[k] = col.number(m_sec, "simulation", k, required=False, integer=True, default=d)
        hist = m_sec.get("initial_history")
        if isinstance(hist, list):
            hist = tuple(float(h) for h in hist)
        elif hist is not None:
            hist = col.number(m_sec, "simulation", "initial_history", required=False)
        traj = m_sec.get("trajectories", False)
        if not isinstance(traj, bool):
            col.add("simulation.trajectories", "must be true or false")
            traj = False
        if None not in vals.values():
            simulation = SimSettings(**vals, initial_history=hist, trajectories=traj)
            col.attempt("simulation", lambda: simulation.to_sim_config(0))

    validation = ValidationSpec()
    v_sec = col.section(raw, "validation", False)
    if v_sec is not None:
        col.unknown(v_sec, "validation", ("z_max", "oracle_count", "band", "method", "min_fraction"))
        method = v_sec.get("method", "sequential")
        if method not in METHODS:
            col.add("validation.method", f"must be one of {METHODS}, got {method!r}")
        validation = ValidationSpec(
            z_max=col.number(v_sec, "validation", "z_max", required=False, default=3.0),
            oracle_count=col.number(v_sec, "validation", "oracle_count", required=False, integer=True, default=1_000_000),
            band=col.number(v_sec, "validation", "band", required=False),
            method=method,
            min_fraction=col.number(v_sec, "validation", "min_fraction", required=False, default=0.9),
        )
        if not validation.z_max > 0:
            col.add("validation.z_max", "must be positive")
        if not validation.oracle_count > 0:
            col.add("validation.oracle_count", "must be positive")
        if validation.band is not None and not validation.band > 0:
            col.add("validation.band", "must be positive")
        if not 0 < validation.min_fraction <= 1:
            col.add("validation.min_fraction", "must lie in (0, 1]")

    seed = 0
    if "seed" in raw:
        seed = col.number(raw, "config", "seed", integer=True, default=0)
        if not 0 <= seed < 2**64:
            col.add("config.seed", "must be a non-negative 64-bit integer")

    cfg = None
    if not col.errors:
        cfg = ScenarioConfig(graph, noise, risk, failures, sequence, sweep, simulation, validation, seed, base_dir)
        _check_against_graph(col, cfg)
    if col.errors:
        raise ConfigError(col.errors)
    return cfg


def _check_against_graph(col, cfg: ScenarioConfig):
    g = col.attempt("graph", cfg.build_graph)
    if g is None:
        return
    s = spectral(laplacian(g))
    bound = max_stable_delay(s)
    if not cfg.noise.tau < bound:
        col.add("noise.tau", f"{cfg.noise.tau} violates the stability bound tau < {bound!r}")
    c = cfg.risk.c
    col.attempt("failures", lambda: cfg.failures.check(g.n, c))
    if cfg.sequence is not None:
        free = g.n - cfg.failures.m
        if not 1 <= cfg.sequence.length <= free:
            col.add("sequence.length", f"must lie in 1..{free}, got {cfg.sequence.length}")
        if not abs(cfg.sequence.y_f) > c:
            col.add("sequence.y_f", f"|y_f| must exceed c={c}")
    if cfg.sweep is not None:
        for i, sc in enumerate(cfg.sweep.points):
            col.attempt(f"sweep.points[{i}]", lambda sc=sc: sc.check(g.n, c))
        for k in cfg.sweep.counts:
            if k >= g.n:
                col.add("sweep.counts", f"failure count {k} leaves no surviving agent (n={g.n})")
            elif k and not abs(cfg.sweep.y_f) > c:
                col.add("sweep.y_f", f"|y_f| must exceed c={c}")
                break
    if cfg.simulation is not None:
        sim = cfg.simulation
        if cfg.noise.tau > 0 and sim.dt > cfg.noise.tau / 20 * (1 + 1e-12):
            col.add("simulation.dt", f"{sim.dt} exceeds tau/20={cfg.noise.tau / 20!r}")
        if not sim.dt * s.lambda_max < 0.1:
            col.add("simulation.dt", f"dt*lambda_max={sim.dt * s.lambda_max:.4g} is not below 0.1")
        if isinstance(sim.initial_history, tuple) and len(sim.initial_history) != g.n:
            col.add("simulation.initial_history", f"needs {g.n} entries, got {len(sim.initial_history)}")


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError([f"cannot read {path}: {err.strerror}"]) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError([f"invalid YAML: {err}"]) from None
    return parse_config(raw, path.parent)


def _failures_dict(sc: FailureScenario) -> dict:
    return {"agents": list(sc.indices), "values": list(sc.values)}


def to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical plain-data form, the inverse of :func:`parse_config`."""
    g = cfg.graph
    graph = {"kind": g.kind, "n": g.n}
    if g.p is not None:
        graph["p"] = g.p
    if g.edge_list is not None:
        graph["edge_list"] = g.edge_list
    if g.edges is not None:
        graph["edges"] = [list(e) for e in g.edges]
    out = {
        "graph": graph,
        "noise": {"b": cfg.noise.b, "tau": cfg.noise.tau},
        "risk": {"c": cfg.risk.c, "epsilon": cfg.risk.epsilon},
        "failures": _failures_dict(cfg.failures),
    }
    if cfg.risk.delta_max is not None:
        out["risk"]["delta_max"] = cfg.risk.delta_max
    if cfg.sequence is not None:
        out["sequence"] = {"length": cfg.sequence.length, "y_f": cfg.sequence.y_f}
    if cfg.sweep is not None:
        w = cfg.sweep
        sweep = {"points": [_failures_dict(p) for p in w.points], "counts": list(w.counts), "placement": w.placement}
        if w.y_f is not None:
            sweep["y_f"] = w.y_f
        out["sweep"] = sweep
    if cfg.simulation is not None:
        sim = cfg.simulation
        out["simulation"] = {
            "dt": sim.dt, "horizon": sim.horizon, "burn_in": sim.burn_in, "trials": sim.trials,
            "batches": sim.batches, "block_trials": sim.block_trials, "workers": sim.workers,
            "initial_history": list(sim.initial_history) if isinstance(sim.initial_history, tuple) else sim.initial_history,
            "trajectories": sim.trajectories,
        }
    v = cfg.validation
    out["validation"] = {
        "z_max": v.z_max, "oracle_count": v.oracle_count, "band": v.band, "method": v.method,
        "min_fraction": v.min_fraction,
    }
    out["seed"] = cfg.seed
    return out


def serialize(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def parse_text(text: str, base_dir: Path | None = None) -> ScenarioConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError([f"invalid YAML: {err}"]) from None
    return parse_config(raw, base_dir)

"""Discrete-time multi-robot world with single-integrator agents.

Each tick freezes a snapshot, lets every agent compute its velocity from it
(consensus term plus, optionally, its enforcement loop), then applies all
velocities at once with an explicit Euler step.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .controller import AgentState, EnforcementPhase, EnforcementSettings, LocalView, consensus_control, run_cycle
from .errors import ConfigurationError, InputError, SimulationFault
from .graph import (CommModel, WeightedGraph, biconnectivity_status, build_adjacency, is_connected,
                    laplacian, random_geometric_positions, reduced_graph)
from .spectral import ExactEigenvalueProvider, eigendecompose

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EVENT_KINDS = (
    "GraphChanged", "ConnectivityLost", "ConnectivityRestored", "BiconnectivityAchieved",
    "BiconnectivityLost", "CheckVerdict", "EstimationCompleted", "EnforcementExhausted",
)


@dataclass
class ScenarioConfig:
    positions: list
    radius: float = 0.5
    sigma: float = 0.125
    dt: float = 0.01
    duration: float = 3.0
    seed: int = 0
    consensus: bool = True
    enforcement: bool = False
    enforcement_settings: EnforcementSettings = field(default_factory=EnforcementSettings)
    layout: dict | None = None  # generator parameters the positions came from, if any

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise ConfigurationError(f"positions must be a non-empty list of [x, y], got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ConfigurationError("positions must be finite")
        if not (self.dt > 0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.duration >= 0):
            raise ConfigurationError(f"duration must be nonnegative, got {self.duration}")
        self.positions = p.tolist()
        try:
            self.comm = CommModel(self.radius, self.sigma)
        except InputError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def n_ticks(self) -> int:
        return int(math.ceil(self.duration / self.dt - 1e-9)) if self.duration > 0 else 0

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed, "dt": self.dt, "duration": self.duration,
            "comm": {"radius": self.radius, "sigma": self.sigma},
            "controllers": {"consensus": self.consensus, "enforcement": self.enforcement},
            "enforcement": asdict(self.enforcement_settings),
            "positions": self.positions,
        }
        if self.layout:
            d["layout"] = dict(self.layout)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = {"seed", "dt", "duration", "comm", "controllers", "enforcement", "positions", "layout"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {sorted(unknown)}")
        comm = d.get("comm", {})
        ctrl = d.get("controllers", {})
        seed = int(d.get("seed", 0))
        layout = d.get("layout")
        try:
            settings = EnforcementSettings(**d.get("enforcement", {}))
        except TypeError as exc:
            raise ConfigurationError(f"bad [enforcement] section: {exc}") from None
        positions = d.get("positions")
        if positions is None:
            if not layout:
                raise ConfigurationError("scenario needs either 'positions' or a [layout] section")
            positions = generate_layout(layout, CommModel(comm.get("radius", 0.5), comm.get("sigma", 0.125)))
        try:
            return cls(
                positions=positions, radius=float(comm.get("radius", 0.5)), sigma=float(comm.get("sigma", 0.125)),
                dt=float(d.get("dt", 0.01)), duration=float(d.get("duration", 3.0)), seed=seed,
                consensus=bool(ctrl.get("consensus", True)), enforcement=bool(ctrl.get("enforcement", False)),
                enforcement_settings=settings, layout=layout,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from None


def load_scenario(path) -> ScenarioConfig:
    """Read a TOML scenario; BICON_SEED in the environment overrides ``seed``."""
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if "BICON_SEED" in os.environ:
        data["seed"] = int(os.environ["BICON_SEED"])
    return ScenarioConfig.from_dict(data)


def dumbbell_layout(seed: int, model: CommModel | None = None, n: int = 8, max_tries: int = 1000) -> np.ndarray:
    """Two clusters on either side of one bridge node at the origin.

    Cluster sizes, centers and spreads are drawn from ``seed``; draws that
    are disconnected or already biconnected are rejected. The bridge is
    node ``n_left``.
    """
    model = model or CommModel()
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        n_left = int(rng.integers(2, n - 2))
        n_right = n - 1 - n_left
        c_left = np.array([-rng.uniform(0.2, 0.45), 0.0])
        c_right = np.array([rng.uniform(0.2, 0.45), 0.0])
        left = c_left + rng.normal(0.0, rng.uniform(0.05, 0.15), size=(n_left, 2))
        right = c_right + rng.normal(0.0, rng.uniform(0.05, 0.15), size=(n_right, 2))
        bridge = np.array([[0.0, rng.uniform(-0.1, 0.1)]])
        p = np.vstack([left, bridge, right])
        g = build_adjacency(p, model)
        if biconnectivity_status(g) == "not-biconnected":
            return p
    raise ConfigurationError(f"no valid dumbbell layout for seed {seed}")


def generate_layout(params: dict, model: CommModel) -> list:
    kind = params.get("kind", "dumbbell")
    if kind == "dumbbell":
        return dumbbell_layout(int(params.get("seed", 0)), model, n=int(params.get("n", 8))).tolist()
    if kind == "random":
        rng = np.random.default_rng(int(params.get("seed", 0)))
        return random_geometric_positions(int(params.get("n", 8)), rng, model, size=float(params.get("size", 1.0))).tolist()
    raise ConfigurationError(f"unknown layout kind {kind!r}")


@dataclass
class Event:
    t: float
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "kind": self.kind, "payload": self.payload}, sort_keys=True,
                          default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


class EventLog(list):
    def emit(self, t: float, kind: str, /, **payload):
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind}")
        if self and t < self[-1].t:
            raise ValueError("event timestamps must be non-decreasing")
        self.append(Event(float(t), kind, payload))

    def kinds(self) -> list[str]:
        return [e.kind for e in self]

    def first(self, kind: str) -> Event | None:
        return next((e for e in self if e.kind == kind), None)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self)


@dataclass
class TickRecord:
    t: float
    positions: np.ndarray
    lambda2: float
    lambda3: float
    connected: bool
    biconnected: bool


class TrajectoryRecord(list):
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "x", "y", "lambda2", "lambda3", "biconnected"])
        for rec in self:
            for i, (x, y) in enumerate(rec.positions):
                w.writerow([repr(rec.t), i, repr(float(x)), repr(float(y)), repr(rec.lambda2),
                            repr(rec.lambda3), int(rec.biconnected)])
        return buf.getvalue()


class ControllerLog(list):
    """Per-tick enforcement rows: (t, agent, phase, lambda3, bound, speed)."""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "agent", "phase", "lambda3", "bound", "speed"])
        for t, agent, phase, lam3, bound, spd in self:
            w.writerow([repr(t), agent, phase, repr(lam3), repr(bound), repr(spd)])
        return buf.getvalue()


@dataclass
class World:
    config: ScenarioConfig
    positions: np.ndarray
    graph: WeightedGraph
    t: float = 0.0
    tick: int = 0
    agents: list = field(default_factory=list)
    log: EventLog = field(default_factory=EventLog)
    provider: object = field(default_factory=ExactEigenvalueProvider)
    velocities: np.ndarray | None = None
    controller_log: ControllerLog = field(default_factory=ControllerLog)

    @property
    def status(self) -> str:
        return biconnectivity_status(self.graph)


def make_world(config: ScenarioConfig) -> World:
    p = np.array(config.positions, dtype=float)
    g = build_adjacency(p, config.comm)
    if not is_connected(g):
        raise ConfigurationError("initial communication graph is disconnected")
    agents = [AgentState(i, config.enforcement_settings, seed=config.seed) for i in range(len(p))]
    return World(config=config, positions=p, graph=g, agents=agents)


def _spectrum(g: WeightedGraph) -> tuple[float, float]:
    vals = eigendecompose(laplacian(g)).values
    lam2 = float(vals[1]) if len(vals) > 1 else 0.0
    lam3 = float(vals[2]) if len(vals) > 2 else math.nan
    return lam2, lam3


def record(world: World) -> TickRecord:
    lam2, lam3 = _spectrum(world.graph)
    status = world.status
    return TickRecord(world.t, world.positions.copy(), lam2, lam3, status not in ("disconnected",),
                      status == "biconnected")


def compute_velocities(world: World) -> np.ndarray:
    """Velocities from the frozen snapshot; also logs verdict/estimation events."""
    cfg = world.config
    n = len(world.positions)
    u = np.zeros((n, 2))
    if cfg.consensus:
        for i in range(n):
            u[i] += consensus_control(i, world.positions, world.graph)
    if cfg.enforcement:
        view = LocalView(world.positions.copy(), world.graph, cfg.comm, world.provider)
        for a in world.agents:
            a.fault = None
            a.last_estimation = None
            a.verdict = None
            was_exhausted = a.exhausted
            trace, vel = run_cycle(a, view)
            if EnforcementPhase.CHECK_CONDITION in trace and a.verdict is not None:
                payload = a.verdict.to_dict()
                payload["reduced_connected"] = bool(is_connected(reduced_graph(world.graph, a.agent)))
                payload["sound"] = (not payload["passed"]) or payload["reduced_connected"]
                world.log.emit(world.t, "CheckVerdict", **payload)
            if a.last_estimation is not None:
                world.log.emit(world.t, "EstimationCompleted", **a.last_estimation)
            if a.exhausted and not was_exhausted:
                world.log.emit(world.t, "EnforcementExhausted", agent=a.agent, iterations=a.iterations)
            verdict = a.verdict
            world.controller_log.append((
                world.t, a.agent, trace[-1].value,
                verdict.lambda3 if verdict else math.nan, verdict.bound if verdict else math.nan,
                float(np.linalg.norm(vel))))
            u[a.agent] += vel
    return u


def step(world: World, dt: float) -> World:
    """Advance every agent by ``dt`` along its velocity and rebuild the graph."""
    u = compute_velocities(world)
    bad = np.flatnonzero(~np.all(np.isfinite(u), axis=1))
    if bad.size:
        raise SimulationFault(f"agent {int(bad[0])} produced a non-finite velocity {u[bad[0]]}", agent=int(bad[0]))
    positions = world.positions + dt * u
    graph = build_adjacency(positions, world.config.comm)
    nxt = replace(world, positions=positions, graph=graph, t=world.t + dt, tick=world.tick + 1, velocities=u)
    _emit_transitions(world, nxt)
    return nxt


def _emit_transitions(old: World, new: World):
    log = new.log
    e_old, e_new = old.graph.edge_set(), new.graph.edge_set()
    if e_old != e_new:
        log.emit(new.t, "GraphChanged", added=sorted(map(list, e_new - e_old)), removed=sorted(map(list, e_old - e_new)))
    s_old, s_new = old.status, new.status
    if s_old != "disconnected" and s_new == "disconnected":
        log.emit(new.t, "ConnectivityLost", lambda2=_spectrum(new.graph)[0])
    elif s_old == "disconnected" and s_new != "disconnected":
        log.emit(new.t, "ConnectivityRestored", lambda2=_spectrum(new.graph)[0])
    if s_old != "biconnected" and s_new == "biconnected":
        log.emit(new.t, "BiconnectivityAchieved")
    elif s_old == "biconnected" and s_new != "biconnected":
        log.emit(new.t, "BiconnectivityLost", status=s_new)


def run(config: ScenarioConfig, controller_log: ControllerLog | None = None) -> tuple[EventLog, TrajectoryRecord]:
    """Run the whole scenario; enforcement rows go to ``controller_log`` if given."""
    world = make_world(config)
    if controller_log is not None:
        world.controller_log = controller_log
    traj = TrajectoryRecord([record(world)])
    for _ in range(config.n_ticks):
        world = step(world, config.dt)
        traj.append(record(world))
    return world.log, traj


def summarize(log: EventLog, traj: TrajectoryRecord) -> dict:
    verdicts = [e for e in log if e.kind == "CheckVerdict"]
    first = {k: (log.first(k).t if log.first(k) else None)
             for k in ("ConnectivityLost", "BiconnectivityAchieved")}
    last = traj[-1]
    return {
        "ticks": len(traj),
        "final_t": last.t,
        "final_lambda2": last.lambda2,
        "final_lambda3": last.lambda3,
        "final_biconnected": last.biconnected,
        "final_connected": last.connected,
        "connectivity_lost_at": first["ConnectivityLost"],
        "biconnectivity_achieved_at": first["BiconnectivityAchieved"],
        "check_verdicts": len(verdicts),
        "soundness_violations": sum(1 for e in verdicts if not e.payload["sound"]),
        "events": {k: log.kinds().count(k) for k in EVENT_KINDS if k in log.kinds()},
    }


def write_run(out_dir, config: ScenarioConfig, log: EventLog, traj: TrajectoryRecord,
              controller_log: ControllerLog | None = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(log, traj)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, default=_json_default) + "\n")
    (out / "trajectory.csv").write_text(traj.to_csv())
    (out / "events.jsonl").write_text(log.to_jsonl())
    if controller_log:
        (out / "controller.csv").write_text(controller_log.to_csv())
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return summary

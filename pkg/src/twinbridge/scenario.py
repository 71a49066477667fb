"""Scenario files: schema, loading, and validation with line diagnostics.

A scenario is a UTF-8 YAML document with these sections (only name, seed and
duration are required):

    name: loss_resilience          # report identity
    seed: 42                       # master RNG seed
    duration: 30.0                 # simulated seconds

    network:                       # link impairments, both directions
      latency: 0.1                 # seconds; constant or [[t, value], ...]
      loss: 0.25                   # probability; constant or breakpoints
      bandwidth: 250000            # bytes/second; omit or null = uncapped
      disconnects: [[10.0, 40.0]]  # [start, end) windows

    bridge:                        # endpoint knobs (all optional)
      tick: 0.02                   # scheduler tick, seconds
      batch: 4                     # max frames per link packet
      redundancy: 0                # duplicate copies per frame, 0..3
      shares: [0.6, 0.3, 0.1]      # optional per-tier budget fractions
      replay_capacity: 256         # per-topic replay ring depth
      heartbeat: 0.25              # idle-topic heartbeat period
      replay_retry: 0.3            # gap re-request interval
      replay_attempts: 12          # re-requests before giving up
      drain: 0.0                   # quiet tail after traffic stops
      discovery: {enabled: false, period: 0.5, allow: [], deny: []}

    policy:                        # topic -> tier, first match wins
      default: standard
      rules:
        - {pattern: "/*/pose", tier: critical}

    agents:
      count: 3
      topics:                      # "{i}" expands to the agent index
        - {name: "/robot{i}/pose", kind: pose, rate: 10.0, size: 64}

    sync:                          # twin synchronization run (optional)
      mass: 10.0
      force_script: [[0.0, 2.0, 0.0, 0.0]]   # rows: t, fx, fy, fz
      bound: {lipschitz: 1.2, delta: 0.6, e0: 0.0}
      ... (gains, thresholds, grid; see SyncSpec)

    mmcf:                          # configuration optimization (optional)
      weights: [0.4, 0.3, 0.2, 0.1]
      space: {redundancy: [0, 1], batch: [1, 4]}
      probes: 6

    geo:                           # coordinate conversion inputs (optional)
      reference: [39.25, -76.71, 10.0]       # degrees, degrees, meters
      scale: 1.0
      extent: 500000.0
      waypoints: [[39.2505, -76.7095, 10.0]]

Validation failures raise ScenarioParseError carrying one "path (line N):
message" entry per problem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .bridge import DiscoveryConfig, EndpointConfig, PriorityPolicy
from .engine import BridgeScenario, TopicTraffic
from .geo import GeoPoint
from .mmcf import BridgeConfig, MmcfWeights
from .msgbus import MessageKind
from .netsim import NetworkConditions, PiecewiseConstant
from .twinsync import SyncBoundModel, SyncController, SyncLoopConfig, VectorScript

KIND_NAMES = {
    "pose": MessageKind.POSE,
    "twist": MessageKind.TWIST,
    "scan2d": MessageKind.SCAN2D,
    "pointcloud": MessageKind.POINTCLOUD,
    "command": MessageKind.COMMAND,
    "blob": MessageKind.BLOB,
}


class ScenarioParseError(ValueError):
    """Scenario file failed to parse or validate; carries all diagnostics."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


# --- YAML loading with per-path line marks ---------------------------------------


def _convert(node: yaml.Node, marks: dict[str, int], path: str) -> Any:
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = str(key_node.value)
            out[key] = _convert(value_node, marks, f"{path}.{key}" if path else key)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_convert(child, marks, f"{path}[{i}]") for i, child in enumerate(node.value)]
    tag = node.tag.rsplit(":", 1)[-1]
    raw = node.value
    if tag == "null":
        return None
    if tag == "bool":
        return str(raw).lower() in ("true", "yes", "on")
    if tag == "int":
        return int(raw)
    if tag == "float":
        return float(raw)
    return raw


def load_yaml_with_lines(path: str | Path) -> tuple[dict, dict[str, int]]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else 0
        raise ScenarioParseError([f"(line {line}): {exc.problem}"]) from exc
    if root is None:
        raise ScenarioParseError(["(line 1): scenario file is empty"])
    marks: dict[str, int] = {}
    data = _convert(root, marks, "")
    if not isinstance(data, dict):
        raise ScenarioParseError(["(line 1): scenario root must be a mapping"])
    return data, marks


class _Ctx:
    """Validation context accumulating line-tagged diagnostics."""

    def __init__(self, marks: dict[str, int]):
        self.marks = marks
        self.problems: list[str] = []

    def fail(self, path: str, message: str) -> None:
        line = self.marks.get(path, self.marks.get("", 1))
        self.problems.append(f"{path} (line {line}): {message}")

    def get(self, data: dict, path: str, key: str, types, required=False, default=None):
        full = f"{path}.{key}" if path else key
        if key not in data:
            if required:
                self.fail(path or key, f"missing required key {key!r}")
            return default
        value = data[key]
        if types is not None and not isinstance(value, types):
            names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
            self.fail(full, f"expected {names}, got {type(value).__name__}")
            return default
        return value

    def number(self, data, path, key, required=False, default=None, minimum=None, positive=False):
        full = f"{path}.{key}" if path else key
        value = self.get(data, path, key, (int, float), required=required, default=default)
        if value is None:
            return default
        if isinstance(value, bool):
            self.fail(full, "expected a number, got a boolean")
            return default
        if positive and value <= 0:
            self.fail(full, f"must be positive, got {value}")
        elif minimum is not None and value < minimum:
            self.fail(full, f"must be >= {minimum}, got {value}")
        return float(value)


# --- typed sections ---------------------------------------------------------------


@dataclass(frozen=True)
class SyncSpec:
    """Twin-synchronization section of a scenario."""

    mass: float = 10.0
    diameter: float = 0.5
    drag: float = 0.0
    friction: dict[str, float] = field(default_factory=lambda: {"default": 0.0})
    terrain: str = "default"
    tick: float = 0.01
    update_rate: float = 10.0
    kp: float = 40.0
    kd: float = 30.0
    eps_pos: float = 0.05
    eps_vel: float = 0.1
    t_ref: float = 10.0
    cap_factor: float = 4.0
    response_mass: float = 10.0
    heading_gain: float = 1.0
    f_corr_max: float = math.inf
    accuracy_weight: float = 0.8
    energy_weight: float = 0.2
    adaptive_gains: bool = False
    gain_window: float = 2.0
    gain_grid: tuple[tuple[float, float], ...] = ()
    force_script: tuple[tuple[float, float, float, float], ...] = ((0.0, 0.0, 0.0, 0.0),)
    yaw_script: tuple[tuple[float, float], ...] = ((0.0, 0.0),)
    bound: tuple[float, float, float] | None = None  # (lipschitz, delta, e0)

    def controller(self, kp: float | None = None, kd: float | None = None) -> SyncController:
        return SyncController(
            kp=self.kp if kp is None else kp,
            kd=self.kd if kd is None else kd,
            eps_pos=self.eps_pos,
            eps_vel=self.eps_vel,
            gain_grid=self.gain_grid,
            t_ref=self.t_ref,
            cap_factor=self.cap_factor,
            response_mass=self.response_mass,
            heading_gain=self.heading_gain,
            f_corr_max=self.f_corr_max,
            accuracy_weight=self.accuracy_weight,
            energy_weight=self.energy_weight,
        )

    def loop_config(self, duration: float, adaptive: bool | None = None) -> SyncLoopConfig:
        return SyncLoopConfig(
            duration=duration,
            tick=self.tick,
            update_period=1.0 / self.update_rate,
            adaptive_gains=self.adaptive_gains if adaptive is None else adaptive,
            gain_window=self.gain_window,
        )

    def bound_model(self) -> SyncBoundModel | None:
        if self.bound is None:
            return None
        k, delta, e0 = self.bound
        return SyncBoundModel(lipschitz=k, delta_bound=delta, e0=e0)

    def scripts(self) -> tuple[VectorScript, PiecewiseConstant]:
        return VectorScript(self.force_script), PiecewiseConstant(self.yaw_script)


@dataclass(frozen=True)
class MmcfSpec:
    weights: MmcfWeights
    space: dict[str, tuple] = field(default_factory=dict)
    probes: int = 6

    def configs(self) -> list[BridgeConfig]:
        axes = {
            "redundancy": self.space.get("redundancy", (0,)),
            "shares": self.space.get("shares", (None,)),
            "replay_capacity": self.space.get("replay_capacity", (256,)),
            "discovery_period": self.space.get("discovery_period", (0.5,)),
            "batch": self.space.get("batch", (4,)),
        }
        out = []
        for red, shares, cap, period, batch in itertools.product(
            axes["redundancy"], axes["shares"], axes["replay_capacity"],
            axes["discovery_period"], axes["batch"],
        ):
            shares_t = tuple(shares) if shares is not None else None
            out.append(
                BridgeConfig(
                    redundancy=int(red),
                    shares=shares_t,
                    replay_capacity=int(cap),
                    discovery_period=float(period),
                    batch_size=int(batch),
                )
            )
        return sorted(set(out), key=BridgeConfig.sort_key)

    def probe_configs(self) -> list[BridgeConfig]:
        space = self.configs()
        if len(space) <= self.probes:
            return space
        step = (len(space) - 1) / (self.probes - 1)
        idx = sorted({round(i * step) for i in range(self.probes)})
        return [space[i] for i in idx]


@dataclass(frozen=True)
class GeoSpec:
    reference: GeoPoint
    scale: float = 1.0
    extent: float = 0.0
    waypoints: tuple[GeoPoint, ...] = ()


@dataclass(frozen=True)
class Scenario:
    """A parsed, validated scenario file."""

    name: str
    seed: int
    duration: float
    conditions: NetworkConditions
    policy: PriorityPolicy
    endpoint: EndpointConfig
    discovery: DiscoveryConfig
    drain: float = 0.0
    agent_count: int = 0
    topic_templates: tuple[dict, ...] = ()
    sync: SyncSpec | None = None
    mmcf: MmcfSpec | None = None
    geo: GeoSpec | None = None

    def traffic_for(self, count: int | None = None) -> tuple[TopicTraffic, ...]:
        count = self.agent_count if count is None else count
        out = []
        for i in range(1, count + 1):
            for tpl in self.topic_templates:
                out.append(
                    TopicTraffic(
                        topic=tpl["name"].replace("{i}", str(i)),
                        kind=tpl["kind"],
                        rate=tpl["rate"],
                        size=tpl["size"],
                        start=tpl.get("start", 0.0),
                    )
                )
        return tuple(out)

    def bridge_scenario(
        self, count: int | None = None, baseline: bool = False, seed: int | None = None
    ) -> BridgeScenario:
        endpoint = self.endpoint
        if baseline:
            endpoint = replace(endpoint, prioritized=False, redundancy=0, shares=None)
        discovery = self.discovery if not baseline else DiscoveryConfig(enabled=False)
        return BridgeScenario(
            name=self.name,
            seed=self.seed if seed is None else seed,
            duration=self.duration,
            conditions=self.conditions,
            traffic=self.traffic_for(count),
            policy=self.policy,
            endpoint=endpoint,
            discovery=discovery,
            drain=self.drain,
        )


# --- section parsers ---------------------------------------------------------------


def _parse_profile(ctx: _Ctx, raw, path: str, lo=None, hi=None) -> PiecewiseConstant:
    if raw is None:
        return PiecewiseConstant(0.0)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        points = [(0.0, float(raw))]
    elif isinstance(raw, list):
        points = []
        for i, row in enumerate(raw):
            if not (isinstance(row, list) and len(row) == 2):
                ctx.fail(f"{path}[{i}]", "expected [time, value] pair")
                continue
            points.append((float(row[0]), float(row[1])))
        if not points:
            points = [(0.0, 0.0)]
    else:
        ctx.fail(path, "expected a number or a list of [time, value] pairs")
        points = [(0.0, 0.0)]
    for t, v in points:
        if lo is not None and v < lo or hi is not None and v > hi:
            ctx.fail(path, f"value {v} at t={t} outside [{lo}, {hi}]")
    return PiecewiseConstant(points)


def _parse_network(ctx: _Ctx, data: dict) -> NetworkConditions:
    net = ctx.get(data, "", "network", dict, default={}) or {}
    latency = _parse_profile(ctx, net.get("latency", 0.0), "network.latency", lo=0.0)
    loss = _parse_profile(ctx, net.get("loss", 0.0), "network.loss", lo=0.0, hi=1.0)
    bandwidth = net.get("bandwidth")
    if bandwidth is not None:
        b = ctx.number(net, "network", "bandwidth", positive=True)
        bandwidth = b
    windows = []
    for i, row in enumerate(net.get("disconnects", []) or []):
        if not (isinstance(row, list) and len(row) == 2 and row[0] < row[1]):
            ctx.fail(f"network.disconnects[{i}]", "expected [start, end) with start < end")
            continue
        windows.append((float(row[0]), float(row[1])))
    try:
        return NetworkConditions(latency, loss, bandwidth, tuple(windows))
    except ValueError as exc:
        ctx.fail("network", str(exc))
        return NetworkConditions.ideal()


def _parse_policy(ctx: _Ctx, data: dict) -> PriorityPolicy:
    pol = ctx.get(data, "", "policy", dict, default={}) or {}
    try:
        return PriorityPolicy.from_dict(pol)
    except (ValueError, KeyError, TypeError) as exc:
        ctx.fail("policy", str(exc))
        return PriorityPolicy()


def _parse_bridge(ctx: _Ctx, data: dict) -> tuple[EndpointConfig, DiscoveryConfig, float]:
    br = ctx.get(data, "", "bridge", dict, default={}) or {}
    disc_raw = ctx.get(br, "bridge", "discovery", dict, default={}) or {}
    discovery = DiscoveryConfig(
        enabled=bool(disc_raw.get("enabled", False)),
        period=ctx.number(disc_raw, "bridge.discovery", "period", default=0.5, positive=True) or 0.5,
        allow=tuple(disc_raw.get("allow", []) or []),
        deny=tuple(disc_raw.get("deny", []) or []),
    )
    shares = br.get("shares")
    if shares is not None:
        shares = tuple(float(s) for s in shares)
    try:
        endpoint = EndpointConfig(
            prioritized=True,
            tick=ctx.number(br, "bridge", "tick", default=0.01, positive=True) or 0.01,
            budget_per_tick=br.get("budget_per_tick"),
            batch_size=int(ctx.number(br, "bridge", "batch", default=4, minimum=1) or 4),
            redundancy=int(ctx.number(br, "bridge", "redundancy", default=0, minimum=0) or 0),
            shares=shares,
            replay_capacity=int(ctx.number(br, "bridge", "replay_capacity", default=256, minimum=1) or 256),
            sub_capacity=int(ctx.number(br, "bridge", "sub_capacity", default=4096, minimum=1) or 4096),
            heartbeat_interval=ctx.number(br, "bridge", "heartbeat", default=0.25, positive=True) or 0.25,
            replay_retry=ctx.number(br, "bridge", "replay_retry", default=0.3, positive=True) or 0.3,
            replay_attempts=int(ctx.number(br, "bridge", "replay_attempts", default=12, minimum=0) or 12),
        )
    except ValueError as exc:
        ctx.fail("bridge", str(exc))
        endpoint = EndpointConfig()
    drain = ctx.number(br, "bridge", "drain", default=0.0, minimum=0.0) or 0.0
    return endpoint, discovery, drain


def _parse_agents(ctx: _Ctx, data: dict) -> tuple[int, tuple[dict, ...]]:
    ag = ctx.get(data, "", "agents", dict, default=None)
    if ag is None:
        return 0, ()
    count = int(ctx.number(ag, "agents", "count", required=True, minimum=0) or 0)
    templates = []
    topics = ctx.get(ag, "agents", "topics", list, required=True, default=[]) or []
    for i, raw in enumerate(topics):
        path = f"agents.topics[{i}]"
        if not isinstance(raw, dict):
            ctx.fail(path, "expected a mapping")
            continue
        name = ctx.get(raw, path, "name", str, required=True)
        kind_name = ctx.get(raw, path, "kind", str, required=True, default="blob")
        if kind_name not in KIND_NAMES:
            ctx.fail(f"{path}.kind", f"unknown kind {kind_name!r}; expected one of {sorted(KIND_NAMES)}")
            continue
        rate = ctx.number(raw, path, "rate", required=True, positive=True)
        size = ctx.number(raw, path, "size", required=True, minimum=0)
        if name is None or rate is None or size is None:
            continue
        if not name.startswith("/"):
            ctx.fail(f"{path}.name", "topic must start with '/'")
            continue
        templates.append(
            {
                "name": name,
                "kind": KIND_NAMES[kind_name],
                "rate": float(rate),
                "size": int(size),
                "start": ctx.number(raw, path, "start", default=0.0, minimum=0.0) or 0.0,
            }
        )
    return count, tuple(templates)


def _parse_sync(ctx: _Ctx, data: dict) -> SyncSpec | None:
    sy = ctx.get(data, "", "sync", dict, default=None)
    if sy is None:
        return None
    friction = sy.get("friction", {"default": 0.0}) or {"default": 0.0}
    if isinstance(friction, (int, float)):
        friction = {"default": float(friction)}
    grid_raw = sy.get("gain_grid", []) or []
    grid = tuple((float(kp), float(kd)) for kp, kd in grid_raw)
    force_raw = sy.get("force_script", [[0.0, 0.0, 0.0, 0.0]]) or [[0.0, 0.0, 0.0, 0.0]]
    force = []
    for i, row in enumerate(force_raw):
        if not (isinstance(row, list) and len(row) == 4):
            ctx.fail(f"sync.force_script[{i}]", "expected [t, fx, fy, fz]")
            continue
        force.append(tuple(float(x) for x in row))
    yaw_raw = sy.get("yaw_script", [[0.0, 0.0]]) or [[0.0, 0.0]]
    yaw = []
    for i, row in enumerate(yaw_raw):
        if not (isinstance(row, list) and len(row) == 2):
            ctx.fail(f"sync.yaw_script[{i}]", "expected [t, yaw_rate]")
            continue
        yaw.append((float(row[0]), float(row[1])))
    bound = None
    if "bound" in sy and sy["bound"] is not None:
        b = sy["bound"]
        k = ctx.number(b, "sync.bound", "lipschitz", required=True, positive=True)
        delta = ctx.number(b, "sync.bound", "delta", required=True, minimum=0.0)
        e0 = ctx.number(b, "sync.bound", "e0", default=0.0, minimum=0.0)
        if k is not None and delta is not None:
            bound = (k, delta, e0 or 0.0)
    update_rate = ctx.number(sy, "sync", "update_rate", default=10.0, positive=True) or 10.0
    return SyncSpec(
        mass=ctx.number(sy, "sync", "mass", default=10.0, positive=True) or 10.0,
        diameter=ctx.number(sy, "sync", "diameter", default=0.5, positive=True) or 0.5,
        drag=ctx.number(sy, "sync", "drag", default=0.0, minimum=0.0) or 0.0,
        friction={str(k): float(v) for k, v in friction.items()},
        terrain=str(sy.get("terrain", "default")),
        tick=ctx.number(sy, "sync", "tick", default=0.01, positive=True) or 0.01,
        update_rate=update_rate,
        kp=ctx.number(sy, "sync", "kp", default=40.0, minimum=0.0) or 0.0,
        kd=ctx.number(sy, "sync", "kd", default=30.0, minimum=0.0) or 0.0,
        eps_pos=ctx.number(sy, "sync", "eps_pos", default=0.05, positive=True) or 0.05,
        eps_vel=ctx.number(sy, "sync", "eps_vel", default=0.1, positive=True) or 0.1,
        t_ref=ctx.number(sy, "sync", "t_ref", default=10.0, positive=True) or 10.0,
        cap_factor=ctx.number(sy, "sync", "cap_factor", default=4.0, positive=True) or 4.0,
        response_mass=ctx.number(sy, "sync", "response_mass", default=10.0, positive=True) or 10.0,
        heading_gain=ctx.number(sy, "sync", "heading_gain", default=1.0, minimum=0.0) or 0.0,
        f_corr_max=ctx.number(sy, "sync", "f_corr_max", default=math.inf, positive=True) or math.inf,
        accuracy_weight=ctx.number(sy, "sync", "accuracy_weight", default=0.8, minimum=0.0) or 0.0,
        energy_weight=ctx.number(sy, "sync", "energy_weight", default=0.2, minimum=0.0) or 0.0,
        adaptive_gains=bool(sy.get("adaptive_gains", False)),
        gain_window=ctx.number(sy, "sync", "gain_window", default=2.0, positive=True) or 2.0,
        gain_grid=grid,
        force_script=tuple(force) or ((0.0, 0.0, 0.0, 0.0),),
        yaw_script=tuple(yaw) or ((0.0, 0.0),),
        bound=bound,
    )


def _parse_mmcf(ctx: _Ctx, data: dict) -> MmcfSpec | None:
    mm = ctx.get(data, "", "mmcf", dict, default=None)
    if mm is None:
        return None
    weights_raw = ctx.get(mm, "mmcf", "weights", list, required=True, default=[0.25, 0.25, 0.25, 0.25])
    if len(weights_raw) != 4:
        ctx.fail("mmcf.weights", f"expected 4 weights, got {len(weights_raw)}")
        weights_raw = [0.25, 0.25, 0.25, 0.25]
    try:
        weights = MmcfWeights(*(float(w) for w in weights_raw))
    except ValueError as exc:
        ctx.fail("mmcf.weights", str(exc))
        weights = MmcfWeights(0.25, 0.25, 0.25, 0.25)
    space_raw = ctx.get(mm, "mmcf", "space", dict, default={}) or {}
    known = {"redundancy", "shares", "replay_capacity", "discovery_period", "batch"}
    space: dict[str, tuple] = {}
    for key, values in space_raw.items():
        if key not in known:
            ctx.fail(f"mmcf.space.{key}", f"unknown axis; expected one of {sorted(known)}")
            continue
        if not isinstance(values, list) or not values:
            ctx.fail(f"mmcf.space.{key}", "expected a non-empty list of values")
            continue
        space[key] = tuple(tuple(v) if isinstance(v, list) else v for v in values)
    probes = int(ctx.number(mm, "mmcf", "probes", default=6, minimum=2) or 6)
    return MmcfSpec(weights=weights, space=space, probes=probes)


def _parse_geo(ctx: _Ctx, data: dict) -> GeoSpec | None:
    ge = ctx.get(data, "", "geo", dict, default=None)
    if ge is None:
        return None
    ref_raw = ctx.get(ge, "geo", "reference", list, required=True, default=[0.0, 0.0, 0.0])
    if len(ref_raw) != 3:
        ctx.fail("geo.reference", "expected [lat_deg, lon_deg, alt_m]")
        ref_raw = [0.0, 0.0, 0.0]
    try:
        ref = GeoPoint.from_degrees(float(ref_raw[0]), float(ref_raw[1]), float(ref_raw[2]))
    except ValueError as exc:
        ctx.fail("geo.reference", str(exc))
        ref = GeoPoint(0.0, 0.0, 0.0)
    waypoints = []
    for i, row in enumerate(ge.get("waypoints", []) or []):
        if not (isinstance(row, list) and len(row) == 3):
            ctx.fail(f"geo.waypoints[{i}]", "expected [lat_deg, lon_deg, alt_m]")
            continue
        try:
            waypoints.append(GeoPoint.from_degrees(float(row[0]), float(row[1]), float(row[2])))
        except ValueError as exc:
            ctx.fail(f"geo.waypoints[{i}]", str(exc))
    return GeoSpec(
        reference=ref,
        scale=ctx.number(ge, "geo", "scale", default=1.0, positive=True) or 1.0,
        extent=ctx.number(ge, "geo", "extent", default=0.0, minimum=0.0) or 0.0,
        waypoints=tuple(waypoints),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file, or raise ScenarioParseError."""
    data, marks = load_yaml_with_lines(path)
    ctx = _Ctx(marks)

    name = ctx.get(data, "", "name", str, required=True, default="unnamed")
    seed_val = ctx.number(data, "", "seed", required=True, default=0, minimum=0)
    duration = ctx.number(data, "", "duration", required=True, default=1.0, positive=True)

    conditions = _parse_network(ctx, data)
    policy = _parse_policy(ctx, data)
    endpoint, discovery, drain = _parse_bridge(ctx, data)
    agent_count, templates = _parse_agents(ctx, data)
    sync = _parse_sync(ctx, data)
    mmcf_spec = _parse_mmcf(ctx, data)
    geo_spec = _parse_geo(ctx, data)

    if duration is not None and drain >= duration:
        ctx.fail("bridge.drain", f"drain {drain} must be below duration {duration}")

    if ctx.problems:
        raise ScenarioParseError(ctx.problems)

    return Scenario(
        name=name,
        seed=int(seed_val),
        duration=float(duration),
        conditions=conditions,
        policy=policy,
        endpoint=endpoint,
        discovery=discovery,
        drain=drain,
        agent_count=agent_count,
        topic_templates=templates,
        sync=sync,
        mmcf=mmcf_spec,
        geo=geo_spec,
    )

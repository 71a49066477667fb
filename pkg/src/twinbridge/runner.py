"""Scenario runner: wires buses, bridges, links and twins; emits reports.

Every run is fully deterministic for a fixed (scenario, seed): the same
inputs produce byte-identical CSV artifacts. Baseline mode reruns the same
scenario with prioritization, replay, and discovery disabled behind a single
FIFO queue, which is the stand-in for a conventional unprioritized setup.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .engine import TrafficResult, percentile, run_traffic
from .geo import gps_to_scene
from .mmcf import calibrate_bounds, optimize
from .netsim import NetLink, SimClock
from .scenario import Scenario, load_scenario
from .twinsync import (
    PhysicalAgent,
    PhysicalParams,
    SyncReport,
    TwinState,
    VirtualTwin,
    run_sync_loop,
)

TOPICS_HEADER = (
    "topic", "tier", "sent", "delivered", "dropped", "buffered",
    "bytes", "lat_p50", "lat_p95", "lat_max",
)
GEO_HEADER = ("lat_deg", "lon_deg", "alt_m", "scene_x", "scene_y", "scene_z")
TIERS_HEADER = ("tier", "sent", "delivered", "delivery_rate", "lat_p50", "lat_p95", "lat_max")
SUMMARY_HEADER = ("key", "value")
SYNC_HEADER = ("t", "e_pos", "e_rot", "bound", "kp", "kd", "corrected")
MMCF_HEADER = (
    "redundancy", "shares", "replay_capacity", "discovery_period", "batch",
    "latency", "loss", "compute", "bandwidth", "L", "P", "C", "B", "cost",
)
SWEEP_HEADER = (
    "agents", "sent", "delivered", "delivery_rate", "bytes",
    "critical_p95", "standard_p95", "bulk_p95",
)

SYNC_LINK_SEED = 0x517CC1B7


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):  # numpy scalar
        return _fmt(value.item())
    return str(value)


@dataclass
class RunReport:
    """Aggregated outcome of one scenario run."""

    name: str
    seed: int
    mode: str
    duration: float
    topic_rows: list[tuple] = field(default_factory=list)
    tier_rows: list[tuple] = field(default_factory=list)
    summary: dict[str, object] = field(default_factory=dict)
    sync: SyncReport | None = None
    mmcf_rows: list[tuple] = field(default_factory=list)
    geo_rows: list[tuple] = field(default_factory=list)
    traffic: TrafficResult | None = None

    def tier_p95(self, tier: str) -> float:
        for row in self.tier_rows:
            if row[0] == tier:
                return row[5]
        return 0.0

    def tier_delivery_rate(self, tier: str) -> float:
        for row in self.tier_rows:
            if row[0] == tier:
                return row[3]
        return 0.0

    def write_csvs(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        written.append(_write_csv(out / "topics.csv", TOPICS_HEADER, self.topic_rows))
        written.append(_write_csv(out / "tiers.csv", TIERS_HEADER, self.tier_rows))
        summary_rows = sorted((k, _fmt(v)) for k, v in self.summary.items())
        written.append(_write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows))
        if self.sync is not None:
            written.append(_write_csv(out / "sync.csv", SYNC_HEADER, self.sync.rows()))
        if self.mmcf_rows:
            written.append(_write_csv(out / "mmcf.csv", MMCF_HEADER, self.mmcf_rows))
        if self.geo_rows:
            written.append(_write_csv(out / "geo.csv", GEO_HEADER, self.geo_rows))
        return written


def _write_csv(path: Path, header: tuple, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _traffic_report(report: RunReport, result: TrafficResult) -> None:
    for topic, res in sorted(result.topics.items()):
        report.topic_rows.append(
            (
                topic,
                res.tier,
                res.sent,
                res.delivered,
                res.dropped,
                res.buffered,
                res.bytes_sent,
                percentile(res.latencies, 50),
                percentile(res.latencies, 95),
                max(res.latencies) if res.latencies else 0.0,
            )
        )
    by_tier = result.tier_latencies()
    for tier in ("critical", "standard", "bulk"):
        lat = sorted(by_tier.get(tier, []))
        sent = sum(r.sent for r in result.topics.values() if r.tier == tier)
        delivered = sum(r.delivered for r in result.topics.values() if r.tier == tier)
        report.tier_rows.append(
            (
                tier,
                sent,
                delivered,
                delivered / sent if sent else 0.0,
                percentile(lat, 50),
                percentile(lat, 95),
                max(lat) if lat else 0.0,
            )
        )
    sent, delivered, dropped, buffered = result.totals()
    report.summary.update(
        {
            "sent": sent,
            "delivered": delivered,
            "dropped": dropped,
            "buffered": buffered,
            "link_bytes": result.link_bytes,
            "replays_requested": result.replays_requested,
            "replays_served": result.replays_served,
            "replay_evictions": result.replay_evictions,
            "sub_queue_drops": result.sub_queue_drops,
            "mean_latency": result.mean_latency,
            "loss_rate": result.loss_rate,
        }
    )


def run_sync_section(
    scenario: Scenario,
    seed: int,
    kp: float | None = None,
    kd: float | None = None,
    adaptive: bool | None = None,
) -> SyncReport:
    """Execute the twin-synchronization section over its own impaired link.

    kp/kd/adaptive override the scenario values, which is how fixed-gain
    comparison runs share one scenario definition.
    """
    spec = scenario.sync
    assert spec is not None
    clock = SimClock()
    link = NetLink(clock, scenario.conditions, seed ^ SYNC_LINK_SEED, name="sync")
    params = PhysicalParams(
        mass=spec.mass, diameter=spec.diameter, friction=spec.friction, drag=spec.drag
    )
    force_script, yaw_script = spec.scripts()
    agent = PhysicalAgent(params, force_script, yaw_script, spec.terrain)
    twin = VirtualTwin(params, spec.terrain, history_window=6.0, tick=spec.tick)
    ctrl = spec.controller(kp=kp, kd=kd)
    return run_sync_loop(
        agent,
        twin,
        ctrl,
        link,
        clock,
        spec.loop_config(scenario.duration, adaptive=adaptive),
        spec.bound_model(),
    )


def sync_gain_comparison(
    scenario: Scenario, seed: int | None = None
) -> tuple[SyncReport, dict[tuple[float, float], SyncReport]]:
    """Adaptive run plus one fixed-gain run per grid candidate."""
    spec = scenario.sync
    if spec is None or not spec.gain_grid:
        raise ValueError("scenario has no sync section with a gain grid")
    use_seed = scenario.seed if seed is None else seed
    adaptive_report = run_sync_section(scenario, use_seed, adaptive=True)
    fixed = {
        (kp, kd): run_sync_section(scenario, use_seed, kp=kp, kd=kd, adaptive=False)
        for kp, kd in spec.gain_grid
    }
    return adaptive_report, fixed


def run_mmcf_section(scenario: Scenario, seed: int) -> tuple[list[tuple], dict]:
    """Calibrate bounds, optimize the declared space, and tabulate every config."""
    spec = scenario.mmcf
    assert spec is not None
    base = scenario.bridge_scenario(seed=seed)
    space = spec.configs()
    bounds, probed = calibrate_bounds(spec.probe_configs(), base)
    result = optimize(space, base, bounds, spec.weights, known=probed)
    rows = []
    for cfg, metrics, norm, cost in result.table:
        rows.append(
            (
                cfg.redundancy,
                "|".join(repr(s) for s in cfg.shares) if cfg.shares else "",
                cfg.replay_capacity,
                cfg.discovery_period,
                cfg.batch_size,
                metrics.latency,
                metrics.loss,
                metrics.compute,
                metrics.bandwidth,
                *norm,
                cost,
            )
        )
    info = {
        "mmcf_best": repr(result.best.sort_key()),
        "mmcf_best_cost": result.cost,
        "mmcf_evaluated_fraction": result.evaluated_fraction,
        "mmcf_clamp_events": result.clamps,
    }
    return rows, info


def run(
    scenario: Scenario | str | Path,
    seed: int | None = None,
    out_dir: str | Path | None = None,
    baseline: bool = False,
) -> RunReport:
    """Run one scenario end to end; optionally write its CSV artifacts."""
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    use_seed = scenario.seed if seed is None else seed
    mode = "fifo" if baseline else "prioritized"
    report = RunReport(scenario.name, use_seed, mode, scenario.duration)
    report.summary.update({"name": scenario.name, "seed": use_seed, "mode": mode})

    if scenario.topic_templates:
        result = run_traffic(scenario.bridge_scenario(baseline=baseline, seed=use_seed))
        report.traffic = result
        _traffic_report(report, result)

    if scenario.sync is not None:
        sync_report = run_sync_section(scenario, use_seed)
        report.sync = sync_report
        steady_pos, steady_rot = sync_report.steady_state_max(10.0)
        report.summary.update(
            {
                "sync_updates_sent": sync_report.updates_sent,
                "sync_updates_received": sync_report.updates_received,
                "sync_corrections": sync_report.corrections_applied,
                "sync_bound_violations": sync_report.bound_violations,
                "sync_steady_max_e_pos": steady_pos,
                "sync_steady_max_e_rot": steady_rot,
                "sync_integrated_e_pos": sync_report.integrated_error(),
            }
        )

    if scenario.mmcf is not None:
        rows, info = run_mmcf_section(scenario, use_seed)
        report.mmcf_rows = rows
        report.summary.update(info)

    if scenario.geo is not None:
        report.geo_rows = geo_waypoint_rows(scenario)
        report.summary["geo_waypoints"] = len(report.geo_rows)

    if out_dir is not None:
        report.write_csvs(out_dir)
    return report


def geo_waypoint_rows(scenario: Scenario) -> list[tuple]:
    """Convert the scenario's waypoints into scene coordinates."""
    spec = scenario.geo
    assert spec is not None
    rows = []
    for point in spec.waypoints:
        coord = gps_to_scene(spec.reference, point, spec.scale, extent=spec.extent)
        rows.append(
            (
                math.degrees(point.latitude),
                math.degrees(point.longitude),
                point.altitude,
                coord.x,
                coord.y,
                coord.z,
            )
        )
    return rows


# --- comparison -----------------------------------------------------------------


@dataclass(frozen=True)
class DeltaRow:
    scope: str  # "topic:<name>" or "tier:<name>"
    metric: str
    a: float
    b: float

    @property
    def delta(self) -> float:
        return self.b - self.a

    @property
    def relative(self) -> float:
        return (self.b - self.a) / self.a if self.a else math.inf if self.b else 0.0


_TOPIC_METRICS = ("sent", "delivered", "dropped", "buffered", "bytes", "lat_p50", "lat_p95", "lat_max")
_TIER_METRICS = ("sent", "delivered", "delivery_rate", "lat_p50", "lat_p95", "lat_max")


def compare(a: RunReport, b: RunReport) -> list[DeltaRow]:
    """Per-metric deltas between two runs of the same scenario and seed."""
    if a.name != b.name or a.seed != b.seed:
        raise ValueError(
            f"reports disagree on scenario identity: {a.name}/{a.seed} vs {b.name}/{b.seed}"
        )
    rows: list[DeltaRow] = []
    b_topics = {row[0]: row for row in b.topic_rows}
    for row in a.topic_rows:
        other = b_topics.get(row[0])
        if other is None:
            continue
        for i, metric in enumerate(_TOPIC_METRICS, start=2):
            rows.append(DeltaRow(f"topic:{row[0]}", metric, float(row[i]), float(other[i])))
    b_tiers = {row[0]: row for row in b.tier_rows}
    for row in a.tier_rows:
        other = b_tiers.get(row[0])
        if other is None:
            continue
        for i, metric in enumerate(_TIER_METRICS, start=1):
            rows.append(DeltaRow(f"tier:{row[0]}", metric, float(row[i]), float(other[i])))
    return rows


def load_report(run_dir: str | Path) -> RunReport:
    """Rehydrate a report from its CSV artifacts (topics, tiers, summary)."""
    run_dir = Path(run_dir)
    summary: dict[str, object] = {}
    with open(run_dir / "summary.csv", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            summary[row["key"]] = row["value"]
    report = RunReport(
        name=str(summary.get("name", "")),
        seed=int(float(str(summary.get("seed", 0)))),
        mode=str(summary.get("mode", "")),
        duration=0.0,
        summary=summary,
    )
    with open(run_dir / "topics.csv", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            report.topic_rows.append(
                (row[0], row[1], *[float(x) for x in row[2:]])
            )
    tiers_path = run_dir / "tiers.csv"
    if tiers_path.exists():
        with open(tiers_path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                report.tier_rows.append((row[0], *[float(x) for x in row[1:]]))
    return report


# --- agent sweep -------------------------------------------------------------------


@dataclass
class SweepResult:
    counts: list[int]
    reports: list[RunReport]
    rows: list[tuple]

    def write_csv(self, path: str | Path) -> Path:
        return _write_csv(Path(path), SWEEP_HEADER, self.rows)


def sweep_agents(
    scenario: Scenario | str | Path,
    counts: list[int],
    seed: int | None = None,
    baseline: bool = False,
) -> SweepResult:
    """Run the scenario once per agent count; returns reports plus a table."""
    if not counts or sorted(counts) != list(counts):
        raise ValueError("counts must be non-empty and ascending")
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    use_seed = scenario.seed if seed is None else seed
    reports: list[RunReport] = []
    rows: list[tuple] = []
    for count in counts:
        result = run_traffic(scenario.bridge_scenario(count=count, baseline=baseline, seed=use_seed))
        report = RunReport(scenario.name, use_seed, "fifo" if baseline else "prioritized", scenario.duration)
        report.summary.update({"name": scenario.name, "seed": use_seed, "mode": report.mode, "agents": count})
        report.traffic = result
        _traffic_report(report, result)
        reports.append(report)
        sent, delivered, _, _ = result.totals()
        offered_bytes = sum(res.bytes_sent for res in result.topics.values())
        rows.append(
            (
                count,
                sent,
                delivered,
                delivered / sent if sent else 0.0,
                offered_bytes,
                report.tier_p95("critical"),
                report.tier_p95("standard"),
                report.tier_p95("bulk"),
            )
        )
    return SweepResult(list(counts), reports, rows)

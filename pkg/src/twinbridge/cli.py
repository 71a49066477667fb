"""Command-line entry points for the scenario runner and benchmark harness."""

from __future__ import annotations

from pathlib import Path

import click

from .runner import compare, load_report, run, sweep_agents
from .scenario import ScenarioParseError, load_scenario


@click.group()
def main() -> None:
    """Digital-twin synchronization and prioritized bridge benchmark harness."""


@main.command("run")
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Write CSV artifacts here.")
@click.option("--baseline", is_flag=True, help="FIFO mode: no prioritization, replay, or discovery.")
def run_cmd(scenario_path: str, seed: int | None, out_dir: str | None, baseline: bool) -> None:
    """Run one scenario and print its summary."""
    try:
        report = run(scenario_path, seed=seed, out_dir=out_dir, baseline=baseline)
    except ScenarioParseError as exc:
        for problem in exc.problems:
            click.echo(f"error: {problem}", err=True)
        raise SystemExit(2)
    for key in sorted(report.summary):
        click.echo(f"{key}: {report.summary[key]}")
    if out_dir:
        click.echo(f"artifacts written to {out_dir}")


@main.command("compare")
@click.argument("dir_a", type=click.Path(exists=True, file_okay=False))
@click.argument("dir_b", type=click.Path(exists=True, file_okay=False))
def compare_cmd(dir_a: str, dir_b: str) -> None:
    """Print per-metric deltas between two run directories (b relative to a)."""
    rows = compare(load_report(dir_a), load_report(dir_b))
    click.echo("scope,metric,a,b,delta,relative")
    for row in rows:
        rel = f"{row.relative:.4f}" if abs(row.relative) != float("inf") else "inf"
        click.echo(f"{row.scope},{row.metric},{row.a!r},{row.b!r},{row.delta!r},{rel}")


@main.command("sweep")
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--counts", default="2,3,5", show_default=True, help="Comma-separated agent counts.")
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
@click.option("--baseline", is_flag=True)
def sweep_cmd(scenario_path: str, counts: str, seed: int | None, out_dir: str | None, baseline: bool) -> None:
    """Run the scenario across several agent counts and print the scaling table."""
    count_list = [int(c) for c in counts.split(",") if c.strip()]
    result = sweep_agents(scenario_path, count_list, seed=seed, baseline=baseline)
    click.echo("agents,sent,delivered,delivery_rate,bytes,critical_p95,standard_p95,bulk_p95")
    for row in result.rows:
        click.echo(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "sweep.csv")
        for count, report in zip(result.counts, result.reports):
            report.write_csvs(out / f"agents_{count}")
        click.echo(f"artifacts written to {out}")


@main.command("mmcf-opt")
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def mmcf_cmd(scenario_path: str, seed: int | None, out_dir: str | None) -> None:
    """Optimize the scenario's declared configuration space and print the pick."""
    scenario = load_scenario(scenario_path)
    if scenario.mmcf is None:
        click.echo("error: scenario has no mmcf section", err=True)
        raise SystemExit(2)
    report = run(scenario, seed=seed, out_dir=out_dir)
    for key in sorted(report.summary):
        if key.startswith("mmcf_"):
            click.echo(f"{key}: {report.summary[key]}")


if __name__ == "__main__":
    main()

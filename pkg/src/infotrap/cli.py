"""Command-line front end for scenario analysis, simulation, and oracle runs."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .dynamics import SearchBoundError
from .oracle import greedy_vs_optimal, optimal_division
from .scenarios import (
    ScenarioError,
    SweepSpec,
    analysis_fields,
    parse_scenario_file,
    run_batch,
    sweep as run_sweep,
    write_report_json,
)


@click.group()
def main():
    """Sequential information acquisition: analysis, simulation, and oracles."""


def _load(file) -> list:
    try:
        return parse_scenario_file(file)
    except ScenarioError as exc:
        raise click.ClickException(str(exc)) from exc


out_option = click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("."),
    show_default=True,
    help="Directory for emitted artifacts.",
)
quiet_option = click.option("--quiet", is_flag=True, help="Suppress progress output.")


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@out_option
@quiet_option
def analyze(file, out: Path, quiet: bool):
    """Spanning-set analysis of each scenario's environment (no simulation)."""
    out.mkdir(parents=True, exist_ok=True)
    for scenario in _load(file):
        report = {"name": scenario.name}
        report.update(analysis_fields(scenario.environment))
        path = out / f"{scenario.name}_analysis.json"
        write_report_json(path, report)
        if not quiet:
            click.echo(
                f"{scenario.name}: best set {report['best_set']} "
                f"phi={report['phi_best']:.6g} -> {path}"
            )


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@out_option
@quiet_option
def simulate(file, out: Path, quiet: bool):
    """Run each scenario, writing a trace CSV and a report JSON."""
    run_batch(_load(file), out, quiet=quiet)


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "budget", type=int, required=True, help="Observation budget.")
@out_option
@quiet_option
def oracle(file, budget: int, out: Path, quiet: bool):
    """Exact optimal allocation of an observation budget for each scenario."""
    out.mkdir(parents=True, exist_ok=True)
    for scenario in _load(file):
        try:
            result = optimal_division(scenario.environment, scenario.prior, budget)
        except SearchBoundError as exc:
            raise click.ClickException(str(exc)) from exc
        report = {
            "name": scenario.name,
            "t": budget,
            "counts": [int(c) for c in result.counts.counts],
            "value": result.value,
            "num_optima": result.num_optima,
            "all_optima": (
                None
                if result.all_optima is None
                else [[int(c) for c in d.counts] for d in result.all_optima]
            ),
        }
        path = out / f"{scenario.name}_oracle.json"
        write_report_json(path, report)
        if not quiet:
            click.echo(f"{scenario.name}: n({budget})={report['counts']} V={result.value:.6g}")


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--state", type=int, required=True, help="1-based state index to vary.")
@click.option("--grid", required=True, help="Comma-separated increasing variances.")
@out_option
@quiet_option
def sweep(file, state: int, grid: str, out: Path, quiet: bool):
    """Classify each scenario across a grid of one prior variance."""
    out.mkdir(parents=True, exist_ok=True)
    try:
        values = [float(v) for v in grid.split(",") if v.strip()]
    except ValueError as exc:
        raise click.ClickException(f"--grid: {exc}") from exc
    for scenario in _load(file):
        try:
            spec = SweepSpec(base=scenario, state_index=state - 1, grid=values)
        except ScenarioError as exc:
            raise click.ClickException(str(exc)) from exc
        report = run_sweep(spec)
        path = out / f"{scenario.name}_sweep.json"
        write_report_json(path, report)
        if not quiet:
            click.echo(f"{scenario.name}: threshold={report['threshold']} -> {path}")


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "budget", type=int, required=True, help="Comparison horizon.")
@out_option
@quiet_option
def compare(file, budget: int, out: Path, quiet: bool):
    """Greedy-versus-optimal variance table up to the given horizon."""
    out.mkdir(parents=True, exist_ok=True)
    for scenario in _load(file):
        try:
            rows = greedy_vs_optimal(scenario.environment, scenario.prior, budget)
        except SearchBoundError as exc:
            raise click.ClickException(str(exc)) from exc
        path = out / f"{scenario.name}_compare.csv"
        lines = ["t,greedy_variance,optimal_variance,ratio"]
        for r in rows:
            lines.append(
                f"{r.t},{r.greedy_variance:.17g},{r.optimal_variance:.17g},{r.ratio:.17g}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        if not quiet:
            click.echo(f"{scenario.name}: final ratio {rows[-1].ratio:.4f} -> {path}")


if __name__ == "__main__":
    main()

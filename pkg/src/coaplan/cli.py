"""Command-line interface: batch planning, wargaming, validation, KB lint,
and the HTTP service entry point.

Exit codes: 0 success, 2 validation/input errors (diagnostics on stderr),
3 hard planning failure.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click
import yaml

from . import engine, kb as kbmod, syncmatrix
from .adversarial import wargame as run_wargame
from .plan import PlanConfig, PlanningError, config_from_dict
from .scenario import ScenarioError, load_scenario_file, validate_scenario

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PLANNING = 3


def _load_config(path: str | None) -> PlanConfig:
    if path is None:
        return PlanConfig()
    p = Path(path)
    if not p.exists():
        raise ScenarioError("file not found", path=str(p))
    doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    return config_from_dict(doc)


def _fail_validation(message: str) -> int:
    click.echo(message, err=True)
    return EXIT_VALIDATION


def _run_planner(scenario_path, kb_paths, config_path, out_path, fmt, period,
                 wargame_mode: bool) -> int:
    started = time.perf_counter()
    try:
        scenario = load_scenario_file(scenario_path)
        kb = kbmod.load_kb_files(list(kb_paths))
        config = _load_config(config_path)
    except (ScenarioError, kbmod.KBError) as exc:
        return _fail_validation(str(exc))
    diags = validate_scenario(scenario)
    for d in diags:
        click.echo(f"{d.severity}: {d.path}: {d.message}", err=True)
    if any(d.severity == "error" for d in diags):
        return EXIT_VALIDATION
    lint = [d for d in kbmod.lint_kb(kb) if d.severity == "error"]
    for d in lint:
        click.echo(f"error: {d.path}: {d.message}", err=True)
    if lint:
        return EXIT_VALIDATION
    try:
        if wargame_mode:
            result = run_wargame(scenario, kb, config)
        else:
            result = engine.plan(scenario, kb, config)
    except PlanningError as exc:
        click.echo(f"planning failed: {exc}", err=True)
        return EXIT_PLANNING
    doc = syncmatrix.export_plan(result, format=fmt, period_length=period)
    if out_path:
        Path(out_path).write_text(doc, encoding="utf-8")
    else:
        click.echo(doc)
    wall = time.perf_counter() - started
    leaves = sum(1 for a in result.activities.values() if a.is_leaf())
    click.echo(f"plan: {leaves} leaf activities, {len(result.activities)} total, "
               f"{len(result.flags)} flags, {wall:.2f}s", err=False)
    return EXIT_OK


@click.group(invoke_without_command=True)
@click.option("--serve", "serve_addr", default=None, metavar="ADDR:PORT",
              help="Run the HTTP service instead of a batch command.")
@click.pass_context
def main(ctx, serve_addr):
    if ctx.invoked_subcommand is not None:
        return
    if serve_addr is None:
        click.echo(ctx.get_help())
        ctx.exit(0)
    import uvicorn

    from .service import create_app

    host, _, port = serve_addr.rpartition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port))


@main.command("plan")
@click.option("--scenario", "scenario_path", required=True)
@click.option("--kb", "kb_paths", multiple=True, required=True,
              help="Rule files; repeat for overlays, order = overlay order.")
@click.option("--config", "config_path", default=None)
@click.option("--out", "out_path", default=None)
@click.option("--format", "fmt", type=click.Choice(["canonical", "matrix_csv"]),
              default="canonical")
@click.option("--period", type=int, default=None)
def cli_plan(scenario_path, kb_paths, config_path, out_path, fmt, period):
    """Expand, schedule and adjudicate one course of action."""
    sys.exit(_run_planner(scenario_path, kb_paths, config_path, out_path,
                          fmt, period, wargame_mode=False))


@main.command("wargame")
@click.option("--scenario", "scenario_path", required=True)
@click.option("--kb", "kb_paths", multiple=True, required=True)
@click.option("--config", "config_path", default=None)
@click.option("--out", "out_path", default=None)
@click.option("--format", "fmt", type=click.Choice(["canonical", "matrix_csv"]),
              default="canonical")
@click.option("--period", type=int, default=None)
def cli_wargame(scenario_path, kb_paths, config_path, out_path, fmt, period):
    """Plan both sides and adjudicate cross-side engagements."""
    sys.exit(_run_planner(scenario_path, kb_paths, config_path, out_path,
                          fmt, period, wargame_mode=True))


@main.command("validate")
@click.option("--scenario", "scenario_path", required=True)
def cli_validate(scenario_path):
    """Check a scenario file; exit 0 iff no error-severity diagnostics."""
    try:
        scenario = load_scenario_file(scenario_path)
    except ScenarioError as exc:
        sys.exit(_fail_validation(str(exc)))
    diags = validate_scenario(scenario)
    for d in diags:
        click.echo(f"{d.severity}: {d.path}: {d.message}")
    sys.exit(EXIT_VALIDATION if any(d.severity == "error" for d in diags) else EXIT_OK)


@main.group("kb")
def cli_kb():
    """Knowledge-base maintenance commands."""


@cli_kb.command("lint")
@click.option("--kb", "kb_paths", multiple=True, required=True)
def cli_kb_lint(kb_paths):
    """Lint rule files; exit 0 iff no errors."""
    try:
        kb = kbmod.load_kb_files(list(kb_paths))
    except kbmod.KBError as exc:
        sys.exit(_fail_validation(str(exc)))
    diags = kbmod.lint_kb(kb)
    for d in diags:
        click.echo(f"{d.severity}: {d.path}: {d.message}")
    sys.exit(EXIT_VALIDATION if any(d.severity == "error" for d in diags) else EXIT_OK)


if __name__ == "__main__":
    main()

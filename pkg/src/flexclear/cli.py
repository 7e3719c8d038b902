"""Command-line interface for flexibility-market clearing studies."""

import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any

import pandas as pd
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from flexclear import __version__
from flexclear.config import CaseRecipe, ConfigError, RunConfig, SolverConfig, load_run_config
from flexclear.models.market import ClearingResult, MarketInstance
from flexclear.models.report import ComparisonReport, ConvergenceTrace
from flexclear.models.system import Formulation
from flexclear.output import (
    CSVExporter,
    JSONExporter,
    build_provenance,
    deterministic_plot_rows,
    export_bids,
    file_stem,
    monte_carlo_plot_rows,
)
from flexclear.parsers.base import ParseError
from flexclear.processing.analysis import ComparisonError, comparison_table, compare_deterministic, normalize_reports
from flexclear.processing.formulation import FormulationError, build_system
from flexclear.processing.market import ClearingError, MarketConsistencyError, clear, verify_physics
from flexclear.processing.monte_carlo import QUANTITIES, MonteCarloAbort, convergence_trace, run_monte_carlo
from flexclear.processing.pipeline import build_instance, load_bids, load_network
from flexclear.processing.topology import TopologyError
from flexclear.solver import Solver, make_solver
from flexclear.utils.logging_config import get_logger, setup_logging

console = Console()
logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_STATISTICS = 4


def create_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser.

    Returns:
        Configured ArgumentParser.
    """
    parser = argparse.ArgumentParser(
        prog="flexclear",
        description="Clear flexibility markets on radial feeders and compare LinDistFlow LP with the SOCP relaxation",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s clear --case data/case141.m --formulation lp --spread sl2 --vband 0.99:1.01 --seed 7
  %(prog)s clear --config config/case141-sl2.yaml --formulation lp,socp
  %(prog)s compare --config config/case141-compare.yaml
  %(prog)s montecarlo --config config/case141-sl2.yaml --samples 1000 --sigma-cost 0.15 --sigma-qty 0.3
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run recipe")
    common.add_argument("--case", default=None, help="Matpower case file")
    common.add_argument("--root", type=int, default=None, help="Root (substation) bus id")
    common.add_argument("--spread", default=None, help="Bid spread level: sl1 or sl2")
    common.add_argument("--vband", default=None, help="Voltage band lo:hi in p.u. (e.g. 0.99:1.01)")
    common.add_argument("--seed", type=int, default=None, help="Seed for base supply and bids")
    common.add_argument("--load-scale", type=float, default=None, help="Multiplier on every base load")
    common.add_argument("--polygon-sides", type=int, default=None, help="Edge count of the LP flow polygon")
    common.add_argument("--bids", default=None, help="Bid CSV replacing generated bids")
    common.add_argument("--label", default=None, help="Case label used in file names")
    common.add_argument("--backend", default=None, help="Solver backend: ipm or highs")
    common.add_argument("--tol", type=float, default=None, help="Solver tolerance")
    common.add_argument("--max-iter", type=int, default=None, help="Solver iteration cap")
    common.add_argument("-o", "--output-dir", default=None, help="Output directory (default: results)")
    common.add_argument("--format", default=None, help="Output formats: csv, json or csv,json")
    common.add_argument("--trace", action="store_true", default=None, help="Also write solver iterate traces")
    common.add_argument(
        "--dump-system", action="store_true", default=None, help="Also write constraint-system JSON dumps"
    )
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="Increase verbosity (-v for INFO, -vv for DEBUG)"
    )

    sub = parser.add_subparsers(dest="command", required=True, metavar="{clear,compare,montecarlo}")

    clear_parser = sub.add_parser("clear", parents=[common], help="Clear one case under one or both formulations")
    clear_parser.add_argument("--formulation", default=None, help="lp, socp or lp,socp")

    sub.add_parser("compare", parents=[common], help="LP-versus-SOCP RMSE tables over a set of cases")

    mc_parser = sub.add_parser("montecarlo", parents=[common], help="Monte Carlo study of perturbed bids")
    mc_parser.add_argument("--samples", type=int, default=None, help="Number of samples")
    mc_parser.add_argument("--sigma-cost", type=float, default=None, help="Spread of the cost factors")
    mc_parser.add_argument("--sigma-qty", type=float, default=None, help="Spread of the quantity factors")
    mc_parser.add_argument("--workers", type=int, default=None, help="Worker processes")
    mc_parser.add_argument("--checkpoint", type=int, default=None, help="Samples between trace checkpoints")

    return parser


def get_log_level(verbosity: int) -> str:
    """Convert verbosity count to log level.

    Args:
        verbosity: Number of -v flags.

    Returns:
        Log level string.
    """
    if verbosity >= 2:
        return "DEBUG"
    elif verbosity >= 1:
        return "INFO"
    else:
        return "WARNING"


# (argument name, config section, config key)
_OVERRIDES = [
    ("case", "network", "case_path"),
    ("root", "network", "root"),
    ("spread", "market", "spread"),
    ("vband", "market", "v_band"),
    ("seed", "market", "seed"),
    ("load_scale", "market", "load_scale"),
    ("polygon_sides", "market", "polygon_sides"),
    ("bids", "market", "bids_csv"),
    ("label", "market", "label"),
    ("formulation", "market", "formulations"),
    ("backend", "solver", "backend"),
    ("tol", "solver", "tol"),
    ("max_iter", "solver", "max_iter"),
    ("output_dir", "output", "directory"),
    ("format", "output", "formats"),
    ("trace", "output", "trace"),
    ("dump_system", "output", "dump_system"),
    ("samples", "mc", "samples"),
    ("sigma_cost", "mc", "sigma_cost"),
    ("sigma_qty", "mc", "sigma_qty"),
    ("workers", "mc", "workers"),
    ("checkpoint", "mc", "checkpoint"),
]


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the YAML recipe, then command-line flags.

    Flags go through the same validation as recipe values.

    Raises:
        ConfigError: An invalid value in the recipe or on the command line.
        FileNotFoundError: The recipe does not exist.
    """
    base = load_run_config(args.config)
    data = base.to_dict()
    applied = []
    for arg, section, key in _OVERRIDES:
        value = getattr(args, arg, None)
        if value is not None:
            data[section][key] = value
            applied.append(f"{section}.{key}")
    if applied:
        logger.info(f"Command-line overrides: {', '.join(applied)}")
    return RunConfig.from_dict(data)


def create_progress() -> Progress:
    """Create a progress display.

    Returns:
        Rich Progress instance.
    """
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        console=console,
    )


def solver_for(cfg: SolverConfig, formulation: Formulation) -> Solver:
    """Configured backend, falling back to the interior-point solver for cones."""
    backend = cfg.backend
    if formulation is Formulation.SOCP and backend == "highs":
        logger.warning("HiGHS cannot solve cone programs, using the interior-point solver for SOCP")
        backend = "ipm"
    return make_solver(backend, tol=cfg.tol, max_iter=cfg.max_iter)


def _exporters(config: RunConfig, command: str) -> tuple[CSVExporter, JSONExporter]:
    provenance = build_provenance(config, command)
    directory = Path(config.output.directory)
    return CSVExporter(directory, provenance), JSONExporter(directory, provenance)


def display_clearing(results: list[ClearingResult], residuals: dict[str, float]) -> None:
    """Print one summary row per clearing."""
    table = Table(title="Clearing results")
    for column in ("Case", "Formulation", "Status", "Objective (EUR)", "Iterations", "Binding lines", "Max residual"):
        table.add_column(column)
    for r in results:
        table.add_row(
            r.label,
            r.formulation.value,
            r.report.status.value,
            f"{r.objective:.4f}",
            str(r.report.iterations),
            ", ".join(str(b) for b in r.binding_flows) or "-",
            f"{residuals[r.formulation.value]:.2e}",
        )
    console.print(table)


def cmd_clear(config: RunConfig) -> int:
    """Clear one case under every requested formulation and export the results.

    Every clearing runs before anything is written.
    """
    net = load_network(config.network)
    bids = load_bids(config.market, net)
    base = build_instance(net, config.market, bids=bids)

    cleared: list[tuple[MarketInstance, ClearingResult]] = []
    for formulation in config.market.formulations:
        inst = base.with_formulation(formulation)
        cleared.append((inst, clear(inst, solver_for(config.solver, formulation))))

    csv_out, json_out = _exporters(config, "clear")
    formats = config.output.formats
    json_out.export_network(net)
    if "csv" in formats:
        export_bids(csv_out, base.bids, file_stem(base.label, "bids"))
    residuals: dict[str, float] = {}
    for inst, result in cleared:
        physics = verify_physics(result, inst)
        residuals[result.formulation.value] = physics.max_residual
        stem = file_stem(result.label, result.formulation.value)
        if "csv" in formats:
            csv_out.export_clearing(result, inst)
        if "json" in formats:
            json_out.export_clearing(result, physics, f"{stem}_result")
        if config.output.trace:
            csv_out.export_iterate_trace(result.report, result.label, result.formulation.value)
        if config.output.dump_system:
            json_out.export_system(build_system(inst), f"{stem}_system")

    display_clearing([r for _, r in cleared], residuals)
    console.print(f"[green]Results written to {config.output.directory}[/green]")
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    """Clear every configured case under LP and SOCP and tabulate the RMSEs."""
    net = load_network(config.network)
    bids = load_bids(config.market, net)
    recipes = config.compare.cases or [CaseRecipe(label=config.market.case_label)]

    reports = []
    plot_rows: list[dict[str, object]] = []
    for recipe in recipes:
        inst = build_instance(net, recipe.apply(config.market), bids=bids)
        lp = clear(inst.with_formulation(Formulation.LP), solver_for(config.solver, Formulation.LP))
        socp = clear(inst.with_formulation(Formulation.SOCP), solver_for(config.solver, Formulation.SOCP))
        reports.append(compare_deterministic(lp, socp, label=recipe.label))
        plot_rows.extend(deterministic_plot_rows(lp, socp))

    normalized = normalize_reports(reports, config.compare.reference)
    if not normalized:
        if len(reports) < 2:
            console.print("[yellow]Single case: normalization skipped, raw RMSEs only[/yellow]")
        else:
            console.print(
                f"[yellow]Reference case {config.compare.reference} not among the cases: "
                "normalization skipped, raw RMSEs only[/yellow]"
            )
    table = comparison_table(reports, config.compare.raw)

    csv_out, json_out = _exporters(config, "compare")
    if "csv" in config.output.formats:
        csv_out.export_comparison(table)
        csv_out.export_plot_data(plot_rows, "comparison_plot_data")
    if "json" in config.output.formats:
        json_out.export_comparison(reports, normalized, config.compare.reference)

    display_comparison(table, reports, config.compare.reference if normalized else None)
    console.print(f"[green]Comparison written to {config.output.directory}[/green]")
    return EXIT_OK


def display_comparison(table: pd.DataFrame, reports: list[ComparisonReport], reference: str | None) -> None:
    """Print the RMSE table and the largest DLMP deviation per case."""
    title = f"RMSE normalized to {reference}" if reference else "RMSE (raw)"
    rich_table = Table(title=title)
    rich_table.add_column("Case")
    for column in table.columns:
        rich_table.add_column(str(column), justify="right")
    for label, row in table.iterrows():
        rich_table.add_row(str(label), *(f"{v:.4g}" for v in row))
    console.print(rich_table)
    for r in reports:
        bus, dev = r.max_dlmp_dev
        where = f"bus {bus}" if bus is not None else "no priced bus"
        console.print(f"  {r.case_label}: max DLMP deviation {dev:.2f}% at {where}")


def cmd_montecarlo(config: RunConfig) -> int:
    """Run the Monte Carlo study and export moments, traces and plot data."""
    net = load_network(config.network)
    bids = load_bids(config.market, net)
    base = build_instance(net, config.market, bids=bids)
    mc = config.mc
    scenario = mc.scenario(config.market.seed)

    with create_progress() as progress:
        task = progress.add_task(f"Monte Carlo {base.label}", total=scenario.samples)

        def advance(done: int, total: int) -> None:
            progress.update(task, completed=done)

        lp_stats, socp_stats = run_monte_carlo(
            base,
            scenario,
            workers=mc.workers,
            backend=config.solver.backend,
            tol=config.solver.tol,
            progress=advance,
        )

    csv_out, json_out = _exporters(config, "montecarlo")
    traces = []
    for stats in (lp_stats, socp_stats):
        if "csv" in config.output.formats:
            csv_out.export_moments(stats)
        for quantity in QUANTITIES:
            if not stats.samples:
                continue
            trace = convergence_trace(
                stats, quantity, checkpoint=mc.checkpoint, window=mc.drift_window, threshold=mc.drift_threshold
            )
            traces.append(trace)
            if "csv" in config.output.formats:
                csv_out.export_convergence(trace)
    if "csv" in config.output.formats:
        csv_out.export_plot_data(monte_carlo_plot_rows(base.label, [lp_stats, socp_stats]), "mc_plot_data")
    if "json" in config.output.formats:
        json_out.write(
            "mc_summary",
            {
                "label": base.label,
                "requested": scenario.samples,
                "formulations": {
                    s.formulation.value: {
                        "attempted": s.attempted,
                        "used": s.samples,
                        "failed": list(s.failed),
                        "cv_flags": {q: int(s.cv_flags(q).sum()) if s.samples else 0 for q in QUANTITIES},
                    }
                    for s in (lp_stats, socp_stats)
                },
                "convergence": [
                    {
                        "formulation": t.formulation.value,
                        "quantity": t.quantity,
                        "drift": t.drift,
                        "threshold": t.threshold,
                        "converged": t.converged,
                    }
                    for t in traces
                ],
            },
        )

    display_convergence(traces, [lp_stats.failed, socp_stats.failed])
    console.print(f"[green]Monte Carlo outputs written to {config.output.directory}[/green]")
    return EXIT_OK


def display_convergence(traces: list[ConvergenceTrace], failed: list[list[int]]) -> None:
    table = Table(title="Running-mean drift")
    for column in ("Formulation", "Quantity", "Drift", "Converged"):
        table.add_column(column)
    for t in traces:
        mark = "[green]yes[/green]" if t.converged else "[yellow]no[/yellow]"
        table.add_row(t.formulation.value, t.quantity, f"{t.drift:.3%}", mark)
    console.print(table)
    total_failed = sum(len(f) for f in failed)
    if total_failed:
        console.print(f"[yellow]{total_failed} failed sample clearing(s) excluded from the moments[/yellow]")


_HANDLERS = {"clear": cmd_clear, "compare": cmd_compare, "montecarlo": cmd_montecarlo}


def run_command(command: str, config: RunConfig) -> int:
    """Run one command, mapping failures to exit codes.

    Returns:
        0 on success, 2 for configuration and input errors, 3 for solver
        failures (with a diagnostics file), 4 when too many Monte Carlo
        samples fail (with a failure summary).
    """
    try:
        return _HANDLERS[command](config)
    except (ConfigError, FileNotFoundError, ParseError, TopologyError, FormulationError) as e:
        console.print(f"[red]Error: {e}[/red]")
        logger.error(f"{command} failed: {e}")
        return EXIT_CONFIG
    except (ClearingError, MarketConsistencyError, ComparisonError) as e:
        console.print(f"[red]Solver failure: {e}[/red]")
        _, json_out = _exporters(config, command)
        details: dict[str, Any] = {}
        if isinstance(e, ClearingError):
            details = {"label": e.label, "report": e.report.summary()}
            details["trace_tail"] = [asdict(r) for r in e.report.trace[-10:]]
        elif isinstance(e, MarketConsistencyError):
            details = {"violations": e.violations}
        else:
            details = {"report": e.diagnostics}
        path = json_out.export_diagnostics("diagnostics", e, details)
        console.print(f"  Diagnostics written to {path}")
        return EXIT_SOLVER
    except MonteCarloAbort as e:
        console.print(f"[red]{e}[/red]")
        _, json_out = _exporters(config, command)
        path = json_out.export_diagnostics("mc_failure", e, e.summary)
        console.print(f"  Failure summary written to {path}")
        return EXIT_STATISTICS


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the CLI.

    Returns:
        Exit code (0 for success, non-zero for errors).
    """
    parser = create_parser()
    args = parser.parse_args(argv)

    try:
        config = resolve_config(args)
    except (ConfigError, FileNotFoundError) as e:
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_CONFIG

    level = get_log_level(args.verbose) if args.verbose else config.logging.level
    setup_logging(level=level, log_file=config.logging.file, console_output=args.verbose > 0)
    logger.info(f"flexclear {__version__}: {args.command}")

    return run_command(args.command, config)


if __name__ == "__main__":
    sys.exit(main())

"""report subcommand: project a saved JSON report to other formats."""
from pathlib import Path

from evalkit.reports import load_report
from routes.registry import CommandGroup

reporting = CommandGroup("reporting", __name__)


@reporting.command("report", help="Re-emit a JSON report as CSV, JSON or SVG", flags=("report",))
def report_command(ctx):
    source = ctx.config.report_input
    ctx.record_input(source)
    report = load_report(source)
    ctx.emit(report, Path(source).stem, pivot=ctx.config.output.pivot)

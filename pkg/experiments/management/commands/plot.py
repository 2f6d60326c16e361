"""
Plot AUC over simulated time for one or more traces as a standalone SVG.

    python manage.py plot out/3f2a.../trace.csv out/91bc.../trace.csv --output auc.svg
"""
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.plotting import write_svg
from orchestrator.trace import read_auc_curve, read_summary

from .run import EXIT_IO, EXIT_VALIDATION


def curve_label(trace_path: Path) -> str:
    summary = read_summary(trace_path.parent / 'summary.json')
    if not summary:
        return trace_path.parent.name or trace_path.stem
    config = summary['config']
    return f"{config['policy']['kind']} (seed {config['seed']})"


class Command(BaseCommand):
    help = "Write an SVG line chart of AUC versus simulated time"

    def add_arguments(self, parser):
        parser.add_argument('traces', nargs='+', help="trace.csv files")
        parser.add_argument('--output', required=True, help="SVG file to write")
        parser.add_argument('--title', help="Chart title")

    def handle(self, *args, **options):
        curves = []
        for name in options['traces']:
            path = Path(name)
            try:
                curves.append((curve_label(path), read_auc_curve(path)))
            except OSError as exc:
                raise CommandError(f"Cannot read trace {path}: {exc}", returncode=EXIT_IO)
        try:
            output = write_svg(options['output'], curves, options['title'])
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_VALIDATION)
        self.stdout.write(self.style.SUCCESS(f"Wrote {output} ({len(curves)} curves)"))

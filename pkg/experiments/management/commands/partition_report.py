"""
Per-client partition statistics as CSV.

    python manage.py partition_report --distribution exponential --ubi 0.0146 --clients 8
"""
import csv

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from dataset.movielens import DatasetParseError, load_movielens, synth_interactions
from partition.portions import STRATEGIES, assign_users, make_portions, partition_report

from .run import EXIT_IO, EXIT_VALIDATION

COLUMNS = ('client_id', 'num_users', 'num_interactions', 'realized_ubi')


class Command(BaseCommand):
    help = "Partition users over clients and report per-client counts and the realized UBI"

    def add_arguments(self, parser):
        parser.add_argument('--data', help="Ratings file (default FEDSEL_DATA_PATH)")
        parser.add_argument('--synthetic', action='store_true', help="Use a synthetic MovieLens-shaped log")
        parser.add_argument('--distribution', choices=STRATEGIES, default='exponential')
        parser.add_argument('--ubi', type=float, default=0.0146)
        parser.add_argument('--clients', type=int, default=8)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--output', help="CSV file to write (default stdout)")

    def handle(self, *args, **options):
        try:
            if options['synthetic']:
                log = synth_interactions(seed=options['seed'])
            else:
                log = load_movielens(options['data'] or settings.FEDSEL['DATA_PATH'])
        except DatasetParseError as exc:
            raise CommandError(f"Invalid ratings file: {exc}", returncode=EXIT_VALIDATION)
        except OSError as exc:
            raise CommandError(f"Cannot read ratings file: {exc}", returncode=EXIT_IO)

        try:
            portions = make_portions(options['distribution'], options['clients'], options['ubi'])
            rows = partition_report(assign_users(log, portions, options['seed']))
        except ValueError as exc:
            raise CommandError(str(exc), returncode=EXIT_VALIDATION)

        if options['output']:
            try:
                with open(options['output'], 'w', newline='', encoding='utf-8') as handle:
                    self._write(handle, rows)
            except OSError as exc:
                raise CommandError(f"Cannot write {options['output']}: {exc}", returncode=EXIT_IO)
            self.stdout.write(self.style.SUCCESS(f"Wrote {options['output']}"))
        else:
            self._write(self.stdout, rows)

    def _write(self, handle, rows):
        writer = csv.DictWriter(handle, fieldnames=COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({**row, 'realized_ubi': f"{row['realized_ubi']:.6f}"})
